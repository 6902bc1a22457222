//! Families of quantum states with their measurement family and target properties.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::povm::FamilyKind;
use crate::qsim::{
    build_hamiltonian, cat_state, ground_state, mbti, renyi2_entropy, spin_correlation, string_order, Axis,
    HamiltonianSpec, Model, StateVector, C64,
};
use crate::registry::Registry;

/// Physical-parameter ranges and sizes shared by all tasks. Unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Number of qubits (spin tasks).
    pub n: Option<usize>,
    pub h1: [f64; 2],
    pub h2: [f64; 2],
    /// Intra-pair coupling `J` range with `J' = jp` fixed.
    pub j: [f64; 2],
    pub jp: f64,
    pub delta: [f64; 2],
    /// Perturbation strength for `xxz-perturbed`.
    pub b: f64,
    pub cat_center: [f64; 2],
    pub cat_radius: f64,
    pub d_trunc: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            n: None,
            h1: [0.0, 1.6],
            h2: [-1.6, 1.6],
            j: [0.05, 3.0],
            jp: 1.0,
            delta: [0.0, 3.0],
            b: 0.1,
            cat_center: [-1.5, 0.0],
            cat_radius: 1.0,
            d_trunc: 16,
        }
    }
}

/// A parametrized family of states, the measurements available on them and
/// the properties to predict.
pub trait Task: Send + Sync {
    fn name(&self) -> &'static str;
    fn family(&self) -> FamilyKind;
    fn param_names(&self) -> Vec<String>;
    fn sample_params(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn realize(&self, params: &[f64]) -> Result<StateVector>;
    fn target_names(&self) -> Vec<String>;
    fn targets(&self, psi: &StateVector) -> Result<Vec<f64>>;
    /// Relative weight of each target in selector losses and error summaries.
    fn loss_weights(&self) -> Vec<f64> {
        vec![1.0; self.target_names().len()]
    }
    fn phase_label(&self, _targets: &[f64]) -> Option<String> {
        None
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::Config(format!("range {name} = {r:?} is empty or not finite")));
    }
    Ok(())
}

fn uniform(rng: &mut dyn RngCore, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn ground(model: Model, n: usize) -> Result<StateVector> {
    let h = build_hamiltonian(&HamiltonianSpec::new(model, n))?;
    Ok(ground_state(&h)?.state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ClusterVariant {
    Open,
    Ring,
    PeriodicString,
}

/// Cluster-Ising ground states with spin correlations, Rényi-2 entropies and string order.
pub struct ClusterIsing {
    variant: ClusterVariant,
    n: usize,
    h1: [f64; 2],
    h2: [f64; 2],
}

impl ClusterIsing {
    fn new(variant: ClusterVariant, cfg: &TaskConfig) -> Result<Self> {
        let n = cfg.n.unwrap_or(9);
        if n < 4 {
            return Err(Error::Config(format!("cluster-Ising needs at least 4 qubits, got {n}")));
        }
        check_range("h1", cfg.h1)?;
        check_range("h2", cfg.h2)?;
        Ok(Self { variant, n, h1: cfg.h1, h2: cfg.h2 })
    }

    fn has_string_order(&self) -> bool {
        self.n % 2 == 1
    }
}

impl Task for ClusterIsing {
    fn name(&self) -> &'static str {
        match self.variant {
            ClusterVariant::Open => "cluster-ising-open",
            ClusterVariant::Ring => "cluster-ising-ring",
            ClusterVariant::PeriodicString => "periodic-string",
        }
    }

    fn family(&self) -> FamilyKind {
        match self.variant {
            ClusterVariant::Open => FamilyKind::TripletPauli { n: self.n, periodic: false },
            ClusterVariant::Ring => FamilyKind::TripletPauli { n: self.n, periodic: true },
            ClusterVariant::PeriodicString => FamilyKind::PeriodicString { n: self.n },
        }
    }

    fn param_names(&self) -> Vec<String> {
        vec!["h1".into(), "h2".into()]
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![uniform(rng, self.h1), uniform(rng, self.h2)]
    }

    fn realize(&self, p: &[f64]) -> Result<StateVector> {
        let (h1, h2) = (p[0], p[1]);
        let model = match self.variant {
            ClusterVariant::Ring => Model::ClusterIsingPeriodic { h1, h2 },
            _ => Model::ClusterIsingOpen { h1, h2 },
        };
        ground(model, self.n)
    }

    fn target_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for axis in ["x", "z"] {
            names.extend((1..self.n).map(|j| format!("corr_{axis}_{j}")));
        }
        names.extend((1..self.n).map(|i| format!("s2_{i}")));
        if self.has_string_order() {
            names.push("string_order".into());
        }
        names
    }

    fn targets(&self, psi: &StateVector) -> Result<Vec<f64>> {
        let mut t = Vec::new();
        for axis in [Axis::X, Axis::Z] {
            for j in 1..self.n {
                t.push(spin_correlation(psi, axis, j)?);
            }
        }
        for i in 1..self.n {
            t.push(renyi2_entropy(psi, i)?);
        }
        if self.has_string_order() {
            t.push(string_order(psi)?);
        }
        Ok(t)
    }

    /// String order is exported for phase labels but left out of the loss.
    fn loss_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; 3 * (self.n - 1)];
        if self.has_string_order() {
            w.push(0.0);
        }
        w
    }

    fn phase_label(&self, t: &[f64]) -> Option<String> {
        let so = if self.has_string_order() { t[3 * (self.n - 1)] } else { 0.0 };
        let label = if so > 0.3 {
            "spt"
        } else if t[0] < -0.3 {
            "afm"
        } else {
            "pm"
        };
        Some(label.into())
    }
}

/// Bond-alternating XXZ ground states labelled by the many-body topological invariant.
pub struct Xxz {
    n: usize,
    j: [f64; 2],
    jp: f64,
    delta: [f64; 2],
    b: f64,
    perturbed: bool,
}

impl Xxz {
    fn new(cfg: &TaskConfig, perturbed: bool) -> Result<Self> {
        let n = cfg.n.unwrap_or(8);
        if n % 2 != 0 || n < 6 {
            return Err(Error::Config(format!("XXZ chain needs an even length ≥ 6, got {n}")));
        }
        check_range("j", cfg.j)?;
        check_range("delta", cfg.delta)?;
        Ok(Self { n, j: cfg.j, jp: cfg.jp, delta: cfg.delta, b: if perturbed { cfg.b } else { 0.0 }, perturbed })
    }

    /// Two-site blocks meeting at the chain center.
    pub fn blocks(n: usize) -> ([usize; 2], [usize; 2]) {
        ([n / 2 - 2, n / 2 - 1], [n / 2, n / 2 + 1])
    }
}

impl Task for Xxz {
    fn name(&self) -> &'static str {
        if self.perturbed {
            "xxz-perturbed"
        } else {
            "xxz"
        }
    }

    fn family(&self) -> FamilyKind {
        FamilyKind::TripletPauli { n: self.n, periodic: false }
    }

    fn param_names(&self) -> Vec<String> {
        vec!["j".into(), "delta".into()]
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![uniform(rng, self.j), uniform(rng, self.delta)]
    }

    fn realize(&self, p: &[f64]) -> Result<StateVector> {
        ground(Model::Xxz { j: p[0], jp: self.jp, delta: p[1], b: self.b }, self.n)
    }

    fn target_names(&self) -> Vec<String> {
        vec!["mbti".into()]
    }

    fn targets(&self, psi: &StateVector) -> Result<Vec<f64>> {
        let (i1, i2) = Self::blocks(self.n);
        Ok(vec![mbti(psi, &i1, &i2)?])
    }

    fn phase_label(&self, t: &[f64]) -> Option<String> {
        let label = if t[0] < -0.3 {
            "topological"
        } else if t[0] > 0.3 {
            "trivial"
        } else {
            "symmetry-broken"
        };
        Some(label.into())
    }
}

/// Four-component cat states with `α` drawn uniformly from a disk.
pub struct CatTomography {
    center: C64,
    radius: f64,
    d: usize,
}

impl CatTomography {
    fn new(cfg: &TaskConfig) -> Result<Self> {
        if cfg.d_trunc < 16 {
            return Err(Error::Config(format!("cat states need d_trunc ≥ 16, got {}", cfg.d_trunc)));
        }
        if !(cfg.cat_radius >= 0.0) {
            return Err(Error::Config("cat_radius must be nonnegative".into()));
        }
        Ok(Self { center: C64::new(cfg.cat_center[0], cfg.cat_center[1]), radius: cfg.cat_radius, d: cfg.d_trunc })
    }
}

impl Task for CatTomography {
    fn name(&self) -> &'static str {
        "cat-tomography"
    }

    fn family(&self) -> FamilyKind {
        FamilyKind::HusimiGrid { width: 16, height: 16, lo: -3.0, hi: 3.0, d_trunc: self.d }
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha_re".into(), "alpha_im".into()]
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let r = self.radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        vec![self.center.re + r * phi.cos(), self.center.im + r * phi.sin()]
    }

    fn realize(&self, p: &[f64]) -> Result<StateVector> {
        Ok(cat_state(C64::new(p[0], p[1]), self.d)?)
    }

    /// Real parts then imaginary parts of the Fock amplitudes.
    fn target_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.d).map(|k| format!("re_{k}")).collect();
        v.extend((0..self.d).map(|k| format!("im_{k}")));
        v
    }

    fn targets(&self, psi: &StateVector) -> Result<Vec<f64>> {
        let a = psi.as_slice();
        Ok(a.iter().map(|z| z.re).chain(a.iter().map(|z| z.im)).collect())
    }
}

pub type TaskRegistry = Registry<dyn Task, TaskConfig>;

pub fn task_registry() -> TaskRegistry {
    let mut r = TaskRegistry::new("task");
    r.register("cluster-ising-open", |c| Ok(Box::new(ClusterIsing::new(ClusterVariant::Open, c)?)));
    r.register("cluster-ising-ring", |c| Ok(Box::new(ClusterIsing::new(ClusterVariant::Ring, c)?)));
    r.register("periodic-string", |c| Ok(Box::new(ClusterIsing::new(ClusterVariant::PeriodicString, c)?)));
    r.register("xxz", |c| Ok(Box::new(Xxz::new(c, false)?)));
    r.register("xxz-perturbed", |c| Ok(Box::new(Xxz::new(c, true)?)));
    r.register("cat-tomography", |c| Ok(Box::new(CatTomography::new(c)?)));
    r
}
