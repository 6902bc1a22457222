//! Measurement families, Born-rule statistics, finite-shot sampling and
//! the numeric encoding of settings fed to the neural models.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{coherent_amplitudes, reduced_density_matrix, QsimError, Space, StateVector, C64};

/// Tolerance on the sum of outcome probabilities.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PovmError {
    #[error("state space {state:?} does not fit family {family}")]
    SpaceMismatch { state: Space, family: String },
    #[error("setting {index} is not part of this family ({size} settings)")]
    UnknownSetting { index: usize, size: usize },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("failed to write dataset record: {0}")]
    Io(#[from] std::io::Error),
}

/// Single-qubit Pauli measurement basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Eigenvector for outcome `bit` (0 ↦ eigenvalue +1, 1 ↦ −1).
    pub fn eigenvector(self, bit: usize) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sign = if bit == 0 { 1.0 } else { -1.0 };
        match self {
            Basis::X => [C64::new(s, 0.0), C64::new(sign * s, 0.0)],
            Basis::Y => [C64::new(s, 0.0), C64::new(0.0, sign * s)],
            Basis::Z => {
                if bit == 0 {
                    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
                } else {
                    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
                }
            }
        }
    }

    fn triple(code: usize) -> [Basis; 3] {
        [Self::ALL[code / 9], Self::ALL[code / 3 % 3], Self::ALL[code % 3]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Pauli measurements on three neighbouring qubits `(i, i+1, i+2)`.
    TripletPauli { n: usize, periodic: bool },
    /// All-qubit strings `b₀ b₁ b₂ b₀ b₁ b₂ …`.
    PeriodicString { n: usize },
    /// Husimi-Q values on a rectangular grid over `[lo, hi]²`.
    HusimiGrid { width: usize, height: usize, lo: f64, hi: f64, d_trunc: usize },
}

impl FamilyKind {
    pub fn husimi_default() -> Self {
        FamilyKind::HusimiGrid { width: 16, height: 16, lo: -3.0, hi: 3.0, d_trunc: 16 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::TripletPauli { .. } => "triplet_pauli",
            FamilyKind::PeriodicString { .. } => "periodic_string",
            FamilyKind::HusimiGrid { .. } => "husimi_grid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Triplet { site: usize, bases: [Basis; 3] },
    String { bases: [Basis; 3] },
    Phase { re: f64, im: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmSetting {
    pub index: usize,
    pub payload: Payload,
}

impl PovmSetting {
    pub fn alpha(&self) -> Option<C64> {
        match self.payload {
            Payload::Phase { re, im } => Some(C64::new(re, im)),
            _ => None,
        }
    }

    /// Leftmost site of a triplet setting.
    pub fn site(&self) -> Option<usize> {
        match self.payload {
            Payload::Triplet { site, .. } => Some(site),
            _ => None,
        }
    }

    /// Index of the basis triple in `0..27`, ignoring the site.
    pub fn basis_code(&self) -> Option<usize> {
        match self.payload {
            Payload::Triplet { bases, .. } | Payload::String { bases } => {
                Some(bases[0].index() * 9 + bases[1].index() * 3 + bases[2].index())
            }
            Payload::Phase { .. } => None,
        }
    }
}

/// Outcome statistics of one setting; `shots == None` means exact probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub values: Vec<f64>,
    pub shots: Option<u64>,
}

impl OutcomeStats {
    pub fn exact(values: Vec<f64>) -> Self {
        Self { values, shots: None }
    }

    /// Zero-pads to `width` and returns the validity mask alongside.
    pub fn padded(&self, width: usize) -> (Vec<f64>, Vec<bool>) {
        let mut v = self.values.clone();
        let mut mask = vec![true; v.len().min(width)];
        v.truncate(width);
        mask.resize(width, false);
        v.resize(width, 0.0);
        (v, mask)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shots {
    Exact,
    Finite(u64),
}

/// A measurement family together with its canonical enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmFamily {
    kind: FamilyKind,
    settings: Vec<PovmSetting>,
}

impl PovmFamily {
    pub fn new(kind: FamilyKind) -> Result<Self, PovmError> {
        match &kind {
            FamilyKind::TripletPauli { n, .. } | FamilyKind::PeriodicString { n } if *n < 3 => {
                return Err(PovmError::InvalidFamily(format!("{} needs at least 3 qubits", kind.name())))
            }
            FamilyKind::HusimiGrid { width, height, lo, hi, d_trunc } => {
                if *width < 2 || *height < 2 || !(lo < hi) || *d_trunc < 2 {
                    return Err(PovmError::InvalidFamily(format!("degenerate Husimi grid {kind:?}")));
                }
            }
            _ => {}
        }
        let settings = enumerate_settings(&kind);
        Ok(Self { kind, settings })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn settings(&self) -> &[PovmSetting] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn setting(&self, index: usize) -> Result<&PovmSetting, PovmError> {
        self.settings.get(index).ok_or(PovmError::UnknownSetting { index, size: self.settings.len() })
    }

    /// Width of [`OutcomeStats::values`] for this family.
    pub fn stats_width(&self) -> usize {
        match self.kind {
            FamilyKind::TripletPauli { .. } => 8,
            FamilyKind::PeriodicString { .. } => 9,
            FamilyKind::HusimiGrid { .. } => 1,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.kind {
            FamilyKind::TripletPauli { n, periodic } => n_sites(n, periodic) + 9,
            FamilyKind::PeriodicString { .. } => 9,
            FamilyKind::HusimiGrid { .. } => 2,
        }
    }

    /// Number of distinct leftmost sites (triplet families only).
    pub fn n_sites(&self) -> Option<usize> {
        match self.kind {
            FamilyKind::TripletPauli { n, periodic } => Some(n_sites(n, periodic)),
            _ => None,
        }
    }

    /// Triplet setting with the same bases on the site `shift` positions to the left,
    /// clamped at the chain edge.
    pub fn shifted_left(&self, index: usize, shift: usize) -> Result<usize, PovmError> {
        let s = self.setting(index)?;
        match (&self.kind, &s.payload) {
            (FamilyKind::TripletPauli { n, periodic }, Payload::Triplet { site, .. }) => {
                let sites = n_sites(*n, *periodic);
                let new_site = if *periodic { (site + sites - shift % sites) % sites } else { site.saturating_sub(shift) };
                Ok(new_site * 27 + s.basis_code().unwrap_or(0))
            }
            _ => Err(PovmError::InvalidFamily("site shifts need a triplet family".into())),
        }
    }

    fn check_space(&self, psi: &StateVector) -> Result<(), PovmError> {
        let ok = match (&self.kind, psi.space()) {
            (FamilyKind::TripletPauli { n, .. }, Space::Qubits(m)) | (FamilyKind::PeriodicString { n }, Space::Qubits(m)) => {
                *n == m
            }
            (FamilyKind::HusimiGrid { d_trunc, .. }, Space::Fock(d)) => *d_trunc == d,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(PovmError::SpaceMismatch { state: psi.space(), family: format!("{:?}", self.kind) })
        }
    }

    pub fn featurize(&self, index: usize) -> Result<Vec<f64>, PovmError> {
        Ok(featurize(&self.kind, self.setting(index)?))
    }

    /// Feature rows for the whole enumeration.
    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        self.settings.iter().map(|s| featurize(&self.kind, s)).collect()
    }
}

fn n_sites(n: usize, periodic: bool) -> usize {
    if periodic {
        n
    } else {
        n - 2
    }
}

/// Canonical ordering: site-major then basis-lexicographic (`x < y < z`, first qubit slowest);
/// grids are row-major with the imaginary part indexing rows.
pub fn enumerate_settings(kind: &FamilyKind) -> Vec<PovmSetting> {
    match *kind {
        FamilyKind::TripletPauli { n, periodic } => (0..n_sites(n, periodic))
            .flat_map(|site| (0..27).map(move |code| (site, code)))
            .enumerate()
            .map(|(index, (site, code))| PovmSetting { index, payload: Payload::Triplet { site, bases: Basis::triple(code) } })
            .collect(),
        FamilyKind::PeriodicString { .. } => (0..27)
            .map(|code| PovmSetting { index: code, payload: Payload::String { bases: Basis::triple(code) } })
            .collect(),
        FamilyKind::HusimiGrid { width, height, lo, hi, .. } => {
            let dx = (hi - lo) / (width - 1) as f64;
            let dy = (hi - lo) / (height - 1) as f64;
            (0..height)
                .flat_map(|r| (0..width).map(move |k| (r, k)))
                .enumerate()
                .map(|(index, (r, k))| PovmSetting {
                    index,
                    payload: Payload::Phase { re: lo + k as f64 * dx, im: lo + r as f64 * dy },
                })
                .collect()
        }
    }
}

/// Numeric encoding of a setting.
///
/// Triplets: one-hot site ⊕ three one-hot bases. Strings: three one-hot bases.
/// Grid points: `(Re α, Im α)` divided by the grid half-extent.
pub fn featurize(kind: &FamilyKind, setting: &PovmSetting) -> Vec<f64> {
    let one_hot_bases = |bases: &[Basis; 3], out: &mut Vec<f64>| {
        for b in bases {
            let mut block = [0.0; 3];
            block[b.index()] = 1.0;
            out.extend_from_slice(&block);
        }
    };
    match (kind, &setting.payload) {
        (FamilyKind::TripletPauli { n, periodic }, Payload::Triplet { site, bases }) => {
            let mut v = vec![0.0; n_sites(*n, *periodic)];
            v[*site] = 1.0;
            one_hot_bases(bases, &mut v);
            v
        }
        (FamilyKind::PeriodicString { .. }, Payload::String { bases }) => {
            let mut v = Vec::with_capacity(9);
            one_hot_bases(bases, &mut v);
            v
        }
        (FamilyKind::HusimiGrid { lo, hi, .. }, Payload::Phase { re, im }) => {
            let scale = lo.abs().max(hi.abs());
            vec![re / scale, im / scale]
        }
        _ => panic!("setting payload {:?} does not belong to {:?}", setting.payload, kind),
    }
}

/// Born probabilities of the 8 outcomes on `sites` (in measurement order) from a
/// reduced state whose qubits are ordered as `rho_sites`.
fn triplet_probs(rho: &DMatrix<C64>, rho_sites: &[usize], sites: [usize; 3], bases: [Basis; 3]) -> Vec<f64> {
    let pos: Vec<usize> = sites.iter().map(|s| rho_sites.iter().position(|r| r == s).unwrap()).collect();
    let mut out = Vec::with_capacity(8);
    for outcome in 0..8 {
        let bits = [outcome >> 2 & 1, outcome >> 1 & 1, outcome & 1];
        let mut local = [[C64::new(0.0, 0.0); 2]; 3];
        for k in 0..3 {
            local[pos[k]] = bases[k].eigenvector(bits[k]);
        }
        let v: Vec<C64> = (0..8).map(|i| local[0][i >> 2 & 1] * local[1][i >> 1 & 1] * local[2][i & 1]).collect();
        let mut p = C64::new(0.0, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                p += v[i].conj() * rho[(i, j)] * v[j];
            }
        }
        out.push(p.re.max(0.0));
    }
    out
}

fn triplet_sites(n: usize, site: usize) -> [usize; 3] {
    [site, (site + 1) % n, (site + 2) % n]
}

/// Amplitudes of `psi` in the product basis `bases[k mod 3]` on qubit `k`.
fn rotated_amplitudes(psi: &StateVector, n: usize, bases: [Basis; 3]) -> Vec<C64> {
    let mut amps = psi.as_slice().to_vec();
    for q in 0..n {
        let b = bases[q % 3];
        let v0 = b.eigenvector(0);
        let v1 = b.eigenvector(1);
        let bit = 1usize << (n - 1 - q);
        for idx in 0..amps.len() {
            if idx & bit != 0 {
                continue;
            }
            let a0 = amps[idx];
            let a1 = amps[idx | bit];
            amps[idx] = v0[0].conj() * a0 + v0[1].conj() * a1;
            amps[idx | bit] = v1[0].conj() * a0 + v1[1].conj() * a1;
        }
    }
    amps
}

/// Reduces a full bit-string distribution to the first-triplet marginal plus the parity mean.
fn string_stats(full: &[f64], n: usize) -> Vec<f64> {
    let mut v = vec![0.0; 9];
    for (o, p) in full.iter().enumerate() {
        v[o >> (n - 3)] += p;
        let sign = if o.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        v[8] += sign * p;
    }
    v
}

/// Exact outcome statistics of one setting.
pub fn outcome_probabilities(psi: &StateVector, family: &PovmFamily, index: usize) -> Result<OutcomeStats, PovmError> {
    family.check_space(psi)?;
    let setting = family.setting(index)?;
    let values = match (&family.kind, &setting.payload) {
        (FamilyKind::TripletPauli { n, .. }, Payload::Triplet { site, bases }) => {
            let sites = triplet_sites(*n, *site);
            let mut sorted = sites.to_vec();
            sorted.sort_unstable();
            let rho = reduced_density_matrix(psi, &sorted)?;
            triplet_probs(rho.entries(), &sorted, sites, *bases)
        }
        (FamilyKind::PeriodicString { n }, Payload::String { bases }) => {
            let full: Vec<f64> = rotated_amplitudes(psi, *n, *bases).iter().map(|a| a.norm_sqr()).collect();
            string_stats(&full, *n)
        }
        (FamilyKind::HusimiGrid { d_trunc, .. }, Payload::Phase { re, im }) => {
            let bra = coherent_amplitudes(C64::new(*re, *im), *d_trunc);
            vec![bra.dotc(psi.amplitudes()).norm_sqr().clamp(0.0, 1.0)]
        }
        _ => unreachable!("payload always matches its family"),
    };
    Ok(OutcomeStats::exact(values))
}

/// Exact statistics of every setting, reusing reduced states across bases.
pub fn all_outcome_probabilities(psi: &StateVector, family: &PovmFamily) -> Result<Vec<OutcomeStats>, PovmError> {
    family.check_space(psi)?;
    match family.kind {
        FamilyKind::TripletPauli { n, periodic } => {
            let mut out = Vec::with_capacity(family.len());
            for site in 0..n_sites(n, periodic) {
                let sites = triplet_sites(n, site);
                let mut sorted = sites.to_vec();
                sorted.sort_unstable();
                let rho = reduced_density_matrix(psi, &sorted)?;
                for code in 0..27 {
                    out.push(OutcomeStats::exact(triplet_probs(rho.entries(), &sorted, sites, Basis::triple(code))));
                }
            }
            Ok(out)
        }
        _ => (0..family.len()).map(|i| outcome_probabilities(psi, family, i)).collect(),
    }
}

fn multinomial(probs: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining;
            break;
        }
        let p = p.max(0.0);
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        counts[k] = c;
        remaining -= c;
        mass -= p;
    }
    counts
}

/// Finite-shot frequencies with a generator seeded from `seed`.
///
/// Pauli families draw multinomial counts (the string family over full bit strings);
/// grid points draw binomial counts of the vacuum outcome.
pub fn sample_outcomes(
    psi: &StateVector,
    family: &PovmFamily,
    index: usize,
    shots: Shots,
    seed: u64,
) -> Result<OutcomeStats, PovmError> {
    let shots = match shots {
        Shots::Exact => return outcome_probabilities(psi, family, index),
        Shots::Finite(0) => return Err(PovmError::ZeroShots),
        Shots::Finite(s) => s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let setting = family.setting(index)?;
    let values = match (&family.kind, &setting.payload) {
        (FamilyKind::PeriodicString { n }, Payload::String { bases }) => {
            family.check_space(psi)?;
            let full: Vec<f64> = rotated_amplitudes(psi, *n, *bases).iter().map(|a| a.norm_sqr()).collect();
            let counts = multinomial(&full, shots, &mut rng);
            let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
            string_stats(&freq, *n)
        }
        (FamilyKind::HusimiGrid { .. }, _) => {
            let q = outcome_probabilities(psi, family, index)?.values[0];
            let c = Binomial::new(shots, q.clamp(0.0, 1.0)).expect("valid binomial").sample(&mut rng);
            vec![c as f64 / shots as f64]
        }
        _ => {
            let exact = outcome_probabilities(psi, family, index)?;
            multinomial(&exact.values, shots, &mut rng).iter().map(|&c| c as f64 / shots as f64).collect()
        }
    };
    Ok(OutcomeStats { values, shots: Some(shots) })
}

/// One line of the measurement dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub state_id: usize,
    pub state_params: serde_json::Value,
    pub family: FamilyKind,
    pub setting: usize,
    pub payload: Payload,
    pub values: Vec<f64>,
    pub shots: Option<u64>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: impl IntoIterator<Item = T>) -> Result<(), PovmError> {
    for r in records {
        serde_json::to_writer(&mut out, &r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
