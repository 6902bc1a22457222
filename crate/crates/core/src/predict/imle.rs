use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::qsim::{coherent_amplitudes, DensityMatrix, Space, C64};

use super::PredictError;

/// Outcome probabilities below this are clamped.
pub const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImleConfig {
    /// Dilution `ε` of the fixed-point map.
    pub epsilon: f64,
    /// Stop once an accepted step gains less log-likelihood than this.
    pub tol: f64,
    pub max_iter: usize,
    pub d_trunc: usize,
    /// Whiten the measurement operators by `G^{-1/2}` so they sum to the identity.
    pub whiten: bool,
    /// Eigenvalues of `G` below `floor · λ_max` are raised to it before whitening.
    pub whiten_floor: f64,
    /// Extrapolate between iterates (restarted whenever it fails to raise the likelihood).
    pub momentum: bool,
}

impl Default for ImleConfig {
    fn default() -> Self {
        Self { epsilon: 0.25, tol: 1e-12, max_iter: 2000, d_trunc: 16, whiten: true, whiten_floor: 1e-12, momentum: true }
    }
}

#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub rho_hat: DensityMatrix,
    pub iterations: usize,
    /// Log-likelihood after each accepted step, starting with the initial state.
    pub log_likelihood: Vec<f64>,
    /// Number of times some `p_i` fell below [`P_FLOOR`].
    pub clamp_events: usize,
}

struct Problem {
    /// Columns are the measurement vectors.
    vecs: DMatrix<C64>,
    freq: Vec<f64>,
}

impl Problem {
    fn probs(&self, sigma: &DMatrix<C64>, clamps: &mut usize) -> Vec<f64> {
        let b = sigma * &self.vecs;
        let mut clamped = false;
        let p = (0..self.freq.len())
            .map(|i| {
                let v = self.vecs.column(i).dotc(&b.column(i)).re;
                if v < P_FLOOR {
                    clamped = true;
                    P_FLOOR
                } else {
                    v
                }
            })
            .collect();
        if clamped {
            *clamps += 1;
        }
        p
    }

    /// `Σ f_i ln(p_i / Σ_j p_j)`; invariant under rescaling the operators.
    fn log_likelihood(&self, p: &[f64]) -> f64 {
        let total: f64 = p.iter().sum();
        self.freq.iter().zip(p).map(|(f, p)| if *f > 0.0 { f * (p / total).ln() } else { 0.0 }).sum()
    }

    /// One map `σ ← N[AσA]`, `A = (1−ε)I + εR(σ)`, with the dilution halved
    /// until the likelihood is at least `floor`.
    fn diluted_step(
        &self,
        sigma: &DMatrix<C64>,
        p: &[f64],
        epsilon: f64,
        floor: f64,
        clamps: &mut usize,
    ) -> Option<(DMatrix<C64>, Vec<f64>, f64)> {
        let r = self.r_operator(p);
        let n = sigma.nrows();
        let mut eps = epsilon;
        while eps > 1e-14 {
            let a = DMatrix::<C64>::identity(n, n) * C64::new(1.0 - eps, 0.0) + &r * C64::new(eps, 0.0);
            let cand = normalized_sandwich(&a, sigma);
            let mut c = *clamps;
            let cp = self.probs(&cand, &mut c);
            let cll = self.log_likelihood(&cp);
            if cll >= floor {
                *clamps = c;
                return Some((cand, cp, cll));
            }
            eps *= 0.5;
        }
        None
    }

    /// `R = Σ (f_i/p_i) |v_i⟩⟨v_i|`.
    fn r_operator(&self, p: &[f64]) -> DMatrix<C64> {
        let mut weighted = self.vecs.clone();
        for (i, mut col) in weighted.column_iter_mut().enumerate() {
            col *= C64::new(self.freq[i] / p[i], 0.0);
        }
        weighted * self.vecs.adjoint()
    }
}

fn normalized_sandwich(a: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let out = a * rho * a.adjoint();
    let herm = (&out + out.adjoint()) * C64::new(0.5, 0.0);
    let tr = herm.trace().re;
    herm / C64::new(tr, 0.0)
}

/// Nearest unit-trace positive matrix obtained by clipping eigenvalues at zero.
fn project_psd(a: &DMatrix<C64>) -> DMatrix<C64> {
    let herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let lam = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.adjoint();
    let tr = out.trace().re;
    out / C64::new(tr, 0.0)
}

/// `G^{s}` for Hermitian positive `G` with its spectrum floored at `floor · λ_max`.
fn hermitian_power(g: &DMatrix<C64>, s: f64, floor: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lam = eig.eigenvalues.map(|l| C64::new(l.max(floor * lmax).powf(s), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.adjoint()
}

/// Diluted iterative maximum-likelihood reconstruction from phase-space
/// points `(α_i, Q(α_i))` with `Π_i = |α_i⟩⟨α_i|`.
///
/// With whitening on, the iteration runs on `σ ∝ G^{1/2} ρ G^{1/2}` with
/// operators `G^{-1/2} Π_i G^{-1/2}`, which sum to the identity, so the map
/// `σ ← N[((1−ε)I + εR) σ ((1−ε)I + εR)]` has the true state as its fixed
/// point for noiseless data. Steps that would lower the likelihood are
/// retried with half the dilution.
pub fn imle_reconstruct(points: &[(C64, f64)], cfg: &ImleConfig) -> Result<TomographyResult, PredictError> {
    if points.is_empty() {
        return Err(PredictError::Empty("phase-space points".into()));
    }
    if let Some((a, d)) = points.iter().find(|(_, d)| !(0.0..=1.0).contains(d)) {
        return Err(PredictError::InvalidInput(format!("Q({a}) = {d} outside [0, 1]")));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0) {
        return Err(PredictError::InvalidInput(format!("dilution {} outside (0, 1]", cfg.epsilon)));
    }
    let dim = cfg.d_trunc;
    let mut amps = DMatrix::zeros(dim, points.len());
    for (i, (alpha, _)) in points.iter().enumerate() {
        amps.set_column(i, &coherent_amplitudes(*alpha, dim));
    }
    let data_sum: f64 = points.iter().map(|(_, d)| d).sum();
    if data_sum <= 0.0 {
        return Err(PredictError::InvalidInput("all data values are zero".into()));
    }
    let freq = points.iter().map(|(_, d)| d / data_sum).collect();

    // ρ = M σ M / tr(·) maps the working state back.
    let (vecs, back, start) = if cfg.whiten {
        let g = &amps * amps.adjoint();
        let inv_sqrt = hermitian_power(&g, -0.5, cfg.whiten_floor);
        let sqrt = hermitian_power(&g, 0.5, cfg.whiten_floor);
        let vecs = &inv_sqrt * &amps;
        // σ for the maximally mixed ρ.
        let start = normalized_sandwich(&sqrt, &DMatrix::identity(dim, dim));
        (vecs, Some(inv_sqrt), start)
    } else {
        (amps, None, DMatrix::from_diagonal(&DVector::from_element(dim, C64::new(1.0 / dim as f64, 0.0))))
    };
    let prob = Problem { vecs, freq };

    let mut sigma = start;
    let mut clamps = 0;
    let mut p = prob.probs(&sigma, &mut clamps);
    let mut ll = prob.log_likelihood(&p);
    let mut trace = vec![ll];
    let mut iterations = 0;

    let mut prev = sigma.clone();
    let mut k_mom = 0usize;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut step = None;
        if cfg.momentum && k_mom > 0 {
            let beta = (k_mom as f64 - 1.0) / (k_mom as f64 + 2.0);
            let y = project_psd(&(&sigma + (&sigma - &prev) * C64::new(beta, 0.0)));
            let mut c = clamps;
            let py = prob.probs(&y, &mut c);
            if let Some(cand) = prob.diluted_step(&y, &py, cfg.epsilon, ll, &mut c) {
                step = Some((cand, c));
            }
        }
        if step.is_none() {
            k_mom = 0;
            let mut c = clamps;
            step = prob.diluted_step(&sigma, &p, cfg.epsilon, ll, &mut c).map(|cand| (cand, c));
        }
        let Some(((cand, cp, cll), c)) = step else {
            debug!("imle: no ascent step at iteration {iterations}");
            break;
        };
        k_mom += 1;
        let gain = cll - ll;
        prev = std::mem::replace(&mut sigma, cand);
        p = cp;
        ll = cll;
        clamps = c;
        trace.push(ll);
        if gain < cfg.tol {
            break;
        }
    }

    let rho = match back {
        Some(m) => normalized_sandwich(&m, &sigma),
        None => sigma,
    };
    let rho_hat = DensityMatrix::from_raw(rho, Space::Fock(dim))?;
    Ok(TomographyResult { rho_hat, iterations, log_likelihood: trace, clamp_events: clamps })
}
