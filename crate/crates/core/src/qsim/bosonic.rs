//! Truncated single-mode states and phase-space measurements.

use nalgebra::DVector;

use super::state::{DensityMatrix, Space, StateVector, C64};
use super::QsimError;

/// Truncation tail mass above which a warning is logged.
pub const TAIL_WARN: f64 = 0.05;

/// Fock amplitudes `e^{−|α|²/2} αⁿ/√(n!)` for `n < d`, without renormalization.
///
/// These are the exact overlaps `⟨n|α⟩`, so `⟨α|ρ|α⟩` computed from them is the
/// Husimi function of any state supported on the first `d` levels.
pub fn coherent_amplitudes(alpha: C64, d: usize) -> DVector<C64> {
    let mut amps = DVector::from_element(d, C64::new(0.0, 0.0));
    if d == 0 {
        return amps;
    }
    amps[0] = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 1..d {
        amps[n] = amps[n - 1] * alpha / (n as f64).sqrt();
    }
    amps
}

fn truncated_state(amps: DVector<C64>, d: usize, what: &str) -> Result<StateVector, QsimError> {
    let mass: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if 1.0 - mass > TAIL_WARN {
        log::warn!("{what}: truncation to {d} levels drops {:.3} of the norm", 1.0 - mass);
    }
    StateVector::normalized(amps.as_slice().to_vec(), Space::Fock(d))
}

/// Coherent state truncated to `d` levels and renormalized.
pub fn coherent_state(alpha: C64, d: usize) -> Result<StateVector, QsimError> {
    if d < 2 {
        return Err(QsimError::InvalidParameter(format!("truncation {d} < 2")));
    }
    truncated_state(coherent_amplitudes(alpha, d), d, "coherent state")
}

/// Four-component cat `(|0⟩_L + |1⟩_L)/√2` with `|0⟩_L ∝ |α⟩+|−α⟩`, `|1⟩_L ∝ |iα⟩+|−iα⟩`.
///
/// Both logical states carry the same prefactor, so the result is the
/// normalized sum of the four coherent components.
pub fn cat_state(alpha: C64, d: usize) -> Result<StateVector, QsimError> {
    if d < 16 {
        return Err(QsimError::InvalidParameter(format!("cat states need at least 16 levels, got {d}")));
    }
    let i = C64::new(0.0, 1.0);
    let amps = [alpha, -alpha, i * alpha, -i * alpha]
        .iter()
        .map(|&a| coherent_amplitudes(a, d))
        .fold(DVector::from_element(d, C64::new(0.0, 0.0)), |acc, v| acc + v);
    // The sum has norm² 4·Σ_{n≡0 mod 4} 4|cₙ|²; check the tail against the
    // untruncated value before renormalizing.
    let full = coherent_amplitudes(alpha, 4 * d.max(32));
    let exact: f64 = full.iter().enumerate().filter(|(n, _)| n % 4 == 0).map(|(_, c)| 16.0 * c.norm_sqr()).sum();
    let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if exact > 0.0 && 1.0 - kept / exact > TAIL_WARN {
        log::warn!("cat state: truncation to {d} levels drops {:.3} of the norm", 1.0 - kept / exact);
    }
    StateVector::normalized(amps.as_slice().to_vec(), Space::Fock(d))
}

fn fock_dim(space: Space) -> Result<usize, QsimError> {
    match space {
        Space::Fock(d) => Ok(d),
        Space::Qubits(_) => Err(QsimError::InvalidParameter("phase-space point needs a Fock space".into())),
    }
}

/// `Q_ρ(α) = ⟨α|ρ|α⟩`.
pub fn husimi_q(rho: &DensityMatrix, alpha: C64) -> Result<f64, QsimError> {
    let d = fock_dim(rho.space())?;
    Ok(rho.quadratic_form(&coherent_amplitudes(alpha, d)).clamp(0.0, 1.0))
}

/// `|⟨α|ψ⟩|²`, the pure-state shortcut of [`husimi_q`].
pub fn husimi_q_pure(psi: &StateVector, alpha: C64) -> Result<f64, QsimError> {
    let d = fock_dim(psi.space())?;
    Ok(coherent_amplitudes(alpha, d).dotc(psi.amplitudes()).norm_sqr().clamp(0.0, 1.0))
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityMatrix, psi: &StateVector) -> Result<f64, QsimError> {
    if rho.space() != psi.space() {
        return Err(QsimError::SpaceMismatch(rho.space(), psi.space()));
    }
    Ok(rho.quadratic_form(psi.amplitudes()))
}
