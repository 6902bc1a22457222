use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::QsimError;

pub type C64 = Complex64;

/// Tolerance used when validating normalization, trace and Hermiticity.
pub const STATE_TOL: f64 = 1e-10;
/// Smallest eigenvalue a density matrix may have before it is rejected.
pub const EIGEN_FLOOR: f64 = -1e-8;

/// Hilbert space a state lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    /// A chain of `n` qubits. Site 0 is the most significant bit of a basis index.
    Qubits(usize),
    /// A single bosonic mode truncated to the lowest `d` Fock levels.
    Fock(usize),
}

impl Space {
    pub fn dim(&self) -> usize {
        match *self {
            Space::Qubits(n) => 1usize << n,
            Space::Fock(d) => d,
        }
    }

    pub fn n_qubits(&self) -> Option<usize> {
        match *self {
            Space::Qubits(n) => Some(n),
            Space::Fock(_) => None,
        }
    }
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    space: Space,
}

impl StateVector {
    /// Wraps amplitudes that must already have unit norm.
    pub fn new(amplitudes: Vec<C64>, space: Space) -> Result<Self, QsimError> {
        check_len(amplitudes.len(), space)?;
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > STATE_TOL {
            return Err(QsimError::NotNormalized(norm2));
        }
        Ok(Self { amplitudes: DVector::from_vec(amplitudes), space })
    }

    /// Normalizes `amplitudes`; fails only on a zero vector.
    pub fn normalized(amplitudes: Vec<C64>, space: Space) -> Result<Self, QsimError> {
        check_len(amplitudes.len(), space)?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(QsimError::NotNormalized(norm * norm));
        }
        let amplitudes = DVector::from_iterator(amplitudes.len(), amplitudes.into_iter().map(|a| a / norm));
        Ok(Self { amplitudes, space })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(space: Space, index: usize) -> Self {
        let mut amplitudes = DVector::from_element(space.dim(), C64::new(0.0, 0.0));
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { amplitudes, space }
    }

    /// Product state of single-qubit states, site 0 first. Each factor is normalized.
    pub fn product(factors: &[[C64; 2]]) -> Result<Self, QsimError> {
        let mut amps = vec![C64::new(1.0, 0.0)];
        for f in factors {
            let norm = (f[0].norm_sqr() + f[1].norm_sqr()).sqrt();
            let mut next = Vec::with_capacity(amps.len() * 2);
            for a in &amps {
                next.push(a * f[0] / norm);
                next.push(a * f[1] / norm);
            }
            amps = next;
        }
        Self::normalized(amps, Space::Qubits(factors.len()))
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64, QsimError> {
        if self.space != other.space {
            return Err(QsimError::SpaceMismatch(self.space, other.space));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            entries: &self.amplitudes * self.amplitudes.adjoint(),
            space: self.space,
        }
    }
}

fn check_len(len: usize, space: Space) -> Result<(), QsimError> {
    if len != space.dim() {
        return Err(QsimError::DimensionMismatch { expected: space.dim(), found: len });
    }
    Ok(())
}

/// A validated density matrix: Hermitian, unit trace, eigenvalues above [`EIGEN_FLOOR`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    space: Space,
}

impl DensityMatrix {
    pub fn new(entries: DMatrix<C64>, space: Space) -> Result<Self, QsimError> {
        let rho = Self::from_raw(entries, space)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape check only. Callers that construct matrices by trace-preserving
    /// maps use this and rely on the map for the remaining invariants.
    pub(crate) fn from_raw(entries: DMatrix<C64>, space: Space) -> Result<Self, QsimError> {
        if entries.nrows() != entries.ncols() {
            return Err(QsimError::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        check_len(entries.nrows(), space)?;
        Ok(Self { entries, space })
    }

    pub fn maximally_mixed(space: Space) -> Self {
        let d = space.dim();
        Self {
            entries: DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0)),
            space,
        }
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        let herm = hermiticity_error(&self.entries);
        if herm > STATE_TOL {
            return Err(QsimError::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(QsimError::InvalidTrace(tr));
        }
        let min = self.min_eigenvalue();
        if min < EIGEN_FLOOR {
            return Err(QsimError::NotPositive(min));
        }
        Ok(())
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `tr ρ²`, which for Hermitian ρ is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `⟨v|ρ|v⟩` for an arbitrary (not necessarily normalized) vector.
    pub fn quadratic_form(&self, v: &DVector<C64>) -> f64 {
        v.dotc(&(&self.entries * v)).re
    }
}

/// Largest entry of `|A − A†|`.
pub fn hermiticity_error(a: &DMatrix<C64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}
