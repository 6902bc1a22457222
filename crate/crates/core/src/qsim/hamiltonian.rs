use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::pauli::{Pauli, PauliString};
use super::state::{hermiticity_error, Space, StateVector, C64, STATE_TOL};
use super::QsimError;

/// Largest chain the dense builder accepts.
pub const MAX_QUBITS: usize = 14;
/// Eigenvalue gap below which a ground space is reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// `−Σ Z X Z − h1 Σ X − h2 Σ X X` on an open chain.
    ClusterIsingOpen { h1: f64, h2: f64 },
    /// Same couplings on a ring.
    ClusterIsingPeriodic { h1: f64, h2: f64 },
    /// Bond-alternating XXZ with intra-pair coupling `j`, inter-pair `jp`,
    /// anisotropy `delta` and the antisymmetric `X Z − Z X` perturbation of strength `b`.
    Xxz { j: f64, jp: f64, delta: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub model: Model,
    pub n: usize,
}

impl HamiltonianSpec {
    pub fn new(model: Model, n: usize) -> Self {
        Self { model, n }
    }

    pub fn validate(&self) -> Result<(), QsimError> {
        if self.n < 3 {
            return Err(QsimError::InvalidParameter(format!("chain needs at least 3 qubits, got {}", self.n)));
        }
        if self.n > MAX_QUBITS {
            return Err(QsimError::TooManyQubits { n: self.n, max: MAX_QUBITS });
        }
        let couplings: Vec<f64> = match self.model {
            Model::ClusterIsingOpen { h1, h2 } | Model::ClusterIsingPeriodic { h1, h2 } => vec![h1, h2],
            Model::Xxz { j, jp, delta, b } => {
                if self.n % 2 != 0 {
                    return Err(QsimError::OddChain(self.n));
                }
                vec![j, jp, delta, b]
            }
        };
        if couplings.iter().any(|c| !c.is_finite()) {
            return Err(QsimError::InvalidParameter(format!("non-finite coupling in {:?}", self.model)));
        }
        Ok(())
    }

    /// The Hamiltonian as a weighted list of Pauli strings.
    pub fn terms(&self) -> Vec<(f64, PauliString)> {
        use Pauli::*;
        let n = self.n;
        let mut terms = Vec::new();
        let mut push = |c: f64, ops: &[(usize, Pauli)]| {
            if c != 0.0 {
                terms.push((c, PauliString::from_sites(n, ops)));
            }
        };
        match self.model {
            Model::ClusterIsingOpen { h1, h2 } | Model::ClusterIsingPeriodic { h1, h2 } => {
                let periodic = matches!(self.model, Model::ClusterIsingPeriodic { .. });
                let (n_zxz, n_xx) = if periodic { (n, n) } else { (n - 2, n - 1) };
                for i in 0..n_zxz {
                    push(-1.0, &[(i, Z), ((i + 1) % n, X), ((i + 2) % n, Z)]);
                }
                for i in 0..n {
                    push(-h1, &[(i, X)]);
                }
                for i in 0..n_xx {
                    push(-h2, &[(i, X), ((i + 1) % n, X)]);
                }
            }
            Model::Xxz { j, jp, delta, b } => {
                for i in 0..n - 1 {
                    // bonds (0,1), (2,3), ... carry J; the others J'
                    let c = if i % 2 == 0 { j } else { jp };
                    push(c, &[(i, X), (i + 1, X)]);
                    push(c, &[(i, Y), (i + 1, Y)]);
                    push(c * delta, &[(i, Z), (i + 1, Z)]);
                }
                for i in 0..n - 1 {
                    push(b, &[(i, X), (i + 1, Z)]);
                    push(-b, &[(i, Z), (i + 1, X)]);
                }
            }
        }
        terms
    }
}

/// Dense Hamiltonian matrix on `n` qubits.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    matrix: DMatrix<C64>,
    n: usize,
}

impl Hamiltonian {
    /// Wraps a matrix after checking shape and Hermiticity.
    pub fn from_matrix(matrix: DMatrix<C64>, n: usize) -> Result<Self, QsimError> {
        let dim = 1usize << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QsimError::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        let err = hermiticity_error(&matrix);
        if err > STATE_TOL {
            return Err(QsimError::NotHermitian(err));
        }
        Ok(Self { matrix, n })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn expectation(&self, psi: &StateVector) -> f64 {
        psi.amplitudes().dotc(&(&self.matrix * psi.amplitudes())).re
    }
}

pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<Hamiltonian, QsimError> {
    spec.validate()?;
    let dim = 1usize << spec.n;
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for (c, p) in spec.terms() {
        let flip = p.flip_mask();
        for b in 0..dim {
            m[(b ^ flip, b)] += p.phase(b) * c;
        }
    }
    Hamiltonian::from_matrix(m, spec.n)
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: StateVector,
    pub energy: f64,
    /// Difference between the two lowest eigenvalues.
    pub gap: f64,
    /// Set when `gap < DEGENERACY_TOL`; the returned vector is then one
    /// arbitrary element of the ground space.
    pub degenerate: bool,
}

/// Lowest eigenpair by dense diagonalization.
///
/// The returned vector has its first amplitude with modulus above `1e-8`
/// rotated onto the positive real axis.
pub fn ground_state(h: &Hamiltonian) -> Result<GroundState, QsimError> {
    let m = h.matrix();
    let dim = m.nrows();
    let real = m.iter().all(|z| z.im.abs() <= STATE_TOL);
    let (values, vector): (Vec<f64>, Box<dyn Fn(usize) -> Vec<C64>>) = if real {
        let re = m.map(|z| z.re);
        let re = (&re + re.transpose()) * 0.5;
        let eig = SymmetricEigen::new(re);
        let vals = eig.eigenvalues.as_slice().to_vec();
        let vecs = eig.eigenvectors;
        (vals, Box::new(move |k| vecs.column(k).iter().map(|&x| C64::new(x, 0.0)).collect()))
    } else {
        let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let vals = eig.eigenvalues.as_slice().to_vec();
        let vecs = eig.eigenvectors;
        (vals, Box::new(move |k| vecs.column(k).iter().copied().collect()))
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let lowest = order[0];
    let energy = values[lowest];
    let gap = if dim > 1 { values[order[1]] - energy } else { f64::INFINITY };
    if !energy.is_finite() {
        return Err(QsimError::Numerical("non-finite ground energy".into()));
    }
    let mut amps = vector(lowest);
    fix_global_phase(&mut amps);
    let state = StateVector::normalized(amps, Space::Qubits(h.n_qubits()))?;
    let degenerate = gap < DEGENERACY_TOL;
    if degenerate {
        log::debug!("degenerate ground space: gap {gap:.3e}");
    }
    Ok(GroundState { state, energy, gap, degenerate })
}

/// Rotates the first amplitude with modulus above `1e-8` onto the positive real axis.
pub fn fix_global_phase(amps: &mut [C64]) {
    if let Some(first) = amps.iter().find(|a| a.norm() > 1e-8).copied() {
        let rot = first.conj() / first.norm();
        for a in amps.iter_mut() {
            *a *= rot;
        }
    }
}
