//! Reduced states and the scalar properties used as learning targets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pauli::{Pauli, PauliString};
use super::state::{DensityMatrix, Space, StateVector, C64};
use super::QsimError;

/// Largest subsystem accepted by [`mbti`].
pub const MAX_MBTI_SITES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Z,
}

impl From<Axis> for Pauli {
    fn from(a: Axis) -> Pauli {
        match a {
            Axis::X => Pauli::X,
            Axis::Z => Pauli::Z,
        }
    }
}

fn n_qubits(space: Space) -> Result<usize, QsimError> {
    space
        .n_qubits()
        .ok_or_else(|| QsimError::InvalidParameter("operation requires a qubit chain".into()))
}

/// Sorted, deduplicated, range-checked site list.
fn check_sites(sites: &[usize], n: usize) -> Result<Vec<usize>, QsimError> {
    if sites.is_empty() {
        return Err(QsimError::InvalidSites("empty site set".into()));
    }
    let mut s = sites.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != sites.len() {
        return Err(QsimError::InvalidSites(format!("repeated sites in {sites:?}")));
    }
    if let Some(&bad) = s.iter().find(|&&k| k >= n) {
        return Err(QsimError::InvalidSites(format!("site {bad} outside {n}-qubit chain")));
    }
    Ok(s)
}

/// Full-index bit offsets for every local index of `sites` (site order = bit order).
fn scatter(sites: &[usize], n: usize) -> Vec<usize> {
    let k = sites.len();
    (0..1usize << k)
        .map(|local| {
            let mut full = 0;
            for (pos, &site) in sites.iter().enumerate() {
                if local >> (k - 1 - pos) & 1 == 1 {
                    full |= 1 << (n - 1 - site);
                }
            }
            full
        })
        .collect()
}

fn split_sites(keep: &[usize], n: usize) -> (Vec<usize>, Vec<usize>) {
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    (scatter(keep, n), scatter(&traced, n))
}

/// Traces out every site not in `keep`. Sites are 0-based; the output keeps them in ascending order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix, QsimError> {
    let n = n_qubits(rho.space())?;
    let keep = check_sites(keep, n)?;
    let (sk, st) = split_sites(&keep, n);
    let m = rho.entries();
    let dk = sk.len();
    let out = DMatrix::from_fn(dk, dk, |i, j| st.iter().map(|&t| m[(sk[i] | t, sk[j] | t)]).sum::<C64>());
    DensityMatrix::from_raw(out, Space::Qubits(keep.len()))
}

/// Reduced state of a pure state on `keep`, computed as `M M†` with `M` the reshaped amplitudes.
pub fn reduced_density_matrix(psi: &StateVector, keep: &[usize]) -> Result<DensityMatrix, QsimError> {
    let n = n_qubits(psi.space())?;
    let keep = check_sites(keep, n)?;
    let m = reshape(psi, &keep, n);
    DensityMatrix::from_raw(&m * m.adjoint(), Space::Qubits(keep.len()))
}

fn reshape(psi: &StateVector, keep: &[usize], n: usize) -> DMatrix<C64> {
    let (sk, st) = split_sites(keep, n);
    let a = psi.as_slice();
    DMatrix::from_fn(sk.len(), st.len(), |i, t| a[sk[i] | st[t]])
}

/// `⟨σ_0^α σ_j^α⟩`; equal to 1 for `j = 0`.
pub fn spin_correlation(psi: &StateVector, axis: Axis, j: usize) -> Result<f64, QsimError> {
    let n = n_qubits(psi.space())?;
    if j >= n {
        return Err(QsimError::InvalidSites(format!("site {j} outside {n}-qubit chain")));
    }
    if j == 0 {
        return Ok(1.0);
    }
    let p = PauliString::from_sites(n, &[(0, axis.into()), (j, axis.into())]);
    Ok(p.expectation(psi.as_slice()).re.clamp(-1.0, 1.0))
}

/// Rényi-2 entropy `−log₂ tr ρ_A²` of an arbitrary subsystem `A`.
pub fn renyi2_entropy_of(psi: &StateVector, sites: &[usize]) -> Result<f64, QsimError> {
    let n = n_qubits(psi.space())?;
    let sites = check_sites(sites, n)?;
    if sites.len() == n {
        return Ok(0.0);
    }
    let m = reshape(psi, &sites, n);
    // tr(M M†)² = tr(M† M)²; use the smaller Gram matrix.
    let gram = if m.nrows() <= m.ncols() { &m * m.adjoint() } else { m.adjoint() * &m };
    let purity: f64 = gram.iter().map(|z| z.norm_sqr()).sum();
    Ok((-purity.log2()).max(0.0))
}

/// Rényi-2 entropy of the prefix block of `cut` sites, `1 ≤ cut ≤ N−1`.
pub fn renyi2_entropy(psi: &StateVector, cut: usize) -> Result<f64, QsimError> {
    let n = n_qubits(psi.space())?;
    if cut == 0 || cut >= n {
        return Err(QsimError::InvalidSites(format!("cut {cut} must lie in 1..{}", n - 1)));
    }
    let sites: Vec<usize> = (0..cut).collect();
    renyi2_entropy_of(psi, &sites)
}

/// The string operator `Z X_1 X_3 … X_{N−2} Z` (0-based) for odd `n`.
pub fn string_operator(n: usize) -> Result<PauliString, QsimError> {
    if n % 2 == 0 || n < 3 {
        return Err(QsimError::EvenChain(n));
    }
    let mut ops = vec![(0, Pauli::Z), (n - 1, Pauli::Z)];
    ops.extend((1..n - 1).step_by(2).map(|s| (s, Pauli::X)));
    Ok(PauliString::from_sites(n, &ops))
}

pub fn string_order(psi: &StateVector) -> Result<f64, QsimError> {
    let n = n_qubits(psi.space())?;
    let op = string_operator(n)?;
    Ok(op.expectation(psi.as_slice()).re.clamp(-1.0, 1.0))
}

fn check_block(block: &[usize], n: usize, name: &str) -> Result<(), QsimError> {
    if block.is_empty() {
        return Err(QsimError::InvalidSites(format!("{name} is empty")));
    }
    if block.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(QsimError::InvalidSites(format!("{name} = {block:?} is not an ascending contiguous block")));
    }
    if block[block.len() - 1] >= n {
        return Err(QsimError::InvalidSites(format!("{name} = {block:?} exceeds the {n}-qubit chain")));
    }
    Ok(())
}

/// Partial transpose of `rho` on the local bits selected by `mask`.
pub fn partial_transpose(rho: &DMatrix<C64>, mask: usize) -> DMatrix<C64> {
    let d = rho.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        let i2 = (i & !mask) | (j & mask);
        let j2 = (j & !mask) | (i & mask);
        rho[(i2, j2)]
    })
}

/// Many-body topological invariant of two disjoint contiguous blocks.
///
/// `tr(ρ_I u ρ_I^{T₁} u†) / ([tr ρ_{I1}² + tr ρ_{I2}²]/2)^{3/2}` where `u` is `Y` on every
/// site of `i1` and identity on `i2`, and `T₁` transposes the `i1` factor.
pub fn mbti(psi: &StateVector, i1: &[usize], i2: &[usize]) -> Result<f64, QsimError> {
    let n = n_qubits(psi.space())?;
    check_block(i1, n, "I1")?;
    check_block(i2, n, "I2")?;
    if i1.iter().any(|s| i2.contains(s)) {
        return Err(QsimError::InvalidSites(format!("blocks {i1:?} and {i2:?} overlap")));
    }
    if i1.len() + i2.len() > MAX_MBTI_SITES {
        return Err(QsimError::InvalidSites(format!(
            "|I1|+|I2| = {} exceeds {MAX_MBTI_SITES}",
            i1.len() + i2.len()
        )));
    }
    let mut joint: Vec<usize> = i1.iter().chain(i2).copied().collect();
    joint.sort_unstable();
    let k = joint.len();
    let rho_i = reduced_density_matrix(psi, &joint)?;
    let mut mask = 0usize;
    let mut u_ops = Vec::new();
    for (pos, site) in joint.iter().enumerate() {
        if i1.contains(site) {
            mask |= 1 << (k - 1 - pos);
            u_ops.push((pos, Pauli::Y));
        }
    }
    let u = pauli_matrix(&PauliString::from_sites(k, &u_ops));
    let rho = rho_i.entries();
    let pt = partial_transpose(rho, mask);
    let numerator = (rho * &u * pt * u.adjoint()).trace();
    let p1 = reduced_density_matrix(psi, i1)?.purity();
    let p2 = reduced_density_matrix(psi, i2)?.purity();
    let denom = ((p1 + p2) / 2.0).powf(1.5);
    if numerator.im.abs() > 1e-8 {
        log::warn!("MBTI numerator has imaginary part {:.3e}", numerator.im);
    }
    Ok(numerator.re / denom)
}

/// Dense matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliString) -> DMatrix<C64> {
    let d = 1usize << p.n_qubits();
    let mut m = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
    for b in 0..d {
        m[(b ^ p.flip_mask(), b)] = p.phase(b);
    }
    m
}
