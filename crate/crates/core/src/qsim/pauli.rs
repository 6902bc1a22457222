use serde::{Deserialize, Serialize};

use super::state::C64;

/// Single-qubit Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// A tensor product of Paulis on an `n`-qubit chain, stored as bit masks.
///
/// Acting on a basis state, `P|b⟩ = phase(b) |b ⊕ flip⟩`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    n: usize,
    x_mask: usize,
    z_mask: usize,
    y_count: u32,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self { n, x_mask: 0, z_mask: 0, y_count: 0 }
    }

    /// Builds a string from `(site, op)` pairs; repeated sites multiply in order.
    pub fn from_sites(n: usize, ops: &[(usize, Pauli)]) -> Self {
        let mut s = Self::identity(n);
        for &(site, op) in ops {
            s.set(site, op);
        }
        s
    }

    pub fn from_ops(ops: &[Pauli]) -> Self {
        let pairs: Vec<_> = ops.iter().copied().enumerate().collect();
        Self::from_sites(ops.len(), &pairs)
    }

    fn set(&mut self, site: usize, op: Pauli) {
        assert!(site < self.n, "site {site} outside {}-qubit chain", self.n);
        let bit = 1usize << (self.n - 1 - site);
        assert!(
            (self.x_mask | self.z_mask) & bit == 0,
            "site {site} already carries an operator"
        );
        match op {
            Pauli::I => {}
            Pauli::X => self.x_mask |= bit,
            Pauli::Z => self.z_mask |= bit,
            Pauli::Y => {
                self.x_mask |= bit;
                self.z_mask |= bit;
                self.y_count += 1;
            }
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn flip_mask(&self) -> usize {
        self.x_mask
    }

    /// Phase picked up by basis state `b`: `Y|0⟩ = i|1⟩`, `Y|1⟩ = −i|0⟩`, `Z|1⟩ = −|1⟩`.
    #[inline]
    pub fn phase(&self, b: usize) -> C64 {
        let minus = (b & self.z_mask).count_ones() & 1 == 1;
        let sign = if minus { -1.0 } else { 1.0 };
        match self.y_count % 4 {
            0 => C64::new(sign, 0.0),
            1 => C64::new(0.0, sign),
            2 => C64::new(-sign, 0.0),
            _ => C64::new(0.0, -sign),
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        for (b, &a) in psi.iter().enumerate() {
            out[b ^ self.x_mask] += self.phase(b) * a;
        }
        out
    }

    pub fn expectation(&self, psi: &[C64]) -> C64 {
        debug_assert_eq!(psi.len(), 1 << self.n);
        psi.iter()
            .enumerate()
            .map(|(b, &a)| psi[b ^ self.x_mask].conj() * self.phase(b) * a)
            .sum()
    }
}
