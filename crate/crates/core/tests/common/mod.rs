//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod gradcheck;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli(name: char) -> DMatrix<C64> {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match name {
        'I' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'X' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        'Z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("unknown Pauli {name}"),
    }
}

/// Kronecker product of a list of operators, first factor = site 0.
pub fn kron_all(ops: &[DMatrix<C64>]) -> DMatrix<C64> {
    ops.iter().skip(1).fold(ops[0].clone(), |acc, m| acc.kronecker(m))
}

/// Dense operator with `name` Paulis on the given sites of an `n`-qubit chain.
pub fn pauli_op(n: usize, sites: &[(usize, char)]) -> DMatrix<C64> {
    let ops: Vec<_> = (0..n)
        .map(|k| sites.iter().find(|(s, _)| *s == k).map(|(_, p)| pauli(*p)).unwrap_or_else(|| pauli('I')))
        .collect();
    kron_all(&ops)
}

/// Cyclic Jacobi eigenvalue algorithm for real symmetric matrices.
/// Returns eigenvalues (unsorted) and eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

pub fn jacobi_min(a: &DMatrix<C64>) -> (f64, DVector<f64>) {
    let re = a.map(|z| z.re);
    let (vals, vecs) = jacobi_eigen(&re);
    let k = (0..vals.len()).min_by(|&x, &y| vals[x].total_cmp(&vals[y])).unwrap();
    (vals[k], vecs.column(k).into_owned())
}

/// Partial trace by explicit multi-index contraction.
/// `rho` is on `n` qubits; returns the state on `keep` (ascending).
pub fn naive_partial_trace(rho: &DMatrix<C64>, n: usize, keep: &[usize]) -> DMatrix<C64> {
    let digits = |idx: usize| -> Vec<usize> { (0..n).map(|k| (idx >> (n - 1 - k)) & 1).collect() };
    let dk = 1 << keep.len();
    let mut out = DMatrix::from_element(dk, dk, c(0.0, 0.0));
    let full = 1 << n;
    for i in 0..full {
        for j in 0..full {
            let di = digits(i);
            let dj = digits(j);
            let traced_equal = (0..n).filter(|k| !keep.contains(k)).all(|k| di[k] == dj[k]);
            if !traced_equal {
                continue;
            }
            let li = keep.iter().fold(0, |acc, &k| acc * 2 + di[k]);
            let lj = keep.iter().fold(0, |acc, &k| acc * 2 + dj[k]);
            out[(li, lj)] += rho[(i, j)];
        }
    }
    out
}

pub fn expect(op: &DMatrix<C64>, psi: &[C64]) -> C64 {
    let v = DVector::from_column_slice(psi);
    v.dotc(&(op * &v))
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}
