use crate::povm::PovmFamily;

/// Normalized 27-bin histogram of the Pauli bases in a triplet or string
/// trajectory, ignoring sites and order.
pub fn basis_histogram(family: &PovmFamily, seq: &[usize]) -> Vec<f64> {
    let mut h = vec![0.0; 27];
    let mut n = 0.0;
    for &k in seq {
        if let Some(code) = family.settings().get(k).and_then(|s| s.basis_code()) {
            h[code] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        for v in &mut h {
            *v /= n;
        }
    }
    h
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Range of pairwise distances over a population of histograms, diagonal included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistancePool {
    pub min: f64,
    pub max: f64,
}

impl DistancePool {
    pub fn from_histograms(hists: &[Vec<f64>]) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for a in hists {
            for b in hists {
                let d = l2(a, b);
                min = min.min(d);
                max = max.max(d);
            }
        }
        Self { min, max }
    }

    /// `(max − d) / (max − min)`, clamped to `[0, 1]`; a degenerate pool gives 1.
    pub fn correlation(&self, d: f64) -> f64 {
        let span = self.max - self.min;
        if !(span > 0.0) {
            return 1.0;
        }
        ((self.max - d) / span).clamp(0.0, 1.0)
    }
}

pub fn strategy_correlation(a: &[f64], b: &[f64], pool: &DistancePool) -> f64 {
    pool.correlation(l2(a, b))
}

/// Full correlation matrix of a population of histograms.
pub fn correlation_matrix(hists: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pool = DistancePool::from_histograms(hists);
    hists.iter().map(|a| hists.iter().map(|b| strategy_correlation(a, b, &pool)).collect()).collect()
}

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters contribute 0. Returns `None` with fewer than two clusters.
pub fn silhouette(points: &[Vec<f64>], labels: &[String]) -> Option<f64> {
    let mut names: Vec<&String> = labels.iter().collect();
    names.sort();
    names.dedup();
    if names.len() < 2 || points.len() != labels.len() {
        return None;
    }
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; names.len()];
        let mut counts = vec![0usize; names.len()];
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = names.binary_search(&&labels[j]).expect("label listed");
            sums[c] += l2(&points[i], &points[j]);
            counts[c] += 1;
        }
        let own = names.binary_search(&&labels[i]).expect("label listed");
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..names.len())
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    Some(total / n as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt()
}

/// `1 − rmse / range`, with a range below `1e-9` (a constant target) treated as 1.
pub fn accuracy(rmse: f64, range: f64) -> f64 {
    1.0 - rmse / if range > 1e-9 { range } else { 1.0 }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}
