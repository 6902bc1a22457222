//! Central finite-difference gradient oracle. It only evaluates forward
//! values, so it is independent of the backward implementation.
#![allow(dead_code)]

use tgms_core::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};

pub const STEP: f64 = 1e-5;

/// `max|a − n| / max(max|a|, max|n|, floor)` over one tensor.
pub fn rel_err_floor(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    let scale = analytic.max_abs().max(numeric.max_abs()).max(floor);
    analytic.data().iter().zip(numeric.data()).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

pub fn rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    rel_err_floor(analytic, numeric, 1e-8)
}

fn eval<F>(store: &ParamStore, inputs: &[Tensor], build: &F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.value(out).item()
}

/// Largest per-tensor relative error over every parameter and input.
pub fn check<F>(store: &ParamStore, inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.backward(out);
    let pg = g.param_grads();
    let ig: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    drop(g);

    let mut pairs: Vec<(String, Tensor, Tensor)> = Vec::new();
    let mut work = store.clone();
    for id in store.ids() {
        let n = store.get(id).len();
        let mut num = vec![0.0; n];
        for (i, slot) in num.iter_mut().enumerate() {
            *slot = central(&mut work, id, i, inputs, &build);
        }
        let (r, c) = store.get(id).shape();
        pairs.push((store.name(id).to_string(), pg.get(id).clone(), Tensor::new(r, c, num)));
    }
    let mut xs = inputs.to_vec();
    for k in 0..xs.len() {
        let mut num = vec![0.0; xs[k].len()];
        for (i, slot) in num.iter_mut().enumerate() {
            let x0 = xs[k].data()[i];
            xs[k].data_mut()[i] = x0 + STEP;
            let fp = eval(store, &xs, &build);
            xs[k].data_mut()[i] = x0 - STEP;
            let fm = eval(store, &xs, &build);
            xs[k].data_mut()[i] = x0;
            *slot = (fp - fm) / (2.0 * STEP);
        }
        let (r, c) = xs[k].shape();
        pairs.push((format!("input{k}"), ig[k].clone(), Tensor::new(r, c, num)));
    }
    // Tensors whose gradient vanishes by symmetry (a bias feeding a softmax or a
    // normalization) are compared against a floor tied to the largest gradient.
    let floor = 1e-3 * pairs.iter().map(|(_, a, _)| a.max_abs()).fold(1e-8, f64::max);
    let mut worst: f64 = 0.0;
    for (name, a, n) in &pairs {
        let e = rel_err_floor(a, n, floor);
        if std::env::var("GRADCHECK_DEBUG").is_ok() {
            eprintln!("{name} {e:e} {:e}", a.max_abs());
        }
        worst = worst.max(e);
    }
    worst
}

fn central<F>(work: &mut ParamStore, id: ParamId, i: usize, inputs: &[Tensor], build: &F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let p0 = work.get(id).data()[i];
    work.get_mut(id).data_mut()[i] = p0 + STEP;
    let fp = eval(work, inputs, build);
    work.get_mut(id).data_mut()[i] = p0 - STEP;
    let fm = eval(work, inputs, build);
    work.get_mut(id).data_mut()[i] = p0;
    (fp - fm) / (2.0 * STEP)
}
