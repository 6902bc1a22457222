//! End-to-end acceptance checks. Run with `cargo test -p tgms-bench --test acceptance`.

#[path = "../../core/tests/common/gradcheck.rs"]
mod gradcheck;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgms_bench::{EvalReport, Experiment, ExperimentConfig, StateSplit};
use tgms_core::autodiff::*;
use tgms_core::eval::sign_test;
use tgms_core::povm::{all_outcome_probabilities, FamilyKind, PovmFamily};
use tgms_core::predict::{imle_reconstruct, DeepSetModel, ImleConfig};
use tgms_core::qsim::*;
use tgms_core::tasks::{task_registry, TaskConfig};
use tgms_core::tgms::*;

struct Outcome {
    pass: bool,
    gated: bool,
    detail: String,
}

fn gate(pass: bool, detail: String) -> Outcome {
    Outcome { pass, gated: true, detail }
}

fn config(name: &str, sets: &[&str]) -> ExperimentConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(Some(&p), &sets).unwrap()
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn simulation_oracles() -> Outcome {
    let start = Instant::now();
    let spec = HamiltonianSpec::new(Model::ClusterIsingOpen { h1: 0.0, h2: 0.0 }, 9);
    let gs = ground_state(&build_hamiltonian(&spec).unwrap()).unwrap();
    let so = string_order(&gs.state).unwrap();
    let e_err = (gs.energy + 7.0).abs();
    let so_err = (so - 1.0).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h1 = rng.random_range(0.0..1.6);
        let h2 = rng.random_range(-1.6..1.6);
        let spec = HamiltonianSpec::new(Model::ClusterIsingOpen { h1, h2 }, 9);
        let psi = ground_state(&build_hamiltonian(&spec).unwrap()).unwrap().state;
        let mut sites: Vec<usize> = (0..9).collect();
        sites.shuffle(&mut rng);
        let k = rng.random_range(1..9);
        let (a, b) = sites.split_at(k);
        let d = (renyi2_entropy_of(&psi, a).unwrap() - renyi2_entropy_of(&psi, b).unwrap()).abs();
        worst = worst.max(d);
    }
    gate(
        e_err < 1e-9 && so_err < 1e-9 && worst < 1e-9 && within(start, Duration::from_secs(60)),
        format!(
            "|E0 + 7| = {e_err:.1e}, |string order - 1| = {so_err:.1e}, max Renyi-2 cut asymmetry {worst:.1e} over 20 points, {:.1?}",
            start.elapsed()
        ),
    )
}

fn information_complete_tomography() -> Outcome {
    let start = Instant::now();
    let task = task_registry().build("cat-tomography", &TaskConfig::default()).unwrap();
    let family = PovmFamily::new(FamilyKind::husimi_default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut max_iter, mut monotone) = (0.0f64, 0usize, true);
    for _ in 0..10 {
        let psi = task.realize(&task.sample_params(&mut rng)).unwrap();
        let q = all_outcome_probabilities(&psi, &family).unwrap();
        let points: Vec<(C64, f64)> =
            family.settings().iter().zip(&q).map(|(s, o)| (s.alpha().unwrap(), o.values[0])).collect();
        let res = imle_reconstruct(&points, &ImleConfig::default()).unwrap();
        worst = worst.max(1.0 - fidelity(&res.rho_hat, &psi).unwrap());
        max_iter = max_iter.max(res.iterations);
        monotone &= res.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    }
    gate(
        worst < 1e-2 && max_iter <= 2000 && monotone && within(start, Duration::from_secs(600)),
        format!(
            "10 cat states, worst infidelity {worst:.2e}, max iterations {max_iter}, monotone likelihood {monotone}, {:.1?}",
            start.elapsed()
        ),
    )
}

fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    type Case = fn(&mut ChaCha8Rng) -> f64;
    let cases: [(&str, Case); 7] = [
        ("linear", |r| {
            let mut s = ParamStore::new();
            let l = Linear::new(&mut s, "l", 8, 8, true, r);
            let (x, w) = (random(8, 8, r), random(8, 8, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = l.forward(g, v[0]).unwrap();
                g.weighted_sum(y, w.clone())
            })
        }),
        ("feed_forward", |r| {
            let mut s = ParamStore::new();
            let ff = FeedForward::new(&mut s, "ff", 5, 7, r);
            let (x, w) = (random(6, 5, r), random(6, 5, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = ff.forward(g, v[0]).unwrap();
                g.weighted_sum(y, w.clone())
            })
        }),
        ("mlp", |r| {
            let mut s = ParamStore::new();
            let m = Mlp::new(&mut s, "mlp", &[5, 6, 4, 3], r);
            let (x, w) = (random(6, 5, r), random(6, 3, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = m.forward(g, v[0]).unwrap();
                g.weighted_sum(y, w.clone())
            })
        }),
        ("attention", |r| {
            let mut s = ParamStore::new();
            let a = MultiHeadAttention::new(&mut s, "mha", 8, 2, r).unwrap();
            let (x, w) = (random(4, 8, r), random(4, 8, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = a.forward(g, v[0]).unwrap();
                g.weighted_sum(y, w.clone())
            })
        }),
        ("batch_norm", |r| {
            let mut s = ParamStore::new();
            let bn = BatchNorm::new(&mut s, "bn", 5);
            jitter(&mut s, r);
            let (x, w) = (random(6, 5, r), random(6, 5, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = bn.forward(g, v[0]);
                g.weighted_sum(y, w.clone())
            })
        }),
        ("encoder_block", |r| {
            let mut s = ParamStore::new();
            let b = EncoderBlock::new(&mut s, "enc", 8, 2, 12, r).unwrap();
            jitter(&mut s, r);
            let (x, w) = (random(5, 8, r), random(5, 8, r));
            gradcheck::check(&s, &[x], |g, v| {
                let y = b.forward(g, v[0]).unwrap();
                g.weighted_sum(y, w.clone())
            })
        }),
        ("masked_softmax", |r| {
            let s = ParamStore::new();
            let (x, w) = (random(6, 1, r), random(6, 1, r));
            let mask = [true, false, true, true, false, true];
            gradcheck::check(&s, &[x], |g, v| {
                let p = g.masked_softmax(v[0], &mask).unwrap();
                g.weighted_sum(p, w.clone())
            })
        }),
    ];
    for (name, f) in cases {
        let e = (0..10u64).map(|seed| f(&mut ChaCha8Rng::seed_from_u64(seed))).fold(0.0, f64::max);
        worst.push((name, e));
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let list: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    gate(
        max < 1e-4 && within(start, Duration::from_secs(60)),
        format!("10 seeds per layer, max relative error {max:.1e} ({}), {:.1?}", list.join(", "), start.elapsed()),
    )
}

fn architecture_invariants() -> Outcome {
    let family = PovmFamily::new(FamilyKind::TripletPauli { n: 5, periodic: false }).unwrap();
    let cfg = PolicyConfig { d_h: 16, layers: 2, heads: 2, ff_hidden: 32, history_hidden: 16, clip: 10.0 };
    let mut p = PolicyModel::new(&family, cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let wq = p.wq_id();
    for v in p.store.get_mut(wq).data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }

    let f = p.features();
    let h = p.encode_features(&f).unwrap();
    let mut perm: Vec<usize> = (0..f.rows()).collect();
    perm.shuffle(&mut rng);
    let fp = Tensor::from_rows(&perm.iter().map(|&i| f.row_slice(i).to_vec()).collect::<Vec<_>>());
    let hp = p.encode_features(&fp).unwrap();
    let mut equi: f64 = 0.0;
    for (r, &i) in perm.iter().enumerate() {
        for (a, b) in hp.row_slice(r).iter().zip(h.row_slice(i)) {
            equi = equi.max((a - b).abs());
        }
    }

    let prep = p.prepare().unwrap();
    let mut order: f64 = 0.0;
    for _ in 0..10 {
        let mut idx: Vec<usize> = (0..p.n_settings()).collect();
        idx.shuffle(&mut rng);
        let mut recs: Vec<(usize, Vec<f64>)> =
            idx.into_iter().take(12).map(|s| (s, (0..8).map(|_| rng.random::<f64>()).collect())).collect();
        let refs = |r: &[(usize, Vec<f64>)]| r.iter().map(|(s, v)| (*s, v.clone())).collect::<Vec<_>>();
        let a0 = refs(&recs);
        let a: Vec<(usize, &[f64])> = a0.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let sa = p.state_summary(&prep.h, &a).unwrap();
        recs.shuffle(&mut rng);
        let b: Vec<(usize, &[f64])> = recs.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let sb = p.state_summary(&prep.h, &b).unwrap();
        order = order.max(sa.data().iter().zip(sb.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }

    let mut violations = 0;
    let mut acquire = |k: usize| Ok(vec![(k % 7) as f64 / 7.0; 8]);
    for seed in 0..10_000u64 {
        let t = 1 + (seed as usize % p.n_settings());
        let traj =
            run_episode(&p, &prep, t, Mode::Sample, &mut ChaCha8Rng::seed_from_u64(seed), &[], &mut acquire).unwrap();
        let mut s = traj.settings();
        s.sort_unstable();
        s.dedup();
        if s.len() != t {
            violations += 1;
        }
    }
    gate(
        equi < 1e-6 && order < 1e-9 && violations == 0,
        format!(
            "encoder permutation error {equi:.1e}, summary order error {order:.1e}, {violations} repeats in 10000 episodes"
        ),
    )
}

struct TwoArm;

impl EpisodeEnv for TwoArm {
    fn n_settings(&self) -> usize {
        2
    }

    fn stats(&self, _state: usize, _setting: usize) -> &[f64] {
        &[1.0]
    }

    fn loss(&self, _state: usize, history: &[usize]) -> tgms_core::Result<f64> {
        Ok(if history[0] == 0 { 0.5 } else { 1.0 })
    }
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let states: Vec<usize> = (0..8).collect();
    let cfg = SelectorTrainConfig { epochs: 40, batch: 8, k: 2, window: 1, t_max: 1, lr: 1e-2, ..Default::default() };
    let pcfg = PolicyConfig { d_h: 16, layers: 2, heads: 2, ff_hidden: 32, history_hidden: 16, clip: 10.0 };
    let mut probs = Vec::new();
    for seed in 0..5 {
        let mut p = PolicyModel::with_features(
            None,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
            pcfg.clone(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        train_selector(&mut p, &TwoArm, &states, &states, &cfg, seed, |_| {}).unwrap();
        let prep = p.prepare().unwrap();
        probs.push(p.selection_distribution(p.h0(), &prep.keys, &[false, false]).unwrap()[0]);
    }
    let ok = probs.iter().filter(|&&x| x > 0.95).count();
    gate(
        ok == 5 && within(start, Duration::from_secs(600)),
        format!("P(first pick = loss-halving arm) = {probs:.4?}, {ok}/5 above 0.95, {:.1?}", start.elapsed()),
    )
}

/// A trained cluster or XXZ pipeline and its evaluations at budget 10.
struct PropertyRun {
    exp: Experiment,
    ds: tgms_core::dataset::Dataset,
    predictor: Arc<DeepSetModel>,
    policy: Arc<PolicyModel>,
}

fn train_property(file: &str) -> PropertyRun {
    let exp = Experiment::new(config(file, &["eval.budgets=[10]"])).unwrap();
    let ds = exp.gen_data().unwrap();
    let predictor = Arc::new(exp.train_predictor(&ds, |_| {}).unwrap());
    let (policy, _) = exp.train_selector(&ds, Some(&predictor), |_| {}).unwrap();
    PropertyRun { exp, ds, predictor, policy: Arc::new(policy) }
}

fn compare(exp: &Experiment, ds: &tgms_core::dataset::Dataset, run: &PropertyRun) -> (EvalReport, EvalReport) {
    let ours = exp.evaluate(ds, "tgms", "deepset", Some(run.policy.clone()), Some(run.predictor.clone())).unwrap();
    let base = exp.evaluate(ds, "random", "deepset", None, Some(run.predictor.clone())).unwrap();
    (ours, base)
}

fn superiority_line(ours: &EvalReport, base: &EvalReport) -> (bool, String) {
    let (a, b) = (&ours.curve[0], &base.curve[0]);
    let t = sign_test(&a.per_seed_error, &b.per_seed_error);
    let pass = a.per_seed_error.len() >= 20 && a.mean_error < b.mean_error && t.p_value < 0.05;
    (
        pass,
        format!(
            "budget {}: selector {:.4} vs random {:.4}, {} wins / {} losses / {} ties over {} seeds, sign test p = {:.1e}",
            a.budget,
            a.mean_error,
            b.mean_error,
            t.wins,
            t.losses,
            t.ties,
            a.per_seed_error.len(),
            t.p_value
        ),
    )
}

fn cluster_superiority(open: &PropertyRun, report: &EvalReport, base: &EvalReport, start: Instant) -> Outcome {
    let shape_ok = open.ds.records.len() == 200
        && open.ds.records.iter().all(|r| r.stats.len() == 189 && r.stats.iter().all(|s| s.len() == 8));
    let (pass, line) = superiority_line(report, base);
    gate(
        pass && shape_ok && within(start, Duration::from_secs(7200)),
        format!("N=9 open chain, 200 states (189x8 each: {shape_ok}), {line}, {:.1?}", start.elapsed()),
    )
}

fn boundary_trend(open: &EvalReport) -> Outcome {
    let sites = open.sites.as_ref().unwrap();
    let total: usize = sites.counts.iter().sum();
    let outer = (sites.counts[0] + sites.counts[sites.counts.len() - 1]) as f64 / total as f64;
    let uniform = 2.0 / sites.counts.len() as f64;
    let ring = train_property("cluster_ring.toml");
    let (ring_report, _) = {
        let ours = ring
            .exp
            .evaluate(&ring.ds, "tgms", "deepset", Some(ring.policy.clone()), Some(ring.predictor.clone()))
            .unwrap();
        (ours, ())
    };
    let ring_tv = ring_report.sites.as_ref().unwrap().tv_from_uniform;
    Outcome {
        pass: outer > uniform && ring_tv < sites.tv_from_uniform,
        gated: false,
        detail: format!(
            "open-chain site counts {:?}, outer share {outer:.3} vs uniform {uniform:.3}; TV from uniform open {:.3}, ring {ring_tv:.3}",
            sites.counts, sites.tv_from_uniform
        ),
    }
}

fn tomography_budget() -> Outcome {
    let start = Instant::now();
    let exp = Experiment::new(config("cat_tomography.toml", &["eval.budgets=[128]"])).unwrap();
    let ds = exp.gen_data().unwrap();
    let (policy, _) = exp.train_selector(&ds, None, |_| {}).unwrap();
    let policy = Arc::new(policy);
    assert_eq!(exp.config.eval.states, StateSplit::Test);
    let n_states = exp.eval_states(&ds).len();
    let ours = exp.evaluate(&ds, "tgms", "imle", Some(policy), None).unwrap();
    let base = exp.evaluate(&ds, "random", "imle", None, None).unwrap();
    let fo = ours.curve[0].mean_fidelity.unwrap();
    let fb = base.curve[0].mean_fidelity.unwrap();
    let t = sign_test(&base.curve[0].per_seed_error, &ours.curve[0].per_seed_error);
    gate(
        fo >= fb && n_states >= 10 && within(start, Duration::from_secs(7200)),
        format!(
            "{n_states} held-out cat states, {} shots, selector trained on the {} loss, budget 128 of 256: selector fidelity {fo:.4} vs random {fb:.4} \
             (selector ahead on {}/{} seeds); fidelity >= 0.9: {} (reference level around 0.95), {:.1?}",
            ds.header.shots.unwrap_or(0),
            exp.config.selector_env,
            t.losses,
            ours.curve[0].per_seed_error.len(),
            fo >= 0.9,
            start.elapsed()
        ),
    )
}

fn transfer() -> Outcome {
    let start = Instant::now();
    let src = train_property("xxz.toml");
    let tgt = Experiment::new(config("xxz_perturbed.toml", &["eval.budgets=[10]"])).unwrap();
    let ds = tgt.gen_data().unwrap();
    let (ours, base) = compare(&tgt, &ds, &src);
    let (pass, line) = superiority_line(&ours, &base);
    let (in_ours, in_base) = compare(&src.exp, &src.ds, &src);
    let (_, in_line) = superiority_line(&in_ours, &in_base);
    gate(
        pass,
        format!("XXZ N=8 policy on B=0.1 states, {line}; in distribution: {in_line}; {:.1?}", start.elapsed()),
    )
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> Outcome {
    let out = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            gate(false, format!("panicked: {msg}"))
        });
    let status = match (out.pass, out.gated) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (trend only, not gated)",
    };
    println!("criterion {n}: {status}: {}", out.detail);
    out
}

fn main() {
    let mut outcomes = vec![
        run(1, simulation_oracles),
        run(2, information_complete_tomography),
        run(3, gradient_suite),
        run(4, architecture_invariants),
        run(5, planted_signal),
    ];

    let start = Instant::now();
    let open = catch_unwind(AssertUnwindSafe(|| {
        let open = train_property("cluster_open.toml");
        let (ours, base) = compare(&open.exp, &open.ds, &open);
        (open, ours, base)
    }));
    match &open {
        Ok((run6, ours, base)) => {
            outcomes.push(run(6, || cluster_superiority(run6, ours, base, start)));
            outcomes.push(run(7, || boundary_trend(ours)));
        }
        Err(_) => {
            outcomes.push(run(6, || gate(false, "open-chain pipeline panicked".into())));
            outcomes.push(run(7, || gate(false, "open-chain pipeline panicked".into())));
        }
    }
    outcomes.push(run(8, tomography_budget));
    outcomes.push(run(9, transfer));

    let failed: Vec<usize> =
        outcomes.iter().enumerate().filter(|(_, o)| o.gated && !o.pass).map(|(i, _)| i + 1).collect();
    if failed.is_empty() {
        println!("acceptance: all gated criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
