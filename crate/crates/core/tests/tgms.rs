use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgms_core::autodiff::{Adam, AdamConfig, Tensor};
use tgms_core::povm::{FamilyKind, PovmFamily};
use tgms_core::tgms::*;
use tgms_core::Result;

fn triplet(n: usize) -> PovmFamily {
    PovmFamily::new(FamilyKind::TripletPauli { n, periodic: false }).unwrap()
}

fn small_config() -> PolicyConfig {
    PolicyConfig { d_h: 16, layers: 2, heads: 2, ff_hidden: 32, history_hidden: 16, clip: 10.0 }
}

fn policy(family: &PovmFamily, seed: u64) -> PolicyModel {
    PolicyModel::new(family, small_config(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Random outcome vectors per (state, setting) and a loss given by a closure of the history.
struct ToyEnv {
    n: usize,
    stats: Vec<Vec<Vec<f64>>>,
    loss: Box<dyn Fn(usize, &[usize]) -> f64>,
}

impl ToyEnv {
    fn new(n: usize, states: usize, width: usize, seed: u64, loss: impl Fn(usize, &[usize]) -> f64 + 'static) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = (0..states)
            .map(|_| (0..n).map(|_| (0..width).map(|_| rng.random::<f64>()).collect()).collect())
            .collect();
        Self { n, stats, loss: Box::new(loss) }
    }
}

impl EpisodeEnv for ToyEnv {
    fn n_settings(&self) -> usize {
        self.n
    }

    fn stats(&self, state: usize, setting: usize) -> &[f64] {
        &self.stats[state][setting]
    }

    fn loss(&self, state: usize, history: &[usize]) -> Result<f64> {
        Ok((self.loss)(state, history))
    }
}

fn hashed_loss(state: usize, history: &[usize]) -> f64 {
    let mut h = (state as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for &s in history {
        h = (h ^ s as u64).wrapping_mul(0x100_0000_01B3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn random_records(n: usize, t: usize, width: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, Vec<f64>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.into_iter().take(t).map(|s| (s, (0..width).map(|_| rng.random::<f64>()).collect())).collect()
}

fn as_refs(r: &[(usize, Vec<f64>)]) -> Vec<(usize, &[f64])> {
    r.iter().map(|(s, v)| (*s, v.as_slice())).collect()
}

#[test]
fn encoder_is_permutation_equivariant() {
    let family = triplet(5);
    let p = policy(&family, 1);
    let f = p.features();
    let h = p.encode_features(&f).unwrap();
    let mut perm: Vec<usize> = (0..f.rows()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let fp = Tensor::from_rows(&perm.iter().map(|&i| f.row_slice(i).to_vec()).collect::<Vec<_>>());
    let hp = p.encode_features(&fp).unwrap();
    let mut worst: f64 = 0.0;
    for (r, &i) in perm.iter().enumerate() {
        for (a, b) in hp.row_slice(r).iter().zip(h.row_slice(i)) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn duplicate_features_encode_identically() {
    let family = triplet(4);
    let p = policy(&family, 3);
    let mut rows: Vec<Vec<f64>> = (0..p.features().rows()).map(|i| p.features().row_slice(i).to_vec()).collect();
    rows[7] = rows[2].clone();
    let h = p.encode_features(&Tensor::from_rows(&rows)).unwrap();
    assert_eq!(h.row_slice(7), h.row_slice(2));
}

#[test]
fn encoder_outputs_are_finite_and_nonzero_on_triplet_family() {
    let family = triplet(9);
    assert_eq!(family.len(), 189);
    for seed in 0..10 {
        let p = PolicyModel::new(&family, PolicyConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let prep = p.prepare().unwrap();
        assert_eq!(prep.h.shape(), (189, 64));
        for i in 0..189 {
            let norm: f64 = prep.h.row_slice(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm.is_finite() && norm > 1e-6, "seed {seed} row {i}: {norm}");
        }
    }
}

#[test]
fn bad_head_count_is_a_config_error() {
    let cfg = PolicyConfig { d_h: 10, heads: 4, ..small_config() };
    assert!(PolicyModel::new(&triplet(3), cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn empty_history_returns_h0() {
    let p = policy(&triplet(4), 4);
    let prep = p.prepare().unwrap();
    let hx = p.state_summary(&prep.h, &[]).unwrap();
    assert_eq!(hx.shape(), (1, 16));
    assert_eq!(&hx, p.h0());
}

#[test]
fn single_record_summary_is_the_mlp_output() {
    let p = policy(&triplet(4), 5);
    let prep = p.prepare().unwrap();
    let v = [0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1];
    let hx = p.state_summary(&prep.h, &[(11, &v)]).unwrap();
    let e = p.record_embedding(&prep.h, 11, &v).unwrap();
    assert_eq!(hx, e);
}

#[test]
fn summary_is_history_order_invariant() {
    let p = policy(&triplet(5), 6);
    let prep = p.prepare().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let mut recs = random_records(p.n_settings(), 12, 8, &mut rng);
        let a = p.state_summary(&prep.h, &as_refs(&recs)).unwrap();
        recs.shuffle(&mut rng);
        let b = p.state_summary(&prep.h, &as_refs(&recs)).unwrap();
        let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "{d}");
    }
}

#[test]
fn incremental_summary_matches_batch_summary() {
    let p = policy(&triplet(5), 8);
    let prep = p.prepare().unwrap();
    let recs = random_records(p.n_settings(), 6, 8, &mut ChaCha8Rng::seed_from_u64(9));
    let mut s = Summary::new(&p);
    for (k, v) in &recs {
        s.add(&p, &prep, *k, v).unwrap();
    }
    let a = s.current(&p);
    let b = p.state_summary(&prep.h, &as_refs(&recs)).unwrap();
    let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12);
}

#[test]
fn fresh_policy_selects_uniformly() {
    let p = policy(&triplet(9), 10);
    let prep = p.prepare().unwrap();
    let mut used = vec![false; p.n_settings()];
    let probs = p.selection_distribution(p.h0(), &prep.keys, &used).unwrap();
    for q in &probs {
        assert!((q - 1.0 / 189.0).abs() < 1e-15);
    }
    used[3] = true;
    used[100] = true;
    let probs = p.selection_distribution(p.h0(), &prep.keys, &used).unwrap();
    assert_eq!(probs[3], 0.0);
    assert!((probs[0] - 1.0 / 187.0).abs() < 1e-15);
}

#[test]
fn single_unused_setting_gets_probability_one() {
    let p = policy(&triplet(3), 11);
    let prep = p.prepare().unwrap();
    let mut used = vec![true; 27];
    used[13] = false;
    let probs = p.selection_distribution(p.h0(), &prep.keys, &used).unwrap();
    assert_eq!(probs[13], 1.0);
    assert_eq!(probs.iter().sum::<f64>(), 1.0);
}

#[test]
fn all_used_is_an_error() {
    assert!(selection_from_scores(&[0.0, 1.0], &[true, true]).is_err());
}

#[test]
fn masked_distribution_matches_softmax_oracle() {
    let scores = [0.0, 2f64.ln(), 4f64.ln()];
    let p = selection_from_scores(&scores, &[true, false, false]).unwrap();
    let want = [0.0, 1.0 / 3.0, 2.0 / 3.0];
    for (a, b) in p.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    // A large clip leaves small scores essentially unchanged.
    let c = 1e4;
    let clipped: Vec<f64> = scores.iter().map(|s| c * (s / c).tanh()).collect();
    let p = selection_from_scores(&clipped, &[true, false, false]).unwrap();
    for (a, b) in p.iter().zip(want) {
        assert!((a - b).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn distribution_is_normalized_and_respects_mask(seed in 0u64..1000, used_bits in proptest::collection::vec(any::<bool>(), 27)) {
        prop_assume!(used_bits.iter().any(|u| !u));
        let family = triplet(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = policy(&family, seed);
        let wq = p.wq_id();
        for v in p.store.get_mut(wq).data_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        let prep = p.prepare().unwrap();
        let hx = Tensor::row((0..16).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect());
        let probs = p.selection_distribution(&hx, &prep.keys, &used_bits).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (q, u) in probs.iter().zip(&used_bits) {
            if *u {
                prop_assert_eq!(*q, 0.0);
            } else {
                prop_assert!(*q > 0.0 && *q <= 1.0);
            }
        }
    }
}

fn toy_acquire(k: usize) -> Result<Vec<f64>> {
    Ok(vec![(k % 7) as f64 / 7.0; 8])
}

#[test]
fn full_budget_episode_is_a_permutation() {
    let p = policy(&triplet(3), 12);
    let prep = p.prepare().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = run_episode(&p, &prep, 27, Mode::Sample, &mut rng, &[], &mut toy_acquire).unwrap();
    let mut s = traj.settings();
    s.sort_unstable();
    assert_eq!(s, (0..27).collect::<Vec<_>>());
    assert!(traj.used.iter().all(|&u| u));
    assert!(traj.steps.iter().all(|st| st.prob > 0.0 && st.prob <= 1.0));
}

#[test]
fn budget_beyond_family_is_an_error() {
    let p = policy(&triplet(3), 12);
    let prep = p.prepare().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(run_episode(&p, &prep, 28, Mode::Sample, &mut rng, &[], &mut toy_acquire).is_err());
}

#[test]
fn argmax_and_seeded_sampling_are_deterministic() {
    let mut p = policy(&triplet(4), 13);
    let wq = p.wq_id();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for v in p.store.get_mut(wq).data_mut() {
        *v = rng.random::<f64>() - 0.5;
    }
    let prep = p.prepare().unwrap();
    let run = |mode, seed| {
        run_episode(&p, &prep, 12, mode, &mut ChaCha8Rng::seed_from_u64(seed), &[], &mut toy_acquire).unwrap()
    };
    assert_eq!(run(Mode::Argmax, 1), run(Mode::Argmax, 2));
    assert_eq!(run(Mode::Sample, 5), run(Mode::Sample, 5));
    assert_ne!(run(Mode::Sample, 5).settings(), run(Mode::Sample, 6).settings());
}

#[test]
fn forced_choices_override_the_policy() {
    let p = policy(&triplet(3), 14);
    let prep = p.prepare().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = run_episode(&p, &prep, 5, Mode::Argmax, &mut rng, &[(0, 20), (3, 4)], &mut toy_acquire).unwrap();
    assert_eq!(traj.steps[0].setting, 20);
    assert_eq!(traj.steps[3].setting, 4);
    assert!(traj.steps[0].forced && traj.steps[3].forced && !traj.steps[1].forced);
    let repeat = run_episode(&p, &prep, 5, Mode::Argmax, &mut rng, &[(0, 20), (1, 20)], &mut toy_acquire);
    assert!(repeat.is_err());
}

#[test]
fn first_choice_of_fresh_policy_passes_chi_square() {
    let p = policy(&triplet(3), 15);
    let prep = p.prepare().unwrap();
    let mut counts = [0usize; 27];
    for seed in 0..1000 {
        let traj = run_episode(&p, &prep, 1, Mode::Sample, &mut ChaCha8Rng::seed_from_u64(seed), &[], &mut toy_acquire)
            .unwrap();
        counts[traj.steps[0].setting] += 1;
    }
    let e = 1000.0 / 27.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99th percentile of χ² with 26 degrees of freedom.
    assert!(chi2 < 45.642, "{chi2}");
}

#[test]
fn sampled_episodes_never_repeat_a_setting() {
    let family = triplet(3);
    let mut p = policy(&family, 16);
    let wq = p.wq_id();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in p.store.get_mut(wq).data_mut() {
        *v = 2.0 * (rng.random::<f64>() - 0.5);
    }
    let prep = p.prepare().unwrap();
    let mut violations = 0;
    for seed in 0..10_000u64 {
        let t = 1 + (seed as usize % 27);
        let traj = run_episode(&p, &prep, t, Mode::Sample, &mut ChaCha8Rng::seed_from_u64(seed), &[], &mut toy_acquire)
            .unwrap();
        let mut s = traj.settings();
        s.sort_unstable();
        s.dedup();
        if s.len() != t {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn branches_are_distinct_and_follow_the_distribution() {
    let p = [0.5, 0.0, 0.3, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut first = [0usize; 4];
    for _ in 0..20_000 {
        let b = sample_without_replacement(&p, 3, &mut rng).unwrap();
        assert!(!b.contains(&1));
        let mut s = b.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 3);
        first[b[0]] += 1;
    }
    assert!((first[0] as f64 / 20_000.0 - 0.5).abs() < 0.02);
    assert!(sample_without_replacement(&p, 4, &mut rng).is_err());
}

#[test]
fn window_schedule_and_accounting() {
    let w = Window::first(5);
    assert_eq!((w.t1, w.t2, w.len()), (1, 5, 5));
    let w2 = w.shifted(2, 20);
    let w3 = w2.shifted(2, 20);
    assert_eq!((w2.t1, w2.t2), (3, 7));
    assert_eq!((w3.t1, w3.t2), (5, 9));
    assert_eq!(w3.shifted(5, 10), Window { t1: 6, t2: 10 });

    let family = triplet(4);
    let p = policy(&family, 17);
    let env = ToyEnv::new(family.len(), 4, 8, 0, hashed_loss);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for win in [w, w2, w3] {
        let batch = collect_batch(&p, &env, &[0, 1, 2, 3], win, 3, &mut rng).unwrap();
        assert_eq!(batch.windowed_steps(), 4 * 5);
        for ep in &batch.episodes {
            assert_eq!(ep.steps.len(), 5);
            assert_eq!(ep.path.len(), win.t2);
            for st in &ep.steps {
                assert_eq!(st.branches.len(), 3);
                assert_eq!(ep.path[st.t - 1], st.branches[0]);
                assert!(!ep.path[..st.t - 1].iter().any(|s| st.branches.contains(s)));
            }
        }
    }
}

#[test]
fn too_many_branches_is_an_error() {
    let family = triplet(3);
    let p = policy(&family, 18);
    let env = ToyEnv::new(27, 1, 8, 0, hashed_loss);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(collect_batch(&p, &env, &[0], Window { t1: 20, t2: 24 }, 8, &mut rng).is_err());
    let cfg = SelectorTrainConfig { k: 8, t_max: 24, ..Default::default() };
    let mut p2 = p.clone();
    assert!(train_selector(&mut p2, &env, &[0], &[], &cfg, 0, |_| {}).is_err());
}

#[test]
fn equal_branch_losses_give_zero_gradient() {
    let family = triplet(4);
    let mut p = policy(&family, 19);
    let wq = p.wq_id();
    for (i, v) in p.store.get_mut(wq).data_mut().iter_mut().enumerate() {
        *v = ((i * 37 % 11) as f64 - 5.0) / 10.0;
    }
    let env = ToyEnv::new(family.len(), 3, 8, 1, |_, _| 0.7);
    let batch = collect_batch(&p, &env, &[0, 1, 2], Window::first(4), 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let out = surrogate(&p, &env, &batch, LossMode::Advantage).unwrap();
    assert_eq!(out.loss, 0.0);
    assert_eq!(out.grads.norm(), 0.0);
    let lit = surrogate(&p, &env, &batch, LossMode::Literal).unwrap();
    assert!(lit.grads.norm() > 0.0);
}

#[test]
fn one_small_step_decreases_the_surrogate() {
    let family = triplet(4);
    let mut p = policy(&family, 20);
    let wq = p.wq_id();
    for (i, v) in p.store.get_mut(wq).data_mut().iter_mut().enumerate() {
        *v = ((i * 13 % 7) as f64 - 3.0) / 20.0;
    }
    let env = ToyEnv::new(family.len(), 6, 8, 2, hashed_loss);
    let batch =
        collect_batch(&p, &env, &[0, 1, 2, 3, 4, 5], Window::first(5), 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let before = surrogate(&p, &env, &batch, LossMode::Advantage).unwrap();
    assert!(before.grads.norm() > 0.0);
    let mut opt = Adam::new(&p.store, AdamConfig { lr: 1e-5, ..Default::default() });
    opt.step(&mut p.store, &before.grads);
    let after = surrogate(&p, &env, &batch, LossMode::Advantage).unwrap();
    assert!(after.loss < before.loss, "{} -> {}", before.loss, after.loss);
}

fn bandit_policy(seed: u64) -> PolicyModel {
    PolicyModel::with_features(
        None,
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        1,
        small_config(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

#[test]
fn selector_learns_planted_bandit() {
    let env = ToyEnv::new(2, 8, 1, 0, |_, h| if h[0] == 0 { 0.5 } else { 1.0 });
    let states: Vec<usize> = (0..8).collect();
    let cfg = SelectorTrainConfig { epochs: 40, batch: 8, k: 2, window: 1, t_max: 1, lr: 1e-2, ..Default::default() };
    for seed in 0..5 {
        let mut p = bandit_policy(seed);
        let logs = train_selector(&mut p, &env, &states, &states, &cfg, seed, |_| {}).unwrap();
        assert_eq!(logs.len(), 40);
        let prep = p.prepare().unwrap();
        let probs = p.selection_distribution(p.h0(), &prep.keys, &[false, false]).unwrap();
        assert!(probs[0] > 0.95, "seed {seed}: P(A) = {}", probs[0]);
        assert!((logs.last().unwrap().val_loss - 0.5).abs() < 1e-12);
    }
}

#[test]
fn training_logs_track_windows() {
    let family = triplet(3);
    let mut p = policy(&family, 21);
    let env = ToyEnv::new(27, 6, 8, 3, hashed_loss);
    let states: Vec<usize> = (0..6).collect();
    let cfg = SelectorTrainConfig {
        epochs: 4,
        batch: 3,
        k: 2,
        window: 3,
        window_shift: Some(2),
        shift_every: Some(1),
        t_max: 6,
        ..Default::default()
    };
    let mut seen = Vec::new();
    let logs = train_selector(&mut p, &env, &states, &states[..2], &cfg, 1, |l| seen.push(l.clone())).unwrap();
    assert_eq!(seen, logs);
    let windows: Vec<(usize, usize)> = logs.iter().map(|l| (l.window.t1, l.window.t2)).collect();
    assert_eq!(windows, vec![(1, 3), (3, 5), (4, 6), (4, 6)]);
    assert!(logs.iter().all(|l| l.windowed_steps == 6 * 3));
    assert!(logs.iter().all(|l| l.mean_entropy > 0.0 && l.val_loss.is_finite()));
    assert!(p.store.all_finite());
}

#[test]
fn policy_checkpoint_roundtrip() {
    let p = policy(&triplet(4), 22);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    p.save(&path).unwrap();
    let q = PolicyModel::load(&path).unwrap();
    let a = p.prepare().unwrap();
    let b = q.prepare().unwrap();
    assert_eq!(a.h, b.h);
    assert_eq!(a.keys, b.keys);
    assert_eq!(q.family, p.family);
}

fn cat_dataset(shots: Option<u64>) -> tgms_core::dataset::Dataset {
    use tgms_core::dataset::{generate, GenOptions};
    use tgms_core::tasks::{task_registry, TaskConfig};
    let cfg = TaskConfig::default();
    let task = task_registry().build("cat-tomography", &cfg).unwrap();
    generate(&*task, &cfg, &GenOptions { n_states: 3, seed: 9, shots, ..Default::default() }).unwrap()
}

#[test]
fn fisher_loss_of_empty_history_is_one() {
    let ds = cat_dataset(Some(1000));
    let env = FisherEnv::new(&ds, &[0, 1, 2]).unwrap();
    for s in 0..3 {
        assert!((env.loss(s, &[]).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fisher_single_point_matches_closed_form() {
    use tgms_core::qsim::{coherent_amplitudes, C64};
    let ds = cat_dataset(Some(1000));
    let env = FisherEnv::new(&ds, &[0]).unwrap();
    let family = ds.family().unwrap();
    let t = &ds.records[0].targets;
    let psi: Vec<C64> = (0..16).map(|k| C64::new(t[k], t[16 + k])).collect();
    let lambda = 30.0;
    for k in [0, 37, 119, 136, 200, 255] {
        let a = coherent_amplitudes(family.setting(k).unwrap().alpha().unwrap(), 16);
        let c: C64 = a.iter().zip(&psi).map(|(x, y)| x.conj() * y).sum();
        let q = c.norm_sqr();
        let norm_a: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let var = (q * (1.0 - q) / 1000.0).max(1e-6);
        let r2 = 4.0 * q * (norm_a - q) / var;
        let expect = 29.0 / lambda + 1.0 / (lambda + r2);
        let got = env.loss(0, &[k]).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect, "setting {k}: {got} vs {expect}");
    }
}

#[test]
fn fisher_loss_decreases_with_more_points() {
    let ds = cat_dataset(None);
    let env = FisherEnv::new(&ds, &[1]).unwrap();
    let mut idx: Vec<usize> = (0..256).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let mut prev = env.loss(1, &[]).unwrap();
    for t in 1..=256 {
        let l = env.loss(1, &idx[..t]).unwrap();
        assert!(l <= prev + 1e-12, "t = {t}: {l} > {prev}");
        prev = l;
    }
    assert!(prev < 1e-3, "{prev}");
}

#[test]
fn fisher_env_rejects_other_families() {
    use tgms_core::dataset::{generate, GenOptions};
    use tgms_core::tasks::{task_registry, TaskConfig};
    let cfg = TaskConfig { n: Some(4), ..Default::default() };
    let task = task_registry().build("cluster-ising-open", &cfg).unwrap();
    let ds = generate(&*task, &cfg, &GenOptions { n_states: 2, seed: 1, ..Default::default() }).unwrap();
    assert!(FisherEnv::new(&ds, &[0]).is_err());
    assert!(FisherEnv::new(&cat_dataset(None), &[0]).unwrap().loss(1, &[0]).is_err());
}
