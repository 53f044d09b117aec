//! Randomized checks used by both the module tests and the acceptance run.

use mvr_core::losses::{infonce_directional, supcon_directional, total_loss_on_tape, ContrastiveBatch, LossWeights};
use mvr_core::model::{forward_full_on_tape, AudioInput, ModelParams};
use mvr_core::numcore::{check_gradients, Matrix, Mode, Tape, Var};
use mvr_core::retrieval::{
    eval_genre_supervised, eval_self_supervised, pair_ranks, recall_from_ranks, EmbeddedCorpus, EvalOptions,
};
use mvr_core::{Direction, Result};
use rand::Rng;

use super::*;

pub const GRAD_TOL: f64 = 1e-5;
pub const LOSS_TOL: f64 = 1e-10;
pub const TAUS: [f64; 3] = [0.05, 0.1, 1.0];
const EPS: f64 = 1e-6;

// ---------- losses ----------

fn contrastive(a: &Rows, v: &Rows, labels: &[usize], tau: f64) -> ContrastiveBatch<f64> {
    ContrastiveBatch {
        emb_a: to_matrix(a),
        emb_v: to_matrix(v),
        labels: labels.to_vec(),
        temperature: tau,
    }
}

/// Random unit-row batch with `N ≤ 8`.
pub fn random_draw(seed: u64) -> (Rows, Rows, Vec<usize>) {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let d = r.random_range(1..=5);
    let classes = r.random_range(1..=4);
    let a = unit_rows(&gaussian_rows(&mut r, n, d));
    let v = unit_rows(&gaussian_rows(&mut r, n, d));
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    (a, v, labels)
}

/// Largest deviation of the four directional losses from the scalar oracle
/// over every temperature in `TAUS`.
pub fn loss_oracle_case(seed: u64) -> f64 {
    let (a, v, labels) = random_draw(seed);
    let mut worst: f64 = 0.0;
    for tau in TAUS {
        let b = contrastive(&a, &v, &labels, tau);
        let cases = [
            (infonce_directional(&b, Direction::AudioToVideo).unwrap(), oracle_infonce(&a, &v, tau)),
            (infonce_directional(&b, Direction::VideoToAudio).unwrap(), oracle_infonce(&v, &a, tau)),
            (supcon_directional(&b, Direction::AudioToVideo).unwrap(), oracle_supcon(&a, &v, &labels, tau)),
            (supcon_directional(&b, Direction::VideoToAudio).unwrap(), oracle_supcon(&v, &a, &labels, tau)),
        ];
        for (got, want) in cases {
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

/// `(N = 1 losses, all-equal N = 4 losses)`: expected 0 and ln 4.
pub fn trivial_loss_values() -> ([f64; 2], [f64; 2]) {
    let one = vec![vec![0.6, 0.8]];
    let b = contrastive(&one, &unit_rows(&vec![vec![1.0, 2.0]]), &[0], 0.1);
    let single = [
        infonce_directional(&b, Direction::AudioToVideo).unwrap(),
        supcon_directional(&b, Direction::VideoToAudio).unwrap(),
    ];
    let e = vec![vec![0.6, 0.8]; 4];
    let b = contrastive(&e, &e, &[2, 2, 2, 2], 0.1);
    let equal = [
        infonce_directional(&b, Direction::VideoToAudio).unwrap(),
        supcon_directional(&b, Direction::AudioToVideo).unwrap(),
    ];
    (single, equal)
}

// ---------- gradients ----------

/// Reduces any matrix to a scalar with fixed random weights.
fn reduce(t: &mut Tape<f64>, x: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.value(x).shape();
    let w = to_matrix(&gaussian_rows(&mut rng(seed ^ 0x5eed), r, c));
    t.weighted_sum(x, w)
}

/// Worst finite-difference relative error per primitive for one seed.
pub fn primitive_gradients(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let a = to_matrix(&gaussian_rows(&mut r, 3, 4));
    let b = to_matrix(&gaussian_rows(&mut r, 4, 2));
    let c = to_matrix(&gaussian_rows(&mut r, 3, 4));
    let bias = to_matrix(&gaussian_rows(&mut r, 1, 4));
    let mask = to_matrix(&(0..3).map(|_| (0..4).map(|_| if r.random_bool(0.5) { 2.0 } else { 0.0 }).collect()).collect());
    let layers: Vec<M> = (0..3).map(|_| to_matrix(&gaussian_rows(&mut r, 3, 4))).collect();
    let lw = to_matrix(&gaussian_rows(&mut r, 1, 3));
    let s = seed;

    type F = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;
    let cases: Vec<(&'static str, F, Vec<M>)> = vec![
        ("matmul", Box::new(move |t, v| { let y = t.matmul(v[0], v[1])?; reduce(t, y, s) }), vec![a.clone(), b.clone()]),
        ("matmul_transposed", Box::new(move |t, v| { let y = t.matmul_transposed(v[0], v[1])?; reduce(t, y, s) }), vec![a.clone(), c.clone()]),
        ("transpose", Box::new(move |t, v| { let y = t.transpose(v[0]); reduce(t, y, s) }), vec![a.clone()]),
        ("add_row_bias", Box::new(move |t, v| { let y = t.add_row_bias(v[0], v[1])?; reduce(t, y, s) }), vec![a.clone(), bias.clone()]),
        ("add", Box::new(move |t, v| { let y = t.add(v[0], v[1])?; reduce(t, y, s) }), vec![a.clone(), c.clone()]),
        ("scale", Box::new(move |t, v| { let y = t.scale(v[0], -1.7); reduce(t, y, s) }), vec![a.clone()]),
        ("relu", Box::new(move |t, v| { let y = t.relu(v[0]); reduce(t, y, s) }), vec![a.clone()]),
        ("dropout_mask", Box::new({ let m = mask.clone(); move |t, v| { let y = t.mask(v[0], m.clone())?; reduce(t, y, s) } }), vec![a.clone()]),
        ("l2_normalize", Box::new(move |t, v| { let y = t.l2_normalize(v[0])?; reduce(t, y, s) }), vec![a.clone()]),
        ("log_softmax_rows", Box::new(move |t, v| { let y = t.log_softmax_rows(v[0]); reduce(t, y, s) }), vec![a.clone()]),
        ("weighted_sum", Box::new(move |t, v| reduce(t, v[0], s)), vec![a.clone()]),
        ("layer_mix", Box::new({ let l = layers.clone(); move |t, v| { let y = t.layer_mix(v[0], l.clone())?; reduce(t, y, s) } }), vec![lw.clone()]),
    ];
    cases
        .into_iter()
        .map(|(name, f, params)| {
            let g = check_gradients(f, &params, EPS).expect("gradient check runs");
            (name, g.max_rel_error)
        })
        .collect()
}

/// Worst relative error of the full four-term objective through the whole
/// model (dropout off) for one seed; odd seeds use stacked audio layers.
pub fn full_objective_gradient(seed: u64) -> f64 {
    let mut r = rng(seed);
    let layers = if seed % 2 == 1 { 3 } else { 0 };
    let cfg = tiny_model(5, 4, layers);
    let mut params = ModelParams::<f64>::init(&cfg, &mut r).unwrap();
    // Positive biases keep every ReLU row alive, so no row normalizes from zero.
    for (name, t) in params.names.iter().zip(params.tensors.iter_mut()) {
        if name.ends_with(".bias") {
            let (rows, cols) = t.shape();
            *t = M::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(0.1..0.5)).collect()).unwrap();
        }
    }
    let n = 6;
    let audio = if layers == 0 {
        AudioInput::Flat(to_matrix(&gaussian_rows(&mut r, n, 5)))
    } else {
        AudioInput::Layered((0..layers).map(|_| to_matrix(&gaussian_rows(&mut r, n, 5))).collect())
    };
    let video = to_matrix(&gaussian_rows(&mut r, n, 4));
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let layout = params.clone();
    let f = move |t: &mut Tape<f64>, vars: &[Var]| {
        let emb = forward_full_on_tape(t, &layout, vars, &audio, &video, 0.5, Mode::Train, &mut rng(0))?;
        Ok(total_loss_on_tape(t, &emb, &labels, 0.1, &LossWeights::default())?.total)
    };
    check_gradients(f, &params.tensors, EPS).unwrap().max_rel_error
}

// ---------- metrics ----------

pub fn random_corpus(seed: u64, n: usize, classes: usize, dim: usize, normalize: bool) -> EmbeddedCorpus<f64> {
    let mut r = rng(seed);
    let mut m = || to_matrix(&gaussian_rows(&mut r, n, dim));
    let (ua, va, uv, vv) = (m(), m(), m(), m());
    let mut r = rng(seed + 1);
    // Shuffled ids so that id order differs from row order.
    let mut ids: Vec<String> = (0..n).map(|i| format!("item{i:03}")).collect();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut r);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut r);
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    EmbeddedCorpus::new(ids, labels, names, ua, va, uv, vv, normalize).unwrap()
}

fn sides_as_rows(c: &EmbeddedCorpus<f64>, d: Direction, alpha: f64) -> (Rows, Rows) {
    let a = oracle_combine(&to_rows(&c.u_audio), &to_rows(&c.v_audio), alpha, c.normalize_z);
    let v = oracle_combine(&to_rows(&c.u_video), &to_rows(&c.v_video), alpha, c.normalize_z);
    match d {
        Direction::AudioToVideo => (a, v),
        Direction::VideoToAudio => (v, a),
    }
}

/// Compares library metrics with the brute-force oracle on one corpus.
/// Returns a description of the first mismatch.
pub fn metric_oracle_case(seed: u64) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(3..=30);
    let classes = r.random_range(1..=3.min(n));
    let dim = r.random_range(2..=5);
    let alpha = r.random_range(0..=10) as f64 / 10.0;
    // Quantized embeddings make exact score ties common.
    let mut c = random_corpus(seed, n, classes, dim, seed % 2 == 0);
    if seed % 3 == 0 {
        for m in [&mut c.u_audio, &mut c.v_audio, &mut c.u_video, &mut c.v_video] {
            *m = m.map(|x| x.round());
        }
        // Rounded rows can cancel to zero, which normalization rejects.
        c.normalize_z = false;
    }
    let ks = vec![1, 3, 10];
    let exclude_self = seed % 4 == 1;
    let opts = EvalOptions {
        ks: ks.clone(),
        exclude_self,
        ..EvalOptions::default()
    };
    let ssl = eval_self_supervised(&c, alpha, &opts).map_err(|e| e.to_string())?;
    let genre = eval_genre_supervised(&c, alpha, &opts).map_err(|e| e.to_string())?;
    for d in Direction::BOTH {
        let (q, cand) = sides_as_rows(&c, d, alpha);
        let (want_r, want_mrr) = oracle_recall(&q, &cand, &c.ids, &ks);
        let got = ssl.direction(d);
        let got_r: Vec<f64> = ks.iter().map(|k| got.at_k[k]).collect();
        if got_r != want_r || got.mrr != want_mrr {
            return Err(format!("seed {seed} {d}: recall {got_r:?}/{} vs {want_r:?}/{want_mrr}", got.mrr));
        }
        let (want_p, want_rr) = oracle_genre(&q, &cand, &c.ids, &c.labels, classes, &ks, exclude_self);
        let got = genre.direction(d);
        let got_p: Vec<f64> = ks.iter().map(|k| got.at_k[k]).collect();
        if got_p != want_p || got.mrr != want_rr {
            return Err(format!("seed {seed} {d}: precision {got_p:?}/{} vs {want_p:?}/{want_rr}", got.mrr));
        }
    }
    Ok(())
}

/// Mean R@1 and MRR of random corpora of size `n` over `trials` seeds,
/// with their standard errors.
pub fn random_recall_stats(n: usize, trials: u64) -> (f64, f64, f64, f64) {
    let mut r1 = Vec::new();
    let mut mrr = Vec::new();
    for t in 0..trials {
        let c = random_corpus(90_000 + t, n, 2, 8, true);
        let ranks = pair_ranks(&c, Direction::VideoToAudio, 0.5).unwrap();
        let s = recall_from_ranks(&ranks, &[1]);
        r1.push(s.at_k[&1]);
        mrr.push(s.mrr);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, (var / v.len() as f64).sqrt())
    };
    let (m1, se1) = stats(&r1);
    let (m2, se2) = stats(&mrr);
    (m1, se1, m2, se2)
}

pub fn matrix_close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

// ---------- architecture ----------

pub struct Fixture {
    pub params: ModelParams<f64>,
    pub audio: AudioInput<f64>,
    pub video: M,
    pub labels: Vec<usize>,
}

pub fn fixture(seed: u64, normalize: bool, layers: usize) -> Fixture {
    let mut r = rng(seed);
    let mut cfg = tiny_model(5, 4, layers);
    cfg.normalize_z = normalize;
    cfg.normalize_q = normalize;
    let mut params = ModelParams::<f64>::init(&cfg, &mut r).unwrap();
    for (name, t) in params.names.iter().zip(params.tensors.iter_mut()) {
        if name.ends_with(".bias") {
            let (rows, cols) = t.shape();
            *t = M::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(0.1..0.5)).collect()).unwrap();
        }
    }
    let n = 5;
    let audio = if layers == 0 {
        AudioInput::Flat(to_matrix(&gaussian_rows(&mut r, n, 5)))
    } else {
        AudioInput::Layered((0..layers).map(|_| to_matrix(&gaussian_rows(&mut r, n, 5))).collect())
    };
    let video = to_matrix(&gaussian_rows(&mut r, n, 4));
    let labels = (0..n).map(|i| i % 2).collect();
    Fixture {
        params,
        audio,
        video,
        labels,
    }
}

pub fn forward(f: &Fixture, params: &ModelParams<f64>, alpha: f64) -> mvr_core::model::EmbeddingSet<f64> {
    mvr_core::model::forward_full(params, &f.audio, &f.video, alpha, Mode::Eval, &mut rng(0)).unwrap()
}

/// Pre-normalization linearity of z in α on the 0.1 grid, and the α = 0 / 1
/// endpoint identities with normalization on.
pub fn linearity_and_endpoints(seed: u64) -> std::result::Result<(), String> {
    let f = fixture(seed, false, 0);
    let z0 = forward(&f, &f.params, 0.0);
    let z1 = forward(&f, &f.params, 1.0);
    for (name, z, w) in [("audio", &z0.z_a, &z0.u_a), ("video", &z1.z_v, &z1.v_v)] {
        if z != w {
            return Err(format!("seed {seed}: {name} endpoint is not the projected embedding"));
        }
    }
    for i in 0..=10 {
        let alpha = i as f64 / 10.0;
        let za = forward(&f, &f.params, alpha);
        for (z, a, b) in [(&za.z_a, &z0.z_a, &z1.z_a), (&za.z_v, &z0.z_v, &z1.z_v)] {
            for j in 0..z.data().len() {
                let (x0, x1) = (a.data()[j], b.data()[j]);
                let same_formula = (1.0 - alpha) * x0 + alpha * x1;
                if z.data()[j] != same_formula {
                    return Err(format!("seed {seed} alpha {alpha}: z differs from (1-a)z0 + a z1"));
                }
                let affine = x0 + alpha * (x1 - x0);
                if (z.data()[j] - affine).abs() > 4.0 * f64::EPSILON * x0.abs().max(x1.abs()).max(1.0) {
                    return Err(format!("seed {seed} alpha {alpha}: z differs from z0 + a(z1 - z0)"));
                }
            }
        }
    }
    let f = fixture(seed, true, 0);
    let e0 = forward(&f, &f.params, 0.0);
    let e1 = forward(&f, &f.params, 1.0);
    let pairs = [(&e0.z_a, &e0.u_a), (&e0.z_v, &e0.u_v), (&e1.z_a, &e1.v_a), (&e1.z_v, &e1.v_v)];
    if !pairs.iter().all(|(z, w)| matrix_close(z, w, 1e-12)) {
        return Err(format!("seed {seed}: normalized endpoint identity fails"));
    }
    for m in [&e0.q_ssl_a, &e0.q_sup_v, &e0.u_a, &e0.v_v, &e0.z_a, &e0.z_v] {
        if m.row_norms().iter().any(|n| (n - 1.0).abs() > 1e-12) {
            return Err(format!("seed {seed}: an emitted row is not unit norm"));
        }
    }
    Ok(())
}

fn perturbed(params: &ModelParams<f64>, prefix: &str, seed: u64) -> ModelParams<f64> {
    let mut p = params.clone();
    let mut r = rng(seed ^ 0xabc);
    for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
        if name.starts_with(prefix) {
            *t = t.add(&to_matrix(&gaussian_rows(&mut r, t.rows(), t.cols())).scale(0.3)).unwrap();
        }
    }
    p
}

/// Perturbing one parameter group changes exactly the embeddings that
/// depend on it.
pub fn parameter_isolation(seed: u64) -> std::result::Result<(), String> {
    let f = fixture(seed, true, if seed % 2 == 0 { 0 } else { 3 });
    let base = forward(&f, &f.params, 0.5);
    let names = |e: &mvr_core::model::EmbeddingSet<f64>| {
        [
            ("q_ssl_a", e.q_ssl_a.clone()),
            ("q_sup_a", e.q_sup_a.clone()),
            ("q_ssl_v", e.q_ssl_v.clone()),
            ("q_sup_v", e.q_sup_v.clone()),
            ("u_a", e.u_a.clone()),
            ("v_a", e.v_a.clone()),
            ("u_v", e.u_v.clone()),
            ("v_v", e.v_v.clone()),
        ]
    };
    // (group, embeddings that must change)
    let cases: [(&str, &[&str]); 10] = [
        ("audio.g.", &["q_ssl_a", "q_sup_a", "u_a", "v_a"]),
        ("audio.h_ssl.", &["q_ssl_a", "u_a"]),
        ("audio.h_sup.", &["q_sup_a", "v_a"]),
        ("audio.p_ssl.", &["u_a"]),
        ("audio.p_sup.", &["v_a"]),
        ("video.g.", &["q_ssl_v", "q_sup_v", "u_v", "v_v"]),
        ("video.h_ssl.", &["q_ssl_v", "u_v"]),
        ("video.h_sup.", &["q_sup_v", "v_v"]),
        ("video.p_ssl.", &["u_v"]),
        ("video.p_sup.", &["v_v"]),
    ];
    let base_named = names(&base);
    for (group, changed) in cases {
        let p = perturbed(&f.params, group, seed);
        let out = names(&forward(&f, &p, 0.5));
        for ((name, before), (_, after)) in base_named.iter().zip(&out) {
            let differs = before != after;
            if differs != changed.contains(name) {
                return Err(format!(
                    "seed {seed}: perturbing {group} {} {name}",
                    if differs { "changed" } else { "left unchanged" }
                ));
            }
        }
    }
    if f.params.audio.layer_weights.is_some() {
        let p = perturbed(&f.params, "audio.layer_weights", seed);
        let out = names(&forward(&f, &p, 0.5));
        for ((name, before), (_, after)) in base_named.iter().zip(&out) {
            if (before != after) != name.ends_with("_a") {
                return Err(format!("seed {seed}: layer weights and {name} disagree on dependence"));
            }
        }
    }
    Ok(())
}
