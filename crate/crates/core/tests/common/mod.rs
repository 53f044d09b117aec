//! Independent scalar-loop oracles and fixtures shared by the integration
//! tests. The oracles never call the library's numerical routines.
#![allow(dead_code)]

use mvr_core::model::ModelConfig;
use mvr_core::numcore::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type M = Matrix<f64>;
pub type Rows = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Rows {
    (0..r)
        .map(|_| (0..c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

pub fn to_matrix(rows: &Rows) -> M {
    M::from_rows(rows).unwrap()
}

pub fn to_rows(m: &M) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn unit_rows(rows: &Rows) -> Rows {
    rows.iter()
        .map(|r| {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

pub fn tiny_model(audio_dim: usize, video_dim: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        audio_input_dim: audio_dim,
        video_input_dim: video_dim,
        embed_dim: 3,
        g_hidden_dims: vec![12],
        h_hidden_dims: vec![8],
        dropout_p: 0.0,
        num_audio_layers: layers,
        normalize_q: true,
        normalize_z: true,
    }
}

// ---------- losses ----------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `log( exp(x_p) / Σ_k exp(x_k) )` by direct summation with a max shift.
fn log_prob(logits: &[f64], p: usize) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in logits {
        if x > m {
            m = x;
        }
    }
    let mut z = 0.0;
    for &x in logits {
        z += (x - m).exp();
    }
    logits[p] - m - z.ln()
}

/// Directional loss where anchors come from `anchor`, candidates from
/// `other`, and `positives(i)` lists the positive candidates of anchor `i`.
fn directional(anchor: &Rows, other: &Rows, tau: f64, positives: impl Fn(usize) -> Vec<usize>) -> f64 {
    let n = anchor.len();
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..n {
        let logits: Vec<f64> = (0..other.len()).map(|k| dot(&anchor[i], &other[k]) / tau).collect();
        let pos = positives(i);
        if pos.is_empty() {
            continue;
        }
        counted += 1;
        let mut s = 0.0;
        for &p in &pos {
            s += log_prob(&logits, p);
        }
        total += s / pos.len() as f64;
    }
    if counted == 0 {
        0.0
    } else {
        -total / counted as f64
    }
}

pub fn oracle_infonce(anchor: &Rows, other: &Rows, tau: f64) -> f64 {
    directional(anchor, other, tau, |i| vec![i])
}

pub fn oracle_supcon(anchor: &Rows, other: &Rows, labels: &[usize], tau: f64) -> f64 {
    directional(anchor, other, tau, |i| (0..labels.len()).filter(|&p| labels[p] == labels[i]).collect())
}

pub fn oracle_infonce_sym(a: &Rows, v: &Rows, tau: f64) -> f64 {
    0.5 * (oracle_infonce(a, v, tau) + oracle_infonce(v, a, tau))
}

pub fn oracle_supcon_sym(a: &Rows, v: &Rows, labels: &[usize], tau: f64) -> f64 {
    0.5 * (oracle_supcon(a, v, labels, tau) + oracle_supcon(v, a, labels, tau))
}

/// `[ssl_z, sup_z, ssl_h, sup_h, total]`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_total(
    z_a: &Rows,
    z_v: &Rows,
    q_ssl_a: &Rows,
    q_ssl_v: &Rows,
    q_sup_a: &Rows,
    q_sup_v: &Rows,
    labels: &[usize],
    tau: f64,
) -> [f64; 5] {
    let ssl_z = oracle_infonce_sym(z_a, z_v, tau);
    let sup_z = oracle_supcon_sym(z_a, z_v, labels, tau);
    let ssl_h = oracle_infonce_sym(q_ssl_a, q_ssl_v, tau);
    let sup_h = oracle_supcon_sym(q_sup_a, q_sup_v, labels, tau);
    [ssl_z, sup_z, ssl_h, sup_h, ssl_z + sup_z + ssl_h + sup_h]
}

// ---------- retrieval ----------

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na * nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

pub fn oracle_combine(u: &Rows, v: &Rows, alpha: f64, normalize: bool) -> Rows {
    let z: Rows = u
        .iter()
        .zip(v)
        .map(|(ur, vr)| ur.iter().zip(vr).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect())
        .collect();
    if normalize {
        unit_rows(&z)
    } else {
        z
    }
}

/// Candidate indices by descending score, ties by ascending id.
pub fn oracle_order(query: &[f64], candidates: &Rows, ids: &[String], skip: Option<usize>) -> Vec<usize> {
    let scores: Vec<f64> = candidates.iter().map(|c| oracle_cosine(query, c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&j| Some(j) != skip).collect();
    // Insertion sort keeps this independent of the library's sort.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (order[j - 1], order[j]);
            let swap = scores[b] > scores[a] || (scores[b] == scores[a] && ids[b] < ids[a]);
            if !swap {
                break;
            }
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    order
}

/// `(R@K per K, MRR)` with query `i` paired to candidate `i`.
pub fn oracle_recall(queries: &Rows, candidates: &Rows, ids: &[String], ks: &[usize]) -> (Vec<f64>, f64) {
    let n = queries.len();
    let mut hits = vec![0usize; ks.len()];
    let mut rr = 0.0;
    for i in 0..n {
        let order = oracle_order(&queries[i], candidates, ids, None);
        let rank = order.iter().position(|&j| j == i).unwrap() + 1;
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank <= k {
                *h += 1;
            }
        }
        rr += 1.0 / rank as f64;
    }
    (hits.iter().map(|&h| h as f64 / n as f64).collect(), rr / n as f64)
}

/// Macro-averaged `(P@K per K, MRR)` over `num_classes`.
pub fn oracle_genre(
    queries: &Rows,
    candidates: &Rows,
    ids: &[String],
    labels: &[usize],
    num_classes: usize,
    ks: &[usize],
    exclude_self: bool,
) -> (Vec<f64>, f64) {
    let mut p = vec![vec![0.0; ks.len()]; num_classes];
    let mut rr = vec![0.0; num_classes];
    let mut count = vec![0usize; num_classes];
    for i in 0..queries.len() {
        let order = oracle_order(&queries[i], candidates, ids, exclude_self.then_some(i));
        let y = labels[i];
        count[y] += 1;
        for (ki, &k) in ks.iter().enumerate() {
            let top = k.min(order.len());
            if top > 0 {
                let same = order[..top].iter().filter(|&&j| labels[j] == y).count();
                p[y][ki] += same as f64 / top as f64;
            }
        }
        if let Some(r) = order.iter().position(|&j| labels[j] == y) {
            rr[y] += 1.0 / (r + 1) as f64;
        }
    }
    let c = num_classes as f64;
    let macro_p = (0..ks.len())
        .map(|ki| (0..num_classes).map(|y| p[y][ki] / count[y] as f64).sum::<f64>() / c)
        .collect();
    let macro_rr = (0..num_classes).map(|y| rr[y] / count[y] as f64).sum::<f64>() / c;
    (macro_p, macro_rr)
}

/// `H(n) / n`: expected reciprocal rank under uniformly random ranks.
pub fn harmonic_mean_rr(n: usize) -> f64 {
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}

// ---------- statistics ----------

/// Upper 0.999 quantile of chi-square with `df` degrees of freedom, by
/// bisection on the regularized incomplete gamma series.
pub fn chi_square_999(df: usize) -> f64 {
    let cdf = |x: f64| lower_gamma_regularized(df as f64 / 2.0, x / 2.0);
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 0.999 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn lower_gamma_regularized(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    for n in 1..1000 {
        term *= x / (s + n as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    (sum.ln() - x + s * x.ln() - ln_gamma(s)).exp()
}
pub mod suites;
