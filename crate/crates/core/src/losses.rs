//! Cross-modal contrastive objectives.
//!
//! Both losses are expressed as a constant-weighted sum over a row-wise
//! log-softmax of the scaled similarity matrix `S = anchor · otherᵀ / τ`:
//!
//! * InfoNCE weights the diagonal, `W_ii = −1/N`.
//! * SupCon weights every same-label entry, `W_ip = −1/(N·|P(i)|)`.
//!
//! The denominators run over every candidate in the batch, including the
//! anchor's own pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EmbeddingVars;
use crate::numcore::{Matrix, Scalar, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Audio anchors, video candidates.
    AudioToVideo,
    /// Video anchors, audio candidates.
    VideoToAudio,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::AudioToVideo, Direction::VideoToAudio];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AudioToVideo => "audio_to_video",
            Direction::VideoToAudio => "video_to_audio",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio_to_video" | "music_to_video" | "a2v" => Ok(Direction::AudioToVideo),
            "video_to_audio" | "video_to_music" | "v2a" => Ok(Direction::VideoToAudio),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

/// Row-aligned embeddings of one batch with one label per pair.
#[derive(Clone, Debug)]
pub struct ContrastiveBatch<T> {
    pub emb_a: Matrix<T>,
    pub emb_v: Matrix<T>,
    pub labels: Vec<usize>,
    pub temperature: T,
}

/// Scalar weights applied to each loss term of the total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ssl_z: f64,
    pub sup_z: f64,
    pub ssl_h: f64,
    pub sup_h: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ssl_z: 1.0,
            sup_z: 1.0,
            ssl_h: 1.0,
            sup_h: 1.0,
        }
    }
}

impl LossWeights {
    /// Self-supervised terms only.
    pub fn self_supervised() -> Self {
        Self {
            sup_z: 0.0,
            sup_h: 0.0,
            ..Self::default()
        }
    }

    /// Supervised terms only.
    pub fn supervised() -> Self {
        Self {
            ssl_z: 0.0,
            ssl_h: 0.0,
            ..Self::default()
        }
    }
}

/// The four loss components and their (weighted) total.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ssl_z: f64,
    pub l_sup_z: f64,
    pub l_ssl_h: f64,
    pub l_sup_h: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("ssl_z", self.l_ssl_z),
            ("sup_z", self.l_sup_z),
            ("ssl_h", self.l_ssl_h),
            ("sup_h", self.l_sup_h),
        ]
    }

    /// Size-weighted mean of per-batch breakdowns.
    pub fn weighted_mean(parts: &[(LossBreakdown, usize)]) -> LossBreakdown {
        let n: usize = parts.iter().map(|(_, k)| k).sum();
        if n == 0 {
            return LossBreakdown::default();
        }
        let mut acc = LossBreakdown::default();
        for (b, k) in parts {
            let w = *k as f64;
            acc.l_ssl_z += b.l_ssl_z * w;
            acc.l_sup_z += b.l_sup_z * w;
            acc.l_ssl_h += b.l_ssl_h * w;
            acc.l_sup_h += b.l_sup_h * w;
            acc.total += b.total * w;
        }
        let n = n as f64;
        acc.l_ssl_z /= n;
        acc.l_sup_z /= n;
        acc.l_ssl_h /= n;
        acc.l_sup_h /= n;
        acc.total /= n;
        acc
    }
}

fn check_temperature<T: Scalar>(tau: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Parameter(format!("temperature {tau} must be positive")));
    }
    Ok(())
}

/// Diagonal weight matrix for InfoNCE.
pub fn infonce_weights<T: Scalar>(n: usize) -> Matrix<T> {
    let mut w = Matrix::zeros(n, n);
    let c = -T::one() / T::lit(n as f64);
    for i in 0..n {
        w.set(i, i, c);
    }
    w
}

/// SupCon weights: `W_ip = −1/(N_eff·|P(i)|)` with `P(i) = {p : anchor_labels[i] == other_labels[p]}`.
/// Anchors without positives are skipped and counted; `N_eff` counts the rest.
pub fn supcon_weights<T: Scalar>(anchor_labels: &[usize], other_labels: &[usize]) -> (Matrix<T>, usize) {
    let (n, m) = (anchor_labels.len(), other_labels.len());
    let positives: Vec<usize> = anchor_labels
        .iter()
        .map(|&y| other_labels.iter().filter(|&&o| o == y).count())
        .collect();
    let skipped = positives.iter().filter(|&&p| p == 0).count();
    let contributing = n - skipped;
    let mut w = Matrix::zeros(n, m);
    if contributing == 0 {
        return (w, skipped);
    }
    let n_eff = T::lit(contributing as f64);
    for (i, &yi) in anchor_labels.iter().enumerate() {
        if positives[i] == 0 {
            continue;
        }
        let c = -T::one() / (n_eff * T::lit(positives[i] as f64));
        for (p, &yp) in other_labels.iter().enumerate() {
            if yp == yi {
                w.set(i, p, c);
            }
        }
    }
    (w, skipped)
}

fn directional_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    anchor: Var,
    other: Var,
    tau: T,
    weights: Matrix<T>,
) -> Result<Var> {
    check_temperature(tau)?;
    let sim = tape.matmul_transposed(anchor, other)?;
    let logits = tape.scale(sim, T::one() / tau);
    let log_probs = tape.log_softmax_rows(logits);
    tape.weighted_sum(log_probs, weights)
}

fn orient(a: Var, v: Var, direction: Direction) -> (Var, Var) {
    match direction {
        Direction::AudioToVideo => (a, v),
        Direction::VideoToAudio => (v, a),
    }
}

/// Directional InfoNCE recorded on a tape.
pub fn infonce_on_tape<T: Scalar>(tape: &mut Tape<T>, emb_a: Var, emb_v: Var, tau: T, direction: Direction) -> Result<Var> {
    let (anchor, other) = orient(emb_a, emb_v, direction);
    let n = tape.value(anchor).rows();
    directional_on_tape(tape, anchor, other, tau, infonce_weights(n))
}

/// Directional SupCon recorded on a tape; labels are shared by both modalities.
pub fn supcon_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    emb_a: Var,
    emb_v: Var,
    labels: &[usize],
    tau: T,
    direction: Direction,
) -> Result<Var> {
    let (anchor, other) = orient(emb_a, emb_v, direction);
    if labels.len() != tape.value(anchor).rows() {
        return Err(Error::Alignment(format!(
            "{} labels for {} pairs",
            labels.len(),
            tape.value(anchor).rows()
        )));
    }
    let (w, _) = supcon_weights(labels, labels);
    directional_on_tape(tape, anchor, other, tau, w)
}

/// `0.5·(a→v + v→a)`.
pub fn symmetrize(loss_a2v: f64, loss_v2a: f64) -> f64 {
    0.5 * (loss_a2v + loss_v2a)
}

fn symmetrize_on_tape<T: Scalar>(tape: &mut Tape<T>, a2v: Var, v2a: Var) -> Result<Var> {
    let s = tape.add(a2v, v2a)?;
    Ok(tape.scale(s, T::lit(0.5)))
}

pub fn infonce_symmetric_on_tape<T: Scalar>(tape: &mut Tape<T>, emb_a: Var, emb_v: Var, tau: T) -> Result<Var> {
    let a2v = infonce_on_tape(tape, emb_a, emb_v, tau, Direction::AudioToVideo)?;
    let v2a = infonce_on_tape(tape, emb_a, emb_v, tau, Direction::VideoToAudio)?;
    symmetrize_on_tape(tape, a2v, v2a)
}

pub fn supcon_symmetric_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    emb_a: Var,
    emb_v: Var,
    labels: &[usize],
    tau: T,
) -> Result<Var> {
    let a2v = supcon_on_tape(tape, emb_a, emb_v, labels, tau, Direction::AudioToVideo)?;
    let v2a = supcon_on_tape(tape, emb_a, emb_v, labels, tau, Direction::VideoToAudio)?;
    symmetrize_on_tape(tape, a2v, v2a)
}

/// Tape handles of the four components and the total.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub l_ssl_z: Var,
    pub l_sup_z: Var,
    pub l_ssl_h: Var,
    pub l_sup_h: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown<T: Scalar>(&self, tape: &Tape<T>) -> LossBreakdown {
        LossBreakdown {
            l_ssl_z: tape.scalar(self.l_ssl_z).as_f64(),
            l_sup_z: tape.scalar(self.l_sup_z).as_f64(),
            l_ssl_h: tape.scalar(self.l_ssl_h).as_f64(),
            l_sup_h: tape.scalar(self.l_sup_h).as_f64(),
            total: tape.scalar(self.total).as_f64(),
        }
    }
}

/// `w₁·L_ssl^z + w₂·L_sup^z + w₃·L_ssl^h + w₄·L_sup^h`.
pub fn total_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    emb: &EmbeddingVars,
    labels: &[usize],
    tau: T,
    weights: &LossWeights,
) -> Result<LossVars> {
    let l_ssl_z = infonce_symmetric_on_tape(tape, emb.z_a, emb.z_v, tau)?;
    let l_sup_z = supcon_symmetric_on_tape(tape, emb.z_a, emb.z_v, labels, tau)?;
    let l_ssl_h = infonce_symmetric_on_tape(tape, emb.q_ssl_a, emb.q_ssl_v, tau)?;
    let l_sup_h = supcon_symmetric_on_tape(tape, emb.q_sup_a, emb.q_sup_v, labels, tau)?;
    let mut total = weighted(tape, l_ssl_z, weights.ssl_z);
    for (term, w) in [(l_sup_z, weights.sup_z), (l_ssl_h, weights.ssl_h), (l_sup_h, weights.sup_h)] {
        let t = weighted(tape, term, w);
        total = tape.add(total, t)?;
    }
    Ok(LossVars {
        l_ssl_z,
        l_sup_z,
        l_ssl_h,
        l_sup_h,
        total,
    })
}

fn weighted<T: Scalar>(tape: &mut Tape<T>, term: Var, w: f64) -> Var {
    if w == 1.0 {
        term
    } else {
        tape.scale(term, T::lit(w))
    }
}

/// Directional InfoNCE on plain matrices.
pub fn infonce_directional<T: Scalar>(batch: &ContrastiveBatch<T>, direction: Direction) -> Result<T> {
    let mut tape = Tape::new();
    let (a, v) = (tape.leaf(batch.emb_a.clone()), tape.leaf(batch.emb_v.clone()));
    check_batch(batch)?;
    let out = infonce_on_tape(&mut tape, a, v, batch.temperature, direction)?;
    Ok(tape.scalar(out))
}

/// Directional SupCon on plain matrices.
pub fn supcon_directional<T: Scalar>(batch: &ContrastiveBatch<T>, direction: Direction) -> Result<T> {
    let mut tape = Tape::new();
    let (a, v) = (tape.leaf(batch.emb_a.clone()), tape.leaf(batch.emb_v.clone()));
    check_batch(batch)?;
    let out = supcon_on_tape(&mut tape, a, v, &batch.labels, batch.temperature, direction)?;
    Ok(tape.scalar(out))
}

fn check_batch<T: Scalar>(batch: &ContrastiveBatch<T>) -> Result<()> {
    if batch.emb_a.shape() != batch.emb_v.shape() {
        return Err(Error::Alignment(format!(
            "audio {:?} vs video {:?}",
            batch.emb_a.shape(),
            batch.emb_v.shape()
        )));
    }
    if batch.emb_a.rows() == 0 {
        return Err(Error::Parameter("empty batch".into()));
    }
    Ok(())
}

/// Unweighted four-term loss over a finished [`crate::model::EmbeddingSet`].
pub fn total_loss<T: Scalar>(emb: &crate::model::EmbeddingSet<T>, labels: &[usize], tau: T) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let leaf = |t: &mut Tape<T>, m: &Matrix<T>| t.leaf(m.clone());
    let ev = EmbeddingVars {
        q_ssl_a: leaf(&mut tape, &emb.q_ssl_a),
        q_sup_a: leaf(&mut tape, &emb.q_sup_a),
        q_ssl_v: leaf(&mut tape, &emb.q_ssl_v),
        q_sup_v: leaf(&mut tape, &emb.q_sup_v),
        u_a: leaf(&mut tape, &emb.u_a),
        v_a: leaf(&mut tape, &emb.v_a),
        u_v: leaf(&mut tape, &emb.u_v),
        v_v: leaf(&mut tape, &emb.v_v),
        z_a: leaf(&mut tape, &emb.z_a),
        z_v: leaf(&mut tape, &emb.z_v),
    };
    let lv = total_loss_on_tape(&mut tape, &ev, labels, tau, &LossWeights::default())?;
    Ok(lv.breakdown(&tape))
}
