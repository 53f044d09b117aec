//! Dual-branch embedding network.
//!
//! Each modality runs `x → g → {h_ssl, h_sup} → q_ssl, q_sup`, then projects
//! with `p_ssl`/`p_sup` and blends the projections with the combination
//! weight α: `z = (1 − α)·p_ssl(q_ssl) + α·p_sup(q_sup)`.
//!
//! All trainable tensors live in one flat list ([`ModelParams::tensors`]) so
//! the optimizer and checkpoint code can treat them uniformly; a
//! [`BranchLayout`] records which entries belong to which sub-network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::{self, lerp, Matrix, Mode, Scalar, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub audio_input_dim: usize,
    pub video_input_dim: usize,
    pub embed_dim: usize,
    pub g_hidden_dims: Vec<usize>,
    pub h_hidden_dims: Vec<usize>,
    pub dropout_p: f64,
    /// Number of stacked audio feature layers; 0 disables layer aggregation.
    pub num_audio_layers: usize,
    pub normalize_q: bool,
    pub normalize_z: bool,
}

impl ModelConfig {
    /// Real-data configuration (MERT 1024-d audio, CLIP 512-d video).
    pub fn full() -> Self {
        Self {
            audio_input_dim: 1024,
            video_input_dim: 512,
            embed_dim: 256,
            g_hidden_dims: vec![512, 512],
            h_hidden_dims: vec![256],
            dropout_p: 0.4,
            num_audio_layers: 0,
            normalize_q: true,
            normalize_z: true,
        }
    }

    /// Small dims for synthetic runs.
    pub fn desk() -> Self {
        Self {
            audio_input_dim: 64,
            video_input_dim: 32,
            embed_dim: 32,
            g_hidden_dims: vec![128, 128],
            h_hidden_dims: vec![64],
            dropout_p: 0.1,
            ..Self::full()
        }
    }

    pub fn input_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.audio_input_dim,
            Modality::Video => self.video_input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.audio_input_dim, self.video_input_dim, self.embed_dim];
        if dims.iter().chain(&self.g_hidden_dims).chain(&self.h_hidden_dims).any(|&d| d == 0) {
            return Err(Error::Config("all model dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Indices of a linear layer's tensors in [`ModelParams::tensors`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearSlot {
    pub weight: usize,
    pub bias: usize,
}

/// Hidden `{linear → ReLU → dropout}` blocks plus an optional plain output layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpLayout {
    pub blocks: Vec<LinearSlot>,
    pub head: Option<LinearSlot>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchLayout {
    pub g: MlpLayout,
    pub h_ssl: MlpLayout,
    pub h_sup: MlpLayout,
    pub p_ssl: LinearSlot,
    pub p_sup: LinearSlot,
    pub layer_weights: Option<usize>,
}

/// Every trainable tensor of both branches.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Matrix<T>>,
    pub audio: BranchLayout,
    pub video: BranchLayout,
}

struct LayoutBuilder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl LayoutBuilder {
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearSlot {
        let weight = self.names.len();
        self.names.push(format!("{prefix}.weight"));
        self.shapes.push((fan_in, fan_out));
        self.names.push(format!("{prefix}.bias"));
        self.shapes.push((1, fan_out));
        LinearSlot { weight, bias: weight + 1 }
    }

    fn mlp(&mut self, prefix: &str, input: usize, hidden: &[usize], out: Option<usize>) -> (MlpLayout, usize) {
        let mut width = input;
        let mut blocks = Vec::new();
        for (i, &h) in hidden.iter().enumerate() {
            blocks.push(self.linear(&format!("{prefix}.{i}"), width, h));
            width = h;
        }
        let head = out.map(|o| {
            let slot = self.linear(&format!("{prefix}.out"), width, o);
            width = o;
            slot
        });
        (MlpLayout { blocks, head }, width)
    }

    fn branch(&mut self, config: &ModelConfig, m: Modality) -> BranchLayout {
        let p = m.name();
        let e = config.embed_dim;
        let (g, g_out) = self.mlp(&format!("{p}.g"), config.input_dim(m), &config.g_hidden_dims, None);
        let (h_ssl, _) = self.mlp(&format!("{p}.h_ssl"), g_out, &config.h_hidden_dims, Some(e));
        let (h_sup, _) = self.mlp(&format!("{p}.h_sup"), g_out, &config.h_hidden_dims, Some(e));
        let p_ssl = self.linear(&format!("{p}.p_ssl"), e, e);
        let p_sup = self.linear(&format!("{p}.p_sup"), e, e);
        let layer_weights = (m == Modality::Audio && config.num_audio_layers > 0).then(|| {
            self.names.push(format!("{p}.layer_weights"));
            self.shapes.push((1, config.num_audio_layers));
            self.names.len() - 1
        });
        BranchLayout {
            g,
            h_ssl,
            h_sup,
            p_ssl,
            p_sup,
            layer_weights,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Tensor names and shapes in canonical order, without allocating values.
    pub fn layout(config: &ModelConfig) -> (Vec<String>, Vec<(usize, usize)>, BranchLayout, BranchLayout) {
        let mut b = LayoutBuilder {
            names: Vec::new(),
            shapes: Vec::new(),
        };
        let audio = b.branch(config, Modality::Audio);
        let video = b.branch(config, Modality::Video);
        (b.names, b.shapes, audio, video)
    }

    /// Glorot-uniform weights, zero biases and zero (uniform) layer weights.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (names, shapes, audio, video) = Self::layout(config);
        let tensors = names
            .iter()
            .zip(&shapes)
            .map(|(name, &(r, c))| {
                if name.ends_with(".weight") {
                    let bound = (6.0 / (r + c) as f64).sqrt();
                    let data = (0..r * c).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
                    Matrix::from_parts_unchecked(r, c, data)
                } else {
                    Matrix::zeros(r, c)
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
            audio,
            video,
        })
    }

    /// Rebuilds parameters from tensors in canonical order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Matrix<T>>) -> Result<Self> {
        config.validate()?;
        let (names, shapes, audio, video) = Self::layout(config);
        if tensors.len() != shapes.len() {
            return Err(shape_err(format!("expected {} tensors, got {}", shapes.len(), tensors.len())));
        }
        for ((t, s), n) in tensors.iter().zip(&shapes).zip(&names) {
            if t.shape() != *s {
                return Err(shape_err(format!("{n}: expected {s:?}, got {:?}", t.shape())));
            }
        }
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
            audio,
            video,
        })
    }

    pub fn branch(&self, m: Modality) -> &BranchLayout {
        match m {
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Records every tensor as a leaf; the returned vars index like `tensors`.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }
}

/// Parameter group of a tensor name, e.g. `audio.h_ssl` for `audio.h_ssl.0.weight`.
pub fn parameter_group(name: &str) -> &str {
    let mut parts = name.splitn(3, '.');
    let modality = parts.next().unwrap_or("");
    let net = parts.next().unwrap_or("");
    &name[..modality.len() + 1 + net.len()]
}

/// Audio input: one vector per item, or `layers` stacked vectors per item.
#[derive(Clone, Debug)]
pub enum AudioInput<T> {
    Flat(Matrix<T>),
    /// One `batch × dim` matrix per feature layer.
    Layered(Vec<Matrix<T>>),
}

impl<T: Scalar> AudioInput<T> {
    pub fn batch_size(&self) -> usize {
        match self {
            AudioInput::Flat(m) => m.rows(),
            AudioInput::Layered(ls) => ls.first().map_or(0, Matrix::rows),
        }
    }
}

/// Softmax-weighted average of the rows of a `layers × dim` matrix.
pub fn aggregate_layers<T: Scalar>(per_layer: &Matrix<T>, layer_weights: &[T]) -> Result<Vec<T>> {
    if layer_weights.len() != per_layer.rows() {
        return Err(shape_err(format!(
            "{} layer weights for {} layers",
            layer_weights.len(),
            per_layer.rows()
        )));
    }
    let probs = numcore::softmax(layer_weights);
    let mut out = vec![T::zero(); per_layer.cols()];
    for (l, &p) in probs.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(per_layer.row(l)) {
            *o += p * x;
        }
    }
    Ok(out)
}

/// Tape handles for every embedding of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingVars {
    pub q_ssl_a: Var,
    pub q_sup_a: Var,
    pub q_ssl_v: Var,
    pub q_sup_v: Var,
    pub u_a: Var,
    pub v_a: Var,
    pub u_v: Var,
    pub v_v: Var,
    pub z_a: Var,
    pub z_v: Var,
}

/// Embeddings of one batch. `u`/`v` are the projected task embeddings that
/// `z` blends.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet<T> {
    pub q_ssl_a: Matrix<T>,
    pub q_sup_a: Matrix<T>,
    pub q_ssl_v: Matrix<T>,
    pub q_sup_v: Matrix<T>,
    pub u_a: Matrix<T>,
    pub v_a: Matrix<T>,
    pub u_v: Matrix<T>,
    pub v_v: Matrix<T>,
    pub z_a: Matrix<T>,
    pub z_v: Matrix<T>,
    pub alpha: T,
}

impl EmbeddingVars {
    pub fn values<T: Scalar>(&self, tape: &Tape<T>, alpha: T) -> EmbeddingSet<T> {
        let v = |x: Var| tape.value(x).clone();
        EmbeddingSet {
            q_ssl_a: v(self.q_ssl_a),
            q_sup_a: v(self.q_sup_a),
            q_ssl_v: v(self.q_ssl_v),
            q_sup_v: v(self.q_sup_v),
            u_a: v(self.u_a),
            v_a: v(self.v_a),
            u_v: v(self.u_v),
            v_v: v(self.v_v),
            z_a: v(self.z_a),
            z_v: v(self.z_v),
            alpha,
        }
    }
}

fn linear<T: Scalar>(tape: &mut Tape<T>, vars: &[Var], slot: LinearSlot, x: Var) -> Result<Var> {
    let y = tape.matmul(x, vars[slot.weight])?;
    tape.add_row_bias(y, vars[slot.bias])
}

fn mlp<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    vars: &[Var],
    layout: &MlpLayout,
    mut x: Var,
    dropout_p: T,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    for &slot in &layout.blocks {
        let y = linear(tape, vars, slot, x)?;
        let y = tape.relu(y);
        x = tape.dropout(y, dropout_p, mode, rng)?;
    }
    match layout.head {
        Some(slot) => linear(tape, vars, slot, x),
        None => Ok(x),
    }
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Records the shared and task networks: returns `(q_ssl, q_sup)`.
pub fn forward_branch_on_tape<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &[Var],
    modality: Modality,
    x: Var,
    mode: Mode,
    rng: &mut R,
) -> Result<(Var, Var)> {
    let cfg = &params.config;
    let cols = tape.value(x).cols();
    if cols != cfg.input_dim(modality) {
        return Err(shape_err(format!(
            "{} input has {cols} columns, model expects {}",
            modality.name(),
            cfg.input_dim(modality)
        )));
    }
    let layout = params.branch(modality);
    let p = T::lit(cfg.dropout_p);
    let shared = mlp(tape, vars, &layout.g, x, p, mode, rng)?;
    let mut q_ssl = mlp(tape, vars, &layout.h_ssl, shared, p, mode, rng)?;
    let mut q_sup = mlp(tape, vars, &layout.h_sup, shared, p, mode, rng)?;
    if cfg.normalize_q {
        q_ssl = tape.l2_normalize(q_ssl)?;
        q_sup = tape.l2_normalize(q_sup)?;
    }
    Ok((q_ssl, q_sup))
}

/// Records projection and α-combination: returns `(u, v, z)`.
pub fn combine_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &[Var],
    modality: Modality,
    q_ssl: Var,
    q_sup: Var,
    alpha: T,
) -> Result<(Var, Var, Var)> {
    check_alpha(alpha)?;
    let layout = params.branch(modality);
    let mut u = linear(tape, vars, layout.p_ssl, q_ssl)?;
    let mut v = linear(tape, vars, layout.p_sup, q_sup)?;
    if params.config.normalize_z {
        u = tape.l2_normalize(u)?;
        v = tape.l2_normalize(v)?;
    }
    let z = combine_projected_on_tape(tape, u, v, alpha, params.config.normalize_z)?;
    Ok((u, v, z))
}

fn combine_projected_on_tape<T: Scalar>(tape: &mut Tape<T>, u: Var, v: Var, alpha: T, normalize: bool) -> Result<Var> {
    let su = tape.scale(u, T::one() - alpha);
    let sv = tape.scale(v, alpha);
    let z = tape.add(su, sv)?;
    if normalize {
        tape.l2_normalize(z)
    } else {
        Ok(z)
    }
}

/// `(1 − α)·u + α·v`, row-normalized when `normalize` is set. `u` and `v` are
/// already-projected (and, if configured, normalized) task embeddings.
pub fn combine_projected<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>, alpha: T, normalize: bool) -> Result<Matrix<T>> {
    check_alpha(alpha)?;
    let z = lerp(u, v, alpha)?;
    if normalize {
        numcore::l2_normalize_rows(&z)
    } else {
        Ok(z)
    }
}

/// Runs both branches and the α-combination for a row-aligned batch of pairs.
#[allow(clippy::too_many_arguments)]
pub fn forward_full_on_tape<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &[Var],
    audio: &AudioInput<T>,
    video: &Matrix<T>,
    alpha: T,
    mode: Mode,
    rng: &mut R,
) -> Result<EmbeddingVars> {
    check_alpha(alpha)?;
    if audio.batch_size() != video.rows() {
        return Err(Error::Alignment(format!(
            "{} audio rows vs {} video rows",
            audio.batch_size(),
            video.rows()
        )));
    }
    let audio_x = match (audio, params.audio.layer_weights) {
        (AudioInput::Flat(m), None) => tape.leaf(m.clone()),
        (AudioInput::Layered(layers), Some(w)) => tape.layer_mix(vars[w], layers.clone())?,
        (AudioInput::Flat(_), Some(_)) => {
            return Err(shape_err("model aggregates audio layers but got flat audio features"))
        }
        (AudioInput::Layered(_), None) => {
            return Err(shape_err("model expects flat audio features but got stacked layers"))
        }
    };
    let video_x = tape.leaf(video.clone());
    let (q_ssl_a, q_sup_a) = forward_branch_on_tape(tape, params, vars, Modality::Audio, audio_x, mode, rng)?;
    let (q_ssl_v, q_sup_v) = forward_branch_on_tape(tape, params, vars, Modality::Video, video_x, mode, rng)?;
    let (u_a, v_a, z_a) = combine_on_tape(tape, params, vars, Modality::Audio, q_ssl_a, q_sup_a, alpha)?;
    let (u_v, v_v, z_v) = combine_on_tape(tape, params, vars, Modality::Video, q_ssl_v, q_sup_v, alpha)?;
    Ok(EmbeddingVars {
        q_ssl_a,
        q_sup_a,
        q_ssl_v,
        q_sup_v,
        u_a,
        v_a,
        u_v,
        v_v,
        z_a,
        z_v,
    })
}

/// Value-level forward over one branch: `(q_ssl, q_sup)`.
pub fn forward_branch<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    modality: Modality,
    x: &Matrix<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let xv = tape.leaf(x.clone());
    let (a, b) = forward_branch_on_tape(&mut tape, params, &vars, modality, xv, mode, rng)?;
    Ok((tape.value(a).clone(), tape.value(b).clone()))
}

/// Value-level projection and combination for one branch.
pub fn combine<T: Scalar>(
    params: &ModelParams<T>,
    modality: Modality,
    q_ssl: &Matrix<T>,
    q_sup: &Matrix<T>,
    alpha: T,
) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let (a, b) = (tape.leaf(q_ssl.clone()), tape.leaf(q_sup.clone()));
    let (_, _, z) = combine_on_tape(&mut tape, params, &vars, modality, a, b, alpha)?;
    Ok(tape.value(z).clone())
}

/// Value-level forward over both branches.
pub fn forward_full<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    audio: &AudioInput<T>,
    video: &Matrix<T>,
    alpha: T,
    mode: Mode,
    rng: &mut R,
) -> Result<EmbeddingSet<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let ev = forward_full_on_tape(&mut tape, params, &vars, audio, video, alpha, mode, rng)?;
    Ok(ev.values(&tape, alpha))
}
