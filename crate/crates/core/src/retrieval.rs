//! α-controlled cross-modal retrieval and its evaluation protocols.
//!
//! The corpus keeps the projected task embeddings `u` and `v` of every item,
//! so the combined embedding for any α is rebuilt at query time without
//! touching the network. Scores are cosine similarities
//! `a·b / (‖a‖·‖b‖)` with every sum accumulated left to right; a zero vector
//! scores 0. Rankings sort by descending score and break ties by ascending
//! item id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::losses::Direction;
use crate::model::{forward_full_on_tape, ModelParams};
use crate::numcore::{Matrix, Mode, Scalar, Tape};

/// The 11-point α grid `0.0, 0.1, …, 1.0`.
pub fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedCorpus<T> {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub u_audio: Matrix<T>,
    pub v_audio: Matrix<T>,
    pub u_video: Matrix<T>,
    pub v_video: Matrix<T>,
    pub normalize_z: bool,
    index: HashMap<String, usize>,
    /// Position of each row when rows are sorted by id.
    id_order: Vec<usize>,
}

impl<T: Scalar> EmbeddedCorpus<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ids: Vec<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        u_audio: Matrix<T>,
        v_audio: Matrix<T>,
        u_video: Matrix<T>,
        v_video: Matrix<T>,
        normalize_z: bool,
    ) -> Result<Self> {
        let n = ids.len();
        if labels.len() != n || [&u_audio, &v_audio, &u_video, &v_video].iter().any(|m| m.rows() != n) {
            return Err(Error::Alignment(format!("corpus rows do not match {n} ids")));
        }
        if u_audio.shape() != v_audio.shape() || u_video.shape() != v_video.shape() || u_audio.cols() != u_video.cols() {
            return Err(Error::Shape("u and v embeddings must share one width".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Config(format!("label {bad} but only {} classes", class_names.len())));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate item id {id:?}")));
            }
        }
        let mut by_id: Vec<usize> = (0..n).collect();
        by_id.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        let mut id_order = vec![0; n];
        for (pos, &row) in by_id.iter().enumerate() {
            id_order[row] = pos;
        }
        Ok(Self {
            ids,
            labels,
            class_names,
            u_audio,
            v_audio,
            u_video,
            v_video,
            normalize_z,
            index,
            id_order,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    /// Combined embeddings `(1 − α)u + αv` of one modality, normalized when
    /// the model normalizes z.
    pub fn combined(&self, audio: bool, alpha: f64) -> Result<Matrix<T>> {
        check_alpha(alpha)?;
        let (u, v) = if audio {
            (&self.u_audio, &self.v_audio)
        } else {
            (&self.u_video, &self.v_video)
        };
        crate::model::combine_projected(u, v, T::lit(alpha), self.normalize_z)
    }

    /// `(queries, candidates)` for a direction.
    pub fn sides(&self, direction: Direction, alpha: f64) -> Result<(Matrix<T>, Matrix<T>)> {
        let a = self.combined(true, alpha)?;
        let v = self.combined(false, alpha)?;
        Ok(match direction {
            Direction::AudioToVideo => (a, v),
            Direction::VideoToAudio => (v, a),
        })
    }

    /// Sub-corpus of the given rows, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&r| self.ids[r].clone()).collect(),
            rows.iter().map(|&r| self.labels[r]).collect(),
            self.class_names.clone(),
            self.u_audio.select_rows(rows),
            self.v_audio.select_rows(rows),
            self.u_video.select_rows(rows),
            self.v_video.select_rows(rows),
            self.normalize_z,
        )
    }

    /// Orders candidate rows: higher score first, then smaller id.
    fn before(&self, scores: &[f64], a: usize, b: usize) -> Ordering {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(self.id_order[a].cmp(&self.id_order[b]))
    }
}

fn sum_products<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Cosine similarity with sequential accumulation; 0 when either side is 0.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let den = sum_products(a, a).sqrt() * sum_products(b, b).sqrt();
    if den == T::zero() {
        return 0.0;
    }
    (sum_products(a, b) / den).as_f64()
}

/// Scores of one query row against every candidate row.
fn score_row<T: Scalar>(query: &[T], candidates: &Matrix<T>, cand_norms: &[T]) -> Vec<f64> {
    let qn = sum_products(query, query).sqrt();
    (0..candidates.rows())
        .map(|j| {
            let den = qn * cand_norms[j];
            if den == T::zero() {
                0.0
            } else {
                (sum_products(query, candidates.row(j)) / den).as_f64()
            }
        })
        .collect()
}

fn row_norms<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    (0..m.rows()).map(|j| sum_products(m.row(j), m.row(j)).sqrt()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub query_id: String,
    pub direction: Direction,
    pub alpha: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: String,
    pub row: usize,
    pub score: f64,
}

/// Top `k` candidates for a query (the full ranking when `k` exceeds it).
pub fn rank<T: Scalar>(corpus: &EmbeddedCorpus<T>, query: &RetrievalQuery) -> Result<Vec<Ranked>> {
    if query.k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    check_alpha(query.alpha)?;
    let q = corpus.row_of(&query.query_id)?;
    let (queries, candidates) = corpus.sides(query.direction, query.alpha)?;
    let scores = score_row(queries.row(q), &candidates, &row_norms(&candidates));
    let mut order: Vec<usize> = (0..candidates.rows()).collect();
    order.sort_by(|&a, &b| corpus.before(&scores, a, b));
    Ok(order
        .into_iter()
        .take(query.k)
        .map(|j| Ranked {
            id: corpus.ids[j].clone(),
            row: j,
            score: scores[j],
        })
        .collect())
}

/// R@K or P@K per K plus MRR, for one direction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionScores {
    pub at_k: BTreeMap<usize, f64>,
    pub mrr: f64,
}

impl DirectionScores {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.at_k.get(&k).copied()
    }

    fn mean_of(all: &[DirectionScores]) -> DirectionScores {
        let n = all.len() as f64;
        let mut out = DirectionScores::default();
        for s in all {
            for (&k, &v) in &s.at_k {
                *out.at_k.entry(k).or_insert(0.0) += v;
            }
            out.mrr += s.mrr;
        }
        for v in out.at_k.values_mut() {
            *v /= n;
        }
        out.mrr /= n;
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolScores {
    pub audio_to_video: DirectionScores,
    pub video_to_audio: DirectionScores,
}

impl ProtocolScores {
    pub fn direction(&self, d: Direction) -> &DirectionScores {
        match d {
            Direction::AudioToVideo => &self.audio_to_video,
            Direction::VideoToAudio => &self.video_to_audio,
        }
    }

    /// Mean of the two directions.
    pub fn mean(&self) -> DirectionScores {
        DirectionScores::mean_of(&[self.audio_to_video.clone(), self.video_to_audio.clone()])
    }
}

/// Rank (1-based) of the true pair for every query of a corpus.
pub fn pair_ranks<T: Scalar>(corpus: &EmbeddedCorpus<T>, direction: Direction, alpha: f64) -> Result<Vec<usize>> {
    let (queries, candidates) = corpus.sides(direction, alpha)?;
    let norms = row_norms(&candidates);
    Ok((0..corpus.len())
        .map(|i| {
            let scores = score_row(queries.row(i), &candidates, &norms);
            1 + (0..corpus.len()).filter(|&j| corpus.before(&scores, j, i) == Ordering::Less).count()
        })
        .collect())
}

/// R@K for each K and MRR from pair ranks.
pub fn recall_from_ranks(ranks: &[usize], ks: &[usize]) -> DirectionScores {
    let n = ranks.len() as f64;
    DirectionScores {
        at_k: ks
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect(),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
    }
}

/// Disjoint subsets: a seeded shuffle of all rows cut into `count`
/// contiguous chunks of `size`, each returned in ascending row order.
pub fn subset_partition(n: usize, size: usize, count: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if size == 0 || count == 0 {
        return Err(Error::Protocol("subset size and count must be positive".into()));
    }
    if size.checked_mul(count).is_none_or(|need| need > n) {
        return Err(Error::Protocol(format!(
            "{count} subsets of {size} items need more than the {n} available"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(rows
        .chunks(size)
        .take(count)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// `None` evaluates the pair protocol on the whole corpus as one subset.
    pub subset_size: Option<usize>,
    pub subset_count: usize,
    pub subset_seed: u64,
    /// Drop the query's own pair from the genre candidate pool.
    pub exclude_self: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![1, 10],
            subset_size: None,
            subset_count: 1,
            subset_seed: 0,
            exclude_self: false,
        }
    }
}

impl EvalOptions {
    fn check(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Parameter("K values must be positive".into()));
        }
        Ok(())
    }
}

/// Pair-correspondence protocol: per subset, the rank of each query's true
/// pair; metrics averaged over subsets.
pub fn eval_self_supervised<T: Scalar>(
    corpus: &EmbeddedCorpus<T>,
    alpha: f64,
    options: &EvalOptions,
) -> Result<ProtocolScores> {
    options.check()?;
    check_alpha(alpha)?;
    let size = options.subset_size.unwrap_or(corpus.len());
    let subsets = subset_partition(corpus.len(), size, options.subset_count, options.subset_seed)?;
    let mut out = ProtocolScores::default();
    for d in Direction::BOTH {
        let mut per_subset = Vec::with_capacity(subsets.len());
        for rows in &subsets {
            let sub = corpus.subset(rows)?;
            per_subset.push(recall_from_ranks(&pair_ranks(&sub, d, alpha)?, &options.ks));
        }
        let scores = DirectionScores::mean_of(&per_subset);
        match d {
            Direction::AudioToVideo => out.audio_to_video = scores,
            Direction::VideoToAudio => out.video_to_audio = scores,
        }
    }
    Ok(out)
}

/// Per-query genre results: hits within each K and first-hit rank.
fn genre_query<T: Scalar>(
    corpus: &EmbeddedCorpus<T>,
    scores: &[f64],
    query: usize,
    ks: &[usize],
    exclude_self: bool,
) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..corpus.len()).filter(|&j| !(exclude_self && j == query)).collect();
    order.sort_by(|&a, &b| corpus.before(scores, a, b));
    let y = corpus.labels[query];
    let p = ks
        .iter()
        .map(|&k| {
            let top = k.min(order.len());
            if top == 0 {
                return 0.0;
            }
            order[..top].iter().filter(|&&j| corpus.labels[j] == y).count() as f64 / top as f64
        })
        .collect();
    let rr = order
        .iter()
        .position(|&j| corpus.labels[j] == y)
        .map_or(0.0, |r| 1.0 / (r + 1) as f64);
    (p, rr)
}

/// Genre protocol over the full corpus, macro-averaged over classes.
pub fn eval_genre_supervised<T: Scalar>(
    corpus: &EmbeddedCorpus<T>,
    alpha: f64,
    options: &EvalOptions,
) -> Result<ProtocolScores> {
    options.check()?;
    check_alpha(alpha)?;
    let num_classes = corpus.class_names.len();
    let mut class_sizes = vec![0usize; num_classes];
    for &y in &corpus.labels {
        class_sizes[y] += 1;
    }
    if let Some(c) = class_sizes.iter().position(|&n| n == 0) {
        return Err(Error::Protocol(format!(
            "class {:?} has no items in the corpus",
            corpus.class_names[c]
        )));
    }
    let mut out = ProtocolScores::default();
    for d in Direction::BOTH {
        let (queries, candidates) = corpus.sides(d, alpha)?;
        let norms = row_norms(&candidates);
        let mut p_sum = vec![vec![0.0; options.ks.len()]; num_classes];
        let mut rr_sum = vec![0.0; num_classes];
        for i in 0..corpus.len() {
            let scores = score_row(queries.row(i), &candidates, &norms);
            let (p, rr) = genre_query(corpus, &scores, i, &options.ks, options.exclude_self);
            let y = corpus.labels[i];
            for (acc, v) in p_sum[y].iter_mut().zip(p) {
                *acc += v;
            }
            rr_sum[y] += rr;
        }
        let c = num_classes as f64;
        let scores = DirectionScores {
            at_k: options
                .ks
                .iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let macro_p = (0..num_classes).map(|y| p_sum[y][ki] / class_sizes[y] as f64).sum::<f64>() / c;
                    (k, macro_p)
                })
                .collect(),
            mrr: (0..num_classes).map(|y| rr_sum[y] / class_sizes[y] as f64).sum::<f64>() / c,
        };
        match d {
            Direction::AudioToVideo => out.audio_to_video = scores,
            Direction::VideoToAudio => out.video_to_audio = scores,
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Pair correspondence.
    Ssl,
    /// Same genre label.
    Genre,
}

impl Protocol {
    pub const BOTH: [Protocol; 2] = [Protocol::Ssl, Protocol::Genre];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Ssl => "ssl",
            Protocol::Genre => "genre",
        }
    }

    /// Plotted metric name at a K, e.g. `R@10`.
    pub fn metric_name(self, k: usize) -> String {
        match self {
            Protocol::Ssl => format!("R@{k}"),
            Protocol::Genre => format!("P@{k}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssl" | "self" | "self_supervised" => Ok(Protocol::Ssl),
            "genre" | "sup" | "supervised" => Ok(Protocol::Genre),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssl: Option<ProtocolScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genre: Option<ProtocolScores>,
}

impl AlphaRow {
    pub fn protocol(&self, p: Protocol) -> Option<&ProtocolScores> {
        match p {
            Protocol::Ssl => self.ssl.as_ref(),
            Protocol::Genre => self.genre.as_ref(),
        }
    }
}

/// Which direction a series follows; `Mean` averages both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesDirection {
    AudioToVideo,
    VideoToAudio,
    Mean,
}

impl FromStr for SeriesDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "both" => Ok(SeriesDirection::Mean),
            other => Ok(match other.parse::<Direction>()? {
                Direction::AudioToVideo => SeriesDirection::AudioToVideo,
                Direction::VideoToAudio => SeriesDirection::VideoToAudio,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub protocol: Protocol,
    pub metric: String,
    pub direction: SeriesDirection,
    /// `(alpha, value)` points in sweep order.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub corpus_size: usize,
    pub subset_size: usize,
    pub subset_count: usize,
    pub ks: Vec<usize>,
    pub exclude_self: bool,
    pub rows: Vec<AlphaRow>,
}

impl RetrievalReport {
    /// Metric at `k` against α.
    pub fn series(&self, protocol: Protocol, k: usize, direction: SeriesDirection) -> Result<Series> {
        if !self.ks.contains(&k) {
            return Err(Error::Parameter(format!("report has no K = {k}")));
        }
        let points = self
            .rows
            .iter()
            .map(|row| {
                let p = row
                    .protocol(protocol)
                    .ok_or_else(|| Error::Parameter(format!("report has no {} results", protocol.as_str())))?;
                let s = match direction {
                    SeriesDirection::AudioToVideo => p.audio_to_video.clone(),
                    SeriesDirection::VideoToAudio => p.video_to_audio.clone(),
                    SeriesDirection::Mean => p.mean(),
                };
                Ok((row.alpha, s.at_k[&k]))
            })
            .collect::<Result<_>>()?;
        Ok(Series {
            protocol,
            metric: protocol.metric_name(k),
            direction,
            points,
        })
    }

    /// Plot series for every protocol present at the largest K, per
    /// direction and averaged.
    pub fn plot_series(&self) -> Vec<Series> {
        let k = self.ks.iter().copied().max().unwrap_or(1);
        let mut out = Vec::new();
        for p in Protocol::BOTH {
            if self.rows.first().and_then(|r| r.protocol(p)).is_none() {
                continue;
            }
            for d in [SeriesDirection::AudioToVideo, SeriesDirection::VideoToAudio, SeriesDirection::Mean] {
                out.extend(self.series(p, k, d).ok());
            }
        }
        out
    }

    /// Text tables, one block per protocol, with one line per α.
    pub fn to_table_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "corpus {} items; pair protocol over {} subset(s) of {}",
            self.corpus_size, self.subset_count, self.subset_size
        );
        for p in Protocol::BOTH {
            if self.rows.first().and_then(|r| r.protocol(p)).is_none() {
                continue;
            }
            let title = match p {
                Protocol::Ssl => "self-supervised (exact pair)",
                Protocol::Genre => "genre-supervised (macro-averaged)",
            };
            let _ = writeln!(s, "\n{title}");
            let mut header = format!("{:>6}", "alpha");
            for d in ["a->v", "v->a"] {
                for &k in &self.ks {
                    header += &format!(" {:>9}", format!("{d} {}", p.metric_name(k)));
                }
                header += &format!(" {:>9}", format!("{d} MRR"));
            }
            let _ = writeln!(s, "{header}");
            for row in &self.rows {
                let sc = row.protocol(p).expect("protocol present in every row");
                let mut line = format!("{:>6.2}", row.alpha);
                for d in Direction::BOTH {
                    let ds = sc.direction(d);
                    for &k in &self.ks {
                        line += &format!(" {:>9.4}", ds.at_k[&k]);
                    }
                    line += &format!(" {:>9.4}", ds.mrr);
                }
                let _ = writeln!(s, "{line}");
            }
        }
        s
    }
}

/// Runs the requested protocols at every α.
pub fn alpha_sweep<T: Scalar>(
    corpus: &EmbeddedCorpus<T>,
    alphas: &[f64],
    protocols: &[Protocol],
    options: &EvalOptions,
) -> Result<RetrievalReport> {
    options.check()?;
    if alphas.is_empty() {
        return Err(Error::Parameter("no alpha values given".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let rows = alphas
        .par_iter()
        .map(|&alpha| {
            let ssl = protocols
                .contains(&Protocol::Ssl)
                .then(|| eval_self_supervised(corpus, alpha, options))
                .transpose()?;
            let genre = protocols
                .contains(&Protocol::Genre)
                .then(|| eval_genre_supervised(corpus, alpha, options))
                .transpose()?;
            Ok(AlphaRow { alpha, ssl, genre })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        corpus_size: corpus.len(),
        subset_size: options.subset_size.unwrap_or(corpus.len()),
        subset_count: options.subset_count,
        ks: options.ks.clone(),
        exclude_self: options.exclude_self,
        rows,
    })
}

/// Index of the largest value; ties go to the earliest.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// α on the 11-point grid maximizing the direction-averaged metric at `k`
/// (R@K for the pair protocol, P@K for genre); ties go to the smaller α.
pub fn select_optimal_alpha<T: Scalar>(
    corpus: &EmbeddedCorpus<T>,
    protocol: Protocol,
    k: usize,
    options: &EvalOptions,
) -> Result<(f64, Series)> {
    let mut opts = options.clone();
    if !opts.ks.contains(&k) {
        opts.ks.push(k);
    }
    let report = alpha_sweep(corpus, &alpha_grid(), &[protocol], &opts)?;
    let series = report.series(protocol, k, SeriesDirection::Mean)?;
    Ok((optimal_alpha_from_series(&series), series))
}

pub fn optimal_alpha_from_series(series: &Series) -> f64 {
    let values: Vec<f64> = series.points.iter().map(|p| p.1).collect();
    argmax_first(&values).map_or(0.0, |i| series.points[i].0)
}

/// Eval-mode forward of `rows`, keeping the projected `u` and `v`.
pub fn embed_rows<T: Scalar>(params: &ModelParams<T>, data: &Dataset, rows: &[usize], alpha: f64) -> Result<EmbeddedCorpus<T>> {
    crate::checkpoint::check_compatible(&params.config, &data.manifest.header)?;
    let width = params.config.embed_dim;
    let mut parts: [Vec<T>; 4] = Default::default();
    // Eval mode never draws from the generator.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for chunk in rows.chunks(256) {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let emb = forward_full_on_tape(
            &mut tape,
            params,
            &vars,
            &data.audio_batch(chunk),
            &data.video_batch(chunk),
            T::lit(alpha),
            Mode::Eval,
            &mut unused,
        )?;
        for (dst, v) in parts.iter_mut().zip([emb.u_a, emb.v_a, emb.u_v, emb.v_v]) {
            dst.extend_from_slice(tape.value(v).data());
        }
    }
    let [ua, va, uv, vv] = parts.map(|d| Matrix::from_parts_unchecked(rows.len(), width, d));
    EmbeddedCorpus::new(
        rows.iter().map(|&r| data.manifest.items[r].id.clone()).collect(),
        data.labels(rows),
        data.manifest.header.class_names.clone(),
        ua,
        va,
        uv,
        vv,
        params.config.normalize_z,
    )
}

/// Embeds every item of a split with a checkpoint.
pub fn embed_corpus<T: Scalar>(checkpoint: &Checkpoint<T>, data: &Dataset, split: Split) -> Result<EmbeddedCorpus<T>> {
    let rows = data.manifest.split_rows(split);
    embed_rows(&checkpoint.params, data, &rows, checkpoint.alpha())
}
