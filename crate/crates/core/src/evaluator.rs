//! Link-prediction metrics, explanation sparsity curves, planted-truth
//! scoring and embedding projection.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{extract_explanation, explanation_size, rank_rows};
use crate::error::{Error, Result};
use crate::event_store::{is_seen, pair_key, sample_ego, EventStream, Query, SplitIndex};
use crate::features::WindowInputs;
use crate::model::Model;
use crate::par;
use crate::rng::substream;
use crate::synthetic::PlantedTruth;

/// Decision threshold on predicted probabilities.
pub const THRESHOLD: f64 = 0.5;
/// Upper end of the sparsity grid; curve areas are divided by it.
pub const MAX_SPARSITY: f64 = 0.3;
pub const GRID_POINTS: usize = 151;

/// Average precision with step interpolation.
///
/// Rows are ranked by descending score; equal scores keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Reciprocal rank of `positive` among `negatives`, ties counted as half a place.
pub fn reciprocal_rank(positive: f64, negatives: &[f64]) -> f64 {
    let above = negatives.iter().filter(|&&s| s > positive).count() as f64;
    let tied = negatives.iter().filter(|&&s| s == positive).count() as f64;
    1.0 / (1.0 + above + 0.5 * tied)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Anything that scores candidate interactions.
pub trait LinkScorer: Sync {
    fn score(&self, stream: &EventStream, queries: &[Query]) -> Result<Vec<f64>>;
}

impl LinkScorer for Model {
    fn score(&self, stream: &EventStream, queries: &[Query]) -> Result<Vec<f64>> {
        par::map(queries, |_, q| self.predict_query(stream, q)).into_iter().collect()
    }
}

/// Scores a pair by how often it interacted before the query time.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecurrenceScorer;

impl LinkScorer for RecurrenceScorer {
    fn score(&self, stream: &EventStream, queries: &[Query]) -> Result<Vec<f64>> {
        Ok(queries
            .iter()
            .map(|q| {
                let key = pair_key(q.src, q.dst);
                stream
                    .incident(q.src)
                    .iter()
                    .map(|&i| &stream.events()[i as usize])
                    .filter(|e| e.t < q.t && pair_key(e.src, e.dst) == key)
                    .count() as f64
            })
            .collect())
    }
}

/// Uniform random scores, independent of the query.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl LinkScorer for RandomScorer {
    fn score(&self, _stream: &EventStream, queries: &[Query]) -> Result<Vec<f64>> {
        Ok(queries
            .iter()
            .map(|q| substream(self.seed, "random-score", &[u64::from(q.src), u64::from(q.dst), q.t.to_bits()]).random())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    pub mrr: f64,
    pub mrr_seen: Option<f64>,
    pub mrr_unseen: Option<f64>,
    pub num_seen: usize,
    pub num_unseen: usize,
    /// Fewer nodes than requested negatives: the whole complement was used.
    pub full_complement: bool,
}

/// Candidate destinations for event `index`: up to `k` distinct nodes other than `dst`.
pub fn negative_candidates(num_nodes: usize, dst: u32, k: usize, seed: u64, index: usize) -> (Vec<u32>, bool) {
    let others = num_nodes.saturating_sub(1);
    let skip = |c: usize| if c as u32 >= dst { c as u32 + 1 } else { c as u32 };
    if others <= k {
        return ((0..others).map(skip).collect(), true);
    }
    let mut rng = substream(seed, "mrr-neg", &[index as u64]);
    (sample(&mut rng, others, k).into_iter().map(skip).collect(), false)
}

/// MRR of the true destination against `num_negatives` sampled destinations,
/// overall and split by whether the pair occurred before.
pub fn mrr(
    scorer: &dyn LinkScorer,
    stream: &EventStream,
    range: std::ops::Range<usize>,
    num_negatives: usize,
    seed: u64,
) -> Result<MrrReport> {
    if range.is_empty() {
        return Err(Error::NoEligibleQueries);
    }
    let mut full_complement = false;
    let mut queries = Vec::new();
    let mut spans = Vec::new();
    for i in range {
        let q = stream.events()[i].query();
        let (negs, full) = negative_candidates(stream.num_nodes(), q.dst, num_negatives, seed, i);
        full_complement |= full;
        let start = queries.len();
        queries.push(q);
        queries.extend(negs.into_iter().map(|dst| Query { dst, ..q }));
        spans.push((start, queries.len(), is_seen(stream, &q)));
    }
    let scores = scorer.score(stream, &queries)?;
    let (mut all, mut seen, mut unseen) = (Vec::new(), Vec::new(), Vec::new());
    for (start, end, was_seen) in spans {
        let rr = reciprocal_rank(scores[start], &scores[start + 1..end]);
        all.push(rr);
        if was_seen { seen.push(rr) } else { unseen.push(rr) }
    }
    Ok(MrrReport {
        mrr: mean(&all).unwrap_or(0.0),
        mrr_seen: mean(&seen),
        mrr_unseen: mean(&unseen),
        num_seen: seen.len(),
        num_unseen: unseen.len(),
        full_complement,
    })
}

/// Sparsity values `0, 0.002, ..., 0.3`.
pub fn sparsity_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / 500.0).collect()
}

/// Left Riemann sum over the grid divided by its range.
pub fn curve_area(grid: &[f64], values: &[f64]) -> f64 {
    let range = grid[grid.len() - 1] - grid[0];
    if range <= 0.0 {
        return values.first().copied().unwrap_or(0.0);
    }
    let area: f64 = grid.windows(2).zip(values).map(|(w, v)| (w[1] - w[0]) * v).sum();
    area / range
}

/// Source of per-row importance scores for the sparsity protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Explainer {
    /// The model's inclusion probabilities.
    Learned,
    /// Uniform random row scores.
    Random { seed: u64 },
}

/// A labelled query whose window is explained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainQuery {
    pub index: usize,
    pub query: Query,
    pub label: bool,
}

fn row_scores(model: &Model, inputs: &WindowInputs, explainer: Explainer, key: usize) -> Result<Vec<f64>> {
    match explainer {
        Explainer::Learned => Ok(model.inspect(inputs)?.p),
        Explainer::Random { seed } => {
            let mut rng = substream(seed, "random-explainer", &[key as u64]);
            Ok((0..inputs.len()).map(|_| rng.random()).collect())
        }
    }
}

/// Per-query outcome of the sparsity protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFidelity {
    pub correct: bool,
    /// Thresholded prediction preserved using only the top-s rows.
    pub keep_agrees: Vec<bool>,
    /// Thresholded prediction flipped after removing the top-s rows.
    pub removal_flips: Vec<bool>,
}

/// Runs the keep-only and removal forwards of one query over `grid`.
///
/// Forwards are shared between grid points with the same explanation size.
pub fn query_fidelity(
    model: &Model,
    stream: &EventStream,
    q: &ExplainQuery,
    explainer: Explainer,
    grid: &[f64],
) -> Result<QueryFidelity> {
    let inputs = model.inputs(stream, &q.query);
    let full = model.predict(&inputs)? > THRESHOLD;
    let scores = row_scores(model, &inputs, explainer, q.index)?;
    let real = &inputs.real;
    let n_real = inputs.num_real();
    let mut cache: HashMap<usize, (bool, bool)> = HashMap::new();
    let mut keep_agrees = Vec::with_capacity(grid.len());
    let mut removal_flips = Vec::with_capacity(grid.len());
    for &s in grid {
        let k = explanation_size(s, n_real);
        let outcome = match cache.get(&k) {
            Some(&o) => o,
            None => {
                let keep = extract_explanation(&scores, real, s);
                let removed: Vec<bool> = real.iter().zip(&keep).map(|(&r, &k)| r && !k).collect();
                let kept = model.predict(&inputs.restricted(&keep))? > THRESHOLD;
                let rest = model.predict(&inputs.restricted(&removed))? > THRESHOLD;
                let o = (kept == full, rest != full);
                cache.insert(k, o);
                o
            }
        };
        keep_agrees.push(outcome.0);
        removal_flips.push(outcome.1);
    }
    Ok(QueryFidelity {
        correct: full == q.label,
        keep_agrees,
        removal_flips,
    })
}

/// Area of a fidelity curve for one subset; absent when the subset is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub correct: Option<f64>,
    pub incorrect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub grid: Vec<f64>,
    pub acc_curve: Vec<f64>,
    pub acc_auc: f64,
    pub fid_plus: Vec<f64>,
    pub fid_minus: Vec<f64>,
    pub aufsc_plus: Breakdown,
    pub aufsc_minus: Breakdown,
    pub num_queries: usize,
}

fn fraction_curve(items: &[&QueryFidelity], pick: fn(&QueryFidelity) -> &[bool], len: usize) -> Option<Vec<f64>> {
    if items.is_empty() {
        return None;
    }
    let mut out = vec![0.0; len];
    for q in items {
        for (o, &b) in out.iter_mut().zip(pick(q)) {
            *o += f64::from(u8::from(b));
        }
    }
    Some(out.into_iter().map(|c| c / items.len() as f64).collect())
}

/// ACC(s), fid+(s), fid-(s) and their areas from per-query outcomes.
pub fn summarize_fidelity(grid: &[f64], outcomes: &[QueryFidelity]) -> Result<SparsityReport> {
    if outcomes.is_empty() {
        return Err(Error::NoEligibleQueries);
    }
    let all: Vec<&QueryFidelity> = outcomes.iter().collect();
    let correct: Vec<&QueryFidelity> = outcomes.iter().filter(|q| q.correct).collect();
    let incorrect: Vec<&QueryFidelity> = outcomes.iter().filter(|q| !q.correct).collect();
    let n = grid.len();
    fn keep(q: &QueryFidelity) -> &[bool] {
        &q.keep_agrees
    }
    fn flip(q: &QueryFidelity) -> &[bool] {
        &q.removal_flips
    }
    let acc_curve = fraction_curve(&all, keep, n).expect("non-empty");
    let fid_plus = fraction_curve(&all, flip, n).expect("non-empty");
    let area = |set: &[&QueryFidelity], pick: fn(&QueryFidelity) -> &[bool]| {
        fraction_curve(set, pick, n).map(|c| curve_area(grid, &c))
    };
    Ok(SparsityReport {
        grid: grid.to_vec(),
        acc_auc: curve_area(grid, &acc_curve),
        fid_minus: acc_curve.clone(),
        acc_curve,
        fid_plus,
        aufsc_plus: Breakdown {
            correct: area(&correct, flip),
            incorrect: area(&incorrect, flip),
        },
        aufsc_minus: Breakdown {
            correct: area(&correct, keep),
            incorrect: area(&incorrect, keep),
        },
        num_queries: outcomes.len(),
    })
}

/// The full sparsity protocol over `queries`.
pub fn sparsity_report(
    model: &Model,
    stream: &EventStream,
    queries: &[ExplainQuery],
    explainer: Explainer,
) -> Result<SparsityReport> {
    let grid = sparsity_grid();
    let outcomes: Vec<QueryFidelity> = par::map(queries, |_, q| query_fidelity(model, stream, q, explainer, &grid))
        .into_iter()
        .collect::<Result<_>>()?;
    summarize_fidelity(&grid, &outcomes)
}

/// Ranking AUC of `scores` against `truth` over `real` rows (Mann-Whitney,
/// ties count one half). `None` when either class is empty.
pub fn ranking_auc(scores: &[f64], truth: &[bool], real: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = (0..scores.len()).filter(|&i| real[i] && truth[i]).map(|i| scores[i]).collect();
    let neg: Vec<f64> = (0..scores.len()).filter(|&i| real[i] && !truth[i]).map(|i| scores[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Mean per-query ranking AUC over queries with at least one in-window cause.
///
/// Queries whose real rows are all causes carry no ranking information and
/// are skipped as well.
pub fn explanation_truth_auc(scores: &[Vec<f64>], truths: &[Vec<bool>], reals: &[Vec<bool>]) -> Result<f64> {
    let aucs: Vec<f64> = (0..scores.len())
        .filter_map(|i| ranking_auc(&scores[i], &truths[i], &reals[i]))
        .collect();
    mean(&aucs).ok_or(Error::NoEligibleQueries)
}

/// Planted-truth AUC of an explainer on the given positive events.
pub fn model_truth_auc(
    model: &Model,
    stream: &EventStream,
    truth: &PlantedTruth,
    events: &[usize],
    explainer: Explainer,
) -> Result<f64> {
    let rows = par::map(events, |_, &i| -> Result<Option<_>> {
        let q = stream.events()[i].query();
        let ego = sample_ego(stream, &q, model.config.l);
        let Ok(tm) = truth.truth_mask(i, &ego) else {
            return Ok(None);
        };
        let inputs = model.inputs(stream, &q);
        let scores = row_scores(model, &inputs, explainer, i)?;
        Ok(Some((scores, tm.mask, inputs.real)))
    });
    let (mut s, mut t, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for row in rows {
        if let Some((a, b, c)) = row? {
            s.push(a);
            t.push(b);
            r.push(c);
        }
    }
    explanation_truth_auc(&s, &t, &r)
}

/// Test positives and one corrupted-destination negative each.
pub fn explain_queries(stream: &EventStream, split: &SplitIndex, seed: u64, limit: Option<usize>) -> Vec<ExplainQuery> {
    let events = evenly_spaced(split.test.clone(), limit);
    let mut out = Vec::with_capacity(2 * events.len());
    for i in events {
        let q = stream.events()[i].query();
        let mut rng = substream(seed, "test-neg", &[i as u64]);
        let dst = crate::trainer::negative_destination(stream.num_nodes(), q.dst, &mut rng);
        out.push(ExplainQuery { index: i, query: q, label: true });
        out.push(ExplainQuery {
            index: i,
            query: Query { dst, ..q },
            label: false,
        });
    }
    out
}

/// At most `limit` indices spread evenly across `range`.
pub fn evenly_spaced(range: std::ops::Range<usize>, limit: Option<usize>) -> Vec<usize> {
    let n = range.len();
    match limit {
        Some(k) if k < n => (0..k).map(|j| range.start + j * n / k).collect(),
        _ => range.collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub num_negatives: usize,
    /// Cap on test events used for the sparsity protocol and truth scoring.
    pub explain_limit: Option<usize>,
    pub seed: u64,
    pub seen_unseen: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            num_negatives: 100,
            explain_limit: Some(500),
            seed: 0,
            seen_unseen: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub mrr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr_seen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr_unseen: Option<f64>,
    pub mrr_full_complement: bool,
    pub acc_auc: f64,
    /// How curve areas are normalized.
    pub area_normalization: String,
    pub aufsc_plus: Breakdown,
    pub aufsc_minus: Breakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation_truth_auc: Option<f64>,
    /// Validation AP of the evaluated parameters, when computed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_ap: Option<f64>,
    pub num_test_events: usize,
    pub num_explained: usize,
    pub runtime_secs: f64,
    #[serde(skip)]
    pub sparsity: Option<SparsityReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `s,acc,fid_plus,fid_minus` rows.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("s,acc,fid_plus,fid_minus\n");
        if let Some(sp) = &self.sparsity {
            for i in 0..sp.grid.len() {
                let _ = writeln!(out, "{},{},{},{}", sp.grid[i], sp.acc_curve[i], sp.fid_plus[i], sp.fid_minus[i]);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("curves.csv");
        fs::write(&csv, self.curves_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// AP, MRR and the sparsity protocol on the test range; truth AUC when given.
pub fn evaluate(
    model: &Model,
    stream: &EventStream,
    split: &SplitIndex,
    truth: Option<&PlantedTruth>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let start = Instant::now();
    model.check_stream(stream)?;
    let test = explain_queries(stream, split, opts.seed, None);
    let queries: Vec<Query> = test.iter().map(|q| q.query).collect();
    let labels: Vec<bool> = test.iter().map(|q| q.label).collect();
    let ap = average_precision(&model.score(stream, &queries)?, &labels)?;
    let m = mrr(model, stream, split.test.clone(), opts.num_negatives, opts.seed)?;
    let explained = explain_queries(stream, split, opts.seed, opts.explain_limit);
    let sparsity = sparsity_report(model, stream, &explained, Explainer::Learned)?;
    let truth_auc = match truth {
        Some(t) => {
            let events = evenly_spaced(split.test.clone(), opts.explain_limit);
            Some(model_truth_auc(model, stream, t, &events, Explainer::Learned)?)
        }
        None => None,
    };
    Ok(EvalReport {
        ap,
        mrr: m.mrr,
        mrr_seen: if opts.seen_unseen { m.mrr_seen } else { None },
        mrr_unseen: if opts.seen_unseen { m.mrr_unseen } else { None },
        mrr_full_complement: m.full_complement,
        acc_auc: sparsity.acc_auc,
        area_normalization: format!("left Riemann sum divided by {MAX_SPARSITY}"),
        aufsc_plus: sparsity.aufsc_plus,
        aufsc_minus: sparsity.aufsc_minus,
        explanation_truth_auc: truth_auc,
        val_ap: None,
        num_test_events: split.test.len(),
        num_explained: sparsity.num_queries,
        runtime_secs: start.elapsed().as_secs_f64(),
        sparsity: Some(sparsity),
    })
}

/// Which latent a projected row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Latent {
    Stability,
    Transition,
    Fused,
}

impl Latent {
    pub fn as_str(self) -> &'static str {
        match self {
            Latent::Stability => "h_s",
            Latent::Transition => "h_t",
            Latent::Fused => "h_e",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub query: usize,
    pub latent: Latent,
    pub vector: Vec<f64>,
    pub coords: Option<[f64; 2]>,
}

/// Coordinates of `rows` on the top-2 principal directions of the pooled set.
///
/// Returns `None` for fewer than three rows.
pub fn project_2d(rows: &[Vec<f64>]) -> Option<Vec<[f64; 2]>> {
    if rows.len() < 3 {
        return None;
    }
    let d = rows[0].len();
    let n = rows.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let centroid = x.row_mean();
    let mut c = x.clone();
    for mut r in c.row_iter_mut() {
        r -= &centroid;
    }
    let cov = c.transpose() * &c / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let pick = |k: usize| order.get(k).map(|&i| eig.eigenvectors.column(i).into_owned());
    let dirs: Vec<_> = (0..2).map(pick).collect();
    Some(
        (0..n)
            .map(|i| {
                let mut out = [0.0; 2];
                for (k, dir) in dirs.iter().enumerate() {
                    if let Some(v) = dir {
                        out[k] = c.row(i).dot(&v.transpose());
                    }
                }
                out
            })
            .collect(),
    )
}

/// `h_S`, `h_T`, `h_E` of each query plus their pooled 2-D projection.
pub fn export_embeddings(model: &Model, stream: &EventStream, events: &[usize]) -> Result<Vec<EmbeddingRow>> {
    let found = par::map(events, |_, &i| model.inspect(&model.inputs(stream, &stream.events()[i].query())));
    let mut rows = Vec::with_capacity(3 * events.len());
    for (&i, ins) in events.iter().zip(found) {
        let ins = ins?;
        for (latent, v) in [(Latent::Stability, ins.h_s), (Latent::Transition, ins.h_t), (Latent::Fused, ins.h_e)] {
            rows.push(EmbeddingRow {
                query: i,
                latent,
                vector: v,
                coords: None,
            });
        }
    }
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.vector.clone()).collect();
    if let Some(coords) = project_2d(&vectors) {
        for (r, c) in rows.iter_mut().zip(coords) {
            r.coords = Some(c);
        }
    }
    Ok(rows)
}

pub fn embeddings_csv(rows: &[EmbeddingRow]) -> String {
    let d = rows.first().map_or(0, |r| r.vector.len());
    let mut out = String::from("query,latent,pc1,pc2");
    for j in 0..d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for r in rows {
        let (a, b) = r.coords.map_or((String::new(), String::new()), |c| (c[0].to_string(), c[1].to_string()));
        let _ = write!(out, "{},{},{a},{b}", r.query, r.latent.as_str());
        for v in &r.vector {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Distance between the `h_S` and `h_T` centroids divided by the mean
/// distance of `h_E` rows to their own centroid.
pub fn branch_separation(rows: &[EmbeddingRow]) -> f64 {
    let centroid = |lat: Latent| {
        let vs: Vec<&Vec<f64>> = rows.iter().filter(|r| r.latent == lat).map(|r| &r.vector).collect();
        let d = vs.first().map_or(0, |v| v.len());
        let mut c = vec![0.0; d];
        for v in &vs {
            for (a, b) in c.iter_mut().zip(v.iter()) {
                *a += b / vs.len() as f64;
            }
        }
        (c, vs)
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (cs, _) = centroid(Latent::Stability);
    let (ct, _) = centroid(Latent::Transition);
    let (ce, es) = centroid(Latent::Fused);
    let spread = es.iter().map(|v| dist(v, &ce)).sum::<f64>() / es.len().max(1) as f64;
    dist(&cs, &ct) / spread.max(f64::MIN_POSITIVE)
}

/// Number of ranked explanation rows that hit planted causes.
pub fn truth_hits(p: &[f64], real: &[bool], truth: &[bool], sparsity: f64) -> (usize, usize) {
    let ranked = rank_rows(p, real);
    let k = explanation_size(sparsity, ranked.len());
    let hits = ranked[..k].iter().filter(|&&i| truth[i]).count();
    (hits, k)
}
