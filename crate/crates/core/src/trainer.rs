//! Mini-batch min-max training with negative sampling, prior-rate schedule,
//! early stopping and resumable checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bottleneck::{check_rate, PriorSchedule};
use crate::disentangler::disentangle_loss;
use crate::error::{Error, Result};
use crate::event_store::{EventStream, Query, SplitIndex};
use crate::evaluator::average_precision;
use crate::mixer::Dropout;
use crate::model::{MaskMode, Model, ModelConfig};
use crate::params::{Adam, GradBuf, Group, ParamStore};
use crate::par;
use crate::rng::{logistic_noise, substream};
use crate::tape::Tape;

pub const CHECKPOINT_MAGIC: &str = "tgxplain-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const BETA_GAMMA_RANGE: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
const L_RANGE: [usize; 5] = [20, 30, 40, 50, 60];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub disc_lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Weight of the compression term.
    pub beta: f64,
    /// Weight of the disentanglement term.
    pub gamma: f64,
    pub seed: u64,
    pub schedule: PriorSchedule,
    pub model: ModelConfig,
    /// Accept values outside the documented tuning ranges.
    pub allow_out_of_range: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 200,
            lr: 1e-4,
            disc_lr: 1e-4,
            max_epochs: 100,
            patience: 10,
            beta: 0.4,
            gamma: 0.4,
            seed: 0,
            schedule: PriorSchedule::default(),
            model: ModelConfig::default(),
            allow_out_of_range: false,
        }
    }
}

impl TrainConfig {
    /// Small preset that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 200,
            lr: 1e-3,
            disc_lr: 1e-3,
            max_epochs: 30,
            patience: 10,
            beta: 1.0,
            gamma: 0.4,
            model: ModelConfig {
                d: 16,
                d_t: 8,
                d_r: 8,
                l: 20,
                n_layers: 1,
                dropout: 0.1,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr >= 0.0 && self.disc_lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(self.model.tau > 0.0) {
            return bad(format!("tau {} must be positive", self.model.tau));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.model.dropout));
        }
        if self.model.l == 0 || self.model.d == 0 || self.model.d_t == 0 || self.model.d_r == 0 {
            return bad("window length and model widths must be positive".into());
        }
        check_rate(self.schedule.r_init)?;
        check_rate(self.schedule.r_target)?;
        if self.allow_out_of_range {
            return Ok(());
        }
        let in_set = |x: f64| BETA_GAMMA_RANGE.iter().any(|&v| (v - x).abs() < 1e-12);
        if !in_set(self.beta) || !in_set(self.gamma) {
            return bad(format!(
                "beta {} / gamma {} outside {{0.1, 0.2, 0.4, 0.6, 0.8, 1.0}} (set allow_out_of_range to override)",
                self.beta, self.gamma
            ));
        }
        if !L_RANGE.contains(&self.model.l) {
            return bad(format!("L {} outside {{20, 30, 40, 50, 60}}", self.model.l));
        }
        if !(1..=2).contains(&self.model.n_layers) {
            return bad(format!("n_layers {} outside {{1, 2}}", self.model.n_layers));
        }
        if !(0.1 - 1e-12..=0.5 + 1e-12).contains(&self.model.dropout) {
            return bad(format!("dropout {} outside [0.1, 0.5]", self.model.dropout));
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, recorded in checkpoint headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A labelled training or evaluation example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub query: Query,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub l_pre: f64,
    pub l_com: f64,
    /// Disentanglement value entering the model objective.
    pub l_dis: f64,
    /// Discriminator cross-entropy.
    pub l_disc: f64,
    pub total: f64,
    pub grad_norm_model: f64,
    pub grad_norm_disc: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_pre: f64,
    pub l_com: f64,
    pub l_dis: f64,
    pub total: f64,
    pub val_ap: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_ap: f64,
    pub store: ParamStore,
}

/// Everything needed to continue or reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: TrainConfig,
    pub model: Model,
    pub adam_model: Adam,
    pub adam_disc: Adam,
    /// Number of completed epochs.
    pub epoch: usize,
    pub best: Option<BestSnapshot>,
    pub epochs_since_best: usize,
    pub finished: bool,
    pub log: Vec<EpochLog>,
}

impl ModelState {
    pub fn new(config: TrainConfig, d_n: usize, d_e: usize) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), d_n, d_e, config.seed);
        let n = model.store.len();
        Ok(ModelState {
            adam_model: Adam::new(config.lr, n),
            adam_disc: Adam::new(config.disc_lr, n),
            config,
            model,
            epoch: 0,
            best: None,
            epochs_since_best: 0,
            finished: false,
            log: Vec::new(),
        })
    }

    pub fn current_rate(&self) -> f64 {
        self.config.schedule.rate(self.epoch)
    }

    /// Training log as CSV text.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,l_pre,l_com,l_dis,total,val_ap,r\n");
        for e in &self.log {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                e.epoch, e.l_pre, e.l_com, e.l_dis, e.total, e.val_ap, e.r
            );
        }
        out
    }
}

/// Random destination different from the true one.
pub fn negative_destination(num_nodes: usize, dst: u32, rng: &mut crate::rng::Rng) -> u32 {
    if num_nodes < 2 {
        return dst;
    }
    loop {
        let c = rng.random_range(0..num_nodes) as u32;
        if c != dst {
            return c;
        }
    }
}

/// Positive events of `range` interleaved with one corrupted-destination negative each.
pub fn with_negatives(stream: &EventStream, range: std::ops::Range<usize>, seed: u64, tag: &str, epoch: u64) -> Vec<Example> {
    let mut out = Vec::with_capacity(2 * range.len());
    for i in range {
        let q = stream.events()[i].query();
        let mut rng = substream(seed, tag, &[epoch, i as u64]);
        let neg = Query {
            dst: negative_destination(stream.num_nodes(), q.dst, &mut rng),
            ..q
        };
        out.push(Example { query: q, label: 1.0 });
        out.push(Example { query: neg, label: 0.0 });
    }
    out
}

/// Objective values and gradients of one batch, before any update.
pub struct BatchGradients {
    pub report: StepReport,
    /// Gradient of the model objective for encoder and predictor parameters.
    pub model: GradBuf,
    /// Gradient of the discriminator cross-entropy.
    pub disc: GradBuf,
}

/// Per-example random tags: `[epoch, batch, example]`.
pub fn batch_gradients(
    model: &Model,
    stream: &EventStream,
    batch: &[Example],
    beta: f64,
    gamma: f64,
    rate: f64,
    seed: u64,
    tags: [u64; 2],
) -> Result<BatchGradients> {
    let cfg = &model.config;
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let forwards = par::map(batch, |i, ex| -> Result<_> {
        let inputs = model.inputs(stream, &ex.query);
        let mut rng = substream(seed, "example", &[tags[0], tags[1], i as u64]);
        let noise: Vec<f64> = (0..cfg.l).map(|_| logistic_noise(&mut rng)).collect();
        let mut tape = Tape::new(&model.store);
        let mut drop = Dropout {
            rate: cfg.dropout,
            rng: Some(&mut rng),
        };
        let f = model.forward(&mut tape, &inputs, MaskMode::Sample { noise: &noise }, &mut drop)?;
        let pre = tape.weighted_bce(f.y_hat, &[ex.label], &[1.0]);
        let kl = tape.kl_bernoulli(f.p, rate, &inputs.real);
        let (lp, lk) = (tape.scalar(pre), tape.scalar(kl));
        if !lp.is_finite() || !lk.is_finite() {
            return Err(Error::NonFiniteLoss {
                index: i,
                detail: format!("query {:?}, l_pre {lp}, kl {lk}, y_hat {}", ex.query, tape.scalar(f.y_hat)),
            });
        }
        Ok((tape, f, pre, kl, lp, lk))
    });
    let forwards: Vec<_> = forwards.into_iter().collect::<Result<_>>()?;

    let d = cfg.d;
    let mut hs = Array2::zeros((b, d));
    let mut ht = Array2::zeros((b, d));
    for (i, (tape, f, ..)) in forwards.iter().enumerate() {
        hs.row_mut(i).assign(&tape.value(f.h_s).row(0));
        ht.row_mut(i).assign(&tape.value(f.h_t).row(0));
    }
    let labels: Vec<f64> = batch.iter().map(|e| e.label).collect();
    let mut rng = substream(seed, "resample", &tags);
    let dis = disentangle_loss(&model.store, &model.disc, &hs, &ht, &labels, &mut rng);
    if !dis.for_discriminator.is_finite() {
        return Err(Error::NonFiniteLoss {
            index: 0,
            detail: format!("discriminator loss {}", dis.for_discriminator),
        });
    }

    let grads = par::map(&forwards, |i, (tape, f, pre, kl, ..)| {
        let seeds = [
            (*pre, Array2::from_elem((1, 1), inv_b)),
            (*kl, Array2::from_elem((1, 1), beta * inv_b)),
            (f.h_s, dis.grad_hs.row(i).insert_axis(ndarray::Axis(0)).to_owned() * gamma),
            (f.h_t, dis.grad_ht.row(i).insert_axis(ndarray::Axis(0)).to_owned() * gamma),
        ];
        let g = tape.backward(&seeds);
        tape.param_grads(&g)
    });
    let mut model_grads = GradBuf::zeros(model.store.len());
    for g in &grads {
        model_grads.merge(g);
    }
    let l_pre = forwards.iter().map(|x| x.4).sum::<f64>() * inv_b;
    let l_com = forwards.iter().map(|x| x.5).sum::<f64>() * inv_b;
    let report = StepReport {
        l_pre,
        l_com,
        l_dis: dis.for_encoder,
        l_disc: dis.for_discriminator,
        total: l_pre + beta * l_com + gamma * dis.for_encoder,
        grad_norm_model: model_grads.norm(&model.store, Group::Encoder).hypot(model_grads.norm(&model.store, Group::Predictor)),
        grad_norm_disc: dis.disc_grads.norm(&model.store, Group::Discriminator),
        skipped: dis.skipped,
    };
    Ok(BatchGradients {
        report,
        model: model_grads,
        disc: dis.disc_grads,
    })
}

/// One discriminator ascent step followed by one model descent step.
pub fn train_step(state: &mut ModelState, stream: &EventStream, batch: &[Example], batch_index: usize) -> Result<StepReport> {
    let cfg = &state.config;
    let rate = state.current_rate();
    let g = batch_gradients(
        &state.model,
        stream,
        batch,
        cfg.beta,
        cfg.gamma,
        rate,
        cfg.seed,
        [state.epoch as u64, batch_index as u64],
    )?;
    state.adam_disc.update(&mut state.model.store, &g.disc, |grp| grp == Group::Discriminator);
    state.adam_model.update(&mut state.model.store, &g.model, Group::is_model);
    Ok(g.report)
}

/// Deterministic scores for a list of queries.
pub fn score_queries(model: &Model, stream: &EventStream, queries: &[Query]) -> Result<Vec<f64>> {
    par::map(queries, |_, q| model.predict_query(stream, q)).into_iter().collect()
}

/// Average precision on the validation range with its fixed negatives.
pub fn validation_ap(model: &Model, stream: &EventStream, split: &SplitIndex, seed: u64) -> Result<f64> {
    let examples = with_negatives(stream, split.val.clone(), seed, "val-neg", 0);
    let queries: Vec<Query> = examples.iter().map(|e| e.query).collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.label > 0.5).collect();
    average_precision(&score_queries(model, stream, &queries)?, &labels)
}

/// Runs one epoch and updates early-stopping state.
pub fn run_epoch(state: &mut ModelState, stream: &EventStream, split: &SplitIndex) -> Result<EpochLog> {
    let r = state.current_rate();
    let examples = with_negatives(stream, split.train.clone(), state.config.seed, "train-neg", state.epoch as u64);
    // a batch holds `batch_size` positives and their negatives
    let chunk = 2 * state.config.batch_size;
    let mut sums = [0.0; 4];
    let mut count = 0.0;
    for (bi, batch) in examples.chunks(chunk).enumerate() {
        let rep = train_step(state, stream, batch, bi)?;
        let w = batch.len() as f64;
        sums[0] += rep.l_pre * w;
        sums[1] += rep.l_com * w;
        sums[2] += rep.l_dis * w;
        sums[3] += rep.total * w;
        count += w;
    }
    let val_ap = validation_ap(&state.model, stream, split, state.config.seed)?;
    let log = EpochLog {
        epoch: state.epoch,
        l_pre: sums[0] / count,
        l_com: sums[1] / count,
        l_dis: sums[2] / count,
        total: sums[3] / count,
        val_ap,
        r,
    };
    state.log.push(log);
    let improved = state.best.as_ref().is_none_or(|b| val_ap > b.val_ap);
    if improved {
        state.best = Some(BestSnapshot {
            epoch: state.epoch,
            val_ap,
            store: state.model.store.clone(),
        });
        state.epochs_since_best = 0;
    } else {
        state.epochs_since_best += 1;
    }
    state.epoch += 1;
    if state.epochs_since_best >= state.config.patience || state.epoch >= state.config.max_epochs {
        state.finished = true;
    }
    Ok(log)
}

/// Replaces the live parameters with the best-validation snapshot.
pub fn restore_best(state: &mut ModelState) {
    if let Some(best) = &state.best {
        state.model.store = best.store.clone();
    }
}

/// Trains until early stopping or `max_epochs`, then restores the best snapshot.
///
/// `on_epoch` sees the state after every completed epoch (before restoring);
/// returning `false` pauses training without marking it finished.
pub fn fit_with(
    mut state: ModelState,
    stream: &EventStream,
    split: &SplitIndex,
    mut on_epoch: impl FnMut(&ModelState) -> Result<bool>,
) -> Result<ModelState> {
    state.model.check_stream(stream)?;
    while !state.finished {
        run_epoch(&mut state, stream, split)?;
        if !on_epoch(&state)? {
            return Ok(state);
        }
    }
    restore_best(&mut state);
    Ok(state)
}

pub fn fit(stream: &EventStream, split: &SplitIndex, config: TrainConfig) -> Result<ModelState> {
    let state = ModelState::new(config, stream.d_n(), stream.d_e())?;
    fit_with(state, stream, split, |_| Ok(true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    pub l: usize,
    pub d_n: usize,
    pub d_e: usize,
    pub d_t: usize,
    pub d_r: usize,
    pub n_layers: usize,
    pub epoch: usize,
    pub config_hash: String,
}

impl CheckpointHeader {
    pub fn of(state: &ModelState) -> Self {
        let m = &state.model;
        CheckpointHeader {
            d: m.config.d,
            l: m.config.l,
            d_n: m.d_n,
            d_e: m.d_e,
            d_t: m.config.d_t,
            d_r: m.config.d_r,
            n_layers: m.config.n_layers,
            epoch: state.epoch,
            config_hash: state.config.hash(),
        }
    }
}

/// Writes `magic version`, a JSON header line and the JSON state, atomically.
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let header = serde_json::to_string(&CheckpointHeader::of(state)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let body = serde_json::to_string(state).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        writeln!(f, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").map_err(|e| Error::io(&tmp, e))?;
        writeln!(f, "{header}").map_err(|e| Error::io(&tmp, e))?;
        writeln!(f, "{body}").map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn split_checkpoint(text: &str) -> Result<(CheckpointHeader, &str)> {
    let mut lines = text.splitn(3, '\n');
    let first = lines.next().unwrap_or("");
    let expected = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    if first != expected {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: first.chars().take(64).collect(),
        });
    }
    let header = lines.next().ok_or_else(|| Error::Checkpoint("truncated: missing header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_str(header).map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
    let body = lines.next().ok_or_else(|| Error::Checkpoint("truncated: missing state".into()))?;
    Ok((header, body))
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(split_checkpoint(&text)?.0)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (header, body) = split_checkpoint(&text)?;
    let state: ModelState =
        serde_json::from_str(body.trim_end()).map_err(|e| Error::Checkpoint(format!("corrupt state: {e}")))?;
    if CheckpointHeader::of(&state) != header {
        return Err(Error::Checkpoint("header does not describe the stored state".into()));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_store::chronological_split;
    use crate::synthetic::{generate, GenConfig};

    pub(crate) fn tiny_setup(events: usize) -> (EventStream, SplitIndex, TrainConfig) {
        let (s, _) = generate(&GenConfig {
            num_events: events,
            num_nodes: 40,
            num_motif_pairs: 6,
            seed: 5,
            ..GenConfig::default()
        })
        .unwrap();
        let split = chronological_split(&s).unwrap();
        let cfg = TrainConfig {
            batch_size: 20,
            lr: 1e-3,
            disc_lr: 1e-3,
            max_epochs: 3,
            model: ModelConfig {
                d: 8,
                d_t: 4,
                d_r: 4,
                l: 20,
                dropout: 0.1,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        (s, split, cfg)
    }

    #[test]
    fn zero_weights_total_is_prediction_loss() {
        let (s, split, mut cfg) = tiny_setup(200);
        cfg.beta = 0.0;
        cfg.gamma = 0.0;
        cfg.allow_out_of_range = true;
        let mut state = ModelState::new(cfg, s.d_n(), s.d_e()).unwrap();
        let batch = with_negatives(&s, split.train.start..split.train.start + 10, 0, "t", 0);
        let rep = train_step(&mut state, &s, &batch, 0).unwrap();
        assert_eq!(rep.total, rep.l_pre);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (s, split, mut cfg) = tiny_setup(200);
        cfg.lr = 0.0;
        cfg.disc_lr = 0.0;
        let mut state = ModelState::new(cfg, s.d_n(), s.d_e()).unwrap();
        let before = state.model.store.clone();
        let batch = with_negatives(&s, split.train.start..split.train.start + 10, 0, "t", 0);
        train_step(&mut state, &s, &batch, 0).unwrap();
        assert_eq!(state.model.store, before);
    }

    #[test]
    fn steps_touch_only_their_partition() {
        let (s, split, cfg) = tiny_setup(200);
        let mut state = ModelState::new(cfg, s.d_n(), s.d_e()).unwrap();
        let batch = with_negatives(&s, split.train.start..split.train.start + 10, 0, "t", 0);
        let g = batch_gradients(&state.model, &s, &batch, 0.4, 0.4, 0.9, 0, [0, 0]).unwrap();
        let hashes = |st: &ParamStore| Group::ALL.map(|grp| st.group_hash(grp));
        let h0 = hashes(&state.model.store);
        state.adam_disc.update(&mut state.model.store, &g.disc, |grp| grp == Group::Discriminator);
        let h1 = hashes(&state.model.store);
        assert_eq!((h0[0] == h1[0], h0[1] == h1[1], h0[2] == h1[2]), (true, true, false));
        state.adam_model.update(&mut state.model.store, &g.model, Group::is_model);
        let h2 = hashes(&state.model.store);
        assert_eq!((h1[0] == h2[0], h1[1] == h2[1], h1[2] == h2[2]), (false, false, true));
    }

    #[test]
    fn total_is_weighted_sum() {
        let (s, split, cfg) = tiny_setup(200);
        let state = ModelState::new(cfg, s.d_n(), s.d_e()).unwrap();
        let batch = with_negatives(&s, split.train.start..split.train.start + 10, 0, "t", 0);
        let r = batch_gradients(&state.model, &s, &batch, 0.6, 0.2, 0.9, 0, [0, 0]).unwrap().report;
        assert!((r.total - (r.l_pre + 0.6 * r.l_com + 0.2 * r.l_dis)).abs() <= 1e-12);
        assert_eq!(r.l_dis, -r.l_disc);
    }

    #[test]
    fn out_of_range_needs_override() {
        let mut cfg = TrainConfig {
            beta: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.allow_out_of_range = true;
        assert!(cfg.validate().is_ok());
        cfg.schedule.r_target = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::DegeneratePrior(_))));
    }

    #[test]
    fn patience_one_with_frozen_model_stops_after_two_epochs() {
        let (s, split, mut cfg) = tiny_setup(200);
        cfg.lr = 0.0;
        cfg.disc_lr = 0.0;
        cfg.patience = 1;
        cfg.max_epochs = 50;
        let state = fit(&s, &split, cfg).unwrap();
        assert_eq!(state.log.len(), 2);
        assert_eq!(state.log[0].val_ap, state.log[1].val_ap);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let (s, split, cfg) = tiny_setup(200);
        let mut state = ModelState::new(cfg, s.d_n(), s.d_e()).unwrap();
        run_epoch(&mut state, &s, &split).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&state, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, state);
        let q = s.events()[150].query();
        assert_eq!(
            back.model.predict_query(&s, &q).unwrap().to_bits(),
            state.model.predict_query(&s, &q).unwrap().to_bits()
        );

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        fs::write(&path, text.replacen("checkpoint 1", "checkpoint 7", 1)).unwrap();
        match load_checkpoint(&path) {
            Err(Error::CheckpointVersion { expected, found }) => {
                assert_eq!(expected, 1);
                assert!(found.ends_with('7'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
