//! Synthetic interaction streams with planted stability and transition causes.
//!
//! Events are emitted by a small pool of concurrently active episodes:
//!
//! * a **stability** episode is a session of repeated firings of one motif
//!   pair; each firing is caused by the pair's earlier firings;
//! * a **transition** episode is a burst of first-time pairs `(x_i, v)` around
//!   a hot node `v`; each burst event is caused by the burst events before it.
//!
//! Noise events connect uniformly drawn non-planted pairs and carry no cue.
//! Edge feature coordinate 0 flags stability firings and coordinate 1 flags
//! burst events, so the causal rows are identifiable from features.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_store::{pair_key, EgoSubgraph, Event, EventStream, NodeId};
use crate::rng::{substream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_nodes: usize,
    pub num_events: usize,
    /// Target fraction of events whose pair occurred earlier.
    pub repeat_ratio: f64,
    pub num_motif_pairs: usize,
    /// Mean number of follow-up events in a burst (Poisson distributed).
    pub transition_burst_rate: f64,
    pub noise_rate: f64,
    /// Firings per stability session.
    pub session_len: usize,
    /// Number of episodes interleaved at any time.
    pub concurrency: usize,
    /// How many earlier firings of a motif pair count as causes of the next one.
    pub stability_memory: usize,
    pub seed: u64,
    pub d_n: usize,
    pub d_e: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_nodes: 200,
            num_events: 5000,
            repeat_ratio: 0.66,
            num_motif_pairs: 20,
            transition_burst_rate: 5.0,
            noise_rate: 0.02,
            session_len: 4,
            concurrency: 3,
            stability_memory: 64,
            seed: 0,
            d_n: 8,
            d_e: 8,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGenConfig(msg));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.repeat_ratio) {
            return bad(format!("repeat_ratio {} outside [0, 1]", self.repeat_ratio));
        }
        if !unit(self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if self.repeat_ratio + self.noise_rate > 1.0 + 1e-12 {
            return bad(format!(
                "repeat_ratio + noise_rate = {} exceeds 1",
                self.repeat_ratio + self.noise_rate
            ));
        }
        if self.num_nodes < 2 {
            return bad(format!("num_nodes {} < 2", self.num_nodes));
        }
        if self.num_events == 0 {
            return bad("num_events must be positive".into());
        }
        if self.repeat_ratio > 0.0 && self.num_motif_pairs == 0 {
            return bad("num_motif_pairs must be >= 1 when repeat_ratio > 0".into());
        }
        let max_pairs = self.num_nodes * (self.num_nodes - 1) / 2;
        if self.num_motif_pairs > max_pairs {
            return bad(format!("num_motif_pairs {} exceeds the {max_pairs} available pairs", self.num_motif_pairs));
        }
        if self.num_motif_pairs == max_pairs && self.repeat_ratio < 1.0 {
            return bad("motif pairs use up the whole pair space; non-planted events are impossible".into());
        }
        if !(self.transition_burst_rate >= 0.0) || !self.transition_burst_rate.is_finite() {
            return bad(format!("transition_burst_rate {} must be finite and >= 0", self.transition_burst_rate));
        }
        if self.session_len == 0 || self.concurrency == 0 {
            return bad("session_len and concurrency must be positive".into());
        }
        if self.d_e < 2 {
            return bad(format!("d_e {} < 2; two cue coordinates are required", self.d_e));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CauseTag {
    Stability,
    Transition,
}

impl CauseTag {
    fn as_str(self) -> &'static str {
        match self {
            CauseTag::Stability => "stability",
            CauseTag::Transition => "transition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cause {
    pub event: usize,
    pub tag: CauseTag,
}

/// Causal history of every planted positive event, keyed by stream position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub causes: BTreeMap<usize, Vec<Cause>>,
}

/// Planted causes of one query projected onto its sampled window.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthMask {
    pub mask: Vec<bool>,
    /// Causes that fall outside the window.
    pub coverage_loss: usize,
}

impl PlantedTruth {
    pub fn get(&self, query: usize) -> Result<&[Cause]> {
        self.causes.get(&query).map(Vec::as_slice).ok_or(Error::NoTruth(query))
    }

    /// Marks window rows holding planted causes of event `query`.
    pub fn truth_mask(&self, query: usize, ego: &EgoSubgraph) -> Result<TruthMask> {
        let causes = self.get(query)?;
        let mut mask = vec![false; ego.len];
        let mut coverage_loss = 0;
        for c in causes {
            match ego.row_of(c.event) {
                Some(row) => mask[row] = true,
                None => coverage_loss += 1,
            }
        }
        Ok(TruthMask { mask, coverage_loss })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, causes) in &self.causes {
            let items: Vec<String> = causes.iter().map(|c| format!("{}:{}", c.event, c.tag.as_str())).collect();
            let _ = writeln!(out, "{q}: {}", items.join(", "));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut causes = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::MalformedRow {
                line: n + 1,
                msg: format!("expected `query: cause:tag, ...`, got {line:?}"),
            };
            let (q, rest) = line.split_once(':').ok_or_else(bad)?;
            let q: usize = q.trim().parse().map_err(|_| bad())?;
            let mut list = Vec::new();
            for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (e, tag) = item.split_once(':').ok_or_else(bad)?;
                let tag = match tag {
                    "stability" => CauseTag::Stability,
                    "transition" => CauseTag::Transition,
                    _ => return Err(bad()),
                };
                list.push(Cause {
                    event: e.parse().map_err(|_| bad())?,
                    tag,
                });
            }
            causes.insert(q, list);
        }
        Ok(PlantedTruth { causes })
    }
}

enum Episode {
    Stability { pair: usize, left: usize },
    Transition { hot: NodeId, left: usize, members: Vec<usize> },
}

/// Generates a stream and its planted causes; deterministic in `config.seed`.
pub fn generate(config: &GenConfig) -> Result<(EventStream, PlantedTruth)> {
    config.validate()?;
    let n = config.num_nodes;
    let mut rng = substream(config.seed, "generate", &[]);
    let node_features = {
        let mut r = substream(config.seed, "node-features", &[]);
        Array2::from_shape_simple_fn((n, config.d_n), || r.sample::<f64, _>(rand_distr::StandardNormal))
    };

    let mut planted: Vec<(NodeId, NodeId)> = Vec::new();
    let mut planted_set = HashSet::new();
    while planted.len() < config.num_motif_pairs {
        let a = rng.random_range(0..n) as NodeId;
        let b = rng.random_range(0..n) as NodeId;
        if a != b && planted_set.insert(pair_key(a, b)) {
            planted.push((a, b));
        }
    }

    let mean_burst = 1.0 + config.transition_burst_rate;
    let episode_share = 1.0 - config.noise_rate;
    // probability that a new episode is a stability session, chosen so that
    // stability firings make up `repeat_ratio` of all events
    let stable_frac = if episode_share > 0.0 {
        (config.repeat_ratio / episode_share).min(1.0)
    } else {
        0.0
    };
    let s_len = config.session_len as f64;
    let p_stability = if stable_frac <= 0.0 {
        0.0
    } else {
        stable_frac * mean_burst / (stable_frac * mean_burst + (1.0 - stable_frac) * s_len)
    };
    let burst = Poisson::new(config.transition_burst_rate.max(1e-12)).expect("positive rate");
    let feature_noise = Normal::new(0.0, 0.1).expect("valid sigma");

    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::new();
    let mut firings: Vec<Vec<usize>> = vec![Vec::new(); planted.len()];
    let mut events = Vec::with_capacity(config.num_events);
    let mut feats = Array2::zeros((config.num_events, config.d_e));
    let mut truth = PlantedTruth::default();
    let mut slots: Vec<Option<Episode>> = (0..config.concurrency).map(|_| None).collect();
    let mut t = 0.0;

    let fresh_pair = |rng: &mut Rng, seen: &HashSet<(NodeId, NodeId)>, fixed: Option<NodeId>| {
        let mut fallback = None;
        for _ in 0..256 {
            let a = fixed.unwrap_or_else(|| rng.random_range(0..n) as NodeId);
            let b = rng.random_range(0..n) as NodeId;
            if a == b || planted_set.contains(&pair_key(a, b)) {
                continue;
            }
            if !seen.contains(&pair_key(a, b)) {
                return Some((a, b));
            }
            fallback.get_or_insert((a, b));
        }
        fallback
    };

    for idx in 0..config.num_events {
        t += rng.sample::<f64, _>(Exp1);
        let mut cue = None;
        let mut causes = Vec::new();
        let (src, dst) = if rng.random::<f64>() < config.noise_rate {
            fresh_pair(&mut rng, &seen, None).unwrap_or((0, 1))
        } else {
            let k = rng.random_range(0..slots.len());
            if slots[k].is_none() {
                slots[k] = Some(if rng.random::<f64>() < p_stability {
                    Episode::Stability {
                        pair: rng.random_range(0..planted.len()),
                        left: config.session_len,
                    }
                } else {
                    Episode::Transition {
                        hot: rng.random_range(0..n) as NodeId,
                        left: 1 + burst.sample(&mut rng) as usize,
                        members: Vec::new(),
                    }
                });
            }
            let episode = slots[k].as_mut().expect("slot filled above");
            let (pair, left) = match episode {
                Episode::Stability { pair, left } => {
                    let history = &mut firings[*pair];
                    for &e in history.iter().rev().take(config.stability_memory) {
                        causes.push(Cause {
                            event: e,
                            tag: CauseTag::Stability,
                        });
                    }
                    history.push(idx);
                    cue = Some(0);
                    *left -= 1;
                    let (a, b) = planted[*pair];
                    if rng.random::<bool>() {
                        ((a, b), *left)
                    } else {
                        ((b, a), *left)
                    }
                }
                Episode::Transition { hot, left, members } => {
                    let pair = fresh_pair(&mut rng, &seen, Some(*hot)).map(|(h, x)| (x, h));
                    match pair {
                        Some(p) => {
                            for &e in members.iter().rev().take(config.stability_memory) {
                                causes.push(Cause {
                                    event: e,
                                    tag: CauseTag::Transition,
                                });
                            }
                            members.push(idx);
                            cue = Some(1);
                            *left -= 1;
                            (p, *left)
                        }
                        None => {
                            // the hot node has exhausted its fresh partners
                            *left = 0;
                            (fresh_pair(&mut rng, &seen, None).unwrap_or((0, 1)), 0)
                        }
                    }
                }
            };
            if left == 0 {
                slots[k] = None;
            }
            pair
        };
        seen.insert(pair_key(src, dst));
        let mut row = feats.row_mut(idx);
        for v in row.iter_mut() {
            *v = feature_noise.sample(&mut rng);
        }
        if let Some(c) = cue {
            row[c] += 1.0;
        }
        if !causes.is_empty() {
            causes.sort_by_key(|c| c.event);
            truth.causes.insert(idx, causes);
        }
        events.push(Event {
            src,
            dst,
            t,
            label: None,
        });
    }
    let stream = EventStream::new(events, feats, node_features, None)?;
    Ok((stream, truth))
}

/// Fraction of events whose unordered pair occurred at an earlier position.
pub fn realized_repeat_ratio(stream: &EventStream) -> f64 {
    let mut seen = HashSet::new();
    let repeats = stream
        .events()
        .iter()
        .filter(|e| !seen.insert(pair_key(e.src, e.dst)))
        .count();
    repeats as f64 / stream.len() as f64
}
