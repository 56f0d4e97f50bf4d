//! Temporal event streams, chronological splits and ego-temporal sampling.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

/// One timestamped interaction. Edge features live in [`EventStream::edge_features`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: f64,
    pub label: Option<f64>,
}

impl Event {
    pub fn query(&self) -> Query {
        Query {
            src: self.src,
            dst: self.dst,
            t: self.t,
        }
    }
}

/// A (possibly hypothetical) interaction whose existence is to be predicted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: f64,
}

pub fn pair_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct EventStream {
    events: Vec<Event>,
    edge_features: Array2<f64>,
    node_features: Array2<f64>,
    id_map: Vec<String>,
    /// Rows that arrived out of timestamp order and were moved by the stable sort.
    pub reordered: usize,
    /// Events whose endpoints coincide.
    pub self_loops: usize,
    incident: Vec<Vec<u32>>,
    first_seen: HashMap<(NodeId, NodeId), f64>,
}

impl EventStream {
    /// Builds a stream, stably sorting events by timestamp.
    ///
    /// `edge_features` has one row per event (in input order); `node_features`
    /// one row per node id. Missing node rows are padded with zeros.
    pub fn new(
        events: Vec<Event>,
        edge_features: Array2<f64>,
        node_features: Array2<f64>,
        id_map: Option<Vec<String>>,
    ) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::NoEvents);
        }
        if edge_features.nrows() != events.len() {
            return Err(Error::DimensionMismatch {
                block: "edge features",
                expected: events.len(),
                found: edge_features.nrows(),
            });
        }
        for e in &events {
            if !(e.t >= 0.0) || !e.t.is_finite() {
                return Err(Error::Config(format!("timestamp {} is not a finite non-negative value", e.t)));
            }
        }
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by(|&a, &b| events[a].t.total_cmp(&events[b].t));
        let reordered = order.iter().enumerate().filter(|(i, &o)| *i != o).count();
        let sorted: Vec<Event> = order.iter().map(|&i| events[i]).collect();
        let edge_features = edge_features.select(ndarray::Axis(0), &order);

        let max_id = sorted.iter().map(|e| e.src.max(e.dst)).max().unwrap_or(0) as usize;
        let num_nodes = (max_id + 1).max(node_features.nrows()).max(id_map.as_ref().map_or(0, |m| m.len()));
        let node_features = if node_features.nrows() < num_nodes {
            let mut padded = Array2::zeros((num_nodes, node_features.ncols()));
            padded
                .slice_mut(ndarray::s![..node_features.nrows(), ..])
                .assign(&node_features);
            padded
        } else {
            node_features
        };
        let id_map = id_map.unwrap_or_else(|| (0..num_nodes).map(|i| i.to_string()).collect());

        let mut incident = vec![Vec::new(); num_nodes];
        let mut first_seen = HashMap::new();
        let mut self_loops = 0;
        for (i, e) in sorted.iter().enumerate() {
            incident[e.src as usize].push(i as u32);
            if e.dst != e.src {
                incident[e.dst as usize].push(i as u32);
            } else {
                self_loops += 1;
            }
            first_seen.entry(pair_key(e.src, e.dst)).or_insert(e.t);
        }
        Ok(EventStream {
            events: sorted,
            edge_features,
            node_features,
            id_map,
            reordered,
            self_loops,
            incident,
            first_seen,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn d_n(&self) -> usize {
        self.node_features.ncols()
    }

    pub fn d_e(&self) -> usize {
        self.edge_features.ncols()
    }

    pub fn edge_features(&self) -> &Array2<f64> {
        &self.edge_features
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn id_map(&self) -> &[String] {
        &self.id_map
    }

    /// Stream positions of events incident to `node`, in chronological order.
    pub fn incident(&self, node: NodeId) -> &[u32] {
        self.incident.get(node as usize).map_or(&[], |v| v.as_slice())
    }

    /// Number of incident events strictly before `t`.
    fn incident_before(&self, node: NodeId, t: f64) -> &[u32] {
        let list = self.incident(node);
        let cut = list.partition_point(|&i| self.events[i as usize].t < t);
        &list[..cut]
    }

    /// Timestamp of the node's most recent interaction strictly before `t`.
    pub fn last_activity(&self, node: NodeId, t: f64) -> Option<f64> {
        self.incident_before(node, t)
            .last()
            .map(|&i| self.events[i as usize].t)
    }

    /// Whether the unordered pair occurred in any event strictly before `t`.
    pub fn pair_seen_before(&self, a: NodeId, b: NodeId, t: f64) -> bool {
        self.first_seen.get(&pair_key(a, b)).is_some_and(|&t0| t0 < t)
    }

    /// Writes the `key=value` metadata companion file.
    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "num_nodes={}", self.num_nodes());
        let _ = writeln!(out, "num_events={}", self.len());
        let _ = writeln!(out, "d_n={}", self.d_n());
        let _ = writeln!(out, "d_e={}", self.d_e());
        let _ = writeln!(out, "ids={}", self.id_map.join(","));
        for (i, row) in self.node_features.outer_iter().enumerate() {
            if self.d_n() == 0 {
                break;
            }
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "node.{i}={}", vals.join(","));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Writes events as `source,destination,timestamp[,state_label],f_1..f_dE`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let has_label = self.events.iter().any(|e| e.label.is_some());
        let _ = write!(out, "source,destination,timestamp");
        if has_label {
            let _ = write!(out, ",state_label");
        }
        for j in 0..self.d_e() {
            let _ = write!(out, ",f_{}", j + 1);
        }
        out.push('\n');
        for (i, e) in self.events.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{:?}",
                self.id_map[e.src as usize], self.id_map[e.dst as usize], e.t
            );
            if has_label {
                let _ = write!(out, ",{:?}", e.label.unwrap_or(0.0));
            }
            for v in self.edge_features.row(i) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Companion metadata parsed from the `key=value` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub num_nodes: usize,
    pub d_n: usize,
    pub d_e: usize,
    pub ids: Vec<String>,
    pub node_features: Option<Array2<f64>>,
}

impl Metadata {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut meta = Metadata::default();
        let mut nodes: Vec<(usize, Vec<f64>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::MalformedRow {
                line: n + 1,
                msg: msg.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad("expected an integer"));
            match k {
                "num_nodes" => meta.num_nodes = num(v)?,
                "d_n" => meta.d_n = num(v)?,
                "d_e" => meta.d_e = num(v)?,
                "num_events" => {}
                "ids" => meta.ids = v.split(',').map(str::to_string).collect(),
                _ if k.starts_with("node.") => {
                    let idx = num(&k[5..])?;
                    let vals = v
                        .split(',')
                        .map(|x| x.parse::<f64>().map_err(|_| bad("bad node feature")))
                        .collect::<Result<Vec<_>>>()?;
                    nodes.push((idx, vals));
                }
                _ => return Err(bad("unknown key")),
            }
        }
        if !nodes.is_empty() {
            let mut feats = Array2::zeros((meta.num_nodes, meta.d_n));
            for (i, vals) in nodes {
                if i >= meta.num_nodes || vals.len() != meta.d_n {
                    return Err(Error::Config(format!("node feature row {i} does not fit metadata dims")));
                }
                feats.row_mut(i).assign(&ndarray::Array1::from(vals));
            }
            meta.node_features = Some(feats);
        }
        Ok(meta)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub has_header: bool,
    pub has_label: bool,
    /// Existing id map (dense index -> original id); otherwise ids are assigned by first appearance.
    pub id_map: Option<Vec<String>>,
    pub node_features: Option<Array2<f64>>,
}

/// Parses a JODIE-style event CSV.
pub fn ingest_csv(path: &Path, cfg: &IngestConfig) -> Result<EventStream> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text, cfg)
}

pub fn ingest_str(text: &str, cfg: &IngestConfig) -> Result<EventStream> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut id_map: Vec<String> = Vec::new();
    if let Some(map) = &cfg.id_map {
        for (i, s) in map.iter().enumerate() {
            ids.insert(s.clone(), i as NodeId);
        }
        id_map = map.clone();
    }
    let fixed = cfg.id_map.is_some();
    let mut events = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut d_e: Option<usize> = None;
    for (n, rec) in reader.records().enumerate() {
        let line = n + 1;
        if cfg.has_header && n == 0 {
            continue;
        }
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let bad = |msg: String| Error::MalformedRow { line, msg };
        let offset = if cfg.has_label { 4 } else { 3 };
        if rec.len() < offset {
            return Err(bad(format!("expected at least {offset} columns, found {}", rec.len())));
        }
        let width = rec.len() - offset;
        match d_e {
            None => d_e = Some(width),
            Some(w) if w != width => return Err(bad(format!("expected {w} feature columns, found {width}"))),
            _ => {}
        }
        let mut node = |raw: &str| -> Result<NodeId> {
            if let Some(&id) = ids.get(raw) {
                return Ok(id);
            }
            if fixed {
                return Err(bad(format!("node id {raw:?} missing from id map")));
            }
            let id = id_map.len() as NodeId;
            ids.insert(raw.to_string(), id);
            id_map.push(raw.to_string());
            Ok(id)
        };
        let src = node(&rec[0])?;
        let dst = node(&rec[1])?;
        let parse = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {what} {s:?}")));
        let t = parse(&rec[2], "timestamp")?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(bad(format!("timestamp {t} must be finite and non-negative")));
        }
        let label = if cfg.has_label { Some(parse(&rec[3], "label")?) } else { None };
        for f in rec.iter().skip(offset) {
            feats.push(parse(f, "feature")?);
        }
        events.push(Event { src, dst, t, label });
    }
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    let d_e = d_e.unwrap_or(0);
    let edge_features = Array2::from_shape_vec((events.len(), d_e), feats).expect("rows checked");
    let node_features = cfg
        .node_features
        .clone()
        .unwrap_or_else(|| Array2::zeros((id_map.len(), 0)));
    EventStream::new(events, edge_features, node_features, Some(id_map))
}

/// Half-open index ranges over the chronologically sorted stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train: std::ops::Range<usize>,
    pub val: std::ops::Range<usize>,
    pub test: std::ops::Range<usize>,
}

/// 70/15/15 chronological split; rounding favours the training range.
pub fn chronological_split(stream: &EventStream) -> Result<SplitIndex> {
    split_len(stream.len())
}

pub fn split_len(n: usize) -> Result<SplitIndex> {
    if n < 10 {
        return Err(Error::DegenerateSplit(n));
    }
    let train_end = (70 * n).div_ceil(100);
    let val_end = train_end + 15 * n / 100;
    Ok(SplitIndex {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..n,
    })
}

/// The L most recent interactions touching either query endpoint before the query time.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSubgraph {
    pub query: Query,
    /// Window length L.
    pub len: usize,
    /// Stream positions of history events, oldest first; at most `len` entries.
    pub history: Vec<usize>,
    /// Per-row pair counts within the window; 0 on padded rows.
    pub pair_frequency: Vec<u32>,
}

impl EgoSubgraph {
    /// Number of leading padded rows.
    pub fn pad_rows(&self) -> usize {
        self.len - self.history.len()
    }

    pub fn pad_mask(&self) -> Vec<bool> {
        let pad = self.pad_rows();
        (0..self.len).map(|i| i >= pad).collect()
    }

    /// Stream position of the event in window row `row`, if real.
    pub fn event_at(&self, row: usize) -> Option<usize> {
        row.checked_sub(self.pad_rows()).map(|k| self.history[k])
    }

    /// Window row holding stream position `event`, if present.
    pub fn row_of(&self, event: usize) -> Option<usize> {
        self.history
            .iter()
            .position(|&h| h == event)
            .map(|k| k + self.pad_rows())
    }
}

pub fn sample_ego(stream: &EventStream, query: &Query, l: usize) -> EgoSubgraph {
    let a = stream.incident_before(query.src, query.t);
    let b = if query.dst == query.src {
        &[][..]
    } else {
        stream.incident_before(query.dst, query.t)
    };
    // merge both lists from the back; positions are chronological, later positions win ties
    let mut picked = Vec::with_capacity(l);
    let (mut i, mut j) = (a.len(), b.len());
    while picked.len() < l && (i > 0 || j > 0) {
        let next = match (i.checked_sub(1).map(|k| a[k]), j.checked_sub(1).map(|k| b[k])) {
            (Some(x), Some(y)) if x == y => {
                i -= 1;
                j -= 1;
                x
            }
            (Some(x), Some(y)) if x > y => {
                i -= 1;
                x
            }
            (Some(x), None) => {
                i -= 1;
                x
            }
            (_, Some(y)) => {
                j -= 1;
                y
            }
            (None, None) => unreachable!(),
        };
        picked.push(next as usize);
    }
    picked.reverse();
    let pairs: Vec<_> = picked
        .iter()
        .map(|&p| {
            let e = &stream.events()[p];
            (e.src, e.dst)
        })
        .collect();
    let counts = pair_frequencies(&pairs);
    let mut pair_frequency = vec![0; l - picked.len()];
    pair_frequency.extend(counts);
    EgoSubgraph {
        query: *query,
        len: l,
        history: picked,
        pair_frequency,
    }
}

/// For each entry, the number of entries sharing its unordered node pair.
pub fn pair_frequencies(history: &[(NodeId, NodeId)]) -> Vec<u32> {
    let mut counts: HashMap<(NodeId, NodeId), u32> = HashMap::new();
    for &(a, b) in history {
        *counts.entry(pair_key(a, b)).or_insert(0) += 1;
    }
    history.iter().map(|&(a, b)| counts[&pair_key(a, b)]).collect()
}

/// Whether the query's pair occurred strictly earlier in the stream.
pub fn is_seen(stream: &EventStream, query: &Query) -> bool {
    stream.pair_seen_before(query.src, query.dst, query.t)
}
