//! Per-row input features of a history window and their projection to `Z0`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_store::{EgoSubgraph, EventStream};
use crate::params::{Group, Linear, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

/// Raw, parameter-free inputs of one window, ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInputs {
    /// Counterpart-node features, L x d_N.
    pub node: Array2<f64>,
    /// Edge features, L x d_E.
    pub edge: Array2<f64>,
    /// Query time minus event time; 0 on padded rows.
    pub dt: Vec<f64>,
    /// `log1p` of the elapsed time since each query endpoint was last active.
    pub rel: [f64; 2],
    /// Rows that hold a real (unpadded, not removed) event.
    pub real: Vec<bool>,
    /// Pair counts inside the window; 0 on padded rows.
    pub freq: Vec<u32>,
}

impl WindowInputs {
    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    pub fn num_real(&self) -> usize {
        self.real.iter().filter(|&&r| r).count()
    }

    /// The same window with every row outside `keep` treated as padding.
    pub fn restricted(&self, keep: &[bool]) -> WindowInputs {
        let mut out = self.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k && out.real[i] {
                out.real[i] = false;
                out.node.row_mut(i).fill(0.0);
                out.edge.row_mut(i).fill(0.0);
                out.dt[i] = 0.0;
            }
        }
        out
    }
}

/// Elapsed time since `node` was last active before `t`; `t` itself if never.
pub fn elapsed_since_active(stream: &EventStream, node: u32, t: f64) -> f64 {
    stream.last_activity(node, t).map_or(t, |last| t - last)
}

/// Gathers the raw per-row inputs of an ego window.
///
/// The node block holds the features of the history edge's endpoint outside
/// the query pair. Rows whose endpoints both belong to the query pair get a
/// zero node block, which makes pair recurrence visible to the encoder.
pub fn window_inputs(stream: &EventStream, ego: &EgoSubgraph) -> WindowInputs {
    let l = ego.len;
    let q = ego.query;
    let mut node = Array2::zeros((l, stream.d_n()));
    let mut edge = Array2::zeros((l, stream.d_e()));
    let mut dt = vec![0.0; l];
    let real = ego.pad_mask();
    let pad = ego.pad_rows();
    for (k, &pos) in ego.history.iter().enumerate() {
        let row = pad + k;
        let e = &stream.events()[pos];
        let in_query = |x: u32| x == q.src || x == q.dst;
        let counterpart = if !in_query(e.src) {
            Some(e.src)
        } else if !in_query(e.dst) {
            Some(e.dst)
        } else {
            None
        };
        if let Some(c) = counterpart {
            node.row_mut(row).assign(&stream.node_features().row(c as usize));
        }
        edge.row_mut(row).assign(&stream.edge_features().row(pos));
        dt[row] = q.t - e.t;
    }
    let rel = [
        elapsed_since_active(stream, q.src, q.t).ln_1p(),
        elapsed_since_active(stream, q.dst, q.t).ln_1p(),
    ];
    WindowInputs {
        node,
        edge,
        dt,
        rel,
        real,
        freq: ego.pair_frequency.clone(),
    }
}

/// Geometric initial frequencies `w_j = 10^(-4 (j - 1) / d_T)`.
pub fn initial_time_weights(d_t: usize) -> Array2<f64> {
    Array2::from_shape_fn((1, d_t), |(_, j)| 10f64.powf(-4.0 * j as f64 / d_t as f64))
}

/// `out[i, j] = cos(w_j * dt_i)`.
pub fn time_encode(w: &[f64], dt: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((dt.len(), w.len()), |(i, j)| (w[j] * dt[i]).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub d_n: usize,
    pub d_e: usize,
    pub d_t: usize,
    pub d_r: usize,
    pub time_w: ParamId,
    pub rel: Linear,
    pub proj: Linear,
}

impl FeatureEncoder {
    pub fn new(store: &mut ParamStore, dims: [usize; 5], rng: &mut Rng) -> Self {
        let [d_n, d_e, d_t, d_r, d] = dims;
        let time_w = store.add("time.w", Group::Encoder, initial_time_weights(d_t));
        let rel = Linear::new(store, "reltime", Group::Encoder, 2, d_r, true, rng);
        let proj = Linear::new(store, "input_proj", Group::Encoder, d_n + d_e + d_t + d_r, d, true, rng);
        FeatureEncoder {
            d_n,
            d_e,
            d_t,
            d_r,
            time_w,
            rel,
            proj,
        }
    }

    pub fn check_dims(&self, inputs: &WindowInputs) -> Result<()> {
        if inputs.node.ncols() != self.d_n {
            return Err(Error::DimensionMismatch {
                block: "node features",
                expected: self.d_n,
                found: inputs.node.ncols(),
            });
        }
        if inputs.edge.ncols() != self.d_e {
            return Err(Error::DimensionMismatch {
                block: "edge features",
                expected: self.d_e,
                found: inputs.edge.ncols(),
            });
        }
        Ok(())
    }

    /// Relative-time block: the mapped endpoint recencies, one identical row per window row.
    pub fn relative_time(&self, tape: &mut Tape<'_>, inputs: &WindowInputs) -> Var {
        let x = tape.constant(Array2::from_shape_vec((1, 2), inputs.rel.to_vec()).expect("1 x 2"));
        let y = self.rel.forward(tape, x);
        let y = tape.gelu(y);
        tape.broadcast_rows(y, inputs.len())
    }

    /// `Z0`: projected concatenation of node, edge, time and relative-time blocks.
    pub fn assemble(&self, tape: &mut Tape<'_>, inputs: &WindowInputs) -> Result<Var> {
        self.check_dims(inputs)?;
        let xn = tape.constant(inputs.node.clone());
        let xe = tape.constant(inputs.edge.clone());
        let w = tape.param(self.time_w);
        let xt = tape.time_cos(w, &inputs.dt);
        let xr = self.relative_time(tape, inputs);
        let x = tape.concat_cols(&[xn, xe, xt, xr]);
        let z = self.proj.forward(tape, x);
        Ok(tape.fill_rows(z, &inputs.real, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_store::{sample_ego, Event, Query};
    use crate::rng::substream;
    use rand::Rng as _;

    fn small_stream() -> EventStream {
        let edges = [(0, 1, 1.0), (0, 2, 2.0), (3, 4, 3.0), (1, 0, 4.5)];
        let events: Vec<Event> = edges
            .iter()
            .map(|&(s, d, t)| Event {
                src: s,
                dst: d,
                t,
                label: None,
            })
            .collect();
        let ef = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64);
        let nf = Array2::from_shape_fn((6, 3), |(i, j)| 1.0 + (i * 3 + j) as f64);
        EventStream::new(events, ef, nf, None).unwrap()
    }

    #[test]
    fn time_encoding_cases() {
        let w = [0.3, 1.0, 2.5];
        assert!(time_encode(&w, &[0.0]).iter().all(|&v| v == 1.0));
        assert!(time_encode(&[0.0; 4], &[1.0, 7.5, 100.0]).iter().all(|&v| v == 1.0));
        let mut rng = substream(1, "te", &[]);
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dt: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
        let got = time_encode(&w, &dt);
        for i in 0..5 {
            for j in 0..8 {
                let want = f64::cos(w[j] * dt[i]);
                assert!((got[[i, j]] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn geometric_initialisation() {
        let w = initial_time_weights(4);
        assert_eq!(w[[0, 0]], 1.0);
        assert!((w[[0, 1]] - 0.1).abs() < 1e-15);
        assert!((w[[0, 3]] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn elapsed_time_matches_linear_scan() {
        let s = small_stream();
        for node in 0..6u32 {
            for &t in &[0.5, 1.0, 2.5, 4.5, 9.0] {
                let scan = s
                    .events()
                    .iter()
                    .filter(|e| (e.src == node || e.dst == node) && e.t < t)
                    .map(|e| e.t)
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
                let want = scan.map_or(t, |last| t - last);
                assert_eq!(elapsed_since_active(&s, node, t), want);
            }
        }
        assert_eq!(elapsed_since_active(&s, 5, 3.0), 3.0);
    }

    #[test]
    fn window_inputs_pick_counterparts() {
        let s = small_stream();
        let ego = sample_ego(&s, &Query { src: 0, dst: 1, t: 5.0 }, 4);
        let w = window_inputs(&s, &ego);
        // rows: pad, (0,1,1.0), (0,2,2.0), (1,0,4.5)
        assert_eq!(w.real, vec![false, true, true, true]);
        assert!(w.node.row(0).iter().all(|&v| v == 0.0));
        assert!(w.node.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(w.node.row(2), s.node_features().row(2));
        assert!(w.node.row(3).iter().all(|&v| v == 0.0));
        assert_eq!(w.dt, vec![0.0, 4.0, 3.0, 0.5]);
        assert_eq!(w.freq, vec![0, 2, 1, 2]);
        assert_eq!(w.rel, [0.5f64.ln_1p(), 0.5f64.ln_1p()]);
    }

    #[test]
    fn padded_rows_are_zero_and_projection_matches_oracle() {
        let s = small_stream();
        let mut rng = substream(4, "fe", &[]);
        let mut store = ParamStore::new();
        let fe = FeatureEncoder::new(&mut store, [3, 2, 4, 3, 16], &mut rng);
        let ego = sample_ego(&s, &Query { src: 0, dst: 5, t: 4.0 }, 6);
        let w = window_inputs(&s, &ego);
        let mut tape = Tape::new(&store);
        let z = fe.assemble(&mut tape, &w).unwrap();
        let z = tape.value(z).clone();

        let tw = store.get(fe.time_w).row(0).to_vec();
        let rel_w = store.get(fe.rel.w);
        let rel_b = store.get(fe.rel.b.unwrap());
        let pw = store.get(fe.proj.w);
        let pb = store.get(fe.proj.b.unwrap());
        for i in 0..6 {
            if !w.real[i] {
                assert!(z.row(i).iter().all(|&v| v == 0.0));
                continue;
            }
            let mut x = Vec::new();
            x.extend(w.node.row(i).iter().copied());
            x.extend(w.edge.row(i).iter().copied());
            x.extend(tw.iter().map(|wj| (wj * w.dt[i]).cos()));
            for j in 0..3 {
                let a = w.rel[0] * rel_w[[0, j]] + w.rel[1] * rel_w[[1, j]] + rel_b[[0, j]];
                x.push(crate::tape::gelu(a));
            }
            for c in 0..16 {
                let mut acc = pb[[0, c]];
                for (k, xv) in x.iter().enumerate() {
                    acc += xv * pw[[k, c]];
                }
                assert!((acc - z[[i, c]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_mismatch_names_block() {
        let s = small_stream();
        let mut rng = substream(4, "fe", &[]);
        let mut store = ParamStore::new();
        let fe = FeatureEncoder::new(&mut store, [3, 5, 4, 3, 8], &mut rng);
        let ego = sample_ego(&s, &Query { src: 0, dst: 5, t: 4.0 }, 6);
        let mut tape = Tape::new(&store);
        let err = fe.assemble(&mut tape, &window_inputs(&s, &ego)).unwrap_err();
        assert!(err.to_string().contains("edge features"), "{err}");
    }

    #[test]
    fn all_zero_inputs_with_zero_bias_give_zero() {
        let mut rng = substream(4, "fe", &[]);
        let mut store = ParamStore::new();
        let fe = FeatureEncoder::new(&mut store, [2, 2, 2, 2, 4], &mut rng);
        store.get_mut(fe.proj.b.unwrap()).fill(0.0);
        store.get_mut(fe.time_w).fill(0.0);
        store.get_mut(fe.rel.w).fill(0.0);
        store.get_mut(fe.rel.b.unwrap()).fill(0.0);
        // cos(0) = 1 on the time block, so zero its projection rows
        let pw = store.get_mut(fe.proj.w);
        pw.slice_mut(ndarray::s![4..6, ..]).fill(0.0);
        let inputs = WindowInputs {
            node: Array2::zeros((3, 2)),
            edge: Array2::zeros((3, 2)),
            dt: vec![0.0; 3],
            rel: [0.0, 0.0],
            real: vec![true; 3],
            freq: vec![1; 3],
        };
        let mut tape = Tape::new(&store);
        let z = fe.assemble(&mut tape, &inputs).unwrap();
        assert!(tape.value(z).iter().all(|&v| v == 0.0));
    }
}
