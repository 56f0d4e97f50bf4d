//! The full self-explaining predictor: features, encoder, edge mask,
//! stability/transition split, fusion and prediction head.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bottleneck::EdgeScorer;
use crate::disentangler::{split_masks, Assigner, Discriminator};
use crate::ensembler::Ensembler;
use crate::error::{Error, Result};
use crate::event_store::{sample_ego, EventStream, Query};
use crate::features::{window_inputs, FeatureEncoder, WindowInputs};
use crate::mixer::{mean_pool, Dropout, Mixer};
use crate::params::ParamStore;
use crate::rng::substream;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    pub d_t: usize,
    pub d_r: usize,
    /// History window length.
    pub l: usize,
    pub n_layers: usize,
    pub dropout: f64,
    /// Concrete temperature.
    pub tau: f64,
    /// Straight-through hard masks during training.
    pub hard: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 172,
            d_t: 32,
            d_r: 32,
            l: 40,
            n_layers: 1,
            dropout: 0.3,
            tau: 1.0,
            hard: false,
        }
    }
}

/// How the edge mask is formed in a forward pass.
pub enum MaskMode<'a> {
    /// Relaxed Bernoulli sample driven by one logistic-noise value per row.
    Sample { noise: &'a [f64] },
    /// The inclusion probabilities themselves (deterministic).
    Expected,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub z0: Var,
    pub p: Var,
    pub m: Var,
    pub p_f: Var,
    pub w_s: Var,
    pub w_t: Var,
    pub h_s: Var,
    pub h_t: Var,
    pub h_e: Var,
    pub y_hat: Var,
}

/// Plain values of a deterministic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inspection {
    pub y_hat: f64,
    pub p: Vec<f64>,
    pub p_f: Vec<f64>,
    pub w_s: Vec<f64>,
    pub w_t: Vec<f64>,
    pub h_s: Vec<f64>,
    pub h_t: Vec<f64>,
    pub h_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub d_n: usize,
    pub d_e: usize,
    pub store: ParamStore,
    pub features: FeatureEncoder,
    pub mixer: Mixer,
    pub scorer: EdgeScorer,
    pub assigner: Assigner,
    pub ensembler: Ensembler,
    pub disc: Discriminator,
}

fn column(v: &Array2<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl Model {
    pub fn new(config: ModelConfig, d_n: usize, d_e: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "init", &[]);
        let mut store = ParamStore::new();
        let d = config.d;
        let features = FeatureEncoder::new(&mut store, [d_n, d_e, config.d_t, config.d_r, d], &mut rng);
        let mixer = Mixer::new(&mut store, config.l, d, config.n_layers, &mut rng);
        let scorer = EdgeScorer::new(&mut store, d, &mut rng);
        let assigner = Assigner::new(&mut store, &mut rng);
        let ensembler = Ensembler::new(&mut store, d, &mut rng);
        let disc = Discriminator::new(&mut store, d, &mut rng);
        Model {
            config,
            d_n,
            d_e,
            store,
            features,
            mixer,
            scorer,
            assigner,
            ensembler,
            disc,
        }
    }

    /// Raw inputs of the window preceding `query`.
    pub fn inputs(&self, stream: &EventStream, query: &Query) -> WindowInputs {
        window_inputs(stream, &sample_ego(stream, query, self.config.l))
    }

    pub fn check_stream(&self, stream: &EventStream) -> Result<()> {
        for (block, expected, found) in [("node features", self.d_n, stream.d_n()), ("edge features", self.d_e, stream.d_e())] {
            if expected != found {
                return Err(Error::DimensionMismatch { block, expected, found });
            }
        }
        Ok(())
    }

    /// Records one forward pass on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        inputs: &WindowInputs,
        mode: MaskMode<'_>,
        drop: &mut Dropout<'_>,
    ) -> Result<Forward> {
        if inputs.len() != self.config.l {
            return Err(Error::DimensionMismatch {
                block: "window length",
                expected: self.config.l,
                found: inputs.len(),
            });
        }
        let z0 = self.features.assemble(tape, inputs)?;
        if tape.value(z0).iter().any(|v| !v.is_finite()) {
            return Err(Error::NaN("encoder input"));
        }
        let real = &inputs.real;
        let ones = Array2::from_shape_fn((inputs.len(), 1), |(i, _)| f64::from(u8::from(real[i])));
        let ones = tape.constant(ones);
        let h = self.mixer.encode(tape, z0, ones, drop);
        let p = self.scorer.probabilities(tape, h, real);
        let m = match mode {
            MaskMode::Sample { noise } => tape.concrete(p, noise, self.config.tau, real, self.config.hard),
            MaskMode::Expected => tape.fill_rows(p, real, 0.0),
        };
        let p_f = self.assigner.soft_assign(tape, &inputs.freq, real);
        let (w_s, w_t) = split_masks(tape, m, p_f);
        let hs_rows = self.mixer.encode(tape, z0, w_s, drop);
        let h_s = mean_pool(tape, hs_rows, real);
        let ht_rows = self.mixer.encode(tape, z0, w_t, drop);
        let h_t = mean_pool(tape, ht_rows, real);
        let h_e = self.ensembler.fuse(tape, h_s, h_t);
        let y_hat = self.ensembler.predict(tape, h_e, drop);
        Ok(Forward {
            z0,
            p,
            m,
            p_f,
            w_s,
            w_t,
            h_s,
            h_t,
            h_e,
            y_hat,
        })
    }

    /// Deterministic forward (expected mask, no dropout) returning plain values.
    pub fn inspect(&self, inputs: &WindowInputs) -> Result<Inspection> {
        let mut tape = Tape::new(&self.store);
        let f = self.forward(&mut tape, inputs, MaskMode::Expected, &mut Dropout::off())?;
        Ok(Inspection {
            y_hat: tape.scalar(f.y_hat),
            p: column(tape.value(f.p)),
            p_f: column(tape.value(f.p_f)),
            w_s: column(tape.value(f.w_s)),
            w_t: column(tape.value(f.w_t)),
            h_s: column(tape.value(f.h_s)),
            h_t: column(tape.value(f.h_t)),
            h_e: column(tape.value(f.h_e)),
        })
    }

    /// Deterministic interaction probability.
    pub fn predict(&self, inputs: &WindowInputs) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let f = self.forward(&mut tape, inputs, MaskMode::Expected, &mut Dropout::off())?;
        Ok(tape.scalar(f.y_hat))
    }

    pub fn predict_query(&self, stream: &EventStream, query: &Query) -> Result<f64> {
        self.predict(&self.inputs(stream, query))
    }
}
