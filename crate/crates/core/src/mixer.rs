//! MLP-Mixer encoder over the L x d edge sequence of a window.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::params::{Group, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

pub const LN_EPS: f64 = 1e-6;

/// Inverted dropout; a no-op when `rng` is absent or `rate` is zero.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: Option<&'r mut Rng>,
}

impl Dropout<'_> {
    pub fn off() -> Dropout<'static> {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let mask = Array2::from_shape_simple_fn(tape.value(x).raw_dim(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        tape.mul_const(x, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNormParams {
            gain: store.add(format!("{name}.gain"), Group::Encoder, Array2::ones((1, d))),
            bias: store.add(format!("{name}.bias"), Group::Encoder, Array2::zeros((1, d))),
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, LN_EPS)
    }
}

/// One mixer layer. Token mixing left-multiplies by `w2` (h_tok x L) then
/// `w1` (L x h_tok); channel mixing right-multiplies by `w4` (d x h_ch) then
/// `w3` (h_ch x d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixerLayer {
    pub token_ln: LayerNormParams,
    pub w1: ParamId,
    pub w2: ParamId,
    pub channel_ln: LayerNormParams,
    pub w3: ParamId,
    pub w4: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixer {
    pub l: usize,
    pub d: usize,
    pub h_tok: usize,
    pub h_ch: usize,
    pub layers: Vec<MixerLayer>,
}

impl Mixer {
    pub fn new(store: &mut ParamStore, l: usize, d: usize, n_layers: usize, rng: &mut Rng) -> Self {
        let h_tok = (l / 2).max(4);
        let h_ch = 4 * d;
        let layers = (0..n_layers)
            .map(|i| {
                let name = format!("mixer{i}");
                MixerLayer {
                    token_ln: LayerNormParams::new(store, &format!("{name}.token_ln"), d),
                    w2: store.add_uniform(format!("{name}.w2"), Group::Encoder, (h_tok, l), l, rng),
                    w1: store.add_uniform(format!("{name}.w1"), Group::Encoder, (l, h_tok), h_tok, rng),
                    channel_ln: LayerNormParams::new(store, &format!("{name}.channel_ln"), d),
                    w4: store.add_uniform(format!("{name}.w4"), Group::Encoder, (d, h_ch), d, rng),
                    w3: store.add_uniform(format!("{name}.w3"), Group::Encoder, (h_ch, d), h_ch, rng),
                }
            })
            .collect();
        Mixer {
            l,
            d,
            h_tok,
            h_ch,
            layers,
        }
    }

    /// Scales input rows by `weights` (L x 1) and applies every mixer layer.
    pub fn encode(&self, tape: &mut Tape<'_>, z0: Var, weights: Var, drop: &mut Dropout<'_>) -> Var {
        let mut z = tape.scale_rows(z0, weights);
        for layer in &self.layers {
            let n = layer.token_ln.forward(tape, z);
            let w2 = tape.param(layer.w2);
            let h = tape.matmul(w2, n);
            let h = tape.gelu(h);
            let h = drop.apply(tape, h);
            let w1 = tape.param(layer.w1);
            let h = tape.matmul(w1, h);
            let zt = tape.add(z, h);

            let n = layer.channel_ln.forward(tape, zt);
            let w4 = tape.param(layer.w4);
            let h = tape.matmul(n, w4);
            let h = tape.gelu(h);
            let h = drop.apply(tape, h);
            let w3 = tape.param(layer.w3);
            let h = tape.matmul(h, w3);
            z = tape.add(zt, h);
        }
        z
    }
}

/// Mean of the rows flagged in `real`; the zero vector when none are.
pub fn mean_pool(tape: &mut Tape<'_>, h: Var, real: &[bool]) -> Var {
    tape.masked_mean_rows(h, real)
}
