//! Fusion of the two pattern embeddings and the link-prediction head.

use serde::{Deserialize, Serialize};

use crate::mixer::Dropout;
use crate::params::{Group, Linear, ParamStore};
use crate::rng::Rng;
use crate::tape::{bce, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensembler {
    pub fuse: Linear,
    pub hidden: Linear,
    pub out: Linear,
}

impl Ensembler {
    pub fn new(store: &mut ParamStore, d: usize, rng: &mut Rng) -> Self {
        let g = Group::Predictor;
        Ensembler {
            fuse: Linear::new(store, "fuse", g, 2 * d, d, true, rng),
            hidden: Linear::new(store, "head.hidden", g, d, d, true, rng),
            out: Linear::new(store, "head.out", g, d, 1, true, rng),
        }
    }

    /// `h_E` from the ordered concatenation `[h_S, h_T]`.
    pub fn fuse(&self, tape: &mut Tape<'_>, hs: Var, ht: Var) -> Var {
        let x = tape.concat_cols(&[hs, ht]);
        self.fuse.forward(tape, x)
    }

    /// Interaction probability from `h_E`.
    pub fn predict(&self, tape: &mut Tape<'_>, he: Var, drop: &mut Dropout<'_>) -> Var {
        let a = self.hidden.forward(tape, he);
        let a = tape.relu(a);
        let a = drop.apply(tape, a);
        let s = self.out.forward(tape, a);
        tape.sigmoid(s)
    }
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn prediction_loss(y_hat: f64, y: f64) -> f64 {
    bce(y_hat, y)
}
