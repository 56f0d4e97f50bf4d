//! Frequency-guided split of the explanation mask into stability and
//! transition weights, and the adversarial conditional-independence term.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::params::{Group, Linear, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

pub const ASSIGN_HIDDEN: usize = 8;

/// `log1p` of the raw counts, z-scored over real rows (0 when the spread is 0).
pub fn standardize_frequency(freq: &[u32], real: &[bool]) -> Vec<f64> {
    let logs: Vec<f64> = freq.iter().map(|&f| f64::from(f).ln_1p()).collect();
    let n = real.iter().filter(|&&r| r).count();
    let mut out = vec![0.0; freq.len()];
    if n == 0 {
        return out;
    }
    let mean = logs.iter().zip(real).filter(|(_, &r)| r).map(|(v, _)| v).sum::<f64>() / n as f64;
    let var = logs
        .iter()
        .zip(real)
        .filter(|(_, &r)| r)
        .map(|(v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if std > 0.0 {
        for i in 0..freq.len() {
            if real[i] {
                out[i] = (logs[i] - mean) / std;
            }
        }
    }
    out
}

/// Maps the standardized frequency of each row to `p_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assigner {
    pub hidden: Linear,
    pub out: Linear,
}

impl Assigner {
    pub fn new(store: &mut ParamStore, rng: &mut Rng) -> Self {
        Assigner {
            hidden: Linear::new(store, "assign.hidden", Group::Encoder, 1, ASSIGN_HIDDEN, true, rng),
            out: Linear::new(store, "assign.out", Group::Encoder, ASSIGN_HIDDEN, 1, true, rng),
        }
    }

    /// `p_f` (L x 1); padded rows are set to 0.5.
    pub fn soft_assign(&self, tape: &mut Tape<'_>, freq: &[u32], real: &[bool]) -> Var {
        let z = standardize_frequency(freq, real);
        let x = tape.constant(Array2::from_shape_vec((z.len(), 1), z).expect("column"));
        let a = self.hidden.forward(tape, x);
        let a = tape.relu(a);
        let s = self.out.forward(tape, a);
        let p = tape.sigmoid(s);
        tape.fill_rows(p, real, 0.5)
    }
}

/// Stability and transition branch weights `(p_f * m, m - p_f * m)`.
///
/// Both weights come from subtractions against `m`, which makes their
/// floating-point sum exactly `m` (Sterbenz's lemma covers both orderings).
pub fn split_masks(tape: &mut Tape<'_>, m: Var, p_f: Var) -> (Var, Var) {
    let share = tape.mul(p_f, m);
    let wt = tape.sub(m, share);
    let ws = tape.sub(m, wt);
    (ws, wt)
}

/// Plain-value version of [`split_masks`].
pub fn split_values(m: f64, p_f: f64) -> (f64, f64) {
    let wt = m - p_f * m;
    (m - wt, wt)
}

/// Scores `(h_S, h_T, Y)` triples; two ReLU hidden layers of width d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, d: usize, rng: &mut Rng) -> Self {
        let g = Group::Discriminator;
        Discriminator {
            l1: Linear::new(store, "disc.l1", g, 2 * d + 1, d, true, rng),
            l2: Linear::new(store, "disc.l2", g, d, d, true, rng),
            l3: Linear::new(store, "disc.l3", g, d, 1, true, rng),
        }
    }

    /// Probability (n x 1) that each row `[h_S, h_T, y]` is a true triple.
    pub fn score(&self, tape: &mut Tape<'_>, hs: Var, ht: Var, y: Var) -> Var {
        let x = tape.concat_cols(&[hs, ht, y]);
        let a = self.l1.forward(tape, x);
        let a = tape.relu(a);
        let a = self.l2.forward(tape, a);
        let a = tape.relu(a);
        let s = self.l3.forward(tape, a);
        tape.sigmoid(s)
    }
}

/// Same-label resampling of the transition branch.
///
/// Within every label class of size at least two the partner is a uniformly
/// random cyclic permutation (Sattolo), hence a derangement. Members of
/// singleton classes get no negative and are counted in `skipped`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resampling {
    /// `(donor, partner)`: negative triple `(h_S[donor], h_T[partner], y[donor])`.
    pub pairs: Vec<(usize, usize)>,
    pub skipped: usize,
}

pub fn resample_negatives(labels: &[f64], rng: &mut Rng) -> Resampling {
    let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        match classes.iter_mut().find(|(c, _)| *c == y) {
            Some((_, members)) => members.push(i),
            None => classes.push((y, vec![i])),
        }
    }
    let mut pairs = Vec::with_capacity(labels.len());
    let mut skipped = 0;
    for (_, members) in classes {
        if members.len() < 2 {
            skipped += members.len();
            continue;
        }
        let mut perm = members.clone();
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..i);
            perm.swap(i, j);
        }
        pairs.extend(members.iter().copied().zip(perm));
    }
    pairs.sort_unstable();
    Resampling { pairs, skipped }
}

/// Batch discriminator objective built on its own tape.
pub struct DisentangleLoss {
    /// Binary cross-entropy of the discriminator (minimized over its parameters).
    pub for_discriminator: f64,
    /// Its negation, the value entering the model objective.
    pub for_encoder: f64,
    pub skipped: usize,
    /// Gradient of `for_encoder` with respect to each row of `h_S` and `h_T`.
    pub grad_hs: Array2<f64>,
    pub grad_ht: Array2<f64>,
    /// Gradient of `for_discriminator` with respect to the discriminator parameters.
    pub disc_grads: crate::params::GradBuf,
}

pub fn disentangle_loss(
    store: &ParamStore,
    disc: &Discriminator,
    hs: &Array2<f64>,
    ht: &Array2<f64>,
    labels: &[f64],
    rng: &mut Rng,
) -> DisentangleLoss {
    let b = labels.len();
    let resampling = if b >= 2 {
        resample_negatives(labels, rng)
    } else {
        Resampling {
            pairs: Vec::new(),
            skipped: b,
        }
    };
    if resampling.pairs.is_empty() {
        return DisentangleLoss {
            for_discriminator: 0.0,
            for_encoder: 0.0,
            skipped: resampling.skipped,
            grad_hs: Array2::zeros(hs.raw_dim()),
            grad_ht: Array2::zeros(ht.raw_dim()),
            disc_grads: crate::params::GradBuf::zeros(store.len()),
        };
    }
    let mut tape = Tape::new(store);
    let hs_v = tape.constant(hs.clone());
    let ht_v = tape.constant(ht.clone());
    let y = tape.constant(Array2::from_shape_vec((b, 1), labels.to_vec()).expect("column"));
    let pos = disc.score(&mut tape, hs_v, ht_v, y);

    let donors: Vec<usize> = resampling.pairs.iter().map(|p| p.0).collect();
    let partners: Vec<usize> = resampling.pairs.iter().map(|p| p.1).collect();
    let hs_n = tape.select_rows(hs_v, &donors);
    let ht_n = tape.select_rows(ht_v, &partners);
    let y_n = tape.select_rows(y, &donors);
    let neg = disc.score(&mut tape, hs_n, ht_n, y_n);

    let n_neg = donors.len();
    let pos_loss = tape.weighted_bce(pos, &vec![1.0; b], &vec![1.0 / b as f64; b]);
    let neg_loss = tape.weighted_bce(neg, &vec![0.0; n_neg], &vec![1.0 / n_neg as f64; n_neg]);
    let bce = tape.add(pos_loss, neg_loss);
    let value = tape.scalar(bce);
    let grads = tape.backward(&[(bce, Array2::ones((1, 1)))]);
    let disc_grads = tape.param_grads(&grads);
    let neg_of = |g: Option<&Array2<f64>>| g.map_or_else(|| Array2::zeros(hs.raw_dim()), |g| -g);
    DisentangleLoss {
        for_discriminator: value,
        for_encoder: -value,
        skipped: resampling.skipped,
        grad_hs: neg_of(grads.get(hs_v)),
        grad_ht: neg_of(grads.get(ht_v)),
        disc_grads,
    }
}
