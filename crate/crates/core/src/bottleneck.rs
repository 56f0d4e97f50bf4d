//! Stochastic edge mask: inclusion probabilities, relaxed Bernoulli sampling,
//! the Bernoulli prior with its rate schedule, and top-k explanation extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Group, Linear, ParamStore};
use crate::rng::{logistic_noise, Rng};
use crate::tape::{bernoulli_kl, logit, sigmoid, Tape, Var, EDGE_CLAMP};

/// Two-layer scorer `h_e -> logit(p_e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScorer {
    pub hidden: Linear,
    pub out: Linear,
}

impl EdgeScorer {
    pub fn new(store: &mut ParamStore, d: usize, rng: &mut Rng) -> Self {
        EdgeScorer {
            hidden: Linear::new(store, "scorer.hidden", Group::Encoder, d, d, true, rng),
            out: Linear::new(store, "scorer.out", Group::Encoder, d, 1, true, rng),
        }
    }

    /// Inclusion probabilities (L x 1); padded rows are set to [`EDGE_CLAMP`].
    pub fn probabilities(&self, tape: &mut Tape<'_>, h: Var, real: &[bool]) -> Var {
        let a = self.hidden.forward(tape, h);
        let a = tape.relu(a);
        let s = self.out.forward(tape, a);
        let p = tape.sigmoid(s);
        tape.fill_rows(p, real, EDGE_CLAMP)
    }
}

/// A sampled edge mask together with the probabilities it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub p: Vec<f64>,
    pub m_soft: Vec<f64>,
    pub m_hard: Vec<bool>,
    pub tau: f64,
}

/// Draws one relaxed Bernoulli mask outside of any tape.
pub fn sample_mask(p: &[f64], real: &[bool], tau: f64, rng: &mut Rng) -> EdgeMask {
    let mut m_soft = vec![0.0; p.len()];
    for i in 0..p.len() {
        let g = logistic_noise(rng);
        if real[i] {
            let pc = p[i].clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP);
            m_soft[i] = sigmoid((logit(pc) + g) / tau);
        }
    }
    let m_hard = m_soft.iter().map(|&m| m > 0.5).collect();
    EdgeMask {
        p: p.to_vec(),
        m_soft,
        m_hard,
        tau,
    }
}

/// Summed Bernoulli KL of the mask distribution against the prior `Bern(r)`.
pub fn compression_loss(p: &[f64], real: &[bool], r: f64) -> Result<f64> {
    check_rate(r)?;
    Ok(p.iter()
        .zip(real)
        .filter(|(_, &m)| m)
        .map(|(&pe, _)| bernoulli_kl(pe, r))
        .sum())
}

pub fn check_rate(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::DegeneratePrior(r))
    }
}

/// Step-decayed prior rate: `max(target, init - step * floor(epoch / every))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSchedule {
    pub r_init: f64,
    pub r_target: f64,
    pub step: f64,
    pub every: usize,
}

impl Default for PriorSchedule {
    fn default() -> Self {
        PriorSchedule {
            r_init: 0.9,
            r_target: 0.7,
            step: 0.1,
            every: 10,
        }
    }
}

impl PriorSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        let decayed = self.r_init - self.step * (epoch / self.every) as f64;
        // snap to the decimal grid so 0.9 - 0.1 reads back as 0.8
        let decayed = (decayed * 1e12).round() / 1e12;
        decayed.max(self.r_target)
    }
}

/// Number of rows kept at sparsity `s`: `round(s * real)`, at least one.
pub fn explanation_size(sparsity: f64, num_real: usize) -> usize {
    if num_real == 0 {
        return 0;
    }
    ((sparsity * num_real as f64).round() as usize).clamp(1, num_real)
}

/// Real rows ordered by decreasing `p`; ties go to the later (more recent) row.
pub fn rank_rows(p: &[f64], real: &[bool]) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..p.len()).filter(|&i| real[i]).collect();
    rows.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(b.cmp(&a)));
    rows
}

/// Marks the top `round(sparsity * real)` rows by `p` (minimum one).
pub fn extract_explanation(p: &[f64], real: &[bool], sparsity: f64) -> Vec<bool> {
    let ranked = rank_rows(p, real);
    let k = explanation_size(sparsity, ranked.len());
    let mut keep = vec![false; p.len()];
    for &i in &ranked[..k] {
        keep[i] = true;
    }
    keep
}
