//! Parameter storage, gradient buffers and the Adam optimizer.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::Rng;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Disjoint parameter groups of the min-max objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Feature encoders, mixer, edge scorer and frequency assignment.
    Encoder,
    /// Fusion and prediction head.
    Predictor,
    /// Conditional-independence discriminator.
    Discriminator,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Encoder, Group::Predictor, Group::Discriminator];

    pub fn is_model(self) -> bool {
        !matches!(self, Group::Discriminator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    groups: Vec<Group>,
    values: Vec<Array2<f64>>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            groups: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Array2<f64>) -> ParamId {
        self.names.push(name.into());
        self.groups.push(group);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Adds a tensor with entries drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        group: Group,
        shape: (usize, usize),
        fan_in: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound));
        self.add(name, group, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn group(&self, id: ParamId) -> Group {
        self.groups[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// SHA-256 over the raw bits of every tensor in `group`.
    pub fn group_hash(&self, group: Group) -> String {
        let mut h = Sha256::new();
        for (i, v) in self.values.iter().enumerate() {
            if self.groups[i] != group {
                continue;
            }
            h.update(self.names[i].as_bytes());
            for x in v.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-parameter gradient accumulator, indexed like the store.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuf {
    grads: Vec<Option<Array2<f64>>>,
}

impl GradBuf {
    pub fn zeros(len: usize) -> Self {
        GradBuf {
            grads: vec![None; len],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc += g,
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn merge(&mut self, other: &GradBuf) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn norm(&self, store: &ParamStore, group: Group) -> f64 {
        self.grads
            .iter()
            .enumerate()
            .filter(|(i, _)| store.group(ParamId(*i)) == group)
            .filter_map(|(_, g)| g.as_ref())
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Option<Array2<f64>>>,
    v: Vec<Option<Array2<f64>>>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![None; len],
            v: vec![None; len],
        }
    }

    /// Descends `grads` on every parameter whose group satisfies `select`.
    pub fn update(&mut self, store: &mut ParamStore, grads: &GradBuf, select: impl Fn(Group) -> bool) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in store.ids().collect::<Vec<_>>() {
            if !select(store.group(id)) {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let m = self.m[id.0].get_or_insert_with(|| Array2::zeros(g.raw_dim()));
            let v = self.v[id.0].get_or_insert_with(|| Array2::zeros(g.raw_dim()));
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

/// Affine map `x W + b` applied row-wise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), group, (fan_in, fan_out), fan_in, rng);
        let b = bias.then(|| store.add_uniform(format!("{name}.b"), group, (1, fan_out), fan_in, rng));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                tape.add_bias(y, b)
            }
            None => y,
        }
    }
}
