//! Named parameter registry shared by the generator and discriminator.
//!
//! Parameters live here as plain `f32` buffers. A forward pass binds them to
//! leaf tensors with [`ParamStore::bind`], choosing which leaves track
//! gradients; frozen entries are never bound as trainable.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::modulation::Scheme;
use crate::tensor::{numel, Tensor};

pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Net {
    Gen,
    Disc,
}

impl Net {
    pub fn prefix(self) -> &'static str {
        match self {
            Net::Gen => "gen",
            Net::Disc => "disc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    DenseWeight,
    Bias,
    /// AdaFM/FS scale.
    Gamma,
    /// AdaFM/FS shift.
    Beta,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub frozen: bool,
    pub net: Net,
    /// 1-based group index; `None` for layers outside any group (FC, mapping).
    pub group: Option<usize>,
    pub kind: ParamKind,
    /// Part of an FC layer that is never transferred between domains.
    pub head_fc: bool,
}

impl ParamEntry {
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_modulation(&self) -> bool {
        matches!(self.kind, ParamKind::Gamma | ParamKind::Beta)
    }
}

/// Modulation parameters attached to a filter bank weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulator {
    pub scheme: Scheme,
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, ParamId>,
    modulators: BTreeMap<ParamId, Modulator>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: ParamEntry) -> Result<ParamId> {
        if self.index.contains_key(&entry.name) {
            return Err(Error::Config(format!("duplicate parameter name {}", entry.name)));
        }
        debug_assert_eq!(numel(&entry.shape), entry.data.len());
        let id = self.entries.len();
        self.index.insert(entry.name.clone(), id);
        self.entries.push(entry);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry {
        &mut self.entries[id]
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.id(name).map(|i| &self.entries[i])
    }

    pub fn modulator(&self, weight: ParamId) -> Option<&Modulator> {
        self.modulators.get(&weight)
    }

    pub fn modulators(&self) -> impl Iterator<Item = (ParamId, &Modulator)> {
        self.modulators.iter().map(|(k, v)| (*k, v))
    }

    /// Attaches identity-initialized modulation parameters to a conv weight.
    pub fn attach_modulation(&mut self, weight: ParamId, scheme: Scheme) -> Result<Modulator> {
        let w = self.entries[weight].clone();
        if w.kind != ParamKind::ConvWeight {
            return Err(Error::Partition(format!("{} is not a convolution weight", w.name)));
        }
        let (o, i) = (w.shape[0], w.shape[1]);
        let (shape, gname, bname) = match scheme {
            Scheme::AdaFm => (vec![o, i], "gamma", "beta"),
            Scheme::Fs => (vec![o], "gamma_hat", "beta_hat"),
            other => return Err(Error::Partition(format!("cannot attach {other:?} parameters to a frozen bank"))),
        };
        let base = w.name.trim_end_matches("/W");
        let mk = |suffix: &str, value: f32, kind| ParamEntry {
            name: format!("{base}/{suffix}"),
            data: vec![value; numel(&shape)],
            shape: shape.clone(),
            frozen: false,
            net: w.net,
            group: w.group,
            kind,
            head_fc: false,
        };
        let gamma = self.insert(mk(gname, 1.0, ParamKind::Gamma))?;
        let beta = self.insert(mk(bname, 0.0, ParamKind::Beta))?;
        let m = Modulator { scheme, gamma, beta };
        self.modulators.insert(weight, m);
        Ok(m)
    }

    /// Binds every entry to a fresh leaf tensor. `trainable` decides which
    /// leaves track gradients; frozen entries never do.
    pub fn bind(&self, trainable: impl Fn(ParamId, &ParamEntry) -> bool) -> Bound<'_> {
        let tensors = self
            .entries
            .iter()
            .enumerate()
            .map(|(id, e)| {
                let t = Tensor::from_vec(e.data.clone(), &e.shape).expect("registry shapes are valid");
                t.into_leaf(!e.frozen && trainable(id, e))
            })
            .collect();
        Bound { store: self, tensors }
    }

    /// Binds with no gradient tracking.
    pub fn bind_const(&self) -> Bound<'_> {
        self.bind(|_, _| false)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(ParamEntry::numel).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.frozen).map(ParamEntry::numel).sum()
    }

    pub fn modulation_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_modulation()).map(ParamEntry::numel).sum()
    }
}

/// Parameters bound to leaf tensors for one forward/backward pass.
pub struct Bound<'a> {
    store: &'a ParamStore,
    tensors: Vec<Tensor>,
}

impl<'a> Bound<'a> {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id]
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    /// `(id, leaf)` for every leaf that tracks gradients.
    pub fn trainable(&self) -> Vec<(ParamId, Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .filter(|(_, t)| t.requires_grad())
            .map(|(i, t)| (i, t.clone()))
            .collect()
    }
}

/// Appends freshly initialized parameters under a name prefix.
pub struct Builder<'s, R: Rng> {
    pub store: &'s mut ParamStore,
    pub rng: &'s mut R,
    pub net: Net,
    pub group: Option<usize>,
}

impl<'s, R: Rng> Builder<'s, R> {
    fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<f32>, kind: ParamKind, head_fc: bool) -> Result<ParamId> {
        self.store.insert(ParamEntry { name, shape, data, frozen: false, net: self.net, group: self.group, kind, head_fc })
    }

    /// He-style fan-in normal weights, `std = sqrt(2 / fan_in)`.
    pub fn conv_weight(&mut self, name: String, cout: usize, cin: usize, k: usize) -> Result<ParamId> {
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        let t = Tensor::<f32>::randn(&[cout, cin, k, k], std, self.rng);
        self.push(name, t.shape().to_vec(), t.to_vec(), ParamKind::ConvWeight, false)
    }

    /// Dense weight stored as in×out, `std = 1 / sqrt(fan_in)`.
    pub fn dense_weight(&mut self, name: String, fan_in: usize, fan_out: usize, head_fc: bool) -> Result<ParamId> {
        let std = (1.0 / fan_in as f64).sqrt();
        let t = Tensor::<f32>::randn(&[fan_in, fan_out], std, self.rng);
        self.push(name, t.shape().to_vec(), t.to_vec(), ParamKind::DenseWeight, head_fc)
    }

    pub fn constant(&mut self, name: String, shape: Vec<usize>, value: f32, kind: ParamKind, head_fc: bool) -> Result<ParamId> {
        let data = vec![value; numel(&shape)];
        self.push(name, shape, data, kind, head_fc)
    }
}
