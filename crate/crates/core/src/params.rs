//! Named parameter storage with a frozen/trainable split.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub type ParamId = usize;

/// Which network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Teacher,
    PromptEncoder,
    Student,
    Pdm,
    Decoder,
    Fm,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Teacher,
        ParamGroup::PromptEncoder,
        ParamGroup::Student,
        ParamGroup::Pdm,
        ParamGroup::Decoder,
        ParamGroup::Fm,
    ];

    /// Frozen groups never receive gradients or optimizer updates.
    pub fn frozen(self) -> bool {
        matches!(self, ParamGroup::Teacher | ParamGroup::PromptEncoder)
    }

    // Frozen groups are initialised from fixed seeds so every run shares them.
    fn fixed_seed(self) -> Option<u64> {
        match self {
            ParamGroup::Teacher => Some(0x5eed_7eac),
            ParamGroup::PromptEncoder => Some(0x5eed_b0c5),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    name: String,
    group: ParamGroup,
    value: Tensor,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate()
    }

    pub fn trainable(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.iter().filter(|(_, p)| !p.group.frozen()).map(|(id, _)| id)
    }

    pub fn insert(&mut self, name: &str, group: ParamGroup, value: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter `{name}`");
        let id = self.params.len();
        self.params.push(Param { name: name.to_string(), group, value });
        self.index.insert(name.to_string(), id);
        id
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].value
    }

    /// sha256 over names, shapes and little-endian values of one group.
    pub fn group_hash(&self, group: ParamGroup) -> String {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            h.update(p.name.as_bytes());
            for &d in p.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn group_hashes(&self) -> BTreeMap<ParamGroup, String> {
        ParamGroup::ALL.iter().map(|&g| (g, self.group_hash(g))).collect()
    }
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Normal(f64),
    /// He-normal with the given fan-in (for layers feeding a rectifier).
    Kaiming(usize),
    /// LeCun-normal: unit gain, for layers without a following rectifier.
    Lecun(usize),
}

/// Creates parameters with per-group deterministic random streams.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    seed: u64,
    rngs: BTreeMap<ParamGroup, ChaCha8Rng>,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self { store, seed, rngs: BTreeMap::new() }
    }

    fn rng(&mut self, group: ParamGroup) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.rngs.entry(group).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(group.fixed_seed().unwrap_or(seed));
            rng.set_stream(group as u64 + 1);
            rng
        })
    }

    pub fn tensor(&mut self, name: &str, group: ParamGroup, shape: &[usize], init: Init) -> ParamId {
        let std = match init {
            Init::Zeros => 0.0,
            Init::Normal(s) => s,
            Init::Kaiming(fan_in) => (2.0 / fan_in as f64).sqrt(),
            Init::Lecun(fan_in) => (1.0 / fan_in as f64).sqrt(),
        };
        let value = if std == 0.0 {
            Tensor::zeros(shape)
        } else {
            let dist = Normal::new(0.0, std).expect("finite std");
            let rng = self.rng(group);
            Tensor::from_fn(shape, |_| dist.sample(rng))
        };
        self.store.insert(name, group, value)
    }
}
