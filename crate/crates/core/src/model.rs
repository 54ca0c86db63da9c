//! Memory models: symbol registries, embedding tables, and the episodic and
//! semantic scorers built on top of the tensor kernels.
//!
//! A model maps each registered symbol to a latent vector and scores a tuple
//! by contracting the vectors of its slots against a core tensor. The
//! episodic model carries a fourth, time mode plus an engram store; the
//! semantic model scores plain triples. Both can share entity and predicate
//! storage, which is how a consolidated semantic model keeps using the
//! representations the episodic model was built on.

use std::collections::HashMap;
use std::marker::PhantomData;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::FactStore;
use crate::tensor::{CoreTensor, LatentVector};

/// Logistic link mapping an unbounded score to a probability that the
/// scored fact holds.
pub fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

/// Typed index into one symbol vocabulary.
pub trait SymbolId: Copy + Eq + Ord + std::hash::Hash + std::fmt::Debug {
    /// Human-readable vocabulary name, used in error messages.
    const KIND: &'static str;

    fn from_index(index: usize) -> Self;
    fn index(self) -> usize;
}

macro_rules! define_id {
    ($(#[$doc:meta])* $name:ident, $kind:literal) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(usize);

        impl SymbolId for $name {
            const KIND: &'static str = $kind;

            fn from_index(index: usize) -> Self {
                Self(index)
            }

            fn index(self) -> usize {
                self.0
            }
        }
    };
}

define_id!(
    /// Index into the entity vocabulary (subjects and objects share it).
    EntityId,
    "entity"
);
define_id!(
    /// Index into the predicate vocabulary.
    PredicateId,
    "predicate"
);
define_id!(
    /// Index into the time vocabulary.
    TimeId,
    "time"
);

/// Append-only bijection between symbol names and dense ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Registry<I> {
    names: Vec<String>,
    ids: HashMap<String, usize>,
    _marker: PhantomData<I>,
}

impl<I: SymbolId> Default for Registry<I> {
    fn default() -> Self {
        Self::new()
    }
}

impl<I: SymbolId> Registry<I> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            ids: HashMap::new(),
            _marker: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Returns the id for `name`, registering it if unseen. Ids are handed
    /// out densely in registration order; re-registering is a no-op.
    pub fn register(&mut self, name: &str) -> I {
        assert!(!name.is_empty(), "symbol names must be nonempty");
        if let Some(&i) = self.ids.get(name) {
            return I::from_index(i);
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), i);
        I::from_index(i)
    }

    /// Registers a name that must not exist yet.
    pub fn register_new(&mut self, name: &str) -> Result<I> {
        if self.ids.contains_key(name) {
            return Err(Error::DuplicateSymbol {
                kind: I::KIND,
                name: name.to_string(),
            });
        }
        Ok(self.register(name))
    }

    pub fn id(&self, name: &str) -> Option<I> {
        self.ids.get(name).map(|&i| I::from_index(i))
    }

    /// Like [`Registry::id`] but failing with a structured error.
    pub fn require(&self, name: &str) -> Result<I> {
        self.id(name).ok_or_else(|| Error::UnknownSymbol {
            kind: I::KIND,
            what: name.to_string(),
        })
    }

    pub fn name(&self, id: I) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    /// Validates that `id` was actually handed out by this registry.
    pub fn check(&self, id: I) -> Result<()> {
        if id.index() < self.names.len() {
            Ok(())
        } else {
            Err(Error::UnknownSymbol {
                kind: I::KIND,
                what: format!("id {}", id.index()),
            })
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = I> {
        (0..self.names.len()).map(I::from_index)
    }
}

/// One latent vector per registered symbol, in id order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<I> {
    rank: usize,
    rows: Vec<LatentVector>,
    _marker: PhantomData<I>,
}

impl<I: SymbolId> EmbeddingTable<I> {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            rows: Vec::new(),
            _marker: PhantomData,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: I) -> Result<&LatentVector> {
        self.rows.get(id.index()).ok_or_else(|| Error::UnknownSymbol {
            kind: I::KIND,
            what: format!("id {}", id.index()),
        })
    }

    pub(crate) fn row_mut(&mut self, id: I) -> Result<&mut LatentVector> {
        let index = id.index();
        self.rows.get_mut(index).ok_or(Error::UnknownSymbol {
            kind: I::KIND,
            what: format!("id {index}"),
        })
    }

    pub(crate) fn push(&mut self, row: LatentVector) -> Result<()> {
        if row.len() != self.rank {
            return Err(Error::DimensionMismatch {
                mode: 0,
                expected: self.rank,
                actual: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Element-wise sum of every row; the zero vector when the table is
    /// empty. This is where a whole vocabulary enters a contraction at once:
    /// feeding the all-ones indicator through the embedding stage lands here.
    pub fn sum_vector(&self) -> LatentVector {
        let mut sum = vec![0.0; self.rank];
        for row in &self.rows {
            for (s, v) in sum.iter_mut().zip(row.as_slice()) {
                *s += v;
            }
        }
        LatentVector::new(sum).expect("sums of finite rows are finite")
    }

    pub fn iter(&self) -> impl Iterator<Item = (I, &LatentVector)> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| (I::from_index(i), row))
    }
}

/// Default inverse temperature for turning scores into a distribution.
pub const DEFAULT_BETA: f64 = 5.0;

/// Default half-width of the uniform parameter initialization.
pub const DEFAULT_INIT_SCALE: f64 = 0.1;

fn default_init_scale() -> f64 {
    DEFAULT_INIT_SCALE
}

/// Shape and behavior switches shared by both model kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent dimension, shared by every mode.
    pub rank: usize,
    /// When set, every parameter is kept >= 0 and scores act like
    /// unnormalized probabilities of a product model.
    pub nonnegative: bool,
    /// Inverse temperature used when a query does not specify one.
    pub beta_default: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
    /// Half-width of the uniform parameter initialization: fresh rows and
    /// core entries are drawn from `[0, init_scale)` for nonnegative models
    /// and `[-init_scale, init_scale)` otherwise. A fourth-order score is a
    /// product of four factors of this size, so tiny inits can leave
    /// gradient training stalled on a plateau; raising the scale toward
    /// 0.5 is the standard warm start for models that refuse to train.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            nonnegative: false,
            beta_default: DEFAULT_BETA,
            seed: 0,
            init_scale: DEFAULT_INIT_SCALE,
        }
    }

    pub fn nonnegative(mut self, yes: bool) -> Self {
        self.nonnegative = yes;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn beta_default(mut self, beta: f64) -> Self {
        self.beta_default = beta;
        self
    }

    /// Sets the initialization half-width. Panics on zero, negative, or
    /// non-finite scales; callers turning user input into a config should
    /// validate first.
    pub fn init_scale(mut self, scale: f64) -> Self {
        assert!(
            scale.is_finite() && scale > 0.0,
            "init_scale must be positive and finite"
        );
        self.init_scale = scale;
        self
    }
}

/// The slot a vector occupies in a tuple score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Subject,
    Predicate,
    Object,
    Time,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Subject => "subject",
            Mode::Predicate => "predicate",
            Mode::Object => "object",
            Mode::Time => "time",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

const TRIPLE_MODES: [Mode; 3] = [Mode::Subject, Mode::Predicate, Mode::Object];
const QUAD_MODES: [Mode; 4] = [Mode::Subject, Mode::Predicate, Mode::Object, Mode::Time];

/// Read-only view shared by every scorer: vocabularies, per-slot latent
/// vectors, and the core tensor. The query engine is written against this
/// trait so episodic and semantic models go through one code path.
pub trait TensorMemory {
    fn config(&self) -> &ModelConfig;
    fn core(&self) -> &CoreTensor;
    /// Mode layout, in core-tensor order.
    fn modes(&self) -> &'static [Mode];
    fn vocab_len(&self, mode: Mode) -> usize;
    fn vector(&self, mode: Mode, index: usize) -> Result<&LatentVector>;
    /// Sum of all latent vectors in a mode's vocabulary (zero when empty).
    fn vocab_sum(&self, mode: Mode) -> LatentVector;
    fn symbol_name(&self, mode: Mode, index: usize) -> Option<&str>;

    fn order(&self) -> usize {
        self.core().order()
    }

    fn rank(&self) -> usize {
        self.config().rank
    }

    fn nonnegative(&self) -> bool {
        self.config().nonnegative
    }
}

/// A stored episodic trace: the time id it was filed under and the latent
/// vector as it was at binding.
#[derive(Clone, Debug, PartialEq)]
pub struct Engram {
    pub time: TimeId,
    pub trace: LatentVector,
}

// Stream tags for deterministic, order-independent parameter init.
const INIT_ENTITY: u64 = 1;
const INIT_PREDICATE: u64 = 2;
const INIT_TIME: u64 = 3;
const INIT_CORE: u64 = 4;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn init_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed.wrapping_add(tag)).wrapping_add(index));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Fresh parameter row: uniform in [-scale, scale) signed, [0, scale)
/// nonnegative. Keyed by (seed, vocabulary, row index) so registration
/// order elsewhere never changes a row's initial value.
fn seeded_row(config: &ModelConfig, tag: u64, index: usize) -> LatentVector {
    let mut rng = init_rng(config.seed, tag, index as u64);
    let scale = config.init_scale;
    let values = (0..config.rank)
        .map(|_| {
            let u: f64 = rng.gen();
            if config.nonnegative {
                scale * u
            } else {
                2.0 * scale * u - scale
            }
        })
        .collect();
    LatentVector::new(values).expect("uniform draws are finite")
}

fn seeded_core(config: &ModelConfig, order: usize) -> CoreTensor {
    let mut rng = init_rng(config.seed, INIT_CORE, order as u64);
    let scale = config.init_scale;
    let volume = config.rank.pow(order as u32);
    let values = (0..volume)
        .map(|_| {
            let u: f64 = rng.gen();
            if config.nonnegative {
                scale * u
            } else {
                2.0 * scale * u - scale
            }
        })
        .collect();
    CoreTensor::from_values(order, config.rank, values).expect("seeded shape is valid")
}

fn check_nonnegative(nonnegative: bool, v: &LatentVector, context: &str) -> Result<()> {
    if nonnegative && !v.is_nonnegative() {
        return Err(Error::NegativeInNonnegative {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Four-mode memory: scores (subject, predicate, object, time) tuples and
/// stores engrams, one latent trace per remembered time step.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicModel {
    config: ModelConfig,
    entities: Arc<Registry<EntityId>>,
    predicates: Arc<Registry<PredicateId>>,
    times: Registry<TimeId>,
    entity_vectors: Arc<EmbeddingTable<EntityId>>,
    predicate_vectors: Arc<EmbeddingTable<PredicateId>>,
    time_vectors: EmbeddingTable<TimeId>,
    core: CoreTensor,
    engrams: Vec<Engram>,
}

impl EpisodicModel {
    /// Empty model with a seeded order-4 core.
    pub fn new(config: ModelConfig) -> Self {
        let core = seeded_core(&config, 4);
        let rank = config.rank;
        Self {
            config,
            entities: Arc::new(Registry::new()),
            predicates: Arc::new(Registry::new()),
            times: Registry::new(),
            entity_vectors: Arc::new(EmbeddingTable::new(rank)),
            predicate_vectors: Arc::new(EmbeddingTable::new(rank)),
            time_vectors: EmbeddingTable::new(rank),
            core,
            engrams: Vec::new(),
        }
    }

    /// Model whose vocabularies mirror an ingested fact store.
    pub fn from_store(store: &FactStore, config: ModelConfig) -> Self {
        let mut model = Self::new(config);
        for name in store.entities().names() {
            model.register_entity(name);
        }
        for name in store.predicates().names() {
            model.register_predicate(name);
        }
        for name in store.times().names() {
            model.register_time(name);
        }
        model
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn core(&self) -> &CoreTensor {
        &self.core
    }

    pub(crate) fn core_mut(&mut self) -> &mut CoreTensor {
        &mut self.core
    }

    pub fn entities(&self) -> &Registry<EntityId> {
        &self.entities
    }

    pub fn predicates(&self) -> &Registry<PredicateId> {
        &self.predicates
    }

    pub fn times(&self) -> &Registry<TimeId> {
        &self.times
    }

    pub fn entity_vectors(&self) -> &EmbeddingTable<EntityId> {
        &self.entity_vectors
    }

    pub fn predicate_vectors(&self) -> &EmbeddingTable<PredicateId> {
        &self.predicate_vectors
    }

    pub fn time_vectors(&self) -> &EmbeddingTable<TimeId> {
        &self.time_vectors
    }

    pub fn engrams(&self) -> &[Engram] {
        &self.engrams
    }

    pub(crate) fn entity_vectors_mut(&mut self) -> &mut EmbeddingTable<EntityId> {
        Arc::make_mut(&mut self.entity_vectors)
    }

    pub(crate) fn predicate_vectors_mut(&mut self) -> &mut EmbeddingTable<PredicateId> {
        Arc::make_mut(&mut self.predicate_vectors)
    }

    pub(crate) fn time_vectors_mut(&mut self) -> &mut EmbeddingTable<TimeId> {
        &mut self.time_vectors
    }

    /// Registers an entity, appending a seeded row on first sight.
    pub fn register_entity(&mut self, name: &str) -> EntityId {
        let registry = Arc::make_mut(&mut self.entities);
        let before = registry.len();
        let id = registry.register(name);
        if registry.len() > before {
            let row = seeded_row(&self.config, INIT_ENTITY, id.index());
            Arc::make_mut(&mut self.entity_vectors)
                .push(row)
                .expect("seeded rows match the table rank");
        }
        id
    }

    pub fn register_predicate(&mut self, name: &str) -> PredicateId {
        let registry = Arc::make_mut(&mut self.predicates);
        let before = registry.len();
        let id = registry.register(name);
        if registry.len() > before {
            let row = seeded_row(&self.config, INIT_PREDICATE, id.index());
            Arc::make_mut(&mut self.predicate_vectors)
                .push(row)
                .expect("seeded rows match the table rank");
        }
        id
    }

    pub fn register_time(&mut self, name: &str) -> TimeId {
        let before = self.times.len();
        let id = self.times.register(name);
        if self.times.len() > before {
            let row = seeded_row(&self.config, INIT_TIME, id.index());
            self.time_vectors
                .push(row)
                .expect("seeded rows match the table rank");
        }
        id
    }

    /// Replaces an entity's latent vector, e.g. with pretrained values.
    pub fn set_entity_vector(&mut self, id: EntityId, row: LatentVector) -> Result<()> {
        check_nonnegative(self.config.nonnegative, &row, "entity vector")?;
        *self.entity_vectors_mut().row_mut(id)? = row;
        Ok(())
    }

    pub fn set_predicate_vector(&mut self, id: PredicateId, row: LatentVector) -> Result<()> {
        check_nonnegative(self.config.nonnegative, &row, "predicate vector")?;
        *self.predicate_vectors_mut().row_mut(id)? = row;
        Ok(())
    }

    /// Replaces a time row. Refused for rows bound by an engram: those
    /// traces are write-once by contract.
    pub fn set_time_vector(&mut self, id: TimeId, row: LatentVector) -> Result<()> {
        if self.engrams.iter().any(|e| e.time == id) {
            return Err(Error::EngramBound { index: id.index() });
        }
        check_nonnegative(self.config.nonnegative, &row, "time vector")?;
        *self.time_vectors.row_mut(id)? = row;
        Ok(())
    }

    /// Replaces the core tensor. Order, rank, and (in nonnegative mode)
    /// signs are validated.
    pub fn set_core(&mut self, core: CoreTensor) -> Result<()> {
        if core.order() != 4 {
            return Err(Error::InvalidOrder { order: core.order() });
        }
        if core.rank() != self.config.rank {
            return Err(Error::RankMismatch {
                expected: self.config.rank,
                actual: core.rank(),
            });
        }
        if self.config.nonnegative && core.values().iter().any(|v| *v < 0.0) {
            return Err(Error::NegativeInNonnegative {
                context: "core tensor".to_string(),
            });
        }
        self.core = core;
        Ok(())
    }

    /// Files a one-shot memory: registers a fresh time id, stores `trace`
    /// as that id's latent vector bit-for-bit, and records the engram.
    /// With `label: None` a free name of the form `t<n>` is generated.
    pub fn bind_engram(&mut self, trace: LatentVector, label: Option<&str>) -> Result<Engram> {
        if trace.len() != self.config.rank {
            return Err(Error::DimensionMismatch {
                mode: 3,
                expected: self.config.rank,
                actual: trace.len(),
            });
        }
        check_nonnegative(self.config.nonnegative, &trace, "engram trace")?;
        let id = match label {
            Some(name) => self.times.register_new(name)?,
            None => {
                let mut n = self.times.len();
                loop {
                    let candidate = format!("t{n}");
                    if self.times.id(&candidate).is_none() {
                        break self.times.register(&candidate);
                    }
                    n += 1;
                }
            }
        };
        self.time_vectors.push(trace.clone())?;
        let engram = Engram { time: id, trace };
        self.engrams.push(engram.clone());
        Ok(engram)
    }

    pub(crate) fn push_engram_record(&mut self, engram: Engram) {
        self.engrams.push(engram);
    }

    /// Raw score of one timed fact.
    pub fn score(&self, s: EntityId, p: PredicateId, o: EntityId, t: TimeId) -> Result<f64> {
        let a_t = self.time_vectors.row(t)?;
        self.score_with_time_vector(s, p, o, a_t)
    }

    /// Raw score with an explicit latent vector in the time slot, used when
    /// decoding a perception that was never filed as a time id.
    pub fn score_with_time_vector(
        &self,
        s: EntityId,
        p: PredicateId,
        o: EntityId,
        h: &LatentVector,
    ) -> Result<f64> {
        let a_s = self.entity_vectors.row(s)?;
        let a_p = self.predicate_vectors.row(p)?;
        let a_o = self.entity_vectors.row(o)?;
        self.core.contract4(a_s, a_p, a_o, h)
    }

    /// Probability that the timed fact holds: `sigmoid(score)`.
    pub fn probability(&self, s: EntityId, p: PredicateId, o: EntityId, t: TimeId) -> Result<f64> {
        Ok(sigmoid(self.score(s, p, o, t)?))
    }
}

impl TensorMemory for EpisodicModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn core(&self) -> &CoreTensor {
        &self.core
    }

    fn modes(&self) -> &'static [Mode] {
        &QUAD_MODES
    }

    fn vocab_len(&self, mode: Mode) -> usize {
        match mode {
            Mode::Subject | Mode::Object => self.entities.len(),
            Mode::Predicate => self.predicates.len(),
            Mode::Time => self.times.len(),
        }
    }

    fn vector(&self, mode: Mode, index: usize) -> Result<&LatentVector> {
        match mode {
            Mode::Subject | Mode::Object => self.entity_vectors.row(EntityId::from_index(index)),
            Mode::Predicate => self.predicate_vectors.row(PredicateId::from_index(index)),
            Mode::Time => self.time_vectors.row(TimeId::from_index(index)),
        }
    }

    fn vocab_sum(&self, mode: Mode) -> LatentVector {
        match mode {
            Mode::Subject | Mode::Object => self.entity_vectors.sum_vector(),
            Mode::Predicate => self.predicate_vectors.sum_vector(),
            Mode::Time => self.time_vectors.sum_vector(),
        }
    }

    fn symbol_name(&self, mode: Mode, index: usize) -> Option<&str> {
        match mode {
            Mode::Subject | Mode::Object => self.entities.name(EntityId::from_index(index)),
            Mode::Predicate => self.predicates.name(PredicateId::from_index(index)),
            Mode::Time => self.times.name(TimeId::from_index(index)),
        }
    }
}

/// Three-mode memory over plain (subject, predicate, object) triples.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticModel {
    config: ModelConfig,
    entities: Arc<Registry<EntityId>>,
    predicates: Arc<Registry<PredicateId>>,
    entity_vectors: Arc<EmbeddingTable<EntityId>>,
    predicate_vectors: Arc<EmbeddingTable<PredicateId>>,
    core: CoreTensor,
}

impl SemanticModel {
    /// Empty model with a seeded order-3 core.
    pub fn new(config: ModelConfig) -> Self {
        let core = seeded_core(&config, 3);
        let rank = config.rank;
        Self {
            config,
            entities: Arc::new(Registry::new()),
            predicates: Arc::new(Registry::new()),
            entity_vectors: Arc::new(EmbeddingTable::new(rank)),
            predicate_vectors: Arc::new(EmbeddingTable::new(rank)),
            core,
        }
    }

    /// Model whose vocabularies mirror an ingested fact store.
    pub fn from_store(store: &FactStore, config: ModelConfig) -> Self {
        let mut model = Self::new(config);
        for name in store.entities().names() {
            model.register_entity(name);
        }
        for name in store.predicates().names() {
            model.register_predicate(name);
        }
        model
    }

    /// Semantic model that shares the episodic model's entity and predicate
    /// storage (registries and embedding tables alike) and scores with the
    /// given order-3 core. Shared storage stays physically shared until one
    /// side registers or trains, at which point that side gets its own copy.
    pub fn from_shared(episodic: &EpisodicModel, core: CoreTensor) -> Result<Self> {
        if core.order() != 3 {
            return Err(Error::InvalidOrder { order: core.order() });
        }
        if core.rank() != episodic.config.rank {
            return Err(Error::RankMismatch {
                expected: episodic.config.rank,
                actual: core.rank(),
            });
        }
        if episodic.config.nonnegative && core.values().iter().any(|v| *v < 0.0) {
            return Err(Error::NegativeInNonnegative {
                context: "core tensor".to_string(),
            });
        }
        Ok(Self {
            config: episodic.config.clone(),
            entities: Arc::clone(&episodic.entities),
            predicates: Arc::clone(&episodic.predicates),
            entity_vectors: Arc::clone(&episodic.entity_vectors),
            predicate_vectors: Arc::clone(&episodic.predicate_vectors),
            core,
        })
    }

    /// Fresh seeded core over the episodic model's vocabulary; the starting
    /// point for a student model that will be taught by replay.
    pub fn with_vocabulary_of(episodic: &EpisodicModel) -> Self {
        let core = seeded_core(&episodic.config, 3);
        Self::from_shared(episodic, core).expect("seeded core matches by construction")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn core(&self) -> &CoreTensor {
        &self.core
    }

    pub(crate) fn core_mut(&mut self) -> &mut CoreTensor {
        &mut self.core
    }

    pub fn entities(&self) -> &Registry<EntityId> {
        &self.entities
    }

    pub fn predicates(&self) -> &Registry<PredicateId> {
        &self.predicates
    }

    pub fn entity_vectors(&self) -> &EmbeddingTable<EntityId> {
        &self.entity_vectors
    }

    pub fn predicate_vectors(&self) -> &EmbeddingTable<PredicateId> {
        &self.predicate_vectors
    }

    pub(crate) fn entity_vectors_mut(&mut self) -> &mut EmbeddingTable<EntityId> {
        Arc::make_mut(&mut self.entity_vectors)
    }

    pub(crate) fn predicate_vectors_mut(&mut self) -> &mut EmbeddingTable<PredicateId> {
        Arc::make_mut(&mut self.predicate_vectors)
    }

    /// True if this model still physically shares entity and predicate
    /// storage with `episodic`.
    pub fn shares_vocabulary_with(&self, episodic: &EpisodicModel) -> bool {
        Arc::ptr_eq(&self.entities, &episodic.entities)
            && Arc::ptr_eq(&self.predicates, &episodic.predicates)
    }

    pub fn register_entity(&mut self, name: &str) -> EntityId {
        let registry = Arc::make_mut(&mut self.entities);
        let before = registry.len();
        let id = registry.register(name);
        if registry.len() > before {
            let row = seeded_row(&self.config, INIT_ENTITY, id.index());
            Arc::make_mut(&mut self.entity_vectors)
                .push(row)
                .expect("seeded rows match the table rank");
        }
        id
    }

    pub fn register_predicate(&mut self, name: &str) -> PredicateId {
        let registry = Arc::make_mut(&mut self.predicates);
        let before = registry.len();
        let id = registry.register(name);
        if registry.len() > before {
            let row = seeded_row(&self.config, INIT_PREDICATE, id.index());
            Arc::make_mut(&mut self.predicate_vectors)
                .push(row)
                .expect("seeded rows match the table rank");
        }
        id
    }

    pub fn set_entity_vector(&mut self, id: EntityId, row: LatentVector) -> Result<()> {
        check_nonnegative(self.config.nonnegative, &row, "entity vector")?;
        *self.entity_vectors_mut().row_mut(id)? = row;
        Ok(())
    }

    pub fn set_predicate_vector(&mut self, id: PredicateId, row: LatentVector) -> Result<()> {
        check_nonnegative(self.config.nonnegative, &row, "predicate vector")?;
        *self.predicate_vectors_mut().row_mut(id)? = row;
        Ok(())
    }

    pub fn set_core(&mut self, core: CoreTensor) -> Result<()> {
        if core.order() != 3 {
            return Err(Error::InvalidOrder { order: core.order() });
        }
        if core.rank() != self.config.rank {
            return Err(Error::RankMismatch {
                expected: self.config.rank,
                actual: core.rank(),
            });
        }
        if self.config.nonnegative && core.values().iter().any(|v| *v < 0.0) {
            return Err(Error::NegativeInNonnegative {
                context: "core tensor".to_string(),
            });
        }
        self.core = core;
        Ok(())
    }

    /// Raw score of one triple.
    pub fn score(&self, s: EntityId, p: PredicateId, o: EntityId) -> Result<f64> {
        let a_s = self.entity_vectors.row(s)?;
        let a_p = self.predicate_vectors.row(p)?;
        let a_o = self.entity_vectors.row(o)?;
        self.core.contract3(a_s, a_p, a_o)
    }

    /// Probability that the triple holds: `sigmoid(score)`.
    pub fn probability(&self, s: EntityId, p: PredicateId, o: EntityId) -> Result<f64> {
        Ok(sigmoid(self.score(s, p, o)?))
    }
}

impl TensorMemory for SemanticModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn core(&self) -> &CoreTensor {
        &self.core
    }

    fn modes(&self) -> &'static [Mode] {
        &TRIPLE_MODES
    }

    fn vocab_len(&self, mode: Mode) -> usize {
        match mode {
            Mode::Subject | Mode::Object => self.entities.len(),
            Mode::Predicate => self.predicates.len(),
            Mode::Time => 0,
        }
    }

    fn vector(&self, mode: Mode, index: usize) -> Result<&LatentVector> {
        match mode {
            Mode::Subject | Mode::Object => self.entity_vectors.row(EntityId::from_index(index)),
            Mode::Predicate => self.predicate_vectors.row(PredicateId::from_index(index)),
            Mode::Time => Err(Error::UnknownSymbol {
                kind: "time",
                what: "semantic models have no time mode".to_string(),
            }),
        }
    }

    fn vocab_sum(&self, mode: Mode) -> LatentVector {
        match mode {
            Mode::Subject | Mode::Object => self.entity_vectors.sum_vector(),
            Mode::Predicate => self.predicate_vectors.sum_vector(),
            Mode::Time => LatentVector::zeros(self.config.rank),
        }
    }

    fn symbol_name(&self, mode: Mode, index: usize) -> Option<&str> {
        match mode {
            Mode::Subject | Mode::Object => self.entities.name(EntityId::from_index(index)),
            Mode::Predicate => self.predicates.name(PredicateId::from_index(index)),
            Mode::Time => None,
        }
    }
}

/// Bilinear alternative scorer: one rank-by-rank matrix per predicate
/// instead of a shared core. `slice` is row-major with `rank^2` entries;
/// the result is `h[i] = sum_j slice[i][j] * subject[j]`, ready to be dotted
/// against candidate object vectors.
pub fn rescal_contract(slice: &[f64], rank: usize, subject: &LatentVector) -> Result<LatentVector> {
    if slice.len() != rank * rank {
        return Err(Error::WrongValueCount {
            expected: rank * rank,
            actual: slice.len(),
        });
    }
    if slice.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "predicate slice".to_string(),
        });
    }
    if subject.len() != rank {
        return Err(Error::DimensionMismatch {
            mode: 0,
            expected: rank,
            actual: subject.len(),
        });
    }
    let s = subject.as_slice();
    let values = (0..rank)
        .map(|i| {
            let row = &slice[i * rank..(i + 1) * rank];
            row.iter().zip(s).map(|(a, b)| a * b).sum()
        })
        .collect();
    LatentVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis_model(rank: usize) -> SemanticModel {
        // entities/predicates get basis-vector embeddings for exact scoring
        let mut m = SemanticModel::new(ModelConfig::new(rank));
        for i in 0..rank {
            let id = m.register_entity(&format!("e{i}"));
            m.set_entity_vector(id, LatentVector::basis(rank, i)).unwrap();
        }
        let p = m.register_predicate("p");
        m.set_predicate_vector(p, LatentVector::basis(rank, 0)).unwrap();
        m
    }

    #[test]
    fn registration_is_idempotent_and_dense() {
        let mut m = SemanticModel::new(ModelConfig::new(4));
        let a = m.register_entity("jack");
        let b = m.register_entity("mary");
        let a2 = m.register_entity("jack");
        assert_eq!(a, a2);
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        assert_eq!(m.entities().len(), 2);
        assert_eq!(m.entity_vectors().len(), 2);
        assert_eq!(m.entities().name(a), Some("jack"));
        assert_eq!(m.entities().id("mary"), Some(b));
    }

    #[test]
    fn registration_order_does_not_change_initial_rows() {
        let config = ModelConfig::new(5).seed(9);
        let mut m1 = SemanticModel::new(config.clone());
        m1.register_entity("a");
        m1.register_entity("b");
        let mut m2 = SemanticModel::new(config);
        m2.register_entity("b"); // same indices, different names
        m2.register_entity("a");
        // rows are keyed by index, not by name
        assert_eq!(
            m1.entity_vectors().row(EntityId::from_index(0)).unwrap(),
            m2.entity_vectors().row(EntityId::from_index(0)).unwrap()
        );
    }

    #[test]
    fn nonnegative_init_stays_in_range() {
        let mut m = EpisodicModel::new(ModelConfig::new(6).nonnegative(true).seed(3));
        for i in 0..10 {
            m.register_entity(&format!("e{i}"));
        }
        for (_, row) in m.entity_vectors().iter() {
            for &v in row.as_slice() {
                assert!((0.0..0.1).contains(&v));
            }
        }
        assert!(m.core().values().iter().all(|v| (0.0..0.1).contains(v)));
    }

    #[test]
    fn init_scale_widens_initial_parameters() {
        let narrow = ModelConfig::new(4).seed(3);
        let wide = ModelConfig::new(4).seed(3).init_scale(0.5);
        let mut small = EpisodicModel::new(narrow);
        let mut big = EpisodicModel::new(wide);
        for i in 0..6 {
            small.register_entity(&format!("e{i}"));
            big.register_entity(&format!("e{i}"));
        }
        let magnitudes = |m: &EpisodicModel| -> Vec<f64> {
            m.entity_vectors()
                .iter()
                .flat_map(|(_, row)| row.as_slice().iter().map(|v| v.abs()))
                .chain(m.core().values().iter().map(|v| v.abs()))
                .collect()
        };
        assert!(magnitudes(&small).iter().all(|&v| v < 0.1));
        let wide_values = magnitudes(&big);
        assert!(wide_values.iter().all(|&v| v < 0.5));
        assert!(wide_values.iter().any(|&v| v > 0.1));

        let mut wide_nonneg =
            EpisodicModel::new(ModelConfig::new(4).nonnegative(true).seed(3).init_scale(0.5));
        wide_nonneg.register_entity("e0");
        let row = wide_nonneg.entity_vectors().iter().next().unwrap().1;
        assert!(row.as_slice().iter().all(|&v| (0.0..0.5).contains(&v)));
    }

    #[test]
    #[should_panic(expected = "init_scale must be positive and finite")]
    fn zero_init_scale_is_rejected() {
        let _ = ModelConfig::new(4).init_scale(0.0);
    }

    #[test]
    fn semantic_score_matches_superdiagonal_fixture() {
        let mut m = basis_model(3);
        m.set_core(CoreTensor::superdiagonal(3, 3, 1.0).unwrap()).unwrap();
        let e0 = EntityId::from_index(0);
        let e1 = EntityId::from_index(1);
        let p = PredicateId::from_index(0);
        // shared latent slot 0 for (e0, p, e0); e1 lives in slot 1
        assert_eq!(m.score(e0, p, e0).unwrap(), 1.0);
        assert_eq!(m.score(e1, p, e1).unwrap(), 0.0);
    }

    #[test]
    fn score_is_linear_in_each_slot_vector() {
        let mut m = SemanticModel::new(ModelConfig::new(4).seed(2));
        let s = m.register_entity("s");
        let o = m.register_entity("o");
        let p = m.register_predicate("p");
        let theta = m.score(s, p, o).unwrap();
        // doubling one slot's vector doubles the score
        let doubled = LatentVector::new(
            m.entity_vectors()
                .row(s)
                .unwrap()
                .as_slice()
                .iter()
                .map(|v| 2.0 * v)
                .collect(),
        )
        .unwrap();
        m.set_entity_vector(s, doubled).unwrap();
        assert_abs_diff_eq!(m.score(s, p, o).unwrap(), 2.0 * theta, epsilon = 1e-12);
    }

    #[test]
    fn episodic_score_scales_with_time_vector() {
        let mut m = EpisodicModel::new(ModelConfig::new(3).seed(5));
        let s = m.register_entity("s");
        let o = m.register_entity("o");
        let p = m.register_predicate("p");
        let t = m.register_time("t0");
        let theta = m.score(s, p, o, t).unwrap();
        let scaled = LatentVector::new(
            m.time_vectors()
                .row(t)
                .unwrap()
                .as_slice()
                .iter()
                .map(|v| 3.0 * v)
                .collect(),
        )
        .unwrap();
        m.set_time_vector(t, scaled).unwrap();
        assert_abs_diff_eq!(m.score(s, p, o, t).unwrap(), 3.0 * theta, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_behaves() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(50.0) >= 1.0 - 1e-20);
        assert!(sigmoid(-50.0) <= 1e-20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let theta = rng.gen_range(-30.0..30.0);
            assert_abs_diff_eq!(sigmoid(theta) + sigmoid(-theta), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bind_engram_is_exact_and_append_only() {
        let mut m = EpisodicModel::new(ModelConfig::new(4).seed(8));
        let s = m.register_entity("s");
        let o = m.register_entity("o");
        let p = m.register_predicate("p");
        let trace = LatentVector::new(vec![0.1, -0.7, 0.3, 0.9]).unwrap();
        let before = m.times().len();
        let engram = m.bind_engram(trace.clone(), None).unwrap();
        assert_eq!(m.times().len(), before + 1);
        assert_eq!(m.time_vectors().row(engram.time).unwrap(), &trace);
        assert_eq!(&m.engrams()[0].trace, &trace);
        // scoring through the id and through the raw vector is the same
        // computation on the same bits
        let via_id = m.score(s, p, o, engram.time).unwrap();
        let via_vec = m.score_with_time_vector(s, p, o, &trace).unwrap();
        assert_eq!(via_id.to_bits(), via_vec.to_bits());
        // a second engram gets a distinct id
        let e2 = m.bind_engram(LatentVector::zeros(4), None).unwrap();
        assert_ne!(engram.time, e2.time);
        assert_eq!(m.engrams().len(), 2);
    }

    #[test]
    fn bind_engram_rejects_bad_traces() {
        let mut m = EpisodicModel::new(ModelConfig::new(3).nonnegative(true));
        assert!(matches!(
            m.bind_engram(LatentVector::zeros(2), None),
            Err(Error::DimensionMismatch { mode: 3, .. })
        ));
        assert!(matches!(
            m.bind_engram(LatentVector::new(vec![0.1, -0.1, 0.0]).unwrap(), None),
            Err(Error::NegativeInNonnegative { .. })
        ));
        m.bind_engram(LatentVector::zeros(3), Some("dawn")).unwrap();
        assert!(matches!(
            m.bind_engram(LatentVector::zeros(3), Some("dawn")),
            Err(Error::DuplicateSymbol { .. })
        ));
    }

    #[test]
    fn engram_rows_cannot_be_replaced() {
        let mut m = EpisodicModel::new(ModelConfig::new(3));
        let plain = m.register_time("plain");
        m.set_time_vector(plain, LatentVector::zeros(3)).unwrap();
        let engram = m.bind_engram(LatentVector::ones(3), None).unwrap();
        assert!(matches!(
            m.set_time_vector(engram.time, LatentVector::zeros(3)),
            Err(Error::EngramBound { .. })
        ));
    }

    #[test]
    fn nonnegative_mode_scores_are_nonnegative() {
        let mut m = EpisodicModel::new(ModelConfig::new(4).nonnegative(true).seed(21));
        for i in 0..4 {
            m.register_entity(&format!("e{i}"));
        }
        for i in 0..2 {
            m.register_predicate(&format!("p{i}"));
        }
        for i in 0..3 {
            m.register_time(&format!("t{i}"));
        }
        for s in m.entities().ids() {
            for p in m.predicates().ids() {
                for o in m.entities().ids() {
                    for t in m.times().ids() {
                        assert!(m.score(s, p, o, t).unwrap() >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn shared_vocabulary_diverges_on_write() {
        let mut ep = EpisodicModel::new(ModelConfig::new(3).seed(4));
        let s = ep.register_entity("s");
        ep.register_predicate("p");
        let sem = SemanticModel::from_shared(&ep, CoreTensor::zeros(3, 3).unwrap()).unwrap();
        assert!(sem.shares_vocabulary_with(&ep));
        let row_before = sem.entity_vectors().row(s).unwrap().clone();
        // writing through the episodic side must not leak into the semantic view
        let mut ep2 = ep.clone();
        ep2.set_entity_vector(s, LatentVector::ones(3)).unwrap();
        assert_eq!(sem.entity_vectors().row(s).unwrap(), &row_before);
    }

    #[test]
    fn rescal_contract_matches_hand_matvec() {
        // identity slice returns the subject unchanged
        let rank = 3;
        let mut identity = vec![0.0; 9];
        for i in 0..3 {
            identity[i * 3 + i] = 1.0;
        }
        let s = LatentVector::new(vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(
            rescal_contract(&identity, rank, &s).unwrap().as_slice(),
            s.as_slice()
        );
        // zero slice annihilates
        assert_eq!(
            rescal_contract(&[0.0; 9], rank, &s).unwrap().as_slice(),
            &[0.0, 0.0, 0.0]
        );
        // random slice against an index-by-index oracle
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let slice: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = rescal_contract(&slice, rank, &s).unwrap();
        for i in 0..rank {
            let mut expect = 0.0;
            for j in 0..rank {
                expect += slice[i * rank + j] * s[j];
            }
            assert_abs_diff_eq!(h[i], expect, epsilon = 1e-12);
        }
        // wrong slice size is refused
        assert!(rescal_contract(&[0.0; 8], rank, &s).is_err());
    }
}
