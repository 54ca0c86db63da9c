//! Deriving durable semantic memory from episodic memory.
//!
//! Three mechanisms, each usable on its own:
//!
//! 1. [`marginalize_time`]: sum the episodic core over time at the latent
//!    level, giving a semantic model whose scores equal the time-summed
//!    episodic scores (nonnegative models only).
//! 2. [`replay_teach`]: decode remembered triples from chosen time steps
//!    and train a student semantic model on them, the way rehearsal slowly
//!    builds a slow store out of a fast one.
//! 3. [`distill_explicit`]: harvest every triple the model believes above a
//!    confidence threshold into an explicit [`KnowledgeGraphStore`], which
//!    stores hard facts verbatim and never generalizes.
//!
//! [`copy_engrams`] additionally replays raw traces between episodic models
//! so a second store can serve the same recollections.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    sigmoid, EntityId, EpisodicModel, PredicateId, Registry, SemanticModel, SymbolId, TimeId,
};
use crate::query::{recall_sample, Beta, JOINT_ENUMERATION_CAP};
use crate::store::Triple;
use crate::tensor::CoreTensor;
use crate::train::{fit_semantic_facts, TrainConfig, TrainReport};

/// Default distillation threshold: the explicit store is for facts the
/// model is nearly sure of.
pub const DEFAULT_DISTILL_THRESHOLD: f64 = 0.9;

/// An explicit, non-generalizing set of believed triples with confidences.
/// Keyed on the triple; re-inserting keeps the highest confidence seen.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraphStore {
    facts: BTreeMap<(EntityId, PredicateId, EntityId), f64>,
}

fn check_confidence(value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 || value > 1.0 {
        return Err(Error::InvalidConfidence { value });
    }
    Ok(())
}

fn resolve_name<I: SymbolId>(registry: &Registry<I>, id: I) -> Result<&str> {
    registry.name(id).ok_or_else(|| Error::UnknownSymbol {
        kind: I::KIND,
        what: format!("#{}", id.index()),
    })
}

impl KnowledgeGraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn confidence(&self, fact: &Triple) -> Option<f64> {
        self.facts
            .get(&(fact.subject, fact.predicate, fact.object))
            .copied()
    }

    /// Records a fact. Confidence must lie in (0, 1]; a repeat insertion
    /// keeps the larger confidence, so confidence never decreases. Returns
    /// true when the triple was not in the store before.
    pub fn insert(&mut self, fact: Triple, confidence: f64) -> Result<bool> {
        check_confidence(confidence)?;
        let key = (fact.subject, fact.predicate, fact.object);
        match self.facts.get_mut(&key) {
            Some(existing) => {
                if confidence > *existing {
                    *existing = confidence;
                }
                Ok(false)
            }
            None => {
                self.facts.insert(key, confidence);
                Ok(true)
            }
        }
    }

    /// Facts in deterministic (subject, predicate, object) id order.
    pub fn iter(&self) -> impl Iterator<Item = (Triple, f64)> + '_ {
        self.facts.iter().map(|(&(s, p, o), &c)| {
            (
                Triple {
                    subject: s,
                    predicate: p,
                    object: o,
                },
                c,
            )
        })
    }

    /// Writes `subject<TAB>predicate<TAB>object<TAB>confidence` lines in
    /// iteration order, resolving ids through the given registries.
    pub fn export_tsv<W: Write>(
        &self,
        entities: &Registry<EntityId>,
        predicates: &Registry<PredicateId>,
        mut writer: W,
    ) -> Result<()> {
        for (fact, confidence) in self.iter() {
            writeln!(
                writer,
                "{}\t{}\t{}\t{}",
                resolve_name(entities, fact.subject)?,
                resolve_name(predicates, fact.predicate)?,
                resolve_name(entities, fact.object)?,
                confidence,
            )?;
        }
        Ok(())
    }

    /// Reads the format written by [`export_tsv`]. Blank lines and lines
    /// starting with `#` are skipped; symbol names must already be
    /// registered.
    pub fn load_tsv<R: BufRead>(
        entities: &Registry<EntityId>,
        predicates: &Registry<PredicateId>,
        reader: R,
    ) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let columns: Vec<&str> = line.split('\t').collect();
            if columns.len() != 4 {
                return Err(parse_err(format!(
                    "expected 4 tab-separated columns, found {}",
                    columns.len()
                )));
            }
            let fact = Triple {
                subject: entities.require(columns[0])?,
                predicate: predicates.require(columns[1])?,
                object: entities.require(columns[2])?,
            };
            let confidence: f64 = columns[3]
                .parse()
                .map_err(|_| parse_err(format!("bad confidence value {:?}", columns[3])))?;
            store.insert(fact, confidence)?;
        }
        Ok(store)
    }
}

/// Adds one time step's slice of the episodic core into the semantic core:
/// `g_s += sum_r4 a_t[r4] * g_e[.., r4]`. The semantic model must still
/// share the episodic model's registries so symbol ids line up.
pub fn accumulate_time(
    semantic: &mut SemanticModel,
    episodic: &EpisodicModel,
    t: TimeId,
) -> Result<()> {
    if !episodic.config().nonnegative {
        return Err(Error::MarginalizationNeedsNonnegative);
    }
    if !semantic.shares_vocabulary_with(episodic) {
        return Err(Error::InvalidArgument {
            reason: "semantic model does not share the episodic model's vocabulary".to_string(),
        });
    }
    let a_t = episodic.time_vectors().row(t)?;
    let slice = episodic.core().contract_mode(a_t, 3)?;
    if slice.rank() != semantic.core().rank() {
        return Err(Error::RankMismatch {
            expected: semantic.core().rank(),
            actual: slice.rank(),
        });
    }
    for (dst, src) in semantic
        .core_mut()
        .values_mut()
        .iter_mut()
        .zip(slice.values())
    {
        *dst += src;
    }
    Ok(())
}

/// Collapses episodic memory over the given time steps into a semantic
/// model: the semantic core is the time-summed episodic core, and the
/// entity/predicate storage is shared by reference with the source. On the
/// resulting model, every triple's score equals the sum of its episodic
/// scores over `time_ids` (mean when `normalize` is set).
///
/// Works on nonnegative models only; the time list is an explicit argument
/// so callers control both the window and the summation order, and repeats
/// are honored verbatim.
pub fn marginalize_time(
    episodic: &EpisodicModel,
    time_ids: &[TimeId],
    normalize: bool,
) -> Result<SemanticModel> {
    if !episodic.config().nonnegative {
        return Err(Error::MarginalizationNeedsNonnegative);
    }
    if time_ids.is_empty() {
        return Err(Error::EmptyInput {
            what: "time id list",
        });
    }
    for &t in time_ids {
        episodic.times().check(t)?;
    }
    let zero = CoreTensor::zeros(3, episodic.config().rank)?;
    let mut semantic = SemanticModel::from_shared(episodic, zero)?;
    for &t in time_ids {
        accumulate_time(&mut semantic, episodic, t)?;
    }
    if normalize {
        let count = time_ids.len() as f64;
        for v in semantic.core_mut().values_mut() {
            *v /= count;
        }
    }
    Ok(semantic)
}

/// Teaches a student semantic model by rehearsal: for each scheduled time
/// step, decodes `samples_per_time` triples from the episodic model by
/// generative sampling and trains the student on them as positives
/// (repeats carry weight). The episodic source is read-only throughout.
/// Sampling seeds derive from `config.seed`, one per schedule entry, so
/// the whole run is reproducible. On a mid-schedule error the student
/// keeps whatever training had already happened.
pub fn replay_teach(
    episodic: &EpisodicModel,
    semantic: &mut SemanticModel,
    schedule: &[TimeId],
    samples_per_time: usize,
    beta: Beta,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if schedule.is_empty() {
        return Err(Error::EmptyInput {
            what: "replay schedule",
        });
    }
    if samples_per_time == 0 {
        return Err(Error::InvalidArgument {
            reason: "samples per time step must be at least 1".to_string(),
        });
    }
    if !semantic.shares_vocabulary_with(episodic) {
        return Err(Error::InvalidArgument {
            reason: "replay student does not share the teacher's vocabulary".to_string(),
        });
    }
    for &t in schedule {
        episodic.times().check(t)?;
    }
    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reports = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let sample_seed = seed_rng.gen::<u64>();
        let drawn = recall_sample(episodic, t, beta, samples_per_time, sample_seed)?;
        let positives: Vec<Triple> = drawn
            .into_iter()
            .map(|(subject, predicate, object)| Triple {
                subject,
                predicate,
                object,
            })
            .collect();
        reports.push(fit_semantic_facts(semantic, &positives, config)?);
    }
    Ok(TrainReport::merge(reports))
}

/// Where distilled facts come from: a semantic model, or an episodic model
/// pinned to one time step.
#[derive(Clone, Copy, Debug)]
pub enum DistillSource<'a> {
    Semantic(&'a SemanticModel),
    EpisodicAt(&'a EpisodicModel, TimeId),
}

/// Scores every (subject, predicate, object) combination and records those
/// whose probability reaches `threshold` in the store, confidence equal to
/// that probability. Returns how many facts were new. Set semantics make
/// repeat distillation a no-op. Refuses vocabularies whose triple count
/// exceeds [`JOINT_ENUMERATION_CAP`].
pub fn distill_explicit(
    source: DistillSource<'_>,
    threshold: f64,
    store: &mut KnowledgeGraphStore,
) -> Result<usize> {
    if !threshold.is_finite() || threshold <= 0.0 || threshold >= 1.0 {
        return Err(Error::InvalidThreshold { value: threshold });
    }
    let (n_entities, n_predicates) = match source {
        DistillSource::Semantic(m) => (m.entities().len(), m.predicates().len()),
        DistillSource::EpisodicAt(m, t) => {
            m.times().check(t)?;
            (m.entities().len(), m.predicates().len())
        }
    };
    let tuples = (n_entities as u128) * (n_predicates as u128) * (n_entities as u128);
    if tuples > JOINT_ENUMERATION_CAP as u128 {
        return Err(Error::VocabularyTooLarge {
            tuples,
            cap: JOINT_ENUMERATION_CAP,
        });
    }
    let mut added = 0;
    for s in 0..n_entities {
        let subject = EntityId::from_index(s);
        for p in 0..n_predicates {
            let predicate = PredicateId::from_index(p);
            // fix subject and predicate once, then dot against every object
            let h = match source {
                DistillSource::Semantic(m) => {
                    let a_s = m.entity_vectors().row(subject)?;
                    let a_p = m.predicate_vectors().row(predicate)?;
                    m.core().contract_leave_one(&[a_s, a_p], 2)?
                }
                DistillSource::EpisodicAt(m, t) => {
                    let a_s = m.entity_vectors().row(subject)?;
                    let a_p = m.predicate_vectors().row(predicate)?;
                    let a_t = m.time_vectors().row(t)?;
                    m.core().contract_leave_one(&[a_s, a_p, a_t], 2)?
                }
            };
            for o in 0..n_entities {
                let object = EntityId::from_index(o);
                let theta = match source {
                    DistillSource::Semantic(m) => m.entity_vectors().row(object)?.dot(&h),
                    DistillSource::EpisodicAt(m, _) => m.entity_vectors().row(object)?.dot(&h),
                };
                let probability = sigmoid(theta);
                if probability >= threshold {
                    let fact = Triple {
                        subject,
                        predicate,
                        object,
                    };
                    if store.insert(fact, probability)? {
                        added += 1;
                    }
                }
            }
        }
    }
    Ok(added)
}

/// Rebinds every engram of `source` into `target` under the same time
/// labels with bit-identical traces. Both models must have the same rank.
/// Returns the number of engrams copied.
pub fn copy_engrams(source: &EpisodicModel, target: &mut EpisodicModel) -> Result<usize> {
    if source.config().rank != target.config().rank {
        return Err(Error::RankMismatch {
            expected: target.config().rank,
            actual: source.config().rank,
        });
    }
    let mut copied = 0;
    for engram in source.engrams() {
        let label = resolve_name(source.times(), engram.time)?;
        target.bind_engram(engram.trace.clone(), Some(label))?;
        copied += 1;
    }
    Ok(copied)
}
