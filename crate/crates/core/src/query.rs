//! Query evaluation: conditional and marginal distributions over one free
//! slot, joint ranking by enumeration, seeded sampling, and embedding-space
//! association.
//!
//! Every single-slot query follows the same route. The non-free slots are
//! turned into latent vectors (a fixed symbol contributes its embedding row,
//! a clamped slot contributes the given vector, a marginalized slot
//! contributes the sum of its vocabulary's rows, i.e. the image of the
//! all-ones indicator over that vocabulary), the core is contracted down to
//! a single query vector `h`, and each candidate scores `dot(candidate, h)`.
//! Scores become probabilities either through a softmax with inverse
//! temperature beta, or, on nonnegative models, by direct normalization
//! ("linear" scoring), under which marginalized slots are summed out exactly.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    EmbeddingTable, EntityId, EpisodicModel, Mode, PredicateId, SemanticModel, SymbolId,
    TensorMemory, TimeId,
};
use crate::tensor::LatentVector;

/// Largest tuple count the joint-enumeration paths will walk.
pub const JOINT_ENUMERATION_CAP: usize = 1_000_000;

/// How one slot of a query is bound.
#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    /// The slot holds this vocabulary index.
    Fixed(usize),
    /// The slot ranges over its vocabulary; this is what the query predicts.
    Free,
    /// The slot is summed out (nonnegative models only).
    Marginalized,
    /// The slot is pinned to an explicit latent vector instead of a symbol.
    Clamped(LatentVector),
}

impl From<EntityId> for Slot {
    fn from(id: EntityId) -> Self {
        Slot::Fixed(id.index())
    }
}

impl From<PredicateId> for Slot {
    fn from(id: PredicateId) -> Self {
        Slot::Fixed(id.index())
    }
}

impl From<TimeId> for Slot {
    fn from(id: TimeId) -> Self {
        Slot::Fixed(id.index())
    }
}

/// Slot bindings for a whole tuple, in mode order. Triple patterns address
/// semantic models, quadruple patterns episodic ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotPattern {
    slots: Vec<Slot>,
}

impl SlotPattern {
    /// (subject, predicate, object) pattern.
    pub fn triple(subject: Slot, predicate: Slot, object: Slot) -> Self {
        Self {
            slots: vec![subject, predicate, object],
        }
    }

    /// (subject, predicate, object, time) pattern.
    pub fn quad(subject: Slot, predicate: Slot, object: Slot, time: Slot) -> Self {
        Self {
            slots: vec![subject, predicate, object, time],
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Position of the unique free slot, if the pattern has exactly one.
    pub fn free_position(&self) -> Option<usize> {
        let mut found = None;
        for (i, slot) in self.slots.iter().enumerate() {
            if matches!(slot, Slot::Free) {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }
}

/// How scores are turned into probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    /// `p(c) proportional to exp(beta * score(c))`. Beta must be finite
    /// and nonnegative; zero gives the uniform distribution.
    Softmax(f64),
    /// `p(c) proportional to score(c)` directly. Only meaningful on
    /// nonnegative models, where scores act as unnormalized probabilities;
    /// this is the mode under which marginalization is exact.
    Linear,
}

impl std::str::FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("linear") {
            return Ok(Beta::Linear);
        }
        let value: f64 = s.parse().map_err(|_| Error::InvalidArgument {
            reason: format!("beta must be a number or \"linear\", got {s:?}"),
        })?;
        Ok(Beta::Softmax(value))
    }
}

/// Distribution over the free slot's vocabulary.
#[derive(Clone, Debug)]
pub struct QueryResult {
    /// Which mode the free slot occupied.
    pub mode: Mode,
    /// Candidate vocabulary indices, in id order.
    pub candidates: Vec<usize>,
    /// Raw scores `dot(candidate, h)`, aligned with `candidates`.
    pub scores: Vec<f64>,
    /// Normalized probabilities, aligned with `candidates`; sums to 1.
    pub probabilities: Vec<f64>,
    /// The scoring rule that produced `probabilities`.
    pub beta: Beta,
}

impl QueryResult {
    /// Candidates ordered by descending probability, ties by lower id.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            self.probabilities[b]
                .partial_cmp(&self.probabilities[a])
                .expect("probabilities are finite")
                .then_with(|| self.candidates[a].cmp(&self.candidates[b]))
        });
        order.into_iter().map(|i| self.candidates[i]).collect()
    }

    /// The most probable candidate (lowest id on ties).
    pub fn top(&self) -> Option<usize> {
        self.ranked().first().copied()
    }
}

/// Softmax with inverse temperature, shifted by the maximum score so large
/// inputs cannot overflow. Adding any constant to all scores leaves the
/// result unchanged.
pub fn softmax_probabilities(scores: &[f64], beta: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (beta * (s - max)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

fn linear_probabilities(scores: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = scores.iter().sum();
    if sum == 0.0 {
        return Err(Error::AllZeroScores);
    }
    Ok(scores.iter().map(|s| s / sum).collect())
}

fn check_beta<M: TensorMemory>(model: &M, beta: Beta) -> Result<()> {
    match beta {
        Beta::Softmax(b) => {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidBeta { value: b });
            }
        }
        Beta::Linear => {
            if !model.nonnegative() {
                return Err(Error::LinearScoringNeedsNonnegative);
            }
        }
    }
    Ok(())
}

fn probabilities_for(beta: Beta, scores: &[f64]) -> Result<Vec<f64>> {
    match beta {
        Beta::Softmax(b) => Ok(softmax_probabilities(scores, b)),
        Beta::Linear => linear_probabilities(scores),
    }
}

/// Resolves the non-free slots of `pattern` into latent vectors, in mode
/// order, and returns them with the free slot's position.
fn resolve_pattern<M: TensorMemory>(
    model: &M,
    pattern: &SlotPattern,
) -> Result<(Vec<LatentVector>, usize)> {
    let modes = model.modes();
    if pattern.slots().len() != modes.len() {
        return Err(Error::InvalidPattern {
            reason: format!(
                "pattern has {} slots but the model scores {}-tuples",
                pattern.slots().len(),
                modes.len()
            ),
        });
    }
    let free = pattern.free_position().ok_or_else(|| Error::InvalidPattern {
        reason: "exactly one slot must be free".to_string(),
    })?;
    let mut fixed = Vec::with_capacity(modes.len() - 1);
    for (position, (slot, &mode)) in pattern.slots().iter().zip(modes).enumerate() {
        if position == free {
            continue;
        }
        let vector = match slot {
            Slot::Free => unreachable!("free_position returned a unique index"),
            Slot::Fixed(id) => {
                if *id >= model.vocab_len(mode) {
                    return Err(Error::UnknownSymbol {
                        kind: mode.label(),
                        what: format!("id {id}"),
                    });
                }
                model.vector(mode, *id)?.clone()
            }
            Slot::Clamped(v) => {
                if v.len() != model.rank() {
                    return Err(Error::DimensionMismatch {
                        mode: position,
                        expected: model.rank(),
                        actual: v.len(),
                    });
                }
                if model.nonnegative() && !v.is_nonnegative() {
                    return Err(Error::NegativeInNonnegative {
                        context: format!("clamped vector in the {mode} slot"),
                    });
                }
                v.clone()
            }
            Slot::Marginalized => {
                if !model.nonnegative() {
                    return Err(Error::MarginalizationNeedsNonnegative);
                }
                model.vocab_sum(mode)
            }
        };
        fixed.push(vector);
    }
    Ok((fixed, free))
}

/// Distribution over the free slot given the bindings of the others.
///
/// `P(free = c | bindings) proportional to exp(beta * dot(a_c, h))` under
/// [`Beta::Softmax`], or to `dot(a_c, h)` under [`Beta::Linear`], where `h`
/// is the core contracted with every bound slot's vector.
pub fn conditional_distribution<M: TensorMemory>(
    model: &M,
    pattern: &SlotPattern,
    beta: Beta,
) -> Result<QueryResult> {
    check_beta(model, beta)?;
    let (fixed, free) = resolve_pattern(model, pattern)?;
    let free_mode = model.modes()[free];
    let n = model.vocab_len(free_mode);
    if n == 0 {
        return Err(Error::EmptyVocabulary {
            what: free_mode.label(),
        });
    }
    let refs: Vec<&LatentVector> = fixed.iter().collect();
    let h = model.core().contract_leave_one(&refs, free)?;
    let mut scores = Vec::with_capacity(n);
    for c in 0..n {
        scores.push(model.vector(free_mode, c)?.dot(&h));
    }
    let probabilities = probabilities_for(beta, &scores)?;
    Ok(QueryResult {
        mode: free_mode,
        candidates: (0..n).collect(),
        scores,
        probabilities,
        beta,
    })
}

/// Like [`conditional_distribution`], but requiring at least one
/// marginalized slot and linear scoring, the combination under which each
/// candidate's score equals the exact sum of the joint score over every
/// value of the marginalized slots.
pub fn marginal_distribution<M: TensorMemory>(
    model: &M,
    pattern: &SlotPattern,
    beta: Beta,
) -> Result<QueryResult> {
    if !model.nonnegative() {
        return Err(Error::MarginalizationNeedsNonnegative);
    }
    if !pattern.slots().iter().any(|s| matches!(s, Slot::Marginalized)) {
        return Err(Error::InvalidPattern {
            reason: "marginal queries need at least one marginalized slot".to_string(),
        });
    }
    if beta != Beta::Linear {
        return Err(Error::InvalidArgument {
            reason: "marginal queries require linear scoring; softmax does not commute with the sum"
                .to_string(),
        });
    }
    conditional_distribution(model, pattern, Beta::Linear)
}

fn draw(probabilities: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probabilities.len() - 1
}

/// Draws `n` candidates from the conditional distribution. Each call owns
/// an isolated generator seeded with `seed`, so equal seeds give equal
/// draws regardless of what ran before.
pub fn sample<M: TensorMemory>(
    model: &M,
    pattern: &SlotPattern,
    beta: Beta,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let result = conditional_distribution(model, pattern, beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| result.candidates[draw(&result.probabilities, &mut rng)])
        .collect())
}

/// One fully bound timed fact with its score and joint probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTriple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
    pub score: f64,
    pub probability: f64,
}

/// One (predicate, object) completion with its score and joint probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub predicate: PredicateId,
    pub object: EntityId,
    pub score: f64,
    pub probability: f64,
}

fn top_k_order(scores: &[f64], probabilities: &[f64], k: usize) -> Vec<usize> {
    debug_assert_eq!(scores.len(), probabilities.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        probabilities[b]
            .partial_cmp(&probabilities[a])
            .expect("probabilities are finite")
            .then_with(|| a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Ranks every (subject, predicate, object) triple against an explicit
/// latent vector in the time slot, normalizing over the whole tuple space.
/// This one routine backs both recall by time id and decoding a perceived
/// trace, so the two are the same computation by construction.
pub fn rank_triples_with_time_vector(
    model: &EpisodicModel,
    h: &LatentVector,
    beta: Beta,
    top_k: usize,
) -> Result<Vec<ScoredTriple>> {
    check_beta(model, beta)?;
    if h.len() != model.config().rank {
        return Err(Error::DimensionMismatch {
            mode: 3,
            expected: model.config().rank,
            actual: h.len(),
        });
    }
    if model.nonnegative() && !h.is_nonnegative() {
        return Err(Error::NegativeInNonnegative {
            context: "time-slot vector".to_string(),
        });
    }
    let n_e = model.entities().len();
    let n_p = model.predicates().len();
    if n_e == 0 || n_p == 0 {
        return Err(Error::EmptyVocabulary {
            what: if n_e == 0 { "entity" } else { "predicate" },
        });
    }
    let tuples = (n_e as u128) * (n_p as u128) * (n_e as u128);
    if tuples > JOINT_ENUMERATION_CAP as u128 {
        return Err(Error::VocabularyTooLarge {
            tuples,
            cap: JOINT_ENUMERATION_CAP,
        });
    }
    // Layered contraction: time out first, then subject, then predicate;
    // objects finish with a dot product each.
    let with_time = model.core().contract_mode(h, 3)?;
    let mut scores = Vec::with_capacity(tuples as usize);
    for s in model.entities().ids() {
        let a_s = model.entity_vectors().row(s)?;
        let with_subject = with_time.contract_mode(a_s, 0)?;
        for p in model.predicates().ids() {
            let a_p = model.predicate_vectors().row(p)?;
            let h_o = with_subject.contract_mode(a_p, 0)?;
            let h_o = LatentVector::new(h_o.values().to_vec())?;
            for o in model.entities().ids() {
                scores.push(model.entity_vectors().row(o)?.dot(&h_o));
            }
        }
    }
    let probabilities = probabilities_for(beta, &scores)?;
    let order = top_k_order(&scores, &probabilities, top_k);
    let mut out = Vec::with_capacity(order.len());
    for idx in order {
        let o = idx % n_e;
        let p = (idx / n_e) % n_p;
        let s = idx / (n_e * n_p);
        out.push(ScoredTriple {
            subject: EntityId::from_index(s),
            predicate: PredicateId::from_index(p),
            object: EntityId::from_index(o),
            score: scores[idx],
            probability: probabilities[idx],
        });
    }
    Ok(out)
}

/// What happened at time `t`: the `top_k` most probable triples under the
/// joint conditional distribution given `t`.
pub fn recall(
    model: &EpisodicModel,
    t: TimeId,
    beta: Beta,
    top_k: usize,
) -> Result<Vec<ScoredTriple>> {
    let a_t = model.time_vectors().row(t)?.clone();
    rank_triples_with_time_vector(model, &a_t, beta, top_k)
}

/// Draws `n` triples for time `t` by sampling slots in sequence: subject
/// first (predicate and object summed out), then predicate given subject,
/// then object given both. The sum-out steps need a nonnegative model.
pub fn recall_sample(
    model: &EpisodicModel,
    t: TimeId,
    beta: Beta,
    n: usize,
    seed: u64,
) -> Result<Vec<(EntityId, PredicateId, EntityId)>> {
    if !model.nonnegative() {
        return Err(Error::MarginalizationNeedsNonnegative);
    }
    model.times().check(t)?;
    let subject_dist = conditional_distribution(
        model,
        &SlotPattern::quad(Slot::Free, Slot::Marginalized, Slot::Marginalized, t.into()),
        beta,
    )?;
    let mut predicate_dists: HashMap<usize, QueryResult> = HashMap::new();
    let mut object_dists: HashMap<(usize, usize), QueryResult> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = subject_dist.candidates[draw(&subject_dist.probabilities, &mut rng)];
        let p_dist = match predicate_dists.entry(s) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(conditional_distribution(
                model,
                &SlotPattern::quad(Slot::Fixed(s), Slot::Free, Slot::Marginalized, t.into()),
                beta,
            )?),
        };
        let p = p_dist.candidates[draw(&p_dist.probabilities, &mut rng)];
        let o_dist = match object_dists.entry((s, p)) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(conditional_distribution(
                model,
                &SlotPattern::quad(Slot::Fixed(s), Slot::Fixed(p), Slot::Free, t.into()),
                beta,
            )?),
        };
        let o = o_dist.candidates[draw(&o_dist.probabilities, &mut rng)];
        out.push((
            EntityId::from_index(s),
            PredicateId::from_index(p),
            EntityId::from_index(o),
        ));
    }
    Ok(out)
}

/// What the model holds about an entity: the `top_k` (predicate, object)
/// completions with the entity in the subject slot, normalized over all
/// such pairs.
pub fn entity_profile(
    model: &SemanticModel,
    entity: EntityId,
    beta: Beta,
    top_k: usize,
) -> Result<Vec<ScoredPair>> {
    check_beta(model, beta)?;
    let a_s = model.entity_vectors().row(entity)?;
    let n_e = model.entities().len();
    let n_p = model.predicates().len();
    if n_p == 0 {
        return Err(Error::EmptyVocabulary { what: "predicate" });
    }
    let pairs = (n_p as u128) * (n_e as u128);
    if pairs > JOINT_ENUMERATION_CAP as u128 {
        return Err(Error::VocabularyTooLarge {
            tuples: pairs,
            cap: JOINT_ENUMERATION_CAP,
        });
    }
    let with_subject = model.core().contract_mode(a_s, 0)?;
    let mut scores = Vec::with_capacity(pairs as usize);
    for p in model.predicates().ids() {
        let a_p = model.predicate_vectors().row(p)?;
        let h_o = with_subject.contract_mode(a_p, 0)?;
        let h_o = LatentVector::new(h_o.values().to_vec())?;
        for o in model.entities().ids() {
            scores.push(model.entity_vectors().row(o)?.dot(&h_o));
        }
    }
    let probabilities = probabilities_for(beta, &scores)?;
    let order = top_k_order(&scores, &probabilities, top_k);
    Ok(order
        .into_iter()
        .map(|idx| ScoredPair {
            predicate: PredicateId::from_index(idx / n_e),
            object: EntityId::from_index(idx % n_e),
            score: scores[idx],
            probability: probabilities[idx],
        })
        .collect())
}

/// A neighbor in embedding space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Association<I> {
    pub id: I,
    pub similarity: f64,
}

/// The `k` nearest neighbors of a symbol by cosine similarity, excluding
/// the symbol itself. Zero-norm rows have similarity 0 by convention; ties
/// rank the lower id first.
pub fn associate<I: SymbolId>(
    table: &EmbeddingTable<I>,
    id: I,
    k: usize,
) -> Result<Vec<Association<I>>> {
    let target = table.row(id)?;
    if k > table.len() {
        return Err(Error::InvalidArgument {
            reason: format!("top-k of {k} exceeds the vocabulary size {}", table.len()),
        });
    }
    let target_norm = target.norm();
    let mut neighbors: Vec<Association<I>> = table
        .iter()
        .filter(|(other, _)| *other != id)
        .map(|(other, row)| {
            let denominator = target_norm * row.norm();
            let similarity = if denominator == 0.0 {
                0.0
            } else {
                target.dot(row) / denominator
            };
            Association {
                id: other,
                similarity,
            }
        })
        .collect();
    neighbors.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("similarities are finite")
            .then_with(|| a.id.cmp(&b.id))
    });
    neighbors.truncate(k);
    Ok(neighbors)
}
