//! Gradient training of memory models against a fact store.
//!
//! Observed facts are positives; negatives are drawn per positive by
//! corrupting the object slot (or, for timed facts, the object or time
//! slot). The loss is mean binary cross-entropy through the logistic link,
//! plus L2 on the parameters the batch touches. Because the score is
//! multilinear, the gradient with respect to each slot vector is exactly
//! the leave-one-out contraction of the other slots, and the core gradient
//! is the outer product of all slot vectors; no autodiff machinery needed.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    sigmoid, EntityId, EpisodicModel, PredicateId, SemanticModel, SymbolId, TimeId,
};
use crate::store::{FactStore, Quad, Triple};
use crate::tensor::LatentVector;

/// Knobs for [`fit_semantic`] and [`fit_episodic`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Full passes over the positives.
    pub epochs: usize,
    /// Step size for plain gradient descent at epoch 1.
    pub learning_rate: f64,
    /// Per-epoch multiplicative decay of the step size; 1.0 keeps it fixed.
    /// Multiplicative models often need a large opening step to leave the
    /// flat region around small init and a small one once factors align.
    pub decay: f64,
    /// Corruption negatives drawn per positive.
    pub negatives_per_positive: usize,
    /// L2 weight on touched parameters.
    pub l2: f64,
    /// Seed for shuffling and negative sampling.
    pub seed: u64,
    /// Clamp parameters at zero after every update. Mandatory when the
    /// model runs in nonnegative mode.
    pub project_nonnegative: bool,
    /// When set, negatives are drawn once up front and every epoch takes a
    /// single step on the whole fixed batch, so the objective is the same
    /// function each epoch. When unset, each positive gets its own step
    /// with freshly drawn negatives.
    pub full_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.05,
            decay: 1.0,
            negatives_per_positive: 5,
            l2: 1e-4,
            seed: 0,
            project_nonnegative: false,
            full_batch: false,
        }
    }
}

/// Loss per epoch, in epoch order.
#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

/// What a fit run did.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// One JSON object per line, one line per epoch.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for record in &self.epochs {
            let line = serde_json::to_string(record).expect("epoch records serialize");
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    fn absorb(&mut self, other: TrainReport) {
        let offset = self.epochs.len();
        for (i, record) in other.epochs.into_iter().enumerate() {
            self.epochs.push(EpochRecord {
                epoch: offset + i + 1,
                loss: record.loss,
            });
        }
    }

    pub(crate) fn merge(mut reports: Vec<TrainReport>) -> TrainReport {
        let mut merged = TrainReport::default();
        for report in reports.drain(..) {
            merged.absorb(report);
        }
        merged
    }
}

/// Sparse gradients for a semantic model: touched embedding rows plus the
/// dense core gradient.
#[derive(Clone, Debug, Default)]
pub struct SemanticGradients {
    pub entity: BTreeMap<EntityId, Vec<f64>>,
    pub predicate: BTreeMap<PredicateId, Vec<f64>>,
    pub core: Vec<f64>,
}

/// Sparse gradients for an episodic model.
#[derive(Clone, Debug, Default)]
pub struct EpisodicGradients {
    pub entity: BTreeMap<EntityId, Vec<f64>>,
    pub predicate: BTreeMap<PredicateId, Vec<f64>>,
    pub time: BTreeMap<TimeId, Vec<f64>>,
    pub core: Vec<f64>,
}

/// `ln(1 + exp(x))` without overflow; `bce = softplus(theta) - y * theta`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_label(label: f64) -> Result<()> {
    if !label.is_finite() || !(0.0..=1.0).contains(&label) {
        return Err(Error::InvalidArgument {
            reason: format!("labels must lie in [0, 1], got {label}"),
        });
    }
    Ok(())
}

fn accumulate_row<I: SymbolId>(
    map: &mut BTreeMap<I, Vec<f64>>,
    id: I,
    rank: usize,
    weight: f64,
    direction: &LatentVector,
) {
    let entry = map.entry(id).or_insert_with(|| vec![0.0; rank]);
    for (g, d) in entry.iter_mut().zip(direction.as_slice()) {
        *g += weight * d;
    }
}

fn add_l2_rows<I: SymbolId>(
    map: &mut BTreeMap<I, Vec<f64>>,
    rows: impl Fn(I) -> Result<LatentVector>,
    l2: f64,
    loss: &mut f64,
) -> Result<()> {
    for (&id, grad) in map.iter_mut() {
        let row = rows(id)?;
        for (g, v) in grad.iter_mut().zip(row.as_slice()) {
            *g += 2.0 * l2 * v;
            *loss += l2 * v * v;
        }
    }
    Ok(())
}

/// Mean binary cross-entropy of a labeled triple batch, plus `l2` times the
/// squared norm of every touched embedding row and of the core; gradients
/// match that exact loss. Rows the batch never mentions get no gradient.
pub fn semantic_loss_and_gradients(
    model: &SemanticModel,
    batch: &[(Triple, f64)],
    l2: f64,
) -> Result<(f64, SemanticGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { what: "batch" });
    }
    let rank = model.config().rank;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = SemanticGradients {
        core: vec![0.0; model.core().values().len()],
        ..Default::default()
    };
    for (fact, label) in batch {
        check_label(*label)?;
        let a_s = model.entity_vectors().row(fact.subject)?.clone();
        let a_p = model.predicate_vectors().row(fact.predicate)?.clone();
        let a_o = model.entity_vectors().row(fact.object)?.clone();
        let theta = model.core().contract3(&a_s, &a_p, &a_o)?;
        loss += scale * (softplus(theta) - label * theta);
        let err = scale * (sigmoid(theta) - label);
        let h_s = model.core().contract_leave_one(&[&a_p, &a_o], 0)?;
        let h_p = model.core().contract_leave_one(&[&a_s, &a_o], 1)?;
        let h_o = model.core().contract_leave_one(&[&a_s, &a_p], 2)?;
        accumulate_row(&mut grads.entity, fact.subject, rank, err, &h_s);
        accumulate_row(&mut grads.predicate, fact.predicate, rank, err, &h_p);
        accumulate_row(&mut grads.entity, fact.object, rank, err, &h_o);
        let mut idx = 0;
        for r1 in 0..rank {
            let w1 = err * a_s[r1];
            for r2 in 0..rank {
                let w12 = w1 * a_p[r2];
                for r3 in 0..rank {
                    grads.core[idx] += w12 * a_o[r3];
                    idx += 1;
                }
            }
        }
    }
    add_l2_rows(
        &mut grads.entity,
        |id| model.entity_vectors().row(id).cloned(),
        l2,
        &mut loss,
    )?;
    add_l2_rows(
        &mut grads.predicate,
        |id| model.predicate_vectors().row(id).cloned(),
        l2,
        &mut loss,
    )?;
    for (g, v) in grads.core.iter_mut().zip(model.core().values()) {
        *g += 2.0 * l2 * v;
        loss += l2 * v * v;
    }
    Ok((loss, grads))
}

/// Timed-fact counterpart of [`semantic_loss_and_gradients`].
pub fn episodic_loss_and_gradients(
    model: &EpisodicModel,
    batch: &[(Quad, f64)],
    l2: f64,
) -> Result<(f64, EpisodicGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { what: "batch" });
    }
    let rank = model.config().rank;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = EpisodicGradients {
        core: vec![0.0; model.core().values().len()],
        ..Default::default()
    };
    for (fact, label) in batch {
        check_label(*label)?;
        let a_s = model.entity_vectors().row(fact.subject)?.clone();
        let a_p = model.predicate_vectors().row(fact.predicate)?.clone();
        let a_o = model.entity_vectors().row(fact.object)?.clone();
        let a_t = model.time_vectors().row(fact.time)?.clone();
        let theta = model.core().contract4(&a_s, &a_p, &a_o, &a_t)?;
        loss += scale * (softplus(theta) - label * theta);
        let err = scale * (sigmoid(theta) - label);
        let h_s = model.core().contract_leave_one(&[&a_p, &a_o, &a_t], 0)?;
        let h_p = model.core().contract_leave_one(&[&a_s, &a_o, &a_t], 1)?;
        let h_o = model.core().contract_leave_one(&[&a_s, &a_p, &a_t], 2)?;
        let h_t = model.core().contract_leave_one(&[&a_s, &a_p, &a_o], 3)?;
        accumulate_row(&mut grads.entity, fact.subject, rank, err, &h_s);
        accumulate_row(&mut grads.predicate, fact.predicate, rank, err, &h_p);
        accumulate_row(&mut grads.entity, fact.object, rank, err, &h_o);
        accumulate_row(&mut grads.time, fact.time, rank, err, &h_t);
        let mut idx = 0;
        for r1 in 0..rank {
            let w1 = err * a_s[r1];
            for r2 in 0..rank {
                let w12 = w1 * a_p[r2];
                for r3 in 0..rank {
                    let w123 = w12 * a_o[r3];
                    for r4 in 0..rank {
                        grads.core[idx] += w123 * a_t[r4];
                        idx += 1;
                    }
                }
            }
        }
    }
    add_l2_rows(
        &mut grads.entity,
        |id| model.entity_vectors().row(id).cloned(),
        l2,
        &mut loss,
    )?;
    add_l2_rows(
        &mut grads.predicate,
        |id| model.predicate_vectors().row(id).cloned(),
        l2,
        &mut loss,
    )?;
    add_l2_rows(
        &mut grads.time,
        |id| model.time_vectors().row(id).cloned(),
        l2,
        &mut loss,
    )?;
    for (g, v) in grads.core.iter_mut().zip(model.core().values()) {
        *g += 2.0 * l2 * v;
        loss += l2 * v * v;
    }
    Ok((loss, grads))
}

fn step_row(row: &mut LatentVector, grad: &[f64], lr: f64, project: bool) {
    for (v, g) in row.as_mut_slice().iter_mut().zip(grad) {
        *v -= lr * g;
        if project && *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn apply_semantic(model: &mut SemanticModel, grads: &SemanticGradients, lr: f64, project: bool) {
    for (&id, grad) in &grads.entity {
        let row = model
            .entity_vectors_mut()
            .row_mut(id)
            .expect("gradient rows exist");
        step_row(row, grad, lr, project);
    }
    for (&id, grad) in &grads.predicate {
        let row = model
            .predicate_vectors_mut()
            .row_mut(id)
            .expect("gradient rows exist");
        step_row(row, grad, lr, project);
    }
    for (v, g) in model.core_mut().values_mut().iter_mut().zip(&grads.core) {
        *v -= lr * g;
        if project && *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn apply_episodic(model: &mut EpisodicModel, grads: &EpisodicGradients, lr: f64, project: bool) {
    for (&id, grad) in &grads.entity {
        let row = model
            .entity_vectors_mut()
            .row_mut(id)
            .expect("gradient rows exist");
        step_row(row, grad, lr, project);
    }
    for (&id, grad) in &grads.predicate {
        let row = model
            .predicate_vectors_mut()
            .row_mut(id)
            .expect("gradient rows exist");
        step_row(row, grad, lr, project);
    }
    for (&id, grad) in &grads.time {
        let row = model
            .time_vectors_mut()
            .row_mut(id)
            .expect("gradient rows exist");
        step_row(row, grad, lr, project);
    }
    for (v, g) in model.core_mut().values_mut().iter_mut().zip(&grads.core) {
        *v -= lr * g;
        if project && *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn corrupt_index(rng: &mut ChaCha8Rng, vocab: usize, original: usize) -> usize {
    if vocab <= 1 {
        return original;
    }
    loop {
        let candidate = rng.gen_range(0..vocab);
        if candidate != original {
            return candidate;
        }
    }
}

fn corrupt_triple(rng: &mut ChaCha8Rng, n_entities: usize, fact: &Triple) -> Triple {
    Triple {
        object: EntityId::from_index(corrupt_index(rng, n_entities, fact.object.index())),
        ..*fact
    }
}

fn corrupt_quad(rng: &mut ChaCha8Rng, n_entities: usize, n_times: usize, fact: &Quad) -> Quad {
    // corrupt object or time, whichever is available; a coin decides when both are
    let corrupt_time = if n_times <= 1 {
        false
    } else if n_entities <= 1 {
        true
    } else {
        rng.gen_bool(0.5)
    };
    if corrupt_time {
        Quad {
            time: TimeId::from_index(corrupt_index(rng, n_times, fact.time.index())),
            ..*fact
        }
    } else {
        Quad {
            object: EntityId::from_index(corrupt_index(rng, n_entities, fact.object.index())),
            ..*fact
        }
    }
}

fn check_config(nonnegative: bool, config: &TrainConfig) -> Result<()> {
    if !config.learning_rate.is_finite() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument {
            reason: format!("learning rate must be positive, got {}", config.learning_rate),
        });
    }
    if !config.decay.is_finite() || config.decay <= 0.0 {
        return Err(Error::InvalidArgument {
            reason: format!("decay must be positive, got {}", config.decay),
        });
    }
    if !config.l2.is_finite() || config.l2 < 0.0 {
        return Err(Error::InvalidArgument {
            reason: format!("l2 weight must be nonnegative, got {}", config.l2),
        });
    }
    if nonnegative && !config.project_nonnegative {
        return Err(Error::ProjectionRequired);
    }
    Ok(())
}

/// Inside fit, parameters start finite, so a non-finite value mid-run can
/// only mean the updates blew up.
fn or_diverged<T>(result: Result<T>, epoch: usize) -> Result<T> {
    match result {
        Err(Error::NonFinite { .. }) => Err(Error::Diverged { epoch }),
        other => other,
    }
}

/// Trains a semantic model on the store's triples by gradient descent.
/// Deterministic: identical (model, store, config) inputs walk identical
/// parameter trajectories. Aborts with [`Error::Diverged`] the moment a
/// batch loss stops being finite.
pub fn fit_semantic(
    model: &mut SemanticModel,
    store: &FactStore,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if store.triples().is_empty() {
        return Err(Error::EmptyInput {
            what: "triple store",
        });
    }
    fit_semantic_facts(model, store.triples(), config)
}

/// Like [`fit_semantic`] but takes the positive list directly, repeats
/// included; a fact listed twice carries twice the weight per epoch.
pub fn fit_semantic_facts(
    model: &mut SemanticModel,
    positives: &[Triple],
    config: &TrainConfig,
) -> Result<TrainReport> {
    check_config(model.config().nonnegative, config)?;
    if positives.is_empty() {
        return Err(Error::EmptyInput {
            what: "positive set",
        });
    }
    let n_entities = model.entities().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport::default();
    if config.full_batch {
        // one fixed batch: positives plus negatives drawn once
        let mut batch: Vec<(Triple, f64)> = Vec::new();
        for positive in positives {
            batch.push((*positive, 1.0));
            for _ in 0..config.negatives_per_positive {
                batch.push((corrupt_triple(&mut rng, n_entities, positive), 0.0));
            }
        }
        for epoch in 1..=config.epochs {
            let lr = config.learning_rate * config.decay.powi(epoch as i32 - 1);
            let (loss, grads) =
                or_diverged(semantic_loss_and_gradients(model, &batch, config.l2), epoch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            apply_semantic(model, &grads, lr, config.project_nonnegative);
            report.epochs.push(EpochRecord { epoch, loss });
        }
    } else {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        for epoch in 1..=config.epochs {
            let lr = config.learning_rate * config.decay.powi(epoch as i32 - 1);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for &i in &order {
                let positive = positives[i];
                let mut batch = Vec::with_capacity(1 + config.negatives_per_positive);
                batch.push((positive, 1.0));
                for _ in 0..config.negatives_per_positive {
                    batch.push((corrupt_triple(&mut rng, n_entities, &positive), 0.0));
                }
                let (loss, grads) =
                or_diverged(semantic_loss_and_gradients(model, &batch, config.l2), epoch)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                apply_semantic(model, &grads, lr, config.project_nonnegative);
                epoch_loss += loss;
            }
            report.epochs.push(EpochRecord {
                epoch,
                loss: epoch_loss / positives.len() as f64,
            });
        }
    }
    Ok(report)
}

/// Trains an episodic model on the store's quadruples. Negatives corrupt
/// the object or the time slot. Otherwise identical to [`fit_semantic`].
pub fn fit_episodic(
    model: &mut EpisodicModel,
    store: &FactStore,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if store.quads().is_empty() {
        return Err(Error::EmptyInput { what: "quad store" });
    }
    fit_episodic_facts(model, store.quads(), config)
}

/// Like [`fit_episodic`] but takes the positive list directly, repeats
/// included.
pub fn fit_episodic_facts(
    model: &mut EpisodicModel,
    positives: &[Quad],
    config: &TrainConfig,
) -> Result<TrainReport> {
    check_config(model.config().nonnegative, config)?;
    if positives.is_empty() {
        return Err(Error::EmptyInput {
            what: "positive set",
        });
    }
    let n_entities = model.entities().len();
    let n_times = model.times().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport::default();
    if config.full_batch {
        let mut batch: Vec<(Quad, f64)> = Vec::new();
        for positive in positives {
            batch.push((*positive, 1.0));
            for _ in 0..config.negatives_per_positive {
                batch.push((corrupt_quad(&mut rng, n_entities, n_times, positive), 0.0));
            }
        }
        for epoch in 1..=config.epochs {
            let lr = config.learning_rate * config.decay.powi(epoch as i32 - 1);
            let (loss, grads) =
                or_diverged(episodic_loss_and_gradients(model, &batch, config.l2), epoch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            apply_episodic(model, &grads, lr, config.project_nonnegative);
            report.epochs.push(EpochRecord { epoch, loss });
        }
    } else {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        for epoch in 1..=config.epochs {
            let lr = config.learning_rate * config.decay.powi(epoch as i32 - 1);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for &i in &order {
                let positive = positives[i];
                let mut batch = Vec::with_capacity(1 + config.negatives_per_positive);
                batch.push((positive, 1.0));
                for _ in 0..config.negatives_per_positive {
                    batch.push((corrupt_quad(&mut rng, n_entities, n_times, &positive), 0.0));
                }
                let (loss, grads) =
                or_diverged(episodic_loss_and_gradients(model, &batch, config.l2), epoch)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                apply_episodic(model, &grads, lr, config.project_nonnegative);
                epoch_loss += loss;
            }
            report.epochs.push(EpochRecord {
                epoch,
                loss: epoch_loss / positives.len() as f64,
            });
        }
    }
    Ok(report)
}

/// Uniform object corruptions of one triple, avoiding the true object
/// whenever the vocabulary allows it.
pub fn object_corruptions(
    fact: Triple,
    n_entities: usize,
    count: usize,
    seed: u64,
) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| corrupt_triple(&mut rng, n_entities, &fact))
        .collect()
}

/// Mean raw score of probe facts versus reference negatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginReport {
    pub positive_mean: f64,
    pub negative_mean: f64,
    /// `positive_mean - negative_mean`; above zero means the probes score
    /// higher than the negatives.
    pub margin: f64,
}

/// Compares how a model scores unseen-but-plausible facts against random
/// corruptions. A clearly positive margin is the signal that the model
/// generalizes beyond its training set rather than memorizing it.
pub fn evaluate_materialization(
    model: &SemanticModel,
    probes: &[Triple],
    negatives: &[Triple],
) -> Result<MarginReport> {
    if probes.is_empty() {
        return Err(Error::EmptyInput { what: "probe set" });
    }
    if negatives.is_empty() {
        return Err(Error::EmptyInput {
            what: "negative set",
        });
    }
    let mut positive_mean = 0.0;
    for fact in probes {
        positive_mean += model.score(fact.subject, fact.predicate, fact.object)?;
    }
    positive_mean /= probes.len() as f64;
    let mut negative_mean = 0.0;
    for fact in negatives {
        negative_mean += model.score(fact.subject, fact.predicate, fact.object)?;
    }
    negative_mean /= negatives.len() as f64;
    Ok(MarginReport {
        positive_mean,
        negative_mean,
        margin: positive_mean - negative_mean,
    })
}
