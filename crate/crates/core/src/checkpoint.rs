//! Model checkpoints: a one-line JSON header describing the model, then
//! every parameter as little-endian f64 in a fixed order (entity rows,
//! predicate rows, time rows, core values). The encoding is canonical, so
//! saving a loaded model reproduces the original file byte for byte.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Engram, EpisodicModel, ModelConfig, SemanticModel, SymbolId, TimeId,
};
use crate::tensor::{CoreTensor, LatentVector};

pub const FORMAT_VERSION: u32 = 1;

const KIND_EPISODIC: &str = "episodic";
const KIND_SEMANTIC: &str = "semantic";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    config: ModelConfig,
    entities: Vec<String>,
    predicates: Vec<String>,
    /// Empty for semantic models.
    times: Vec<String>,
    /// Time indices of bound engrams, in binding order. Traces as they
    /// were at binding follow the core in the binary section; the time
    /// rows themselves may have drifted under training.
    engrams: Vec<usize>,
    /// Total f64 count in the binary section; guards truncation.
    values: usize,
}

/// Either kind of model, as found in a checkpoint file.
pub enum Checkpoint {
    Episodic(EpisodicModel),
    Semantic(SemanticModel),
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Corrupt {
        reason: reason.into(),
    }
}

fn push_rows(bytes: &mut Vec<u8>, rows: impl Iterator<Item = f64>) {
    for v in rows {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode(header: &Header, arrays: &[&[f64]]) -> Vec<u8> {
    let mut bytes = serde_json::to_string(header)
        .expect("header serializes")
        .into_bytes();
    bytes.push(b'\n');
    for array in arrays {
        push_rows(&mut bytes, array.iter().copied());
    }
    bytes
}

fn episodic_bytes(model: &EpisodicModel) -> Vec<u8> {
    let rank = model.config().rank;
    let n = model.entities().len() + model.predicates().len() + model.times().len();
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: KIND_EPISODIC.to_string(),
        config: model.config().clone(),
        entities: model.entities().names().map(str::to_string).collect(),
        predicates: model.predicates().names().map(str::to_string).collect(),
        times: model.times().names().map(str::to_string).collect(),
        engrams: model.engrams().iter().map(|e| e.time.index()).collect(),
        values: n * rank + model.core().values().len() + model.engrams().len() * rank,
    };
    let mut arrays: Vec<&[f64]> = Vec::new();
    for (_, row) in model.entity_vectors().iter() {
        arrays.push(row.as_slice());
    }
    for (_, row) in model.predicate_vectors().iter() {
        arrays.push(row.as_slice());
    }
    for (_, row) in model.time_vectors().iter() {
        arrays.push(row.as_slice());
    }
    arrays.push(model.core().values());
    for engram in model.engrams() {
        arrays.push(engram.trace.as_slice());
    }
    encode(&header, &arrays)
}

fn semantic_bytes(model: &SemanticModel) -> Vec<u8> {
    let rank = model.config().rank;
    let n = model.entities().len() + model.predicates().len();
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: KIND_SEMANTIC.to_string(),
        config: model.config().clone(),
        entities: model.entities().names().map(str::to_string).collect(),
        predicates: model.predicates().names().map(str::to_string).collect(),
        times: Vec::new(),
        engrams: Vec::new(),
        values: n * rank + model.core().values().len(),
    };
    let mut arrays: Vec<&[f64]> = Vec::new();
    for (_, row) in model.entity_vectors().iter() {
        arrays.push(row.as_slice());
    }
    for (_, row) in model.predicate_vectors().iter() {
        arrays.push(row.as_slice());
    }
    arrays.push(model.core().values());
    encode(&header, &arrays)
}

pub fn save_episodic(model: &EpisodicModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, episodic_bytes(model))?;
    Ok(())
}

pub fn save_semantic(model: &SemanticModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, semantic_bytes(model))?;
    Ok(())
}

/// Splits a checkpoint file into its parsed header and f64 payload,
/// verifying the payload length against the header's declaration.
fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| corrupt("no header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let payload = &bytes[newline + 1..];
    let declared = header.values * 8;
    if payload.len() != declared {
        return Err(corrupt(format!(
            "binary section holds {} bytes but the header declares {declared}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}

fn check_names(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(corrupt(format!("empty {what} name")));
        }
        if !seen.insert(name.as_str()) {
            return Err(corrupt(format!("duplicate {what} name {name:?}")));
        }
    }
    Ok(())
}

fn take_row<'a>(values: &mut std::slice::Iter<'a, f64>, rank: usize) -> Vec<f64> {
    values.by_ref().take(rank).copied().collect()
}

fn episodic_from(header: Header, values: Vec<f64>) -> Result<EpisodicModel> {
    let rank = header.config.rank;
    let expected =
        (header.entities.len() + header.predicates.len() + header.times.len()) * rank
            + rank.pow(4)
            + header.engrams.len() * rank;
    if header.values != expected {
        return Err(corrupt(format!(
            "header declares {} values but the vocabulary implies {expected}",
            header.values
        )));
    }
    check_names(&header.entities, "entity")?;
    check_names(&header.predicates, "predicate")?;
    check_names(&header.times, "time")?;
    let mut model = EpisodicModel::new(header.config);
    let mut iter = values.iter();
    for name in &header.entities {
        let id = model.register_entity(name);
        model.set_entity_vector(id, LatentVector::new(take_row(&mut iter, rank))?)?;
    }
    for name in &header.predicates {
        let id = model.register_predicate(name);
        model.set_predicate_vector(id, LatentVector::new(take_row(&mut iter, rank))?)?;
    }
    for name in &header.times {
        let id = model.register_time(name);
        model.set_time_vector(id, LatentVector::new(take_row(&mut iter, rank))?)?;
    }
    model.set_core(CoreTensor::from_values(
        4,
        rank,
        iter.by_ref().take(rank.pow(4)).copied().collect(),
    )?)?;
    let mut bound = HashSet::new();
    for &index in &header.engrams {
        if index >= header.times.len() || !bound.insert(index) {
            return Err(corrupt(format!("invalid engram time index {index}")));
        }
        let time = TimeId::from_index(index);
        let trace = LatentVector::new(take_row(&mut iter, rank))?;
        model.push_engram_record(Engram { time, trace });
    }
    Ok(model)
}

fn semantic_from(header: Header, values: Vec<f64>) -> Result<SemanticModel> {
    let rank = header.config.rank;
    let expected = (header.entities.len() + header.predicates.len()) * rank + rank.pow(3);
    if header.values != expected {
        return Err(corrupt(format!(
            "header declares {} values but the vocabulary implies {expected}",
            header.values
        )));
    }
    if !header.times.is_empty() || !header.engrams.is_empty() {
        return Err(corrupt("semantic checkpoint carries time data"));
    }
    check_names(&header.entities, "entity")?;
    check_names(&header.predicates, "predicate")?;
    let mut model = SemanticModel::new(header.config);
    let mut iter = values.iter();
    for name in &header.entities {
        let id = model.register_entity(name);
        model.set_entity_vector(id, LatentVector::new(take_row(&mut iter, rank))?)?;
    }
    for name in &header.predicates {
        let id = model.register_predicate(name);
        model.set_predicate_vector(id, LatentVector::new(take_row(&mut iter, rank))?)?;
    }
    model.set_core(CoreTensor::from_values(3, rank, iter.copied().collect())?)?;
    Ok(model)
}

/// Loads whichever model kind the file holds.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let (header, values) = decode(&bytes)?;
    match header.kind.as_str() {
        KIND_EPISODIC => Ok(Checkpoint::Episodic(episodic_from(header, values)?)),
        KIND_SEMANTIC => Ok(Checkpoint::Semantic(semantic_from(header, values)?)),
        other => Err(corrupt(format!("unknown model kind {other:?}"))),
    }
}

pub fn load_episodic(path: impl AsRef<Path>) -> Result<EpisodicModel> {
    match load_checkpoint(path)? {
        Checkpoint::Episodic(model) => Ok(model),
        Checkpoint::Semantic(_) => Err(Error::KindMismatch {
            expected: KIND_EPISODIC,
            found: KIND_SEMANTIC.to_string(),
        }),
    }
}

pub fn load_semantic(path: impl AsRef<Path>) -> Result<SemanticModel> {
    match load_checkpoint(path)? {
        Checkpoint::Semantic(model) => Ok(model),
        Checkpoint::Episodic(_) => Err(Error::KindMismatch {
            expected: KIND_SEMANTIC,
            found: KIND_EPISODIC.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityId, PredicateId};
    use crate::store::FactStore;
    use crate::train::{fit_episodic, TrainConfig};

    fn trained_episodic() -> EpisodicModel {
        let mut store = FactStore::new();
        store.add_quad("cat", "chases", "mouse", "monday");
        store.add_quad("dog", "chases", "cat", "tuesday");
        let mut m = EpisodicModel::from_store(&store, ModelConfig::new(3).seed(7));
        m.bind_engram(LatentVector::new(vec![0.4, 0.1, 0.9]).unwrap(), Some("vivid"))
            .unwrap();
        let config = TrainConfig {
            epochs: 10,
            learning_rate: 0.4,
            ..TrainConfig::default()
        };
        fit_episodic(&mut m, &store, &config).unwrap();
        m
    }

    #[test]
    fn episodic_round_trip_is_bit_exact_and_byte_stable() {
        let m = trained_episodic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_episodic(&m, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = load_episodic(&path).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.engrams().len(), 1);
        // scores match bit for bit
        let s = m.entities().id("cat").unwrap();
        let p = m.predicates().id("chases").unwrap();
        let o = m.entities().id("mouse").unwrap();
        let t = m.times().id("monday").unwrap();
        assert_eq!(
            m.score(s, p, o, t).unwrap().to_bits(),
            loaded.score(s, p, o, t).unwrap().to_bits()
        );
        // saving the loaded model reproduces the file byte for byte
        let path2 = dir.path().join("model2.ckpt");
        save_episodic(&loaded, &path2).unwrap();
        assert_eq!(first, fs::read(&path2).unwrap());
    }

    #[test]
    fn semantic_round_trip_is_bit_exact() {
        let mut m = SemanticModel::new(ModelConfig::new(4).nonnegative(true).seed(3));
        for name in ["a", "b", "c"] {
            m.register_entity(name);
        }
        m.register_predicate("p");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sem.ckpt");
        save_semantic(&m, &path).unwrap();
        let loaded = load_semantic(&path).unwrap();
        assert_eq!(loaded, m);
        let theta = m
            .score(
                EntityId::from_index(0),
                PredicateId::from_index(0),
                EntityId::from_index(2),
            )
            .unwrap();
        let theta2 = loaded
            .score(
                EntityId::from_index(0),
                PredicateId::from_index(0),
                EntityId::from_index(2),
            )
            .unwrap();
        assert_eq!(theta.to_bits(), theta2.to_bits());
    }

    #[test]
    fn custom_init_scale_survives_reload_and_header_omission_defaults_it() {
        let mut m = SemanticModel::new(ModelConfig::new(3).seed(5).init_scale(0.6));
        m.register_entity("a");
        m.register_predicate("p");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sem.ckpt");
        save_semantic(&m, &path).unwrap();
        let loaded = load_semantic(&path).unwrap();
        assert_eq!(loaded.config().init_scale, 0.6);
        assert_eq!(loaded, m);

        // Headers written before the knob existed carry no init_scale
        // field; they must load with the old implicit default.
        let bytes = fs::read(&path).unwrap();
        let split = bytes.iter().position(|b| *b == b'\n').unwrap();
        let text = String::from_utf8_lossy(&bytes[..split]).replace(",\"init_scale\":0.6", "");
        assert_ne!(text.len(), split, "header should have named the scale");
        let mut legacy = text.into_bytes();
        legacy.extend_from_slice(&bytes[split..]);
        let legacy_path = dir.path().join("legacy.ckpt");
        fs::write(&legacy_path, &legacy).unwrap();
        let old = load_semantic(&legacy_path).unwrap();
        assert_eq!(old.config().init_scale, crate::model::DEFAULT_INIT_SCALE);
    }

    #[test]
    fn engram_protection_survives_reload() {
        let m = trained_episodic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_episodic(&m, &path).unwrap();
        let mut loaded = load_episodic(&path).unwrap();
        let vivid = loaded.times().id("vivid").unwrap();
        let err = loaded.set_time_vector(vivid, LatentVector::zeros(3));
        assert!(matches!(err, Err(Error::EngramBound { .. })));
    }

    #[test]
    fn truncated_and_padded_files_are_rejected() {
        let m = trained_episodic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_episodic(&m, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let cut = dir.path().join("cut.ckpt");
        fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_episodic(&cut), Err(Error::Corrupt { .. })));

        let padded = dir.path().join("padded.ckpt");
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0u8; 8]);
        fs::write(&padded, &longer).unwrap();
        assert!(matches!(load_episodic(&padded), Err(Error::Corrupt { .. })));

        let headerless = dir.path().join("headerless.ckpt");
        fs::write(&headerless, &bytes[bytes.len() - 16..]).unwrap();
        assert!(matches!(load_episodic(&headerless), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn version_and_kind_mismatches_name_both_sides() {
        let m = trained_episodic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_episodic(&m, &path).unwrap();

        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|b| *b == b'\n').unwrap()])
            .replace("\"format_version\":1", "\"format_version\":9");
        let mut tampered = text.into_bytes();
        tampered.push(b'\n');
        tampered.extend_from_slice(&bytes[bytes.iter().position(|b| *b == b'\n').unwrap() + 1..]);
        let future = dir.path().join("future.ckpt");
        fs::write(&future, &tampered).unwrap();
        match load_episodic(&future) {
            Err(Error::VersionMismatch { found, supported }) => {
                assert_eq!(found, 9);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("expected version mismatch, got {other:?}"),
        }

        match load_semantic(&path) {
            Err(Error::KindMismatch { expected, found }) => {
                assert_eq!(expected, "semantic");
                assert_eq!(found, "episodic");
            }
            other => panic!("expected kind mismatch, got {other:?}"),
        }
    }
}
