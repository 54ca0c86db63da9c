//! Ground-truth fact storage and tab-separated ingestion.
//!
//! A [`FactStore`] holds observed facts with set semantics, together with
//! the registries its typed ids index into. Three-column rows are plain
//! triples, four-column rows are timed quadruples; one file may mix both.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{EntityId, PredicateId, Registry, TimeId};

/// An untimed (subject, predicate, object) fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
}

/// A timed (subject, predicate, object, time) fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quad {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
    pub time: TimeId,
}

impl Quad {
    /// The fact with its time stripped.
    pub fn triple(&self) -> Triple {
        Triple {
            subject: self.subject,
            predicate: self.predicate,
            object: self.object,
        }
    }
}

/// Deduplicated facts plus the vocabularies they are expressed in.
/// Insertion order is preserved, so ingesting the same file always produces
/// the same store.
#[derive(Clone, Debug, Default)]
pub struct FactStore {
    entities: Registry<EntityId>,
    predicates: Registry<PredicateId>,
    times: Registry<TimeId>,
    triples: Vec<Triple>,
    quads: Vec<Quad>,
    triple_set: HashSet<Triple>,
    quad_set: HashSet<Quad>,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
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

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn quads(&self) -> &[Quad] {
        &self.quads
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.quads.is_empty()
    }

    /// Registers the names and records the triple; duplicates are dropped.
    /// Returns the typed fact either way.
    pub fn add_triple(&mut self, subject: &str, predicate: &str, object: &str) -> Triple {
        let fact = Triple {
            subject: self.entities.register(subject),
            predicate: self.predicates.register(predicate),
            object: self.entities.register(object),
        };
        if self.triple_set.insert(fact) {
            self.triples.push(fact);
        }
        fact
    }

    /// Registers the names and records the quadruple; duplicates are dropped.
    pub fn add_quad(&mut self, subject: &str, predicate: &str, object: &str, time: &str) -> Quad {
        let fact = Quad {
            subject: self.entities.register(subject),
            predicate: self.predicates.register(predicate),
            object: self.entities.register(object),
            time: self.times.register(time),
        };
        if self.quad_set.insert(fact) {
            self.quads.push(fact);
        }
        fact
    }

    pub fn contains_triple(&self, fact: &Triple) -> bool {
        self.triple_set.contains(fact)
    }

    pub fn contains_quad(&self, fact: &Quad) -> bool {
        self.quad_set.contains(fact)
    }

    /// Ingests tab-separated facts from a reader. Rows have three columns
    /// (triple) or four (quadruple); lines starting with `#` and blank lines
    /// are skipped. Any other shape, or an empty column, fails with the
    /// 1-based line number.
    pub fn ingest<R: BufRead>(&mut self, reader: R) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let columns: Vec<&str> = trimmed.split('\t').collect();
            if columns.iter().any(|c| c.is_empty()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty column".to_string(),
                });
            }
            match columns.as_slice() {
                [s, p, o] => {
                    let before = self.triples.len();
                    self.add_triple(s, p, o);
                    report.triples_read += 1;
                    report.triples_new += self.triples.len() - before;
                }
                [s, p, o, t] => {
                    let before = self.quads.len();
                    self.add_quad(s, p, o, t);
                    report.quads_read += 1;
                    report.quads_new += self.quads.len() - before;
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected 3 or 4 tab-separated columns, got {}", other.len()),
                    });
                }
            }
        }
        Ok(report)
    }

    /// Ingests a tab-separated fact file from disk.
    pub fn ingest_path<P: AsRef<Path>>(&mut self, path: P) -> Result<IngestReport> {
        let file = std::fs::File::open(path)?;
        self.ingest(std::io::BufReader::new(file))
    }

    /// Loads a fact file into a fresh store.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut store = Self::new();
        store.ingest_path(path)?;
        Ok(store)
    }
}

/// What an ingest pass saw and what it kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub triples_read: usize,
    pub triples_new: usize,
    pub quads_read: usize,
    pub quads_new: usize,
}
