//! Name-keyed registries for runtime-selectable strategies.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maps strategy names to constructors. Iteration order is by name so
/// listings are deterministic.
pub struct Registry<F> {
    kind: &'static str,
    entries: BTreeMap<&'static str, F>,
}

impl<F> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `ctor` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, ctor: F) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn get(&self, name: &str) -> Result<&F> {
        self.entries.get(name).ok_or_else(|| {
            Error::config(
                self.kind,
                format!("unknown {} `{name}`; known: {}", self.kind, self.names().join(", ")),
            )
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
