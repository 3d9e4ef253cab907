//! A small name-keyed registry of strategy constructors.
//!
//! Strategy families (combiners, classifier heads, noise models) register a
//! constructor per variant name; callers resolve a name from config or CLI
//! flags at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Ctor<T> = Box<dyn Fn() -> T + Send + Sync>;

pub struct Registry<T> {
    kind: &'static str,
    entries: BTreeMap<String, (String, Ctor<T>)>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, description: &str, ctor: F) -> &mut Self
    where
        F: Fn() -> T + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), (description.to_string(), Box::new(ctor)));
        self
    }

    pub fn create(&self, name: &str) -> Result<T> {
        match self.entries.get(name) {
            Some((_, ctor)) => Ok(ctor()),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    /// `(name, description)` pairs in name order.
    pub fn describe(&self) -> Vec<(&str, &str)> {
        self.entries.iter().map(|(k, (d, _))| (k.as_str(), d.as_str())).collect()
    }
}
