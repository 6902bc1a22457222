//! Name-keyed factories for interchangeable strategies.

use crate::error::{Error, Result};

type Factory<T, C> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

/// Maps names to constructors of boxed trait objects built from a config `C`.
pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: Vec<(&'static str, Factory<T, C>)>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: Vec::new() }
    }

    pub fn register(&mut self, name: &'static str, f: impl Fn(&C) -> Result<Box<T>> + Send + Sync + 'static) {
        assert!(!self.contains(name), "{} '{name}' registered twice", self.kind);
        self.entries.push((name, Box::new(f)));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.entries.iter().find(|(n, _)| *n == name) {
            Some((_, f)) => f(config),
            None => Err(Error::Config(format!(
                "unknown {} '{name}' (available: {})",
                self.kind,
                self.names().join(", ")
            ))),
        }
    }
}
