//! Sub-seed derivation: `sub_seed = master ^ fnv1a64(component name)`.
//!
//! Names are fixed strings, so every subcommand and every rerun sees the same
//! seed for the same component.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

pub const PHANTOM: &str = "phantom";
pub const LAYOUT: &str = "layout";
pub const DATASET: &str = "dataset";
pub const ART: &str = "art";
pub const WERNET: &str = "wernet";
pub const TRANSFER: &str = "transfer";

/// 64-bit FNV-1a of `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn sub_seed(master: u64, name: &str) -> u64 {
    master ^ fnv1a64(name.as_bytes())
}

/// Component name of the noise draw for one view.
pub fn noise_name(view: usize) -> String {
    format!("noise/{view}")
}

/// Every seed a run derives, by component name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTable {
    pub master: u64,
    pub derived: BTreeMap<String, u64>,
}

impl SeedTable {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            derived: BTreeMap::new(),
        }
    }

    /// Derives and records the seed of `name`.
    pub fn get(&mut self, name: &str) -> u64 {
        let s = sub_seed(self.master, name);
        self.derived.insert(name.to_owned(), s);
        s
    }
}
