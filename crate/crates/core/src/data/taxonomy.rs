use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/taxonomy.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyClass {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyFile {
    pub name: String,
    pub classes: Vec<TaxonomyClass>,
}

/// Mapping from original label strings to condensed class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenreTaxonomy {
    pub name: String,
    pub class_names: Vec<String>,
    map: BTreeMap<String, usize>,
}

/// Result of condensing one item's label list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condensed {
    Class(usize),
    RejectedMultiLabel(usize),
    RejectedUnlabeled,
}

impl GenreTaxonomy {
    /// The 11-class music genre grouping shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin taxonomy is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_file(file: TaxonomyFile) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, class) in file.classes.iter().enumerate() {
            for label in &class.labels {
                if map.insert(label.clone(), id).is_some() {
                    return Err(Error::Config(format!("label {label:?} listed under more than one class")));
                }
            }
        }
        if file.classes.is_empty() {
            return Err(Error::Config("taxonomy has no classes".into()));
        }
        Ok(Self {
            name: file.name,
            class_names: file.classes.into_iter().map(|c| c.name).collect(),
            map,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Original label strings in sorted order.
    pub fn original_labels(&self) -> impl Iterator<Item = (&str, usize)> {
        self.map.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn class_of(&self, label: &str) -> Result<usize> {
        self.map.get(label).copied().ok_or_else(|| Error::Taxonomy(label.to_string()))
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Condenses an item's labels. Items must carry exactly one label;
    /// anything else is rejected rather than guessed.
    pub fn condense_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<Condensed> {
        let mut distinct: Vec<&str> = labels.iter().map(AsRef::as_ref).collect();
        distinct.sort_unstable();
        distinct.dedup();
        match distinct.as_slice() {
            [] => Ok(Condensed::RejectedUnlabeled),
            [one] => Ok(Condensed::Class(self.class_of(one)?)),
            many => Ok(Condensed::RejectedMultiLabel(many.len())),
        }
    }
}
