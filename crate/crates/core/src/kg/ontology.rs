use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{SAME_AS_PREDICATE, TYPE_PREDICATE};

/// What a predicate's objects denote.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    #[default]
    Literal,
    /// Objects name entities of this ontology type and are candidates for
    /// object resolution.
    Entity(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDef {
    /// `predicate` or `predicate.r_predicate` for relationship-node fields.
    pub name: String,
    #[serde(default)]
    pub range: Range,
    /// Single-valued per subject; competing values are treated as disagreement.
    #[serde(default)]
    pub functional: bool,
}

/// Registry of KG types and predicate paths.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "OntologyFile", into = "OntologyFile")]
pub struct Ontology {
    types: BTreeSet<String>,
    predicates: BTreeMap<String, PredicateDef>,
}

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    #[serde(default)]
    types: Vec<String>,
    #[serde(default)]
    predicates: Vec<PredicateDef>,
}

impl From<OntologyFile> for Ontology {
    fn from(f: OntologyFile) -> Self {
        let mut o = Ontology::new(f.types);
        for p in f.predicates {
            o.add_predicate(p);
        }
        o
    }
}

impl From<Ontology> for OntologyFile {
    fn from(o: Ontology) -> Self {
        OntologyFile {
            types: o.types.into_iter().collect(),
            predicates: o
                .predicates
                .into_values()
                .filter(|p| p.name != TYPE_PREDICATE && p.name != SAME_AS_PREDICATE)
                .collect(),
        }
    }
}

impl Ontology {
    pub fn new(types: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut o = Ontology { types: types.into_iter().map(Into::into).collect(), predicates: BTreeMap::new() };
        for builtin in [TYPE_PREDICATE, SAME_AS_PREDICATE] {
            o.add_predicate(PredicateDef { name: builtin.into(), range: Range::Literal, functional: false });
        }
        o
    }

    pub fn add_predicate(&mut self, def: PredicateDef) -> &mut Self {
        self.predicates.insert(def.name.clone(), def);
        self
    }

    /// Shorthand for a literal-valued predicate.
    pub fn with_literal(mut self, name: &str, functional: bool) -> Self {
        self.add_predicate(PredicateDef { name: name.into(), range: Range::Literal, functional });
        self
    }

    pub fn with_entity(mut self, name: &str, target_type: &str) -> Self {
        self.add_predicate(PredicateDef {
            name: name.into(),
            range: Range::Entity(target_type.into()),
            functional: false,
        });
        self
    }

    pub fn has_type(&self, t: &str) -> bool {
        self.types.contains(t)
    }

    pub fn has_predicate(&self, path: &str) -> bool {
        self.predicates.contains_key(path)
    }

    pub fn predicate(&self, path: &str) -> Option<&PredicateDef> {
        self.predicates.get(path)
    }

    /// Entity type expected for objects of `path`, if it is entity-valued.
    pub fn expected_type(&self, path: &str) -> Option<&str> {
        match &self.predicates.get(path)?.range {
            Range::Entity(t) => Some(t),
            Range::Literal => None,
        }
    }

    pub fn functional_predicates(&self) -> BTreeSet<String> {
        self.predicates.values().filter(|p| p.functional).map(|p| p.name.clone()).collect()
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }
}
