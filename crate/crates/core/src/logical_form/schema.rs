use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use regex::Regex;

use super::LogicalFormError;

pub const DEFAULT_TYPE_RELATION: &str = "type.object.type";
pub const DEFAULT_ENTITY_PATTERN: &str = r"^[mg]\.[0-9a-z_]+$";

/// Regular expression recognising entity ids (Freebase mids by default).
#[derive(Clone, Debug)]
pub struct EntityPattern(Regex);

impl EntityPattern {
    pub fn new(pattern: &str) -> Result<Self, LogicalFormError> {
        Regex::new(pattern)
            .map(EntityPattern)
            .map_err(|e| LogicalFormError::InvalidPattern(e.to_string()))
    }

    pub fn is_match(&self, token: &str) -> bool {
        self.0.is_match(token)
    }

    pub fn as_str(&self) -> &str {
        self.0.as_str()
    }
}

impl Default for EntityPattern {
    fn default() -> Self {
        EntityPattern(Regex::new(DEFAULT_ENTITY_PATTERN).expect("default entity pattern"))
    }
}

/// KB schema symbols: classes and relations, plus the entity-id pattern and
/// the type-check relation.
///
/// A schema built with [`Schema::open`] has no symbol tables and classifies
/// IRIs by their position in the query instead of by lookup.
#[derive(Clone, Debug)]
pub struct Schema {
    classes: BTreeSet<String>,
    relations: BTreeSet<String>,
    entity_pattern: EntityPattern,
    type_relation: String,
    open: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema::open(EntityPattern::default(), DEFAULT_TYPE_RELATION)
    }
}

impl Schema {
    pub fn new(
        classes: impl IntoIterator<Item = String>,
        relations: impl IntoIterator<Item = String>,
        entity_pattern: EntityPattern,
        type_relation: impl Into<String>,
    ) -> Result<Self, LogicalFormError> {
        let type_relation = type_relation.into();
        let mut classes: BTreeSet<String> = classes.into_iter().collect();
        let mut relations: BTreeSet<String> = relations.into_iter().collect();
        classes.remove(&type_relation);
        relations.remove(&type_relation);
        if let Some(both) = classes.intersection(&relations).next() {
            return Err(LogicalFormError::SchemaOverlap(both.clone()));
        }
        Ok(Schema {
            classes,
            relations,
            entity_pattern,
            type_relation,
            open: false,
        })
    }

    pub fn open(entity_pattern: EntityPattern, type_relation: impl Into<String>) -> Self {
        Schema {
            classes: BTreeSet::new(),
            relations: BTreeSet::new(),
            entity_pattern,
            type_relation: type_relation.into(),
            open: true,
        }
    }

    /// Loads `classes.txt` / `relations.txt` style manifests (one IRI per
    /// line, blank lines and `#` comments ignored).
    pub fn load(
        classes: &Path,
        relations: &Path,
        entity_pattern: EntityPattern,
        type_relation: impl Into<String>,
    ) -> Result<Self, LogicalFormError> {
        Schema::new(
            read_manifest(classes)?,
            read_manifest(relations)?,
            entity_pattern,
            type_relation,
        )
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn is_class(&self, iri: &str) -> bool {
        self.classes.contains(iri)
    }

    pub fn is_relation(&self, iri: &str) -> bool {
        self.relations.contains(iri)
    }

    pub fn is_entity(&self, token: &str) -> bool {
        self.entity_pattern.is_match(token)
    }

    pub fn entity_pattern(&self) -> &EntityPattern {
        &self.entity_pattern
    }

    pub fn type_relation(&self) -> &str {
        &self.type_relation
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(String::as_str)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }
}

fn read_manifest(path: &Path) -> Result<Vec<String>, LogicalFormError> {
    let text = fs::read_to_string(path).map_err(|e| LogicalFormError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_relation_dropped_from_tables() {
        let s = Schema::new(
            vec!["type.datetime".into(), "type.object.type".into()],
            vec!["type.object.type".into(), "a.b.c".into()],
            EntityPattern::default(),
            DEFAULT_TYPE_RELATION,
        )
        .unwrap();
        assert!(!s.is_class("type.object.type"));
        assert!(!s.is_relation("type.object.type"));
        assert!(s.is_relation("a.b.c"));
    }

    #[test]
    fn overlapping_tables_rejected() {
        let err = Schema::new(
            vec!["x.y".into()],
            vec!["x.y".into()],
            EntityPattern::default(),
            DEFAULT_TYPE_RELATION,
        )
        .unwrap_err();
        assert!(matches!(err, LogicalFormError::SchemaOverlap(_)));
    }

    #[test]
    fn default_pattern_matches_mids() {
        let p = EntityPattern::default();
        assert!(p.is_match("m.07l8x"));
        assert!(p.is_match("g.11b6d"));
        assert!(!p.is_match("type.datetime"));
    }
}
