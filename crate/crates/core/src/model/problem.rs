use serde::{Deserialize, Serialize};

use super::tree::TreeError;

/// A problem handed to a solving session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_hint: Option<String>,
    #[serde(default)]
    pub answer_schema: AnswerSchema,
}

impl Problem {
    pub fn new(id: impl Into<String>, statement: impl Into<String>, schema: AnswerSchema) -> Self {
        Problem {
            id: id.into(),
            statement: statement.into(),
            domain_hint: None,
            answer_schema: schema,
        }
    }

    pub fn free_text(statement: impl Into<String>) -> Self {
        Problem::new("problem", statement, AnswerSchema::FreeText)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.statement.trim().is_empty() {
            return Err(TreeError::EmptyProblem);
        }
        self.answer_schema
            .validate()
            .map_err(TreeError::InvalidProblem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerSchema {
    #[default]
    FreeText,
    MultipleChoice {
        options: Vec<String>,
    },
    Grid(GridSchema),
    Numeric,
}

impl AnswerSchema {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            AnswerSchema::MultipleChoice { options } => {
                if options.len() < 2 {
                    return Err(format!(
                        "multiple choice needs at least 2 options, got {}",
                        options.len()
                    ));
                }
                let mut seen = std::collections::BTreeSet::new();
                for o in options {
                    if o.trim().is_empty() || !seen.insert(o.to_ascii_uppercase()) {
                        return Err(format!("invalid or duplicate option label `{o}`"));
                    }
                }
                Ok(())
            }
            AnswerSchema::Grid(g) => g.validate(),
            AnswerSchema::FreeText | AnswerSchema::Numeric => Ok(()),
        }
    }
}

/// Houses × attributes layout of a logic-grid puzzle. Every attribute has
/// exactly one value per house.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSchema {
    pub houses: usize,
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl GridSchema {
    pub fn validate(&self) -> Result<(), String> {
        if self.houses == 0 {
            return Err("grid schema needs at least one house".into());
        }
        if self.attributes.is_empty() {
            return Err("grid schema needs at least one attribute".into());
        }
        for a in &self.attributes {
            if a.values.len() != self.houses {
                return Err(format!(
                    "attribute `{}` has {} values for {} houses",
                    a.name,
                    a.values.len(),
                    self.houses
                ));
            }
            let mut seen = std::collections::BTreeSet::new();
            for v in &a.values {
                if !seen.insert(crate::bench::extract::normalize_token(v)) {
                    return Err(format!("attribute `{}` repeats value `{v}`", a.name));
                }
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.houses * self.attributes.len()
    }

    /// Index of `value` within attribute `attr`, compared after token
    /// normalization.
    pub fn value_index(&self, attr: usize, value: &str) -> Option<usize> {
        let want = crate::bench::extract::normalize_token(value);
        self.attributes
            .get(attr)?
            .values
            .iter()
            .position(|v| crate::bench::extract::normalize_token(v) == want)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        let want = crate::bench::extract::normalize_token(name);
        self.attributes
            .iter()
            .position(|a| crate::bench::extract::normalize_token(&a.name) == want)
    }
}

/// A (possibly partial) assignment of values to grid cells, indexed
/// `[house][attribute]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub cells: Vec<Vec<Option<String>>>,
}

impl Grid {
    pub fn empty(schema: &GridSchema) -> Self {
        Grid {
            cells: vec![vec![None; schema.attributes.len()]; schema.houses],
        }
    }

    pub fn get(&self, house: usize, attr: usize) -> Option<&str> {
        self.cells.get(house)?.get(attr)?.as_deref()
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Builds a complete grid from a per-attribute permutation: `perm[a][h]`
    /// is the value index placed in house `h` for attribute `a`.
    pub fn from_permutations(schema: &GridSchema, perm: &[Vec<usize>]) -> Self {
        let mut g = Grid::empty(schema);
        for (a, p) in perm.iter().enumerate() {
            for (h, &v) in p.iter().enumerate() {
                g.cells[h][a] = Some(schema.attributes[a].values[v].clone());
            }
        }
        g
    }
}

/// An answer pulled out of free text by the extractors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum StructuredAnswer {
    Choice(String),
    Grid(Grid),
    Numeric(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_validation() {
        assert!(AnswerSchema::MultipleChoice { options: vec!["A".into()] }
            .validate()
            .is_err());
        assert!(AnswerSchema::MultipleChoice { options: vec!["A".into(), "B".into()] }
            .validate()
            .is_ok());
        let g = GridSchema { houses: 0, attributes: vec![] };
        assert!(g.validate().is_err());
        let g = GridSchema {
            houses: 2,
            attributes: vec![Attribute { name: "Name".into(), values: vec!["a".into(), "b".into()] }],
        };
        assert!(g.validate().is_ok());
        assert_eq!(g.value_index(0, " B "), Some(1));
    }

    #[test]
    fn blank_statement_rejected() {
        assert_eq!(Problem::free_text("  ").validate(), Err(TreeError::EmptyProblem));
    }
}
