use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The six atomic reasoning actions a node can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicAction {
    PremiseDiscovery,
    PremiseRetrieval,
    PremiseSummarization,
    HypothesisGeneration,
    HypothesisVerification,
    SummaryFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCategory {
    Premise,
    Reasoning,
    Ending,
}

impl AtomicAction {
    pub const ALL: [AtomicAction; 6] = [
        AtomicAction::PremiseDiscovery,
        AtomicAction::PremiseRetrieval,
        AtomicAction::PremiseSummarization,
        AtomicAction::HypothesisGeneration,
        AtomicAction::HypothesisVerification,
        AtomicAction::SummaryFinished,
    ];

    pub fn category(self) -> ActionCategory {
        match self {
            AtomicAction::PremiseDiscovery
            | AtomicAction::PremiseRetrieval
            | AtomicAction::PremiseSummarization => ActionCategory::Premise,
            AtomicAction::HypothesisGeneration | AtomicAction::HypothesisVerification => {
                ActionCategory::Reasoning
            }
            AtomicAction::SummaryFinished => ActionCategory::Ending,
        }
    }

    /// Position in [`AtomicAction::ALL`]; used as the column index of
    /// selection profiles.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap_or(0)
    }

    /// Human-facing label used in rendered trees ("Step 3: Hypothesis Verification").
    pub fn label(self) -> &'static str {
        match self {
            AtomicAction::PremiseDiscovery => "Premise Discovery",
            AtomicAction::PremiseRetrieval => "Premise Retrieval",
            AtomicAction::PremiseSummarization => "Premise Summarization",
            AtomicAction::HypothesisGeneration => "Hypothesis Generation",
            AtomicAction::HypothesisVerification => "Hypothesis Verification",
            AtomicAction::SummaryFinished => "SUMMARY<FINISHED>",
        }
    }

    /// Token the routing footer uses (`ACTION: HYPOTHESIS_GENERATION`).
    pub fn routing_name(self) -> &'static str {
        match self {
            AtomicAction::PremiseDiscovery => "PREMISE_DISCOVERY",
            AtomicAction::PremiseRetrieval => "PREMISE_RETRIEVAL",
            AtomicAction::PremiseSummarization => "PREMISE_SUMMARIZATION",
            AtomicAction::HypothesisGeneration => "HYPOTHESIS_GENERATION",
            AtomicAction::HypothesisVerification => "HYPOTHESIS_VERIFICATION",
            AtomicAction::SummaryFinished => "SUMMARY<FINISHED>",
        }
    }

    /// snake_case key used in `.sop` section headers and serialized traces.
    pub fn key(self) -> &'static str {
        match self {
            AtomicAction::PremiseDiscovery => "premise_discovery",
            AtomicAction::PremiseRetrieval => "premise_retrieval",
            AtomicAction::PremiseSummarization => "premise_summarization",
            AtomicAction::HypothesisGeneration => "hypothesis_generation",
            AtomicAction::HypothesisVerification => "hypothesis_verification",
            AtomicAction::SummaryFinished => "summary_finished",
        }
    }
}

impl fmt::Display for AtomicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown atomic action `{0}`")]
pub struct ParseActionError(pub String);

/// Letters and digits only, upper-cased: `Hypothesis-Generation`,
/// `hypothesis_generation` and `**HYPOTHESIS GENERATION**` all collapse to
/// `HYPOTHESISGENERATION`.
pub(crate) fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_uppercase)
        .collect()
}

impl FromStr for AtomicAction {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let action = match squash(s).as_str() {
            "PREMISEDISCOVERY" => AtomicAction::PremiseDiscovery,
            "PREMISERETRIEVAL" => AtomicAction::PremiseRetrieval,
            "PREMISESUMMARIZATION" | "PREMISESUMMARISATION" => AtomicAction::PremiseSummarization,
            "HYPOTHESISGENERATION" | "HYPOTHESESGENERATION" => AtomicAction::HypothesisGeneration,
            "HYPOTHESISVERIFICATION" | "HYPOTHESESVERIFICATION" => {
                AtomicAction::HypothesisVerification
            }
            "SUMMARYFINISHED" | "SUMMARY" => AtomicAction::SummaryFinished,
            _ => return Err(ParseActionError(s.trim().to_string())),
        };
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_is_total() {
        use ActionCategory::*;
        let cats: Vec<_> = AtomicAction::ALL.iter().map(|a| a.category()).collect();
        assert_eq!(cats, vec![Premise, Premise, Premise, Reasoning, Reasoning, Ending]);
    }

    #[test]
    fn parses_every_spelling() {
        for a in AtomicAction::ALL {
            assert_eq!(a.label().parse::<AtomicAction>().unwrap(), a);
            assert_eq!(a.routing_name().parse::<AtomicAction>().unwrap(), a);
            assert_eq!(a.key().parse::<AtomicAction>().unwrap(), a);
            assert_eq!(format!("{a:?}").parse::<AtomicAction>().unwrap(), a);
        }
        assert_eq!(
            "**SUMMARY<FINISHED>**".parse::<AtomicAction>().unwrap(),
            AtomicAction::SummaryFinished
        );
    }

    #[test]
    fn closed_enumeration() {
        assert!("guesswork".parse::<AtomicAction>().is_err());
        assert!("".parse::<AtomicAction>().is_err());
        assert!("BACKTRACK".parse::<AtomicAction>().is_err());
    }

    #[test]
    fn index_matches_all() {
        for (i, a) in AtomicAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
        }
    }
}
