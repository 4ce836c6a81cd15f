use std::fmt;

use serde::{Deserialize, Serialize};

use super::action::AtomicAction;
use super::problem::Problem;
use crate::checker::CheckReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("problem statement is empty")]
    EmptyProblem,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("tree is terminated")]
    Terminated,
    #[error("tree is already terminated")]
    AlreadyTerminated,
    #[error("hypothesis verification requested but no hypothesis generation precedes it")]
    MissingHypothesis,
    #[error("node {0} is not on the active path")]
    NodeNotOnActivePath(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("chain {0} is not dormant")]
    ChainNotDormant(ChainId),
    #[error("chain {0} is active; summaries attach only to inactive chains")]
    ChainActive(ChainId),
    #[error("node content is empty")]
    EmptyContent,
}

/// Secondary markers a node may carry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFlags {
    /// A hypothesis-generation output without any `Hypothesis <k>:` line.
    pub missing_hypothesis_marker: bool,
    /// Revision budget ran out while the checker still reported an error.
    pub unresolved_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub action: AtomicAction,
    pub guidance: String,
    pub content: String,
    pub check_reports: Vec<CheckReport>,
    /// Number of checker-driven revisions applied to `content`.
    pub revisions: u32,
    pub flags: NodeFlags,
    pub created_round: u32,
}

impl Node {
    pub fn revised(&self) -> bool {
        self.revisions > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Active,
    Suspended,
    Dormant,
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainStatus::Active => "active",
            ChainStatus::Suspended => "suspended",
            ChainStatus::Dormant => "dormant",
        })
    }
}

/// Where a chain forks off its parent. The child replaces the parent's node
/// at `index` (zero-based within the parent's own nodes): it inherits
/// everything before that node and continues with fresh steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub chain: ChainId,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub id: ChainId,
    pub parent: Option<BranchPoint>,
    pub node_ids: Vec<NodeId>,
    pub status: ChainStatus,
    pub summary: Option<String>,
}

/// How the active chain is left when branching elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Departure {
    /// Ran to a summary or a confirmed dead end; becomes Suspended.
    Completed,
    /// Paused by the router and may be reactivated; becomes Dormant.
    Paused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationMode {
    ActiveSolved,
    PassiveLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub mode: TerminationMode,
    pub final_answer: String,
}

/// Backend accounting accumulated over a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    RouterFallback,
    BacktrackFallback,
    CheckerFailOpen,
    RevisionCapReached,
    ActionCoerced,
    BranchCapReached,
    Aborted,
}

/// Out-of-band events kept with the trace (fallbacks, fail-opens, aborts).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNote {
    pub round: u32,
    pub kind: NoteKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicTree {
    problem: Problem,
    chains: Vec<Chain>,
    nodes: Vec<Node>,
    active_chain: ChainId,
    terminated: Option<Termination>,
    usage: Usage,
    notes: Vec<TraceNote>,
}

impl AtomicTree {
    pub fn new(problem: Problem) -> Result<Self, TreeError> {
        problem.validate()?;
        Ok(AtomicTree {
            problem,
            chains: vec![Chain {
                id: ChainId(0),
                parent: None,
                node_ids: Vec::new(),
                status: ChainStatus::Active,
                summary: None,
            }],
            nodes: Vec::new(),
            active_chain: ChainId(0),
            terminated: None,
            usage: Usage::default(),
            notes: Vec::new(),
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn chain(&self, id: ChainId) -> Option<&Chain> {
        self.chains.get(id.0 as usize)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn active_chain_id(&self) -> ChainId {
        self.active_chain
    }

    pub fn active_chain(&self) -> &Chain {
        &self.chains[self.active_chain.0 as usize]
    }

    pub fn terminated(&self) -> Option<&Termination> {
        self.terminated.as_ref()
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn usage(&self) -> Usage {
        self.usage
    }

    pub fn notes(&self) -> &[TraceNote] {
        &self.notes
    }

    /// Number of executed actions so far.
    pub fn round_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of nodes a chain inherits from its ancestors.
    pub fn inherited_len(&self, chain: ChainId) -> usize {
        match self.chain(chain).and_then(|c| c.parent) {
            None => 0,
            Some(bp) => self.inherited_len(bp.chain) + bp.index,
        }
    }

    /// Root-to-tip node sequence of `chain`: the inherited prefix followed
    /// by the chain's own nodes.
    pub fn path_of(&self, chain: ChainId) -> Vec<NodeId> {
        let Some(c) = self.chain(chain) else {
            return Vec::new();
        };
        let mut path = match c.parent {
            None => Vec::new(),
            Some(bp) => {
                let mut p = self.path_of(bp.chain);
                p.truncate(self.inherited_len(bp.chain) + bp.index);
                p
            }
        };
        path.extend_from_slice(&c.node_ids);
        path
    }

    pub fn active_path(&self) -> Vec<NodeId> {
        self.path_of(self.active_chain)
    }

    /// The chain that owns `node` and the node's index among that chain's own nodes.
    pub fn locate(&self, node: NodeId) -> Option<(ChainId, usize)> {
        self.chains.iter().find_map(|c| {
            c.node_ids
                .iter()
                .position(|n| *n == node)
                .map(|i| (c.id, i))
        })
    }

    /// One-based "Step N" label of a node: its position on its own chain's path.
    pub fn step_label(&self, node: NodeId) -> Option<usize> {
        let (chain, index) = self.locate(node)?;
        Some(self.inherited_len(chain) + index + 1)
    }

    pub fn last_active_node(&self) -> Option<&Node> {
        self.active_path().last().and_then(|id| self.node(*id))
    }

    pub fn append_node(
        &mut self,
        action: AtomicAction,
        guidance: impl Into<String>,
        content: impl Into<String>,
    ) -> Result<NodeId, TreeError> {
        if self.is_terminated() {
            return Err(TreeError::Terminated);
        }
        let content = content.into();
        if content.trim().is_empty() {
            return Err(TreeError::EmptyContent);
        }
        if action == AtomicAction::HypothesisVerification && !self.path_has_hypothesis() {
            return Err(TreeError::MissingHypothesis);
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            action,
            guidance: guidance.into(),
            content,
            check_reports: Vec::new(),
            revisions: 0,
            flags: NodeFlags::default(),
            created_round: self.nodes.len() as u32 + 1,
        });
        let active = self.active_chain.0 as usize;
        self.chains[active].node_ids.push(id);
        Ok(id)
    }

    /// True when some hypothesis-generation node lies on the active path.
    pub fn path_has_hypothesis(&self) -> bool {
        self.active_path()
            .iter()
            .any(|id| self.nodes[id.0 as usize].action == AtomicAction::HypothesisGeneration)
    }

    /// Starts a new active chain that replaces `target` (which must be on the
    /// active path) with fresh steps. The departing chain becomes Suspended or
    /// Dormant depending on `departure`.
    pub fn branch_at(&mut self, target: NodeId, departure: Departure) -> Result<ChainId, TreeError> {
        if self.is_terminated() {
            return Err(TreeError::Terminated);
        }
        if self.node(target).is_none() {
            return Err(TreeError::UnknownNode(target));
        }
        if !self.active_path().contains(&target) {
            return Err(TreeError::NodeNotOnActivePath(target));
        }
        let (chain, index) = self.locate(target).ok_or(TreeError::UnknownNode(target))?;
        let leaving = self.active_chain.0 as usize;
        self.chains[leaving].status = match departure {
            Departure::Completed => ChainStatus::Suspended,
            Departure::Paused => ChainStatus::Dormant,
        };
        let id = ChainId(self.chains.len() as u32);
        self.chains.push(Chain {
            id,
            parent: Some(BranchPoint { chain, index }),
            node_ids: Vec::new(),
            status: ChainStatus::Active,
            summary: None,
        });
        self.active_chain = id;
        Ok(id)
    }

    /// Makes a Dormant chain active again; the current active chain is
    /// paused in its place. Any summary on the reactivated chain is dropped.
    pub fn reactivate(&mut self, chain: ChainId) -> Result<(), TreeError> {
        if self.is_terminated() {
            return Err(TreeError::Terminated);
        }
        let c = self.chain(chain).ok_or(TreeError::UnknownChain(chain))?;
        if c.status != ChainStatus::Dormant {
            return Err(TreeError::ChainNotDormant(chain));
        }
        let current = self.active_chain.0 as usize;
        self.chains[current].status = ChainStatus::Dormant;
        let c = &mut self.chains[chain.0 as usize];
        c.status = ChainStatus::Active;
        c.summary = None;
        self.active_chain = chain;
        Ok(())
    }

    pub fn set_chain_summary(&mut self, chain: ChainId, summary: impl Into<String>) -> Result<(), TreeError> {
        if self.is_terminated() {
            return Err(TreeError::Terminated);
        }
        let c = self
            .chains
            .get_mut(chain.0 as usize)
            .ok_or(TreeError::UnknownChain(chain))?;
        if c.status == ChainStatus::Active {
            return Err(TreeError::ChainActive(chain));
        }
        c.summary = Some(summary.into());
        Ok(())
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node, TreeError> {
        if self.terminated.is_some() {
            return Err(TreeError::Terminated);
        }
        self.nodes
            .get_mut(id.0 as usize)
            .ok_or(TreeError::UnknownNode(id))
    }

    pub fn record_check(&mut self, node: NodeId, report: CheckReport) -> Result<(), TreeError> {
        self.node_mut(node)?.check_reports.push(report);
        Ok(())
    }

    /// Replaces a node's content with a revision; action and position are untouched.
    pub fn apply_revision(&mut self, node: NodeId, content: impl Into<String>) -> Result<(), TreeError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(TreeError::EmptyContent);
        }
        let n = self.node_mut(node)?;
        n.content = content;
        n.revisions += 1;
        Ok(())
    }

    pub fn set_flags(&mut self, node: NodeId, flags: NodeFlags) -> Result<(), TreeError> {
        self.node_mut(node)?.flags = flags;
        Ok(())
    }

    pub fn set_termination(
        &mut self,
        mode: TerminationMode,
        final_answer: impl Into<String>,
    ) -> Result<(), TreeError> {
        if self.terminated.is_some() {
            return Err(TreeError::AlreadyTerminated);
        }
        self.terminated = Some(Termination {
            mode,
            final_answer: final_answer.into(),
        });
        Ok(())
    }

    /// Accounting and notes stay writable after termination so the
    /// finalizing call is counted.
    pub fn add_usage(&mut self, prompt_tokens: u64, completion_tokens: u64, latency_ms: u64) {
        self.usage.calls += 1;
        self.usage.prompt_tokens += prompt_tokens;
        self.usage.completion_tokens += completion_tokens;
        self.usage.latency_ms += latency_ms;
    }

    pub fn note(&mut self, kind: NoteKind, detail: impl Into<String>) {
        self.notes.push(TraceNote {
            round: self.nodes.len() as u32,
            kind,
            detail: detail.into(),
        });
    }

    /// Checks every structural invariant. Used after deserialization and by
    /// property tests.
    pub fn validate(&self) -> Result<(), String> {
        self.problem.validate().map_err(|e| e.to_string())?;
        if self.chains.is_empty() {
            return Err("tree has no chains".into());
        }
        let active: Vec<_> = self
            .chains
            .iter()
            .filter(|c| c.status == ChainStatus::Active)
            .map(|c| c.id)
            .collect();
        if active != [self.active_chain] {
            return Err(format!(
                "expected exactly one active chain {}, found {:?}",
                self.active_chain, active
            ));
        }
        let mut owner = vec![None; self.nodes.len()];
        for (i, c) in self.chains.iter().enumerate() {
            if c.id.0 as usize != i {
                return Err(format!("chain at position {i} has id {}", c.id));
            }
            match (i, c.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err("root chain has a parent".into()),
                (_, None) => return Err(format!("chain {} has no parent", c.id)),
                (_, Some(bp)) => {
                    // Parents are always created earlier, so ids strictly decrease toward the root.
                    if bp.chain.0 as usize >= i {
                        return Err(format!("chain {} has a non-earlier parent {}", c.id, bp.chain));
                    }
                    if bp.index >= self.chains[bp.chain.0 as usize].node_ids.len() {
                        return Err(format!("chain {} branches past the end of {}", c.id, bp.chain));
                    }
                }
            }
            if c.status == ChainStatus::Active && c.summary.is_some() {
                return Err(format!("active chain {} carries a summary", c.id));
            }
            for n in &c.node_ids {
                let slot = owner
                    .get_mut(n.0 as usize)
                    .ok_or_else(|| format!("chain {} references unknown node {n}", c.id))?;
                if slot.replace(c.id).is_some() {
                    return Err(format!("node {n} belongs to more than one chain"));
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.0 as usize != i {
                return Err(format!("node at position {i} has id {}", n.id));
            }
            if owner[i].is_none() {
                return Err(format!("node {} is on no chain", n.id));
            }
            if n.created_round as usize != i + 1 {
                return Err(format!("node {} has created_round {}", n.id, n.created_round));
            }
            if n.content.trim().is_empty() {
                return Err(format!("node {} has empty content", n.id));
            }
        }
        for c in &self.chains {
            let path = self.path_of(c.id);
            let mut seen_hypothesis = false;
            for id in &path {
                match self.nodes[id.0 as usize].action {
                    AtomicAction::HypothesisGeneration => seen_hypothesis = true,
                    AtomicAction::HypothesisVerification if !seen_hypothesis => {
                        return Err(format!("verification {id} precedes any hypothesis"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AtomicAction::*;

    fn tree() -> AtomicTree {
        AtomicTree::new(Problem::free_text("x?")).unwrap()
    }

    #[test]
    fn fresh_tree() {
        let t = tree();
        assert_eq!(t.chains().len(), 1);
        assert_eq!(t.round_count(), 0);
        assert_eq!(t.active_chain().status, ChainStatus::Active);
        assert!(!t.is_terminated());
        assert!(t.validate().is_ok());
    }

    #[test]
    fn empty_problem() {
        assert_eq!(
            AtomicTree::new(Problem::free_text("")).unwrap_err(),
            TreeError::EmptyProblem
        );
    }

    #[test]
    fn first_append() {
        let mut t = tree();
        t.append_node(PremiseDiscovery, "g", "P1.").unwrap();
        assert_eq!(t.round_count(), 1);
        assert_eq!(t.active_chain().node_ids.len(), 1);
    }

    #[test]
    fn verification_needs_hypothesis() {
        let mut t = tree();
        assert_eq!(
            t.append_node(HypothesisVerification, "g", "c"),
            Err(TreeError::MissingHypothesis)
        );
        t.append_node(HypothesisGeneration, "g", "Hypothesis 1: x").unwrap();
        t.append_node(HypothesisVerification, "g", "ok").unwrap();
    }

    #[test]
    fn branch_structure() {
        let mut t = tree();
        let ids: Vec<_> = (0..3)
            .map(|i| t.append_node(PremiseDiscovery, "g", format!("s{i}")).unwrap())
            .collect();
        let c = t.branch_at(ids[1], Departure::Completed).unwrap();
        assert_eq!(t.chains().len(), 2);
        assert!(t.active_chain().node_ids.is_empty());
        assert_eq!(t.active_chain().parent, Some(BranchPoint { chain: ChainId(0), index: 1 }));
        assert_eq!(t.active_chain_id(), c);
        assert_eq!(t.chain(ChainId(0)).unwrap().status, ChainStatus::Suspended);
        // the new chain inherits step 1 only
        assert_eq!(t.active_path(), vec![ids[0]]);
        let n = t.append_node(PremiseRetrieval, "g", "new").unwrap();
        assert_eq!(t.step_label(n), Some(2));
        t.validate().unwrap();
    }

    #[test]
    fn branch_off_path_rejected() {
        let mut t = tree();
        let a = t.append_node(PremiseDiscovery, "g", "a").unwrap();
        let b = t.append_node(PremiseRetrieval, "g", "b").unwrap();
        t.branch_at(a, Departure::Completed).unwrap();
        // b sits on the suspended sibling chain
        assert_eq!(
            t.branch_at(b, Departure::Completed),
            Err(TreeError::NodeNotOnActivePath(b))
        );
    }

    #[test]
    fn dormant_reactivation() {
        let mut t = tree();
        let a = t.append_node(PremiseDiscovery, "g", "a").unwrap();
        t.append_node(PremiseRetrieval, "g", "b").unwrap();
        t.branch_at(a, Departure::Paused).unwrap();
        assert_eq!(t.chain(ChainId(0)).unwrap().status, ChainStatus::Dormant);
        t.set_chain_summary(ChainId(0), "paused").unwrap();
        assert_eq!(t.set_chain_summary(ChainId(1), "x"), Err(TreeError::ChainActive(ChainId(1))));
        t.reactivate(ChainId(0)).unwrap();
        assert_eq!(t.active_chain_id(), ChainId(0));
        assert!(t.active_chain().summary.is_none());
        assert_eq!(t.chain(ChainId(1)).unwrap().status, ChainStatus::Dormant);
        assert_eq!(t.reactivate(ChainId(0)), Err(TreeError::ChainNotDormant(ChainId(0))));
        t.validate().unwrap();
    }

    #[test]
    fn termination_is_final() {
        let mut t = tree();
        t.set_termination(TerminationMode::PassiveLimit, "x").unwrap();
        assert_eq!(
            t.set_termination(TerminationMode::ActiveSolved, "y"),
            Err(TreeError::AlreadyTerminated)
        );
        assert_eq!(t.append_node(PremiseDiscovery, "g", "c"), Err(TreeError::Terminated));
    }

    #[test]
    fn twelve_appends_then_terminate_once() {
        let mut t = tree();
        for i in 0..12 {
            t.append_node(PremiseDiscovery, "g", format!("{i}")).unwrap();
        }
        assert_eq!(t.round_count(), 12);
        t.set_termination(TerminationMode::PassiveLimit, "best effort").unwrap();
        assert!(t.set_termination(TerminationMode::PassiveLimit, "again").is_err());
    }

    #[test]
    fn empty_content_rejected() {
        let mut t = tree();
        assert_eq!(t.append_node(PremiseDiscovery, "g", "  "), Err(TreeError::EmptyContent));
    }
}
