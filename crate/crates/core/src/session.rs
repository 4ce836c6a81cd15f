//! The solving loop: triage, then decide / execute / check until the router
//! stops, then finalize.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError};
use crate::checker::{check_and_revise, CheckError, CheckOutcome, CheckerConfig};
use crate::engine::{CallContext, Sampling, DEFAULT_RENDER_BUDGET};
use crate::executor::{compress_chain, execute, finalize, ExecError, FinalAnswer};
use crate::model::{AtomicTree, ChainId, NodeId, NoteKind, Problem, TerminationMode, TreeError};
use crate::prompts::PromptCatalog;
use crate::router::{decide, RouterConfig, RouterError, RoutingDecision};
use crate::sop::{sop_block, triage, SopRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub router: RouterConfig,
    pub checker: CheckerConfig,
    pub sampling: Sampling,
    pub render_budget: usize,
    /// Summarize each chain once it stops being active.
    pub compress_chains: bool,
    /// Inject SOP strategies and scheduling hints into prompts.
    pub use_sop: bool,
    /// Ask the routing backend to classify problems the keyword stage
    /// cannot place.
    pub triage_with_backend: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            router: RouterConfig::default(),
            checker: CheckerConfig::default(),
            sampling: Sampling::default(),
            render_budget: DEFAULT_RENDER_BUDGET,
            compress_chains: true,
            use_sop: true,
            triage_with_backend: false,
        }
    }
}

/// Backends per role. Most setups use one backend for everything.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub router: &'a dyn Backend,
    pub solver: &'a dyn Backend,
    pub checker: &'a dyn Backend,
}

impl<'a> Backends<'a> {
    pub fn single(backend: &'a dyn Backend) -> Self {
        Backends {
            router: backend,
            solver: backend,
            checker: backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionEvent {
    Triaged { domain: String },
    Decided(RoutingDecision),
    Executed(NodeId),
    Checked { node: NodeId, outcome: CheckOutcome },
    Branched { from: ChainId, to: ChainId },
    Terminated { mode: TerminationMode },
}

/// Observer called after every session step.
pub trait SessionHook {
    fn on_event(&mut self, tree: &AtomicTree, event: &SessionEvent);
}

impl<F: FnMut(&AtomicTree, &SessionEvent)> SessionHook for F {
    fn on_event(&mut self, tree: &AtomicTree, event: &SessionEvent) {
        self(tree, event)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("empty completion from solver")]
    EmptyCompletion,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("router: {0}")]
    Router(String),
}

impl From<ExecError> for SessionError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Backend(b) => SessionError::Backend(b),
            ExecError::Tree(t) => SessionError::Tree(t),
            ExecError::EmptyCompletion => SessionError::EmptyCompletion,
        }
    }
}

impl From<CheckError> for SessionError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Backend(b) => SessionError::Backend(b),
            CheckError::Tree(t) => SessionError::Tree(t),
            CheckError::NothingToRevise => SessionError::Router(e.to_string()),
        }
    }
}

impl From<RouterError> for SessionError {
    fn from(e: RouterError) -> Self {
        match e {
            RouterError::Backend(b) => SessionError::Backend(b),
            RouterError::Tree(t) => SessionError::Tree(t),
            RouterError::NoBacktrackCandidate => SessionError::Router(e.to_string()),
        }
    }
}

/// An aborted session. The partial tree is kept when one was built.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SessionFailure {
    pub tree: Option<Box<AtomicTree>>,
    #[source]
    pub error: SessionError,
}

impl SessionFailure {
    pub fn is_backend(&self) -> bool {
        matches!(self.error, SessionError::Backend(_) | SessionError::EmptyCompletion)
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub tree: AtomicTree,
    pub answer: FinalAnswer,
    pub domain: String,
}

pub struct Session<'a> {
    pub config: &'a SessionConfig,
    pub backends: Backends<'a>,
    pub prompts: &'a PromptCatalog,
    pub sops: &'a SopRegistry,
}

impl<'a> Session<'a> {
    fn ctx(&self, backend: &'a dyn Backend) -> CallContext<'a> {
        CallContext {
            backend,
            prompts: self.prompts,
            sampling: &self.config.sampling,
            render_budget: self.config.render_budget,
        }
    }

    pub fn run(&self, problem: Problem, hooks: &mut [&mut dyn SessionHook]) -> Result<SessionOutcome, SessionFailure> {
        if let Err(e) = self.config.router.validate() {
            return Err(SessionFailure { tree: None, error: SessionError::Config(e) });
        }
        let mut tree = AtomicTree::new(problem).map_err(|e| SessionFailure { tree: None, error: e.into() })?;
        let mut emit = |tree: &AtomicTree, e: SessionEvent| {
            for h in hooks.iter_mut() {
                h.on_event(tree, &e);
            }
        };
        match self.drive(&mut tree, &mut emit) {
            Ok((answer, domain)) => Ok(SessionOutcome { tree, answer, domain }),
            Err(error) => {
                log::warn!("session aborted: {error}");
                tree.note(NoteKind::Aborted, error.to_string());
                Err(SessionFailure { tree: Some(Box::new(tree)), error })
            }
        }
    }

    fn drive(
        &self,
        tree: &mut AtomicTree,
        emit: &mut dyn FnMut(&AtomicTree, SessionEvent),
    ) -> Result<(FinalAnswer, String), SessionError> {
        let router_ctx = self.ctx(self.backends.router);
        let solver_ctx = self.ctx(self.backends.solver);
        let checker_ctx = self.ctx(self.backends.checker);

        let triaged = triage(
            tree.problem(),
            self.sops,
            self.config.triage_with_backend.then_some(&router_ctx),
        );
        if let Some((usage, latency)) = triaged.call {
            tree.add_usage(usage.prompt_tokens, usage.completion_tokens, latency);
        }
        let domain = triaged.domain;
        emit(tree, SessionEvent::Triaged { domain: domain.clone() });
        let schedule = if self.config.use_sop {
            self.sops.resolve(&domain).scheduling_hints.clone()
        } else {
            String::new()
        };

        let mode = loop {
            let decision = decide(tree, &self.config.router, &schedule, &router_ctx)?;
            emit(tree, SessionEvent::Decided(decision.clone()));
            match decision {
                RoutingDecision::Extend { action, guidance } => {
                    let block = if self.config.use_sop {
                        sop_block(self.sops, &domain, action)
                    } else {
                        String::new()
                    };
                    let node = execute(tree, action, &guidance, &block, &solver_ctx)?;
                    emit(tree, SessionEvent::Executed(node));
                    let outcome = check_and_revise(tree, node, &self.config.checker, &checker_ctx)?;
                    if outcome.checks > 0 {
                        emit(tree, SessionEvent::Checked { node, outcome });
                    }
                }
                RoutingDecision::Backtrack { target, .. } => {
                    let from = tree.active_chain_id();
                    let to = tree.branch_at(target, crate::model::Departure::Completed)?;
                    if self.config.compress_chains {
                        compress_chain(tree, from, &router_ctx)?;
                    }
                    emit(tree, SessionEvent::Branched { from, to });
                }
                RoutingDecision::Terminate { mode } => break mode,
            }
        };

        let answer = finalize(tree, mode, &solver_ctx)?;
        tree.set_termination(mode, answer.text.clone())?;
        emit(tree, SessionEvent::Terminated { mode });
        Ok((answer, domain))
    }
}

/// Runs one session with a single backend for every role.
pub fn run_session(
    problem: Problem,
    config: &SessionConfig,
    backend: &dyn Backend,
    prompts: &PromptCatalog,
    sops: &SopRegistry,
    hooks: &mut [&mut dyn SessionHook],
) -> Result<SessionOutcome, SessionFailure> {
    Session {
        config,
        backends: Backends::single(backend),
        prompts,
        sops,
    }
    .run(problem, hooks)
}
