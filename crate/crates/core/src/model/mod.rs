//! The Atomic Tree: problems, actions, chains, nodes and their rendering.

mod action;
mod problem;
mod render;
mod tree;

pub use action::{ActionCategory, AtomicAction, ParseActionError};
pub(crate) use action::squash;
pub use problem::{AnswerSchema, Attribute, Grid, GridSchema, Problem, StructuredAnswer};
pub use render::{chain_label, render_tree, ELISION_MARKER};
pub use tree::{
    AtomicTree, BranchPoint, Chain, ChainId, ChainStatus, Departure, Node, NodeFlags, NodeId,
    NoteKind, Termination, TerminationMode, TraceNote, TreeError, Usage,
};
