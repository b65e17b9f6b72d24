use thiserror::Error;

use crate::graph::{NodeId, Violation};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid instance: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed instance JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("path position {index} names unknown node {node}")]
    UnknownNode { index: usize, node: NodeId },
    #[error("path position {index}: nodes {from} and {to} are not adjacent")]
    NotAdjacent { index: usize, from: NodeId, to: NodeId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("objective undefined: every node has zero success probability")]
    ObjectiveUndefined,
    #[error("degenerate instance: diameter is zero, no meaningful terminal edge cost")]
    ZeroDiameter,
    #[error("instance already has terminal nodes")]
    HasTerminals,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("state explosion: {nonterminals} non-terminal nodes exceeds the cap of {cap}")]
    StateExplosion { nonterminals: usize, cap: usize },
    #[error("instance has no terminal node")]
    NoTerminal,
    #[error("no proper policy from the start state")]
    NoProperPolicy,
    #[error("infeasible DAG: no terminal reachable from the start along outward edges")]
    InfeasibleDag,
    #[error("search budget of {0} expansions exhausted")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("grid side must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("n_t must be between 0 and 4, got {0}")]
    TerminalCount(usize),
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("kriging needs at least 3 measurements, got {0}")]
    TooFewMeasurements(usize),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
}
