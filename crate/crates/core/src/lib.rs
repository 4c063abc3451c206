//! Bounded solutions of integro-differential equations with reflection of
//! the argument: expression language, quadrature with certified tails,
//! the bounded-solution operator, Picard iteration and numerical probes of
//! the measure hypotheses and pseudo almost automorphy.

pub mod cli;
pub mod expr;
pub mod funcspace;
pub mod measure;
pub mod operator;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use expr::{CompiledExpr, EvalError, Expression, ParseError};
pub use funcspace::{Grid, GridError, GridFunction};
pub use measure::{Deformation, ErgodicVerdict, MeasureSpec, Verdict};
pub use operator::{assemble_F, gamma_apply, linear_solution, ProblemBuilder, ProblemSpec, RhsValue};
pub use quadrature::{KernelSpec, QuadratureConfig, QuadratureError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
    #[error("contraction condition violated: {0}")]
    ContractionViolated(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
