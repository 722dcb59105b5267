//! Model-formula mini-language: parsing, term expansion, canonical rendering.
//!
//! A formula like `y ~ (sm1 + sm2 + f)^2 + lin2 - sm(sm1):fct(f)` is parsed
//! into an AST, then expanded against the data schema into a flat, ordered
//! list of typed model terms. Raw numeric covariates expand into a
//! `lin()` + `sm()` pair, raw factors into `fct()`, and `^2` groups into all
//! main effects plus pairwise interactions across distinct parents.

mod expand;
mod parser;

pub use expand::expand_terms;
pub use parser::{parse_formula, Ast, AstItem, Sign, WrappedTerm, Wrapper};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum FormulaError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown wrapper '{name}' at byte {offset}")]
    UnknownWrapper { offset: usize, name: String },
    #[error("formula must contain exactly one '~'")]
    DuplicateResponse,
    #[error("'*' is not supported; spell out main effects and use ':' for interactions")]
    StarUnsupported { offset: usize },
    #[error("only '^2' expansion is supported, got '^{power}'")]
    PowerUnsupported { offset: usize, power: u32 },
    #[error("covariate '{0}' not present in the data schema")]
    UnknownColumn(String),
    #[error("wrapper '{wrapper}' requires a {expected} covariate, but '{covariate}' is {actual}")]
    WrapperTypeMismatch {
        wrapper: &'static str,
        covariate: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("covariate '{covariate}' appears more than once in term '{label}'")]
    DuplicateCovariate { label: String, covariate: String },
    #[error("term '{0}' takes {1} covariate(s)")]
    CovariateCount(String, usize),
    #[error("unknown argument '{arg}' for wrapper '{wrapper}'")]
    UnknownArgument { wrapper: &'static str, arg: String },
    #[error("model has no terms")]
    NoTerms,
}

/// Exponential-family response type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Binomial,
    Poisson,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FamilyKind::Gaussian => write!(f, "gaussian"),
            FamilyKind::Binomial => write!(f, "binomial"),
            FamilyKind::Poisson => write!(f, "poisson"),
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(FamilyKind::Gaussian),
            "binomial" => Ok(FamilyKind::Binomial),
            "poisson" => Ok(FamilyKind::Poisson),
            other => Err(format!("unknown family '{other}'")),
        }
    }
}

/// What one component of a term is, including its basis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// Orthogonal polynomial trend of the given degree.
    Lin { degree: usize },
    /// Penalized B-spline smooth.
    Sm {
        n_basis: usize,
        degree: usize,
        penalty_order: usize,
    },
    /// Factor with sum-to-zero contrasts.
    Fct,
    /// Random intercept (iid by default).
    Rnd,
    /// Tensor-product B-spline surface over two coordinates.
    Srf { n_basis: usize, penalty_order: usize },
    /// Intrinsic Gauss-Markov random field over discrete regions.
    Mrf,
    /// Unpenalized term (goes into the flat-prior design part).
    U,
}

impl ComponentKind {
    pub fn wrapper_name(&self) -> &'static str {
        match self {
            ComponentKind::Lin { .. } => "lin",
            ComponentKind::Sm { .. } => "sm",
            ComponentKind::Fct => "fct",
            ComponentKind::Rnd => "rnd",
            ComponentKind::Srf { .. } => "srf",
            ComponentKind::Mrf => "mrf",
            ComponentKind::U => "u",
        }
    }
}

pub const DEFAULT_LIN_DEGREE: usize = 1;
pub const DEFAULT_SM_BASIS: usize = 20;
pub const DEFAULT_SM_DEGREE: usize = 3;
pub const DEFAULT_SM_PENALTY_ORDER: usize = 2;
pub const DEFAULT_SRF_BASIS: usize = 10;
pub const DEFAULT_SRF_PENALTY_ORDER: usize = 1;

/// One multiplicative component of a model term: a wrapper applied to
/// covariates. Main-effect terms have a single component; interaction terms
/// have one component per parent main effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermComponent {
    pub kind: ComponentKind,
    pub covariates: Vec<String>,
}

impl TermComponent {
    /// Label of this component, e.g. `sm(x)` or `srf(x,y)`.
    pub fn label(&self) -> String {
        if matches!(self.kind, ComponentKind::U) && self.covariates.is_empty() {
            return "u".to_string();
        }
        format!("{}({})", self.kind.wrapper_name(), self.covariates.join(","))
    }

    /// Canonical formula text, including non-default arguments.
    pub fn render(&self) -> String {
        let mut args: Vec<String> = self.covariates.clone();
        match &self.kind {
            ComponentKind::Lin { degree } => {
                if *degree != DEFAULT_LIN_DEGREE {
                    args.push(format!("degree={degree}"));
                }
            }
            ComponentKind::Sm {
                n_basis,
                degree,
                penalty_order,
            } => {
                if *n_basis != DEFAULT_SM_BASIS {
                    args.push(format!("k={n_basis}"));
                }
                if *degree != DEFAULT_SM_DEGREE {
                    args.push(format!("degree={degree}"));
                }
                if *penalty_order != DEFAULT_SM_PENALTY_ORDER {
                    args.push(format!("order={penalty_order}"));
                }
            }
            ComponentKind::Srf {
                n_basis,
                penalty_order,
            } => {
                if *n_basis != DEFAULT_SRF_BASIS {
                    args.push(format!("k={n_basis}"));
                }
                if *penalty_order != DEFAULT_SRF_PENALTY_ORDER {
                    args.push(format!("order={penalty_order}"));
                }
            }
            _ => {}
        }
        if matches!(self.kind, ComponentKind::U) && self.covariates.is_empty() {
            return "u".to_string();
        }
        format!("{}({})", self.kind.wrapper_name(), args.join(", "))
    }
}

/// A single model term: one component for main effects, several for
/// interactions. The label is canonical and unique within a `ModelSpec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub label: String,
    pub components: Vec<TermComponent>,
    /// Number of distinct parent main effects combined (1 for main effects).
    pub interaction_order: usize,
}

impl TermSpec {
    pub fn main(component: TermComponent) -> Self {
        TermSpec {
            label: component.label(),
            components: vec![component],
            interaction_order: 1,
        }
    }

    pub fn interaction(components: Vec<TermComponent>) -> Self {
        let label = components
            .iter()
            .map(|c| c.label())
            .collect::<Vec<_>>()
            .join(":");
        let order = components.len();
        TermSpec {
            label,
            components,
            interaction_order: order,
        }
    }

    pub fn intercept() -> Self {
        TermSpec::main(TermComponent {
            kind: ComponentKind::U,
            covariates: vec![],
        })
    }

    pub fn is_intercept(&self) -> bool {
        self.label == "u"
    }

    /// True for any term whose columns live in the unpenalized design part.
    pub fn is_unpenalized(&self) -> bool {
        self.components
            .iter()
            .all(|c| matches!(c.kind, ComponentKind::U))
    }

    pub fn covariates(&self) -> Vec<&str> {
        self.components
            .iter()
            .flat_map(|c| c.covariates.iter().map(|s| s.as_str()))
            .collect()
    }

    fn render(&self) -> String {
        self.components
            .iter()
            .map(|c| c.render())
            .collect::<Vec<_>>()
            .join(":")
    }
}

/// Fully expanded model: response binding, family, ordered terms, and the
/// labels that were removed (explicitly by `-` or as same-parent pairs of a
/// `^2` expansion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub family: FamilyKind,
    pub terms: Vec<TermSpec>,
    pub removed_terms: Vec<String>,
}

impl ModelSpec {
    pub fn term(&self, label: &str) -> Option<&TermSpec> {
        self.terms.iter().find(|t| t.label == label)
    }

    /// Penalized (selectable) terms, in model order.
    pub fn penalized_terms(&self) -> impl Iterator<Item = &TermSpec> {
        self.terms.iter().filter(|t| !t.is_unpenalized())
    }

    /// Canonical formula text; reparsing and re-expanding yields an
    /// identical `ModelSpec`.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for term in &self.terms {
            if term.is_intercept() {
                continue;
            }
            parts.push(term.render());
        }
        let mut text = format!("{} ~ {}", self.response, parts.join(" + "));
        for removed in &self.removed_terms {
            text.push_str(&format!(" - {removed}"));
        }
        text
    }
}

#[cfg(test)]
mod tests;
