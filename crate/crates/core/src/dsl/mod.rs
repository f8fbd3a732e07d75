//! The warehouse definition language: class declarations with origin
//! prefixes and filters, environments, retention settings and mapping
//! expressions.

mod parse;
mod print;
pub mod resolve;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArchiveFn, Period};
use crate::property::{Origin, PropertyKind};
use crate::syntax::{Pos, SyntaxError};

pub use parse::{parse_mapping, parse_warehouse_def};
pub use print::{print_mapping, print_predicate, print_warehouse_def};
pub use resolve::{resolve, ResolveError, ResolveIssue, ResolveIssueKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: unknown function `{name}`")]
    UnknownFunction { name: String, pos: Pos },
}

impl DslError {
    pub fn pos(&self) -> Pos {
        match self {
            DslError::Syntax(e) => Pos {
                line: e.line,
                col: e.col,
            },
            DslError::UnknownFunction { pos, .. } => *pos,
        }
    }
}

/// A dotted path; the first segment may name a binder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(pub Vec<String>);

impl Path {
    pub fn new<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Self {
        Path(segments.into_iter().map(Into::into).collect())
    }

    pub fn last(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or("")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Literal {
    Str(String),
    Int(i64),
    Float(f64),
}

impl Eq for Literal {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Atom {
    Compare {
        path: Path,
        op: CmpOp,
        literal: Literal,
    },
    /// `path ∋ binder`: the set at `path` holds the object bound to `binder`.
    Contains { path: Path, binder: String },
}

/// Conjunction of atoms; the empty conjunction is the tautology.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Predicate(pub Vec<Atom>);

impl Predicate {
    pub fn tautology() -> Self {
        Predicate(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Max,
    Min,
}

impl AggFn {
    pub fn name(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Avg => "avg",
            AggFn::Max => "max",
            AggFn::Min => "min",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "count" => AggFn::Count,
            "sum" => AggFn::Sum,
            "avg" => AggFn::Avg,
            "max" => AggFn::Max,
            "min" => AggFn::Min,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentBinding {
    /// `name := f(path)`
    Computed {
        name: String,
        function: AggFn,
        arg: Path,
    },
    /// `name : Type`
    Specific {
        name: String,
        ty: crate::value::ValueType,
    },
}

impl AugmentBinding {
    pub fn name(&self) -> &str {
        match self {
            AugmentBinding::Computed { name, .. } | AugmentBinding::Specific { name, .. } => name,
        }
    }
}

/// An operand of a hierarchization function: `b: Class`, optionally
/// filtered as `select(inner: Class, pred) as b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOperand {
    pub binder: String,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<OperandFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandFilter {
    pub binder: String,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingExpr {
    Source {
        binder: String,
        interface: String,
    },
    Rebind {
        alias: String,
        child: Box<MappingExpr>,
    },
    Project {
        paths: Vec<Path>,
        child: Box<MappingExpr>,
    },
    Hide {
        paths: Vec<Path>,
        child: Box<MappingExpr>,
    },
    Augment {
        bindings: Vec<AugmentBinding>,
        child: Box<MappingExpr>,
    },
    Select {
        predicate: Predicate,
        child: Box<MappingExpr>,
    },
    Join {
        predicate: Predicate,
        left: Box<MappingExpr>,
        right: Box<MappingExpr>,
    },
    Generalize {
        properties: Vec<Path>,
        operands: Vec<ClassOperand>,
    },
    Specialize {
        operands: Vec<ClassOperand>,
        predicate: Predicate,
    },
}

impl MappingExpr {
    pub fn is_hierarchization(&self) -> bool {
        matches!(
            self,
            MappingExpr::Generalize { .. } | MappingExpr::Specialize { .. }
        )
    }

    /// Number of nested function nodes; a bare source has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            MappingExpr::Source { .. } => 0,
            MappingExpr::Generalize { .. } | MappingExpr::Specialize { .. } => 1,
            MappingExpr::Rebind { child, .. } => child.depth(),
            MappingExpr::Project { child, .. }
            | MappingExpr::Hide { child, .. }
            | MappingExpr::Augment { child, .. }
            | MappingExpr::Select { child, .. } => 1 + child.depth(),
            MappingExpr::Join { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Source interfaces referenced by an extraction expression.
    pub fn source_interfaces(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let MappingExpr::Source { interface, .. } = e {
                out.push(interface.as_str());
            }
        });
        out
    }

    /// Warehouse classes referenced by a hierarchization expression.
    pub fn operand_classes(&self) -> Vec<&str> {
        match self {
            MappingExpr::Generalize { operands, .. } | MappingExpr::Specialize { operands, .. } => {
                operands.iter().map(|o| o.class.as_str()).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a MappingExpr)) {
        f(self);
        match self {
            MappingExpr::Rebind { child, .. }
            | MappingExpr::Project { child, .. }
            | MappingExpr::Hide { child, .. }
            | MappingExpr::Augment { child, .. }
            | MappingExpr::Select { child, .. } => child.walk(f),
            MappingExpr::Join { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            _ => {}
        }
    }
}

impl fmt::Display for MappingExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_mapping(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropDecl {
    pub name: String,
    pub origin: Origin,
    /// False when the declaration carried no `D_`/`C_`/`S_` prefix.
    pub explicit_origin: bool,
    pub kind: PropertyKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FiltersDecl {
    pub temporal: Vec<String>,
    pub archive: Vec<(ArchiveFn, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub supers: Vec<String>,
    pub properties: Vec<PropDecl>,
    pub filters: Option<FiltersDecl>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigEntry {
    RefreshEvery(Period),
    KeepPast(u32),
    KeepFor(Period),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvDecl {
    pub name: String,
    pub classes: Vec<String>,
    pub config: Vec<ConfigEntry>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingDecl {
    pub class: String,
    pub expr: MappingExpr,
    pub pos: Pos,
}

/// Unresolved warehouse definition, as written.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WarehouseDef {
    pub name: Option<String>,
    pub classes: Vec<ClassDecl>,
    pub environments: Vec<EnvDecl>,
    pub mappings: Vec<MappingDecl>,
    pub config: Vec<ConfigEntry>,
}
