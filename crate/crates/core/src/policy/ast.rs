use std::fmt;

use chrono::NaiveDate;
use semver::Version;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Enterprise,
    Domain,
    Plant,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Enterprise, Layer::Domain, Layer::Plant];

    pub fn keyword(self) -> &'static str {
        match self {
            Layer::Enterprise => "enterprise",
            Layer::Domain => "domain",
            Layer::Plant => "plant",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        Layer::ALL.into_iter().find(|l| l.keyword().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Access,
    Security,
    Compliance,
    Quality,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Access,
        Category::Security,
        Category::Compliance,
        Category::Quality,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Category::Access => "access",
            Category::Security => "security",
            Category::Compliance => "compliance",
            Category::Quality => "quality",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL
            .into_iter()
            .find(|c| c.keyword().eq_ignore_ascii_case(s))
    }

    /// Whether policies of this category take part in decisions on `action`.
    /// Unknown actions are governed by every category.
    pub fn governs(self, action: &str) -> bool {
        use Category::*;
        let relevant: &[Category] = match action {
            "access" | "read" | "query" | "export" | "detokenize" => &[Access, Security, Compliance],
            "ingest" => &[Security, Compliance, Quality],
            "publish" => &[Security, Compliance, Quality],
            _ => &Category::ALL,
        };
        relevant.contains(&self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrRoot {
    Subject,
    Resource,
    Env,
    Asset,
}

impl AttrRoot {
    pub fn keyword(self) -> &'static str {
        match self {
            AttrRoot::Subject => "subject",
            AttrRoot::Resource => "resource",
            AttrRoot::Env => "env",
            AttrRoot::Asset => "asset",
        }
    }

    pub fn parse(s: &str) -> Option<AttrRoot> {
        [AttrRoot::Subject, AttrRoot::Resource, AttrRoot::Env, AttrRoot::Asset]
            .into_iter()
            .find(|r| r.keyword() == s)
    }
}

/// `root.segment(.segment)*`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttrPath {
    pub root: AttrRoot,
    pub segments: Vec<String>,
}

impl PartialOrd for AttrRoot {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AttrRoot {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

impl AttrPath {
    pub fn new(root: AttrRoot, segments: &[&str]) -> Self {
        AttrPath {
            root,
            segments: segments.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Parses `subject.role`-style text.
    pub fn parse(text: &str) -> Option<AttrPath> {
        let mut parts = text.split('.');
        let root = AttrRoot::parse(parts.next()?)?;
        let segments: Vec<String> = parts.map(str::to_string).collect();
        if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
            return None;
        }
        Some(AttrPath { root, segments })
    }

    /// Key under the root's attribute map.
    pub fn key(&self) -> String {
        self.segments.join(".")
    }
}

impl fmt::Display for AttrPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.root.keyword(), self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Str(String),
    Num(f64),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Lit(Literal),
    Path(AttrPath),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
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
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DurationUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
    Weeks,
    Years,
}

impl DurationUnit {
    pub fn suffix(self) -> &'static str {
        match self {
            DurationUnit::Seconds => "s",
            DurationUnit::Minutes => "m",
            DurationUnit::Hours => "h",
            DurationUnit::Days => "d",
            DurationUnit::Weeks => "w",
            DurationUnit::Years => "y",
        }
    }

    /// A year is 365 days.
    pub fn seconds(self) -> i64 {
        match self {
            DurationUnit::Seconds => 1,
            DurationUnit::Minutes => 60,
            DurationUnit::Hours => 3_600,
            DurationUnit::Days => 86_400,
            DurationUnit::Weeks => 7 * 86_400,
            DurationUnit::Years => 365 * 86_400,
        }
    }

    pub fn parse(s: &str) -> Option<DurationUnit> {
        use DurationUnit::*;
        [Seconds, Minutes, Hours, Days, Weeks, Years]
            .into_iter()
            .find(|u| u.suffix() == s)
    }
}

/// Non-negative duration as written (`10y`), kept in its written unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DurationLit {
    pub amount: u64,
    pub unit: DurationUnit,
}

impl DurationLit {
    pub fn new(amount: u64, unit: DurationUnit) -> Self {
        DurationLit { amount, unit }
    }

    pub fn years(amount: u64) -> Self {
        DurationLit::new(amount, DurationUnit::Years)
    }

    pub fn as_seconds(self) -> i64 {
        (self.amount as i64).saturating_mul(self.unit.seconds())
    }

    pub fn as_chrono(self) -> chrono::Duration {
        chrono::Duration::seconds(self.as_seconds())
    }
}

impl fmt::Display for DurationLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.amount, self.unit.suffix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Or(Vec<Expr>),
    And(Vec<Expr>),
    Not(Box<Expr>),
    Cmp { path: AttrPath, op: CmpOp, rhs: Operand },
    In { path: AttrPath, values: Vec<Literal> },
    /// Age of the resource (`env.timestamp - resource.created_at`).
    Age { op: CmpOp, duration: DurationLit },
}

impl Expr {
    pub fn eq_lit(path: &str, lit: impl Into<Literal>) -> Expr {
        Expr::Cmp {
            path: AttrPath::parse(path).expect("valid attribute path"),
            op: CmpOp::Eq,
            rhs: Operand::Lit(lit.into()),
        }
    }

    pub fn and(parts: Vec<Expr>) -> Expr {
        if parts.len() == 1 {
            parts.into_iter().next().expect("one part")
        } else {
            Expr::And(parts)
        }
    }

    /// Every attribute path the expression reads.
    pub fn paths(&self, out: &mut Vec<AttrPath>) {
        match self {
            Expr::Or(xs) | Expr::And(xs) => xs.iter().for_each(|x| x.paths(out)),
            Expr::Not(x) => x.paths(out),
            Expr::Cmp { path, rhs, .. } => {
                out.push(path.clone());
                if let Operand::Path(p) = rhs {
                    out.push(p.clone());
                }
            }
            Expr::In { path, .. } => out.push(path.clone()),
            Expr::Age { .. } => {}
        }
    }
}

impl From<&str> for Literal {
    fn from(s: &str) -> Self {
        Literal::Str(s.to_string())
    }
}

impl From<f64> for Literal {
    fn from(n: f64) -> Self {
        Literal::Num(n)
    }
}

impl From<bool> for Literal {
    fn from(b: bool) -> Self {
        Literal::Bool(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Obligation {
    Mask(AttrPath),
    Aggregate(String),
    Retain {
        min: DurationLit,
        max: Option<DurationLit>,
    },
    /// Attached by the engine to escalations; not written in policies.
    NotifySteward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Permit,
    Forbid,
    Escalate,
}

impl Effect {
    pub fn keyword(self) -> &'static str {
        match self {
            Effect::Permit => "permit",
            Effect::Forbid => "forbid",
            Effect::Escalate => "escalate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub effect: Effect,
    pub predicate: Expr,
    #[serde(default)]
    pub obligations: Vec<Obligation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRule {
    pub min: DurationLit,
    #[serde(default)]
    pub max: Option<DurationLit>,
    pub predicate: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAst {
    pub policy_id: String,
    pub layer: Layer,
    pub category: Category,
    pub version: Version,
    #[serde(default)]
    pub effective: Option<NaiveDate>,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub retention: Vec<RetentionRule>,
}

impl PolicyAst {
    pub fn new(policy_id: &str, layer: Layer, category: Category) -> Self {
        PolicyAst {
            policy_id: policy_id.to_string(),
            layer,
            category,
            version: Version::new(1, 0, 0),
            effective: None,
            rules: Vec::new(),
            retention: Vec::new(),
        }
    }

    pub fn rule(mut self, effect: Effect, predicate: Expr) -> Self {
        self.rules.push(Rule {
            effect,
            predicate,
            obligations: Vec::new(),
        });
        self
    }

    pub fn rule_with(mut self, effect: Effect, predicate: Expr, obligations: Vec<Obligation>) -> Self {
        self.rules.push(Rule {
            effect,
            predicate,
            obligations,
        });
        self
    }

    pub fn rule_id(&self, index: usize) -> String {
        format!("{}#{index}", self.policy_id)
    }

    pub fn retention_id(&self, index: usize) -> String {
        format!("{}#retain{index}", self.policy_id)
    }
}
