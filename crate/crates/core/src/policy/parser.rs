use std::fmt;

use chrono::NaiveDate;
use semver::Version;
use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown attribute root `{root}` at {line}:{column}")]
    UnknownAttributeRoot {
        line: usize,
        column: usize,
        root: String,
    },
}

impl ParseError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, column, .. }
            | ParseError::UnknownAttributeRoot { line, column, .. } => (*line, *column),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    /// Digit-led run: numbers, durations, versions, dates.
    Atom(String),
    Str(String),
    Op(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| ParseError::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '-') {
                i += 1;
            }
            Tok::Word(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                if d == '.' && chars.get(i + 1) == Some(&'.') {
                    break;
                }
                if d.is_ascii_alphanumeric() || d == '.' || d == '-' || d == ':' || d == '_' {
                    i += 1;
                } else {
                    break;
                }
            }
            Tok::Atom(chars[start..i].iter().collect())
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(tl, tc, "unterminated string".into())),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => return Err(err(line, col + (i - start), "bad escape".into())),
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            Tok::Str(s)
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op = match two.as_str() {
                "==" => Some("=="),
                "!=" => Some("!="),
                "<=" => Some("<="),
                ">=" => Some(">="),
                ".." => Some(".."),
                _ => None,
            };
            match op {
                Some(op) => {
                    i += 2;
                    Tok::Op(op)
                }
                None => {
                    let op = match c {
                        '<' => "<",
                        '>' => ">",
                        '(' => "(",
                        ')' => ")",
                        '{' => "{",
                        '}' => "}",
                        ',' => ",",
                        '.' => ".",
                        _ => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
                    };
                    i += 1;
                    Tok::Op(op)
                }
            }
        };
        col += i - start;
        out.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

const RESERVED: &[&str] = &[
    "policy", "layer", "category", "version", "effective", "permit", "forbid", "escalate", "retain",
    "when", "with", "and", "or", "not", "in", "age", "true", "false", "mask", "aggregate",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Atom(a) => format!("`{a}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Op(o) => format!("`{o}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w == kw)
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(&self.peek().tok, Tok::Op(o) if *o == op)
    }

    fn expect_word(&mut self, kw: &str) -> Result<Token, ParseError> {
        if self.is_word(kw) {
            Ok(self.next())
        } else {
            let t = self.peek().clone();
            Err(self.error_at(&t, format!("expected `{kw}`, found {}", Self::describe(&t.tok))))
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<Token, ParseError> {
        if self.is_op(op) {
            Ok(self.next())
        } else {
            let t = self.peek().clone();
            Err(self.error_at(&t, format!("expected `{op}`, found {}", Self::describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Word(w) => Ok(w.clone()),
            other => Err(self.error_at(&t, format!("expected {what}, found {}", Self::describe(other)))),
        }
    }

    fn atom(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Atom(a) => Ok((a.clone(), t.clone())),
            other => Err(self.error_at(&t, format!("expected {what}, found {}", Self::describe(other)))),
        }
    }

    fn policy(&mut self) -> Result<PolicyAst, ParseError> {
        self.expect_word("policy")?;
        let mut id = self.ident("policy identifier")?;
        while self.is_op(".") {
            self.next();
            id.push('.');
            id.push_str(&self.ident("policy identifier")?);
        }
        self.expect_word("layer")?;
        let t = self.peek().clone();
        let layer = Layer::parse(&self.ident("layer")?)
            .ok_or_else(|| self.error_at(&t, "layer must be enterprise, domain or plant"))?;
        self.expect_word("category")?;
        let t = self.peek().clone();
        let category = Category::parse(&self.ident("category")?).ok_or_else(|| {
            self.error_at(&t, "category must be access, security, compliance or quality")
        })?;
        self.expect_word("version")?;
        let (v, t) = self.atom("semantic version")?;
        let version = Version::parse(&v).map_err(|e| self.error_at(&t, format!("bad version `{v}`: {e}")))?;
        let mut effective = None;
        if self.is_word("effective") {
            self.next();
            let (d, t) = self.atom("date")?;
            effective = Some(
                NaiveDate::parse_from_str(&d, "%Y-%m-%d")
                    .map_err(|_| self.error_at(&t, format!("bad date `{d}`, expected YYYY-MM-DD")))?,
            );
        }
        let mut ast = PolicyAst {
            policy_id: id,
            layer,
            category,
            version,
            effective,
            rules: Vec::new(),
            retention: Vec::new(),
        };
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Word(w) if w == "permit" || w == "forbid" || w == "escalate" => {
                    let effect = match w.as_str() {
                        "permit" => Effect::Permit,
                        "forbid" => Effect::Forbid,
                        _ => Effect::Escalate,
                    };
                    self.next();
                    self.expect_word("when")?;
                    let predicate = self.expr()?;
                    let mut obligations = Vec::new();
                    if self.is_word("with") {
                        self.next();
                        obligations.push(self.obligation()?);
                        while self.is_op(",") {
                            self.next();
                            obligations.push(self.obligation()?);
                        }
                    }
                    ast.rules.push(Rule {
                        effect,
                        predicate,
                        obligations,
                    });
                }
                Tok::Word(w) if w == "retain" => {
                    self.next();
                    let (min, max) = self.duration_range()?;
                    self.expect_word("when")?;
                    let predicate = self.expr()?;
                    ast.retention.push(RetentionRule { min, max, predicate });
                }
                Tok::Eof => break,
                other => {
                    return Err(self.error_at(
                        &t,
                        format!("expected `permit`, `forbid`, `escalate` or `retain`, found {}", Self::describe(other)),
                    ))
                }
            }
        }
        if ast.rules.is_empty() && ast.retention.is_empty() {
            let t = self.peek().clone();
            return Err(self.error_at(&t, "policy has no rules"));
        }
        Ok(ast)
    }

    fn duration(&mut self) -> Result<DurationLit, ParseError> {
        let (a, t) = self.atom("duration")?;
        let split = a.find(|c: char| !c.is_ascii_digit()).unwrap_or(a.len());
        let (num, unit) = a.split_at(split);
        let amount: u64 = num
            .parse()
            .map_err(|_| self.error_at(&t, format!("bad duration `{a}`")))?;
        let unit = DurationUnit::parse(unit)
            .ok_or_else(|| self.error_at(&t, format!("bad duration `{a}`, unit must be s, m, h, d, w or y")))?;
        Ok(DurationLit::new(amount, unit))
    }

    fn duration_range(&mut self) -> Result<(DurationLit, Option<DurationLit>), ParseError> {
        let min = self.duration()?;
        let max = if self.is_op("..") {
            self.next();
            Some(self.duration()?)
        } else {
            None
        };
        Ok((min, max))
    }

    fn obligation(&mut self) -> Result<Obligation, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Word(w) if w == "mask" => {
                self.next();
                self.expect_op("(")?;
                let p = self.path()?;
                self.expect_op(")")?;
                Ok(Obligation::Mask(p))
            }
            Tok::Word(w) if w == "aggregate" => {
                self.next();
                self.expect_op("(")?;
                let g = self.ident("aggregation granularity")?;
                self.expect_op(")")?;
                Ok(Obligation::Aggregate(g))
            }
            Tok::Word(w) if w == "retain" => {
                self.next();
                let (min, max) = self.duration_range()?;
                Ok(Obligation::Retain { min, max })
            }
            other => Err(self.error_at(
                &t,
                format!("expected obligation `mask`, `aggregate` or `retain`, found {}", Self::describe(other)),
            )),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        while self.is_word("or") {
            self.next();
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut preds = vec![self.pred()?];
        while self.is_word("and") {
            self.next();
            preds.push(self.pred()?);
        }
        Ok(if preds.len() == 1 { preds.pop().unwrap() } else { Expr::And(preds) })
    }

    fn pred(&mut self) -> Result<Expr, ParseError> {
        if self.is_word("not") {
            self.next();
            return Ok(Expr::Not(Box::new(self.pred()?)));
        }
        if self.is_op("(") {
            self.next();
            let e = self.expr()?;
            self.expect_op(")")?;
            return Ok(e);
        }
        if self.is_word("age") {
            self.next();
            let op = self.cmp_op()?;
            let duration = self.duration()?;
            return Ok(Expr::Age { op, duration });
        }
        let path = self.path()?;
        if self.is_word("in") {
            self.next();
            self.expect_op("{")?;
            let mut values = vec![self.literal()?];
            while self.is_op(",") {
                self.next();
                values.push(self.literal()?);
            }
            self.expect_op("}")?;
            return Ok(Expr::In { path, values });
        }
        let op = self.cmp_op()?;
        let rhs = match &self.peek().tok {
            Tok::Word(w) if w != "true" && w != "false" => Operand::Path(self.path()?),
            _ => Operand::Lit(self.literal()?),
        };
        Ok(Expr::Cmp { path, op, rhs })
    }

    fn cmp_op(&mut self) -> Result<CmpOp, ParseError> {
        let t = self.next();
        let op = match &t.tok {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            other => {
                return Err(self.error_at(&t, format!("expected comparison operator, found {}", Self::describe(other))))
            }
        };
        Ok(op)
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Str(s) => Ok(Literal::Str(s.clone())),
            Tok::Word(w) if w == "true" => Ok(Literal::Bool(true)),
            Tok::Word(w) if w == "false" => Ok(Literal::Bool(false)),
            Tok::Atom(a) => match a.parse::<f64>() {
                Ok(n) if n.is_finite() && a.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-') => {
                    Ok(Literal::Num(n))
                }
                _ => Err(self.error_at(&t, format!("bad number `{a}`"))),
            },
            other => Err(self.error_at(&t, format!("expected literal, found {}", Self::describe(other)))),
        }
    }

    fn path(&mut self) -> Result<AttrPath, ParseError> {
        let t = self.next();
        let root_word = match &t.tok {
            Tok::Word(w) => w.clone(),
            other => return Err(self.error_at(&t, format!("expected attribute path, found {}", Self::describe(other)))),
        };
        let Some(root) = AttrRoot::parse(&root_word) else {
            if RESERVED.contains(&root_word.as_str()) && !self.is_op(".") {
                return Err(self.error_at(&t, format!("expected attribute path, found `{root_word}`")));
            }
            return Err(ParseError::UnknownAttributeRoot {
                line: t.line,
                column: t.column,
                root: root_word,
            });
        };
        let mut segments = Vec::new();
        while self.is_op(".") {
            self.next();
            segments.push(self.ident("attribute name")?);
        }
        if segments.is_empty() {
            return Err(self.error_at(&t, format!("attribute path `{root_word}` needs at least one segment")));
        }
        Ok(AttrPath { root, segments })
    }
}

/// Parses policy DSL text into an AST.
pub fn parse_policy(src: &str) -> Result<PolicyAst, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    p.policy()
}

/// Parses a standalone boolean expression.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return Err(p.error_at(&t, format!("unexpected {}", Parser::describe(&t.tok))));
    }
    Ok(e)
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write_str_lit(f, s),
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Lit(l) => write!(f, "{l}"),
            Operand::Path(p) => write!(f, "{p}"),
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Or(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    write_child(f, x, matches!(x, Expr::Or(_)))?;
                }
                Ok(())
            }
            Expr::And(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write_child(f, x, matches!(x, Expr::Or(_) | Expr::And(_)))?;
                }
                Ok(())
            }
            Expr::Not(x) => {
                f.write_str("not ")?;
                write_child(f, x, matches!(**x, Expr::Or(_) | Expr::And(_)))
            }
            Expr::Cmp { path, op, rhs } => write!(f, "{path} {} {rhs}", op.symbol()),
            Expr::In { path, values } => {
                write!(f, "{path} in {{")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            Expr::Age { op, duration } => write!(f, "age {} {duration}", op.symbol()),
        }
    }
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Obligation::Mask(p) => write!(f, "mask({p})"),
            Obligation::Aggregate(g) => write!(f, "aggregate({g})"),
            Obligation::Retain { min, max: None } => write!(f, "retain {min}"),
            Obligation::Retain { min, max: Some(max) } => write!(f, "retain {min}..{max}"),
            Obligation::NotifySteward => f.write_str("notify-steward"),
        }
    }
}

impl fmt::Display for PolicyAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "policy {} layer {} category {} version {}",
            self.policy_id,
            self.layer.keyword(),
            self.category.keyword(),
            self.version
        )?;
        if let Some(d) = self.effective {
            write!(f, " effective {}", d.format("%Y-%m-%d"))?;
        }
        for r in &self.rules {
            write!(f, "\n  {} when {}", r.effect.keyword(), r.predicate)?;
            for (i, o) in r.obligations.iter().enumerate() {
                f.write_str(if i == 0 { " with " } else { ", " })?;
                write!(f, "{o}")?;
            }
        }
        for r in &self.retention {
            write!(f, "\n  retain {}", r.min)?;
            if let Some(max) = r.max {
                write!(f, "..{max}")?;
            }
            write!(f, " when {}", r.predicate)?;
        }
        writeln!(f)
    }
}

/// Canonical text form; parses back to an identical AST.
pub fn print_policy(ast: &PolicyAst) -> String {
    ast.to_string()
}
