//! Formula language in negation normal form.
//!
//! Negation is only available on propositional variables; `negate` pushes it
//! through every connective by swapping duals. Implication and equivalence
//! exist only as parser sugar and are compiled away.

use alloc::borrow::ToOwned;
use alloc::boxed::Box as ABox;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Index of an agent. Valid indices run from `0` to `agents - 1` for
/// whatever agent count the surrounding context (parser, model, prover
/// configuration) fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A formula in negation normal form.
///
/// The derived `Ord` is the structural order used whenever a deterministic
/// choice among formulas is needed (worklists, branching order), so the
/// variant order below is part of the crate's observable behaviour.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    /// Propositional variable.
    Atom(String),
    /// Negated propositional variable; the only place negation can occur.
    NegAtom(String),
    /// Conjunction.
    And(ABox<Formula>, ABox<Formula>),
    /// Disjunction.
    Or(ABox<Formula>, ABox<Formula>),
    /// Settledness: true at every world of the model.
    Box(ABox<Formula>),
    /// Dual of [`Formula::Box`]: true at some world.
    Dia(ABox<Formula>),
    /// Choice-cell necessity for one agent ("the agent sees to it").
    AgBox(AgentId, ABox<Formula>),
    /// Dual of [`Formula::AgBox`]: consistent with the agent's choice.
    AgDia(AgentId, ABox<Formula>),
    /// Obligation: true throughout the agent's ideal worlds.
    Ought(AgentId, ABox<Formula>),
    /// Permission, dual of [`Formula::Ought`]: true at some ideal world.
    Perm(AgentId, ABox<Formula>),
}

/// Ordered set of formulas.
pub type FormulaSet = BTreeSet<Formula>;

/// The reserved variable used to encode `true` as `_t | ~_t` and `false` as
/// `_t & ~_t`. User identifiers may not start with an underscore, so the
/// encodings cannot collide with input vocabulary.
pub const TOP_VAR: &str = "_t";

impl Formula {
    /// `true`, encoded as `_t | ~_t`.
    pub fn top() -> Formula {
        Formula::Or(
            ABox::new(Formula::Atom(TOP_VAR.to_owned())),
            ABox::new(Formula::NegAtom(TOP_VAR.to_owned())),
        )
    }

    /// `false`, encoded as `_t & ~_t`.
    pub fn bot() -> Formula {
        Formula::And(
            ABox::new(Formula::Atom(TOP_VAR.to_owned())),
            ABox::new(Formula::NegAtom(TOP_VAR.to_owned())),
        )
    }

    /// Material implication `self -> other`, compiled to `~self | other`.
    pub fn imp(self, other: Formula) -> Formula {
        Formula::Or(ABox::new(self.negate()), ABox::new(other))
    }

    /// The negation of the formula, in negation normal form: every
    /// connective is swapped with its dual and literals are flipped.
    /// Involutive: `f.negate().negate() == f`.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::Atom(v) => Formula::NegAtom(v.clone()),
            Formula::NegAtom(v) => Formula::Atom(v.clone()),
            Formula::And(l, r) => {
                Formula::Or(ABox::new(l.negate()), ABox::new(r.negate()))
            }
            Formula::Or(l, r) => {
                Formula::And(ABox::new(l.negate()), ABox::new(r.negate()))
            }
            Formula::Box(b) => Formula::Dia(ABox::new(b.negate())),
            Formula::Dia(b) => Formula::Box(ABox::new(b.negate())),
            Formula::AgBox(i, b) => Formula::AgDia(*i, ABox::new(b.negate())),
            Formula::AgDia(i, b) => Formula::AgBox(*i, ABox::new(b.negate())),
            Formula::Ought(i, b) => Formula::Perm(*i, ABox::new(b.negate())),
            Formula::Perm(i, b) => Formula::Ought(*i, ABox::new(b.negate())),
        }
    }

    /// Symbol count: a variable counts 1, a negated variable 2, every
    /// connective 1 plus its operands.
    pub fn complexity(&self) -> u64 {
        match self {
            Formula::Atom(_) => 1,
            Formula::NegAtom(_) => 2,
            Formula::And(l, r) | Formula::Or(l, r) => 1 + l.complexity() + r.complexity(),
            Formula::Box(b) | Formula::Dia(b) => 1 + b.complexity(),
            Formula::AgBox(_, b)
            | Formula::AgDia(_, b)
            | Formula::Ought(_, b)
            | Formula::Perm(_, b) => 1 + b.complexity(),
        }
    }

    /// The subformula set: a literal contributes itself, a modal formula
    /// contributes itself plus the subformulas of its body, and a binary
    /// formula contributes the union for its operands *without* the
    /// compound itself.
    pub fn subformulas(&self) -> FormulaSet {
        let mut out = BTreeSet::new();
        self.collect_subformulas(&mut out);
        out
    }

    fn collect_subformulas(&self, out: &mut FormulaSet) {
        match self {
            Formula::Atom(_) | Formula::NegAtom(_) => {
                out.insert(self.clone());
            }
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.collect_subformulas(out);
                r.collect_subformulas(out);
            }
            Formula::Box(b)
            | Formula::Dia(b)
            | Formula::AgBox(_, b)
            | Formula::AgDia(_, b)
            | Formula::Ought(_, b)
            | Formula::Perm(_, b) => {
                out.insert(self.clone());
                b.collect_subformulas(out);
            }
        }
    }

    /// All propositional variables occurring in the formula.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(v) | Formula::NegAtom(v) => {
                out.insert(v.clone());
            }
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Formula::Box(b)
            | Formula::Dia(b)
            | Formula::AgBox(_, b)
            | Formula::AgDia(_, b)
            | Formula::Ought(_, b)
            | Formula::Perm(_, b) => b.collect_vars(out),
        }
    }

    /// True for `Atom` and `NegAtom`.
    pub fn is_literal(&self) -> bool {
        matches!(self, Formula::Atom(_) | Formula::NegAtom(_))
    }

    /// Largest agent index mentioned, if any modality occurs.
    pub fn max_agent(&self) -> Option<AgentId> {
        match self {
            Formula::Atom(_) | Formula::NegAtom(_) => None,
            Formula::And(l, r) | Formula::Or(l, r) => match (l.max_agent(), r.max_agent()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (x, y) => x.or(y),
            },
            Formula::Box(b) | Formula::Dia(b) => b.max_agent(),
            Formula::AgBox(i, b)
            | Formula::AgDia(i, b)
            | Formula::Ought(i, b)
            | Formula::Perm(i, b) => Some(b.max_agent().map_or(*i, |j| (*i).max(j))),
        }
    }
}

impl fmt::Display for Formula {
    /// Prints with every binary connective fully parenthesized and unary
    /// connectives prefix, so output reparses to the same formula.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(v) => write!(f, "{v}"),
            Formula::NegAtom(v) => write!(f, "~{v}"),
            Formula::And(l, r) => write!(f, "({l} & {r})"),
            Formula::Or(l, r) => write!(f, "({l} | {r})"),
            Formula::Box(b) => write!(f, "box {b}"),
            Formula::Dia(b) => write!(f, "dia {b}"),
            Formula::AgBox(i, b) => write!(f, "[{i}] {b}"),
            Formula::AgDia(i, b) => write!(f, "<{i}> {b}"),
            Formula::Ought(i, b) => write!(f, "O[{i}] {b}"),
            Formula::Perm(i, b) => write!(f, "P[{i}] {b}"),
        }
    }
}

/// Error from [`parse`], with the byte offset where it occurred.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input.
    pub pos: usize,
    /// Human-readable description.
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: {}", self.pos, self.msg)
    }
}

impl core::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    AgBox(u32),
    AgDia(u32),
    Ought(u32),
    Perm(u32),
    BoxKw,
    DiaKw,
    TrueKw,
    FalseKw,
    Tilde,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Iff,
    LPar,
    RPar,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::AgBox(i) => write!(f, "`[{i}]`"),
            Tok::AgDia(i) => write!(f, "`<{i}>`"),
            Tok::Ought(i) => write!(f, "`O[{i}]`"),
            Tok::Perm(i) => write!(f, "`P[{i}]`"),
            Tok::BoxKw => write!(f, "`box`"),
            Tok::DiaKw => write!(f, "`dia`"),
            Tok::TrueKw => write!(f, "`true`"),
            Tok::FalseKw => write!(f, "`false`"),
            Tok::Tilde => write!(f, "`~`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Iff => write!(f, "`<->`"),
            Tok::LPar => write!(f, "`(`"),
            Tok::RPar => write!(f, "`)`"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, pos: usize, msg: String) -> ParseError {
        ParseError { pos, msg }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn nat(&mut self) -> Result<u32, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(start, "expected agent index".to_owned()));
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<u32>()
            .map_err(|_| self.err(start, format!("agent index `{text}` too large")))
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(self.pos, format!("expected `{}`", c as char)))
        }
    }

    fn tokens(&mut self) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(c) = self.peek() else { break };
            self.pos += 1;
            let tok = match c {
                b'(' => Tok::LPar,
                b')' => Tok::RPar,
                b'&' => Tok::Amp,
                b'|' => Tok::Pipe,
                b'~' => Tok::Tilde,
                b'!' => Tok::Bang,
                b'-' => {
                    self.expect(b'>')?;
                    Tok::Arrow
                }
                b'<' => match self.peek() {
                    Some(b'-') => {
                        self.pos += 1;
                        self.expect(b'>')?;
                        Tok::Iff
                    }
                    Some(b'>') => {
                        self.pos += 1;
                        Tok::DiaKw
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let i = self.nat()?;
                        self.expect(b'>')?;
                        Tok::AgDia(i)
                    }
                    _ => return Err(self.err(start, "expected `<->`, `<>`, or `<agent>`".to_owned())),
                },
                b'[' => match self.peek() {
                    Some(b']') => {
                        self.pos += 1;
                        Tok::BoxKw
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let i = self.nat()?;
                        self.expect(b']')?;
                        Tok::AgBox(i)
                    }
                    _ => return Err(self.err(start, "expected `[]` or `[agent]`".to_owned())),
                },
                b'_' => {
                    // Only the reserved truth-encoding variable may start
                    // with an underscore; it has to round-trip through print.
                    let ident = self.ident_tail(start);
                    if ident == TOP_VAR {
                        Tok::Ident(ident)
                    } else {
                        return Err(self.err(
                            start,
                            "identifiers starting with `_` are reserved".to_owned(),
                        ));
                    }
                }
                c if c.is_ascii_alphabetic() => {
                    let ident = self.ident_tail(start);
                    match ident.as_str() {
                        "box" => Tok::BoxKw,
                        "dia" => Tok::DiaKw,
                        "true" => Tok::TrueKw,
                        "false" => Tok::FalseKw,
                        "O" if self.peek() == Some(b'[') => {
                            self.pos += 1;
                            let i = self.nat()?;
                            self.expect(b']')?;
                            Tok::Ought(i)
                        }
                        "P" if self.peek() == Some(b'[') => {
                            self.pos += 1;
                            let i = self.nat()?;
                            self.expect(b']')?;
                            Tok::Perm(i)
                        }
                        _ => Tok::Ident(ident),
                    }
                }
                other => {
                    return Err(self.err(
                        start,
                        format!("unexpected character `{}`", other as char),
                    ))
                }
            };
            out.push((tok, start));
        }
        Ok(out)
    }

    fn ident_tail(&mut self, start: usize) -> String {
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
        {
            self.pos += 1;
        }
        core::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_owned()
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    agents: u32,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn err(&self, msg: String) -> ParseError {
        ParseError {
            pos: self.pos(),
            msg,
        }
    }

    fn check_agent(&self, i: u32) -> Result<AgentId, ParseError> {
        if i < self.agents {
            Ok(AgentId(i))
        } else {
            Err(ParseError {
                pos: self.toks[self.idx - 1].1,
                msg: format!("agent index {i} out of range (agent count is {})", self.agents),
            })
        }
    }

    // `<->` binds loosest and associates to the right.
    fn iff(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.imp()?;
        if matches!(self.peek(), Some(Tok::Iff)) {
            self.bump();
            let rhs = self.iff()?;
            let fwd = lhs.clone().imp(rhs.clone());
            let bwd = rhs.imp(lhs);
            Ok(Formula::And(ABox::new(fwd), ABox::new(bwd)))
        } else {
            Ok(lhs)
        }
    }

    fn imp(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disj()?;
        if matches!(self.peek(), Some(Tok::Arrow)) {
            self.bump();
            let rhs = self.imp()?;
            Ok(lhs.imp(rhs))
        } else {
            Ok(lhs)
        }
    }

    fn disj(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.conj()?;
        while matches!(self.peek(), Some(Tok::Pipe)) {
            self.bump();
            let rhs = self.conj()?;
            lhs = Formula::Or(ABox::new(lhs), ABox::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while matches!(self.peek(), Some(Tok::Amp)) {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::And(ABox::new(lhs), ABox::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let Some(tok) = self.bump() else {
            return Err(self.err("expected a formula".to_owned()));
        };
        match tok {
            Tok::Ident(v) => Ok(Formula::Atom(v)),
            Tok::TrueKw => Ok(Formula::top()),
            Tok::FalseKw => Ok(Formula::bot()),
            Tok::Tilde => match self.bump() {
                Some(Tok::Ident(v)) => Ok(Formula::NegAtom(v)),
                _ => {
                    self.idx = self.idx.saturating_sub(1);
                    Err(self.err("`~` applies to a variable; use `!` to negate a formula".to_owned()))
                }
            },
            Tok::Bang => Ok(self.unary()?.negate()),
            Tok::BoxKw => Ok(Formula::Box(ABox::new(self.unary()?))),
            Tok::DiaKw => Ok(Formula::Dia(ABox::new(self.unary()?))),
            Tok::AgBox(i) => {
                let i = self.check_agent(i)?;
                Ok(Formula::AgBox(i, ABox::new(self.unary()?)))
            }
            Tok::AgDia(i) => {
                let i = self.check_agent(i)?;
                Ok(Formula::AgDia(i, ABox::new(self.unary()?)))
            }
            Tok::Ought(i) => {
                let i = self.check_agent(i)?;
                Ok(Formula::Ought(i, ABox::new(self.unary()?)))
            }
            Tok::Perm(i) => {
                let i = self.check_agent(i)?;
                Ok(Formula::Perm(i, ABox::new(self.unary()?)))
            }
            Tok::LPar => {
                let inner = self.iff()?;
                match self.bump() {
                    Some(Tok::RPar) => Ok(inner),
                    _ => {
                        self.idx = self.idx.saturating_sub(1);
                        Err(self.err("expected `)`".to_owned()))
                    }
                }
            }
            other => Err(ParseError {
                pos: self.toks[self.idx - 1].1,
                msg: format!("expected a formula, found {other}"),
            }),
        }
    }
}

/// Parses the ASCII formula syntax into negation normal form.
///
/// Grammar, loosest to tightest: `<->` (right-assoc), `->` (right-assoc),
/// `|`, `&`, then the prefix operators `~v`, `!f`, `box`/`[]`, `dia`/`<>`,
/// `[i]`, `<i>`, `O[i]`, `P[i]`. `true`/`false` become `_t | ~_t` and
/// `_t & ~_t`. `!`, `->`, and `<->` are compiled away, so the result only
/// contains the connectives of [`Formula`].
///
/// Agent indices are checked against `agents`; identifiers are ASCII
/// `[A-Za-z][A-Za-z0-9_]*` minus the keywords, and may not start with `_`.
pub fn parse(input: &str, agents: u32) -> Result<Formula, ParseError> {
    let mut lexer = Lexer {
        src: input.as_bytes(),
        pos: 0,
    };
    let toks = lexer.tokens()?;
    let mut parser = Parser {
        toks,
        idx: 0,
        agents,
        end: input.len(),
    };
    let f = parser.iff()?;
    if parser.idx < parser.toks.len() {
        let (tok, pos) = &parser.toks[parser.idx];
        return Err(ParseError {
            pos: *pos,
            msg: format!("unexpected {tok} after formula"),
        });
    }
    Ok(f)
}
