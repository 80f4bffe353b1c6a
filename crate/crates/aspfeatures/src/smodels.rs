//! The smodels numeric format for ground logic programs.
//!
//! ```text
//! <rule lines>
//! 0
//! <atom id> <name>        (symbol table)
//! 0
//! B+
//! <atom ids>              (compute statement, must be true)
//! 0
//! B-
//! <atom ids>              (compute statement, must be false)
//! 0
//! <number of models>
//! ```
//!
//! Rule lines, by leading type code:
//!
//! | code | layout                                                        |
//! |------|---------------------------------------------------------------|
//! | 1    | `1 head #lits #neg neg.. pos..`                               |
//! | 2    | `2 head #lits #neg bound neg.. pos..`                         |
//! | 3    | `3 #heads heads.. #lits #neg neg.. pos..`                     |
//! | 5    | `5 head bound #lits #neg neg.. pos.. weights..`               |

use std::fmt::Write as _;

use thiserror::Error;

/// Atom 1 is the conventional false atom heading integrity constraints.
pub const FALSE_ATOM: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unknown rule type {0}")]
    UnknownRuleType(i64),
    #[error("unexpected end of input")]
    Truncated,
    #[error("negative atom id {0}")]
    NegativeAtom(i64),
    #[error("atom id 0 is not allowed here")]
    ZeroAtom,
    #[error("body length fields inconsistent with literal count")]
    BodyLength,
    #[error("not an integer: `{0}`")]
    BadToken(String),
    #[error("expected `{0}`")]
    Expected(&'static str),
    #[error("trailing input after model count")]
    Trailing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Normal,
    Cardinality { bound: u64 },
    Choice,
    Weight { bound: u64 },
}

impl RuleKind {
    pub fn code(self) -> u8 {
        match self {
            RuleKind::Normal => 1,
            RuleKind::Cardinality { .. } => 2,
            RuleKind::Choice => 3,
            RuleKind::Weight { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub kind: RuleKind,
    /// One head for all kinds but choice rules.
    pub heads: Vec<u32>,
    pub negative: Vec<u32>,
    pub positive: Vec<u32>,
    /// Literal weights of weight rules, negative literals first.
    pub weights: Vec<u64>,
}

impl Rule {
    pub fn body_len(&self) -> usize {
        self.negative.len() + self.positive.len()
    }

    pub fn is_integrity_constraint(&self) -> bool {
        self.kind != RuleKind::Choice && self.heads == [FALSE_ATOM]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundProgram {
    pub rules: Vec<Rule>,
    pub symbols: Vec<(u32, String)>,
    pub compute_positive: Vec<u32>,
    pub compute_negative: Vec<u32>,
    pub models: u64,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), ParseError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let line = line.trim();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(ParseError {
            line: self.last + 1,
            kind: ParseErrorKind::Truncated,
        })
    }
}

fn ints(line: usize, text: &str) -> Result<Vec<i64>, ParseError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<i64>().map_err(|_| ParseError {
                line,
                kind: ParseErrorKind::BadToken(t.to_string()),
            })
        })
        .collect()
}

fn atom(line: usize, v: i64) -> Result<u32, ParseError> {
    let kind = match v {
        v if v < 0 => ParseErrorKind::NegativeAtom(v),
        0 => ParseErrorKind::ZeroAtom,
        v => return u32::try_from(v).map_err(|_| ParseError { line, kind: ParseErrorKind::BadToken(v.to_string()) }),
    };
    Err(ParseError { line, kind })
}

fn count(line: usize, v: i64) -> Result<usize, ParseError> {
    usize::try_from(v).map_err(|_| ParseError {
        line,
        kind: ParseErrorKind::BodyLength,
    })
}

fn parse_rule(line: usize, t: &[i64]) -> Result<Rule, ParseError> {
    let err = |kind| ParseError { line, kind };
    let short = || err(ParseErrorKind::BodyLength);
    let get = |i: usize| t.get(i).copied().ok_or_else(short);
    // Reads `#lits #neg` at `at`, then literals; returns (neg, pos, next index).
    let body = |at: usize| -> Result<(Vec<u32>, Vec<u32>, usize), ParseError> {
        let n = count(line, get(at)?)?;
        let neg = count(line, get(at + 1)?)?;
        if neg > n {
            return Err(short());
        }
        let lits = t.get(at + 2..at + 2 + n).ok_or_else(short)?;
        let lits = lits.iter().map(|&v| atom(line, v)).collect::<Result<Vec<_>, _>>()?;
        Ok((lits[..neg].to_vec(), lits[neg..].to_vec(), at + 2 + n))
    };
    let code = get(0)?;
    let (kind, heads, negative, positive, weights, end) = match code {
        1 => {
            let head = atom(line, get(1)?)?;
            let (neg, pos, end) = body(2)?;
            (RuleKind::Normal, vec![head], neg, pos, vec![], end)
        }
        2 => {
            let head = atom(line, get(1)?)?;
            let n = count(line, get(2)?)?;
            let neg = count(line, get(3)?)?;
            let bound = count(line, get(4)?)? as u64;
            if neg > n {
                return Err(short());
            }
            let lits = t.get(5..5 + n).ok_or_else(short)?;
            let lits = lits.iter().map(|&v| atom(line, v)).collect::<Result<Vec<_>, _>>()?;
            (
                RuleKind::Cardinality { bound },
                vec![head],
                lits[..neg].to_vec(),
                lits[neg..].to_vec(),
                vec![],
                5 + n,
            )
        }
        3 => {
            let nh = count(line, get(1)?)?;
            let heads = t.get(2..2 + nh).ok_or_else(short)?;
            let heads = heads.iter().map(|&v| atom(line, v)).collect::<Result<Vec<_>, _>>()?;
            let (neg, pos, end) = body(2 + nh)?;
            (RuleKind::Choice, heads, neg, pos, vec![], end)
        }
        5 => {
            let head = atom(line, get(1)?)?;
            let bound = count(line, get(2)?)? as u64;
            let (neg, pos, at) = body(3)?;
            let n = neg.len() + pos.len();
            let weights = t.get(at..at + n).ok_or_else(short)?;
            let weights = weights.iter().map(|&w| count(line, w).map(|w| w as u64)).collect::<Result<Vec<_>, _>>()?;
            (RuleKind::Weight { bound }, vec![head], neg, pos, weights, at + n)
        }
        other => return Err(err(ParseErrorKind::UnknownRuleType(other))),
    };
    if end != t.len() {
        return Err(short());
    }
    Ok(Rule {
        kind,
        heads,
        negative,
        positive,
        weights,
    })
}

fn atom_block(lines: &mut Lines<'_>, keyword: &'static str) -> Result<Vec<u32>, ParseError> {
    let (line, text) = lines.next()?;
    if text != keyword {
        return Err(ParseError {
            line,
            kind: ParseErrorKind::Expected(keyword),
        });
    }
    let mut atoms = Vec::new();
    loop {
        let (line, text) = lines.next()?;
        let v = ints(line, text)?;
        match v.as_slice() {
            [0] => return Ok(atoms),
            [a] => atoms.push(atom(line, *a)?),
            _ => {
                return Err(ParseError {
                    line,
                    kind: ParseErrorKind::Expected("one atom id per line"),
                })
            }
        }
    }
}

/// Parses a program in smodels numeric format.
pub fn parse_smodels(text: &str) -> Result<GroundProgram, ParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let mut program = GroundProgram::default();
    loop {
        let (line, text) = lines.next()?;
        let t = ints(line, text)?;
        if t == [0] {
            break;
        }
        program.rules.push(parse_rule(line, &t)?);
    }
    loop {
        let (line, text) = lines.next()?;
        let (id, name) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let id: i64 = id.parse().map_err(|_| ParseError {
            line,
            kind: ParseErrorKind::BadToken(id.to_string()),
        })?;
        if id == 0 && name.is_empty() {
            break;
        }
        program.symbols.push((atom(line, id)?, name.trim().to_string()));
    }
    program.compute_positive = atom_block(&mut lines, "B+")?;
    program.compute_negative = atom_block(&mut lines, "B-")?;
    let (line, text) = lines.next()?;
    program.models = match ints(line, text)?.as_slice() {
        [m] if *m >= 0 => *m as u64,
        _ => {
            return Err(ParseError {
                line,
                kind: ParseErrorKind::Expected("number of models"),
            })
        }
    };
    if let Ok((line, _)) = lines.next() {
        return Err(ParseError {
            line,
            kind: ParseErrorKind::Trailing,
        });
    }
    Ok(program)
}

/// Canonical text: single spaces, one item per line, trailing newline.
pub fn write_smodels(program: &GroundProgram) -> String {
    let mut out = String::new();
    let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>();
    for r in &program.rules {
        let mut f: Vec<String> = vec![r.kind.code().to_string()];
        let lits = || {
            let mut l = vec![r.body_len().to_string(), r.negative.len().to_string()];
            l.extend(join(&r.negative));
            l.extend(join(&r.positive));
            l
        };
        match r.kind {
            RuleKind::Normal => {
                f.push(r.heads[0].to_string());
                f.extend(lits());
            }
            RuleKind::Cardinality { bound } => {
                f.push(r.heads[0].to_string());
                f.push(r.body_len().to_string());
                f.push(r.negative.len().to_string());
                f.push(bound.to_string());
                f.extend(join(&r.negative));
                f.extend(join(&r.positive));
            }
            RuleKind::Choice => {
                f.push(r.heads.len().to_string());
                f.extend(join(&r.heads));
                f.extend(lits());
            }
            RuleKind::Weight { bound } => {
                f.push(r.heads[0].to_string());
                f.push(bound.to_string());
                f.extend(lits());
                f.extend(r.weights.iter().map(u64::to_string));
            }
        }
        let _ = writeln!(out, "{}", f.join(" "));
    }
    out.push_str("0\n");
    for (id, name) in &program.symbols {
        let _ = writeln!(out, "{id} {name}");
    }
    out.push_str("0\nB+\n");
    for a in &program.compute_positive {
        let _ = writeln!(out, "{a}");
    }
    out.push_str("0\nB-\n");
    for a in &program.compute_negative {
        let _ = writeln!(out, "{a}");
    }
    let _ = writeln!(out, "0\n{}", program.models);
    out
}
