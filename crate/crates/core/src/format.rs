//! Line-oriented text format for environments and trained snapshots.
//!
//! ```text
//! states <N> gamma <g>
//! bb <id> <id> ...
//! t <s> <a> -> <c1> <c2> ...
//! pi0 <s> <p1> <p2> ...
//! pi <s> <p1> <p2> ...      (snapshots only)
//! v <s> <value>             (snapshots only)
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Floats are written
//! in shortest round-trip form, so parsing a serialized document restores
//! every probability bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::env_gen::BasePolicy;
use crate::error::{Error, Result};
use crate::mdp::{StateId, TreeMdp};
use crate::values::{StochasticPolicy, ValueTable};

/// A parsed document. `policy` and `values` are present only in snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub mdp: TreeMdp,
    pub base: BasePolicy,
    pub policy: Option<StochasticPolicy>,
    pub values: Option<ValueTable>,
}

pub fn serialize(mdp: &TreeMdp, base: &BasePolicy) -> String {
    let mut out = String::new();
    write_env(&mut out, mdp, base);
    out
}

pub fn serialize_snapshot(
    mdp: &TreeMdp,
    base: &BasePolicy,
    policy: &StochasticPolicy,
    values: &ValueTable,
) -> String {
    let mut out = String::new();
    write_env(&mut out, mdp, base);
    for s in mdp.states().filter(|&s| mdp.num_actions(s) > 0) {
        write_row(&mut out, "pi", s, policy.probs(s));
    }
    for s in mdp.states() {
        let _ = writeln!(out, "v {s} {}", values.get(s));
    }
    out
}

fn write_env(out: &mut String, mdp: &TreeMdp, base: &BasePolicy) {
    let _ = writeln!(out, "states {} gamma {}", mdp.num_states(), mdp.gamma());
    out.push_str("bb");
    for s in mdp.building_blocks() {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    for s in mdp.states() {
        for a in mdp.actions(s) {
            let _ = write!(out, "t {s} {a} ->");
            for c in mdp.children(s, a) {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
    }
    for s in mdp.states().filter(|&s| mdp.num_actions(s) > 0) {
        write_row(out, "pi0", s, &base.probs[s.0]);
    }
}

fn write_row(out: &mut String, tag: &str, s: StateId, row: &[f64]) {
    let _ = write!(out, "{tag} {s}");
    for p in row {
        let _ = write!(out, " {p}");
    }
    out.push('\n');
}

/// Parses an environment document, ignoring any snapshot lines.
pub fn deserialize(doc: &str) -> Result<(TreeMdp, BasePolicy)> {
    let d = parse_document(doc)?;
    Ok((d.mdp, d.base))
}

pub fn parse_document(doc: &str) -> Result<Document> {
    let mut p = Parser::default();
    for (i, raw) in doc.lines().enumerate() {
        p.line = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        p.last_content_line = p.line;
        p.parse_line(line)?;
    }
    p.finish()
}

#[derive(Default)]
struct Parser {
    line: usize,
    last_content_line: usize,
    header: Option<(usize, f64)>,
    bb: Option<Vec<usize>>,
    transitions: BTreeMap<(usize, usize), Vec<StateId>>,
    pi0: BTreeMap<usize, Vec<f64>>,
    pi: BTreeMap<usize, Vec<f64>>,
    values: BTreeMap<usize, f64>,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line: self.line,
            message: message.into(),
        })
    }

    fn num<T: FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .or_else(|_| self.err(format!("invalid {what} {tok:?}")))
    }

    fn state(&self, tok: &str) -> Result<usize> {
        let s: usize = self.num(tok, "state id")?;
        let n = self.header.map(|h| h.0).unwrap_or(0);
        if s >= n {
            return self.err(format!("state {s} out of range for {n} states"));
        }
        Ok(s)
    }

    fn parse_line(&mut self, line: &str) -> Result<()> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if self.header.is_none() {
            return match toks.as_slice() {
                ["states", n, "gamma", g] => {
                    self.header = Some((self.num(n, "state count")?, self.num(g, "gamma")?));
                    Ok(())
                }
                _ => self.err("expected header `states <N> gamma <g>`"),
            };
        }
        match toks[0] {
            "bb" => {
                if self.bb.is_some() {
                    return self.err("duplicate bb line");
                }
                let ids = toks[1..]
                    .iter()
                    .map(|t| self.state(t))
                    .collect::<Result<_>>()?;
                self.bb = Some(ids);
            }
            "t" => {
                if toks.len() < 5 || toks[3] != "->" {
                    return self.err("expected `t <s> <a> -> <children...>`");
                }
                let s = self.state(toks[1])?;
                let a: usize = self.num(toks[2], "action id")?;
                let children = toks[4..]
                    .iter()
                    .map(|t| self.num::<usize>(t, "child id").map(StateId))
                    .collect::<Result<Vec<_>>>()?;
                if self.transitions.insert((s, a), children).is_some() {
                    return self.err(format!("duplicate transition ({s}, {a})"));
                }
            }
            tag @ ("pi0" | "pi") => {
                if toks.len() < 3 {
                    return self.err(format!("expected `{tag} <s> <probs...>`"));
                }
                let s = self.state(toks[1])?;
                let row = toks[2..]
                    .iter()
                    .map(|t| self.num::<f64>(t, "probability"))
                    .collect::<Result<_>>()?;
                let map = if tag == "pi0" {
                    &mut self.pi0
                } else {
                    &mut self.pi
                };
                if map.insert(s, row).is_some() {
                    return self.err(format!("duplicate {tag} row for state {s}"));
                }
            }
            "v" => {
                if toks.len() != 3 {
                    return self.err("expected `v <s> <value>`");
                }
                let s = self.state(toks[1])?;
                let v = self.num(toks[2], "value")?;
                if self.values.insert(s, v).is_some() {
                    return self.err(format!("duplicate value for state {s}"));
                }
            }
            other => return self.err(format!("unknown line tag {other:?}")),
        }
        Ok(())
    }

    /// Structural gaps are reported against the last line read, since a
    /// truncated document is the usual cause.
    fn finish(mut self) -> Result<Document> {
        self.line = self.last_content_line;
        let Some((n, gamma)) = self.header else {
            return self.err("unexpected end of document: missing header");
        };
        let Some(bb_ids) = self.bb.take() else {
            return self.err("unexpected end of document: missing bb line");
        };
        let mut building_block = vec![false; n];
        for s in bb_ids {
            building_block[s] = true;
        }
        let mut transitions: Vec<Vec<Vec<StateId>>> = vec![Vec::new(); n];
        for ((s, a), children) in std::mem::take(&mut self.transitions) {
            if a != transitions[s].len() {
                return self.err(format!(
                    "unexpected end of document: state {s} skips action {}",
                    transitions[s].len()
                ));
            }
            transitions[s].push(children);
        }
        let mdp = TreeMdp::new(transitions, building_block, gamma)?;

        let base = BasePolicy {
            probs: self.rows(&mdp, &self.pi0, "pi0")?,
        };
        base.check(&mdp)?;

        let policy = if self.pi.is_empty() {
            None
        } else {
            let probs = self.rows(&mdp, &self.pi, "pi")?;
            Some(StochasticPolicy::new(probs, base.support())?)
        };
        let values = if self.values.is_empty() {
            None
        } else {
            if self.values.len() != n {
                return self.err(format!(
                    "unexpected end of document: {} of {n} values present",
                    self.values.len()
                ));
            }
            Some(ValueTable(self.values.values().copied().collect()))
        };
        Ok(Document {
            mdp,
            base,
            policy,
            values,
        })
    }

    fn rows(
        &self,
        mdp: &TreeMdp,
        map: &BTreeMap<usize, Vec<f64>>,
        tag: &str,
    ) -> Result<Vec<Vec<f64>>> {
        mdp.states()
            .map(|s| {
                let k = mdp.num_actions(s);
                match map.get(&s.0) {
                    Some(row) if row.len() == k => Ok(row.clone()),
                    Some(row) => Err(Error::Parse {
                        line: self.line,
                        message: format!(
                            "{tag} row for state {s} has {} entries, expected {k}",
                            row.len()
                        ),
                    }),
                    None if k == 0 => Ok(Vec::new()),
                    None => self.err(format!(
                        "unexpected end of document: no {tag} row for state {s}"
                    )),
                }
            })
            .collect()
    }
}
