//! Readers and writers for the UAI model, evidence and MPE-solution text formats.
//!
//! Model files (`MARKOV` or `BAYES` preamble) list variable count, cardinalities,
//! factor scopes and then one probability table per factor, last scope variable
//! fastest. All tokens are whitespace separated and may be split across lines
//! arbitrarily. Tables are converted to natural log on read; a probability of zero
//! becomes `-inf`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Assignment, Factor, GraphicalModel, QuerySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preamble {
    Markov,
    Bayes,
}

struct Tokens<'a> {
    iter: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let iter = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
        Tokens {
            iter: Box::new(iter),
            last_line: 1,
        }
    }

    fn next_raw(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.iter.next() {
            Some((line, tok)) => {
                self.last_line = line;
                Ok((line, tok))
            }
            None => Err(Error::parse(
                self.last_line,
                format!("unexpected end of input while reading {what}"),
            )),
        }
    }

    fn next<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let (line, tok) = self.next_raw(what)?;
        tok.parse()
            .map_err(|_| Error::parse(line, format!("expected {what}, found `{tok}`")))
    }

    fn finish(mut self) -> Result<()> {
        match self.iter.next() {
            Some((line, tok)) => Err(Error::parse(line, format!("trailing token `{tok}`"))),
            None => Ok(()),
        }
    }
}

/// Parses a UAI model file.
pub fn parse_uai(text: &str) -> Result<GraphicalModel> {
    parse_uai_with_preamble(text).map(|(m, _)| m)
}

pub fn parse_uai_with_preamble(text: &str) -> Result<(GraphicalModel, Preamble)> {
    let mut toks = Tokens::new(text);
    let (line, pre) = toks.next_raw("preamble")?;
    let preamble = match pre.to_ascii_uppercase().as_str() {
        "MARKOV" => Preamble::Markov,
        "BAYES" => Preamble::Bayes,
        other => {
            return Err(Error::parse(
                line,
                format!("unknown preamble `{other}` (expected MARKOV or BAYES)"),
            ))
        }
    };
    let n: usize = toks.next("variable count")?;
    let cards = (0..n)
        .map(|_| toks.next::<usize>("cardinality"))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = cards.iter().position(|&c| c == 0) {
        return Err(Error::parse(toks.last_line, format!("variable {i} has cardinality 0")));
    }
    let nf: usize = toks.next("factor count")?;
    let mut scopes = Vec::with_capacity(nf);
    for fi in 0..nf {
        let arity: usize = toks.next("scope size")?;
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let (line, tok) = toks.next_raw("scope variable")?;
            let v: usize = tok
                .parse()
                .map_err(|_| Error::parse(line, format!("expected scope variable, found `{tok}`")))?;
            if v >= n {
                return Err(Error::parse(
                    line,
                    format!("factor {fi}: scope index {v} out of range (n = {n})"),
                ));
            }
            if scope.contains(&v) {
                return Err(Error::parse(line, format!("factor {fi}: variable {v} repeated")));
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(nf);
    for (fi, scope) in scopes.into_iter().enumerate() {
        let (line, tok) = toks.next_raw("table size")?;
        let size: usize = tok
            .parse()
            .map_err(|_| Error::parse(line, format!("expected table size, found `{tok}`")))?;
        let expected: usize = scope.iter().map(|&v| cards[v]).product();
        if size != expected {
            return Err(Error::parse(
                line,
                format!("factor {fi}: table-size mismatch (declared {size}, scope needs {expected})"),
            ));
        }
        let mut table = Vec::with_capacity(size);
        for _ in 0..size {
            let (line, tok) = toks.next_raw("table entry")?;
            let p: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line, format!("expected probability, found `{tok}`")))?;
            if !p.is_finite() || p < 0.0 {
                return Err(Error::parse(line, format!("factor {fi}: invalid probability {tok}")));
            }
            table.push(if p == 0.0 { f64::NEG_INFINITY } else { p.ln() });
        }
        factors.push(Factor::new(scope, table, &cards)?);
    }
    toks.finish()?;
    Ok((GraphicalModel::new(cards, factors)?, preamble))
}

/// Writes a model as a `MARKOV` UAI file, exponentiating tables back to probabilities.
pub fn write_uai(model: &GraphicalModel) -> String {
    let mut out = String::new();
    out.push_str("MARKOV\n");
    let _ = writeln!(out, "{}", model.num_vars());
    let _ = writeln!(out, "{}", join(model.cardinalities()));
    let _ = writeln!(out, "{}", model.factors().len());
    for f in model.factors() {
        let _ = writeln!(out, "{} {}", f.scope().len(), join(f.scope()));
    }
    for f in model.factors() {
        out.push('\n');
        let _ = writeln!(out, "{}", f.log_table().len());
        let probs: Vec<String> = f.log_table().iter().map(|&l| format!("{}", l.exp())).collect();
        let _ = writeln!(out, "{}", probs.join(" "));
    }
    out
}

/// Parses an evidence file: either `count v1 x1 v2 x2 ...` or the older multi-sample
/// layout `1 count v1 x1 ...` with a single sample.
pub fn parse_evid(text: &str) -> Result<BTreeMap<usize, usize>> {
    let nums: Vec<(usize, usize)> = Tokens::new(text)
        .iter
        .map(|(line, tok)| {
            tok.parse::<usize>()
                .map(|v| (line, v))
                .map_err(|_| Error::parse(line, format!("expected integer, found `{tok}`")))
        })
        .collect::<Result<_>>()?;
    if nums.is_empty() {
        return Ok(BTreeMap::new());
    }
    let body = if nums.len() == 1 + 2 * nums[0].1 {
        &nums[1..]
    } else if nums[0].1 == 1 && nums.len() >= 2 && nums.len() == 2 + 2 * nums[1].1 {
        &nums[2..]
    } else {
        let line = nums.last().map(|n| n.0).unwrap_or(1);
        return Err(Error::parse(
            line,
            format!("evidence count {} does not match {} tokens", nums[0].1, nums.len()),
        ));
    };
    let mut ev = BTreeMap::new();
    for pair in body.chunks(2) {
        if ev.insert(pair[0].1, pair[1].1).is_some() {
            return Err(Error::parse(
                pair[0].0,
                format!("variable {} observed twice", pair[0].1),
            ));
        }
    }
    Ok(ev)
}

pub fn write_evid(evidence: &BTreeMap<usize, usize>) -> String {
    let mut out = evidence.len().to_string();
    for (v, x) in evidence {
        let _ = write!(out, " {v} {x}");
    }
    out.push('\n');
    out
}

/// Reads evidence text and builds the matching query for `model`.
pub fn query_from_evid(model: &GraphicalModel, text: &str) -> Result<QuerySpec> {
    QuerySpec::from_evidence(model, parse_evid(text)?)
}

/// Writes an assignment in the `MPE` solution layout: `MPE\n<n> v0 v1 ...`.
pub fn write_solution(x: &Assignment) -> String {
    format!("MPE\n{} {}\n", x.len(), join(x.values()))
}

pub fn parse_solution(text: &str) -> Result<Assignment> {
    let mut toks = Tokens::new(text).iter.peekable();
    if let Some((_, t)) = toks.peek() {
        if t.eq_ignore_ascii_case("MPE") {
            toks.next();
        }
    }
    let mut nums = toks.map(|(line, tok)| {
        tok.parse::<usize>()
            .map_err(|_| Error::parse(line, format!("expected integer, found `{tok}`")))
    });
    let n = nums.next().ok_or_else(|| Error::parse(1, "empty solution"))??;
    let values = nums.collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(Error::parse(
            1,
            format!("solution declares {n} values but has {}", values.len()),
        ));
    }
    Ok(Assignment::new(values))
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
