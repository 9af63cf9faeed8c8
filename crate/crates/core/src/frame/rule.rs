//! Acceptor stop rules.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! rule   := conj ("||" conj)*
//! conj   := clause ("&&" clause)*
//! clause := "t" ">=" number
//!         | metric op number
//! metric := count(arrived) | count(solved) | count(unmatched)
//!         | throughput | mean_turnaround | max_turnaround
//! op     := ">=" | ">" | "<=" | "<" | "=="
//! ```
//!
//! Time only appears as a lower bound so that the earliest satisfying event
//! time is always a well-defined wake-up point.

use std::fmt;

use crate::frame::FrameError;
use crate::frame::Tally;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Arrived,
    Solved,
    Unmatched,
    Throughput,
    MeanTurnaround,
    MaxTurnaround,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    TimeAtLeast(SimTime),
    Metric { term: Term, op: Cmp, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    text: String,
    any_of: Vec<Vec<Clause>>,
}

impl StopRule {
    pub fn parse(text: &str) -> Result<Self, FrameError> {
        let bad = |why: &str| FrameError::BadStopRule(format!("{text}: {why}"));
        let mut any_of = Vec::new();
        for disjunct in text.split("||") {
            let mut all_of = Vec::new();
            for raw in disjunct.split("&&") {
                all_of.push(parse_clause(raw).map_err(|why| bad(&why))?);
            }
            any_of.push(all_of);
        }
        Ok(StopRule {
            text: text.trim().to_owned(),
            any_of,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Whether any clause needs transducer metrics.
    pub fn uses_metrics(&self) -> bool {
        self.any_of
            .iter()
            .flatten()
            .any(|c| matches!(c, Clause::Metric { .. }))
    }

    /// Evaluates the rule at time `now` with the latest tally.
    pub fn holds(&self, now: SimTime, tally: &Tally) -> bool {
        self.any_of
            .iter()
            .any(|conj| conj.iter().all(|c| clause_holds(c, now, tally)))
    }

    /// Earliest time threshold strictly after `now`, if any.
    pub fn next_threshold_after(&self, now: SimTime) -> Option<SimTime> {
        self.any_of
            .iter()
            .flatten()
            .filter_map(|c| match c {
                Clause::TimeAtLeast(x) if *x > now => Some(*x),
                _ => None,
            })
            .min()
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn clause_holds(c: &Clause, now: SimTime, tally: &Tally) -> bool {
    match c {
        Clause::TimeAtLeast(x) => now >= *x,
        Clause::Metric { term, op, value } => {
            let lhs = term_value(*term, now, tally);
            match op {
                Cmp::Ge => lhs >= *value,
                Cmp::Gt => lhs > *value,
                Cmp::Le => lhs <= *value,
                Cmp::Lt => lhs < *value,
                Cmp::Eq => lhs == *value,
            }
        }
    }
}

fn term_value(term: Term, now: SimTime, tally: &Tally) -> f64 {
    match term {
        Term::Arrived => tally.arrived as f64,
        Term::Solved => tally.solved as f64,
        Term::Unmatched => tally.unmatched as f64,
        Term::Throughput => tally.throughput(now),
        Term::MeanTurnaround => tally.mean_turnaround(),
        Term::MaxTurnaround => tally.max_turnaround,
    }
}

fn parse_clause(raw: &str) -> Result<Clause, String> {
    let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty clause".into());
    }
    let (lhs, op, rhs) = [(">=", Cmp::Ge), ("<=", Cmp::Le), ("==", Cmp::Eq), (">", Cmp::Gt), ("<", Cmp::Lt)]
        .iter()
        .find_map(|(sym, op)| compact.split_once(sym).map(|(l, r)| (l.to_owned(), *op, r.to_owned())))
        .ok_or_else(|| format!("no comparison in `{compact}`"))?;
    let value: f64 = rhs
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| format!("`{rhs}` is not a number"))?;

    if lhs == "t" {
        if op != Cmp::Ge {
            return Err("time can only be bounded below (`t >= x`)".into());
        }
        let at = SimTime::new(value).map_err(|e| e.to_string())?;
        return Ok(Clause::TimeAtLeast(at));
    }
    let term = match lhs.as_str() {
        "count(arrived)" => Term::Arrived,
        "count(solved)" => Term::Solved,
        "count(unmatched)" => Term::Unmatched,
        "throughput" => Term::Throughput,
        "mean_turnaround" => Term::MeanTurnaround,
        "max_turnaround" => Term::MaxTurnaround,
        other => return Err(format!("unknown term `{other}`")),
    };
    Ok(Clause::Metric { term, op, value })
}
