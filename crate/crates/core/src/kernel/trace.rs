use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::atomic::TransitionKind;
use crate::message::{ContentItem, MessageBag};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Output,
    Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Detail {
    Output { items: Vec<ContentItem> },
    Transition { transition: TransitionKind, e: SimTime },
}

/// One line of the trace stream.
///
/// Within a cycle every `output` record precedes every `transition` record;
/// inside each group records are ordered by component name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: SimTime,
    pub cycle: u64,
    pub component: String,
    pub kind: RecordKind,
    pub detail: Detail,
    /// Milliseconds since the wall-clock start of a real-time run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl TraceRecord {
    pub fn output(t: SimTime, cycle: u64, component: &str, bag: &MessageBag) -> Self {
        TraceRecord {
            t,
            cycle,
            component: component.to_owned(),
            kind: RecordKind::Output,
            detail: Detail::Output {
                items: bag.sorted_items(),
            },
            wall_ms: None,
        }
    }

    pub fn transition(t: SimTime, cycle: u64, component: &str, kind: TransitionKind, e: SimTime) -> Self {
        TraceRecord {
            t,
            cycle,
            component: component.to_owned(),
            kind: RecordKind::Transition,
            detail: Detail::Transition { transition: kind, e },
            wall_ms: None,
        }
    }

    /// The record with its wall-clock stamp removed.
    pub fn logical(&self) -> TraceRecord {
        TraceRecord {
            wall_ms: None,
            ..self.clone()
        }
    }

    pub fn transition_kind(&self) -> Option<TransitionKind> {
        match self.detail {
            Detail::Transition { transition, .. } => Some(transition),
            Detail::Output { .. } => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialise")
    }

    pub fn from_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }

    /// Merge order: cycle, then outputs before transitions, then component.
    pub fn merge_cmp(&self, other: &Self) -> Ordering {
        let rank = |k: RecordKind| match k {
            RecordKind::Output => 0,
            RecordKind::Transition => 1,
        };
        self.cycle
            .cmp(&other.cycle)
            .then_with(|| self.t.cmp(&other.t))
            .then_with(|| rank(self.kind).cmp(&rank(other.kind)))
            .then_with(|| self.component.cmp(&other.component))
    }
}

/// Sorts records from several sources into the canonical stream order.
pub fn merge_records(mut records: Vec<TraceRecord>) -> Vec<TraceRecord> {
    records.sort_by(TraceRecord::merge_cmp);
    records
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        out.write_all(r.to_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> SimTime {
        SimTime::new(v).unwrap()
    }

    #[test]
    fn line_format() {
        let r = TraceRecord::output(t(10.0), 0, "Gen", &MessageBag::single("out", 1));
        assert_eq!(
            r.to_line(),
            r#"{"t":10.0,"cycle":0,"component":"Gen","kind":"output","detail":{"items":[["out",1]]}}"#
        );
        let r = TraceRecord::transition(t(12.5), 1, "Proc", TransitionKind::Internal, t(2.5));
        assert_eq!(
            r.to_line(),
            r#"{"t":12.5,"cycle":1,"component":"Proc","kind":"transition","detail":{"transition":"internal","e":2.5}}"#
        );
        assert_eq!(TraceRecord::from_line(&r.to_line()).unwrap(), r);
    }

    #[test]
    fn merge_puts_outputs_first() {
        let a = TraceRecord::transition(t(1.0), 0, "A", TransitionKind::Internal, t(1.0));
        let b = TraceRecord::output(t(1.0), 0, "B", &MessageBag::single("out", 1));
        let c = TraceRecord::output(t(2.0), 1, "A", &MessageBag::single("out", 1));
        let merged = merge_records(vec![c.clone(), a.clone(), b.clone()]);
        assert_eq!(merged, vec![b, a, c]);
    }
}
