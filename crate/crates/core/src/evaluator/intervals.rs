use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Tumbling,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    #[default]
    Start,
    Center,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub kind: IntervalKind,
    pub length: i64,
    /// Required for sliding windows.
    pub stride: Option<i64>,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationInterval {
    pub start: i64,
    pub anchor: i64,
    pub end: i64,
    /// Whether `end` itself belongs to the interval; true only for the last
    /// interval so that the sample at `t1` is counted once.
    pub closed: bool,
}

impl EvaluationInterval {
    pub fn contains(&self, t: i64) -> bool {
        t >= self.start && (t < self.end || (self.closed && t == self.end))
    }
}

/// Intervals over `[t0, t1]`. Tumbling windows tile the range and the last
/// one is clipped at `t1`; sliding windows start every `stride` while the
/// start is before `t1`.
pub fn generate_intervals(spec: &IntervalSpec, t0: i64, t1: i64) -> Result<Vec<EvaluationInterval>, EvalError> {
    if spec.length <= 0 {
        return Err(EvalError::InvalidSpec(format!("length {} must be positive", spec.length)));
    }
    if t0 >= t1 {
        return Err(EvalError::InvalidSpec(format!("empty range [{t0}, {t1})")));
    }
    let stride = match spec.kind {
        IntervalKind::Tumbling => spec.length,
        IntervalKind::Sliding => match spec.stride {
            Some(s) if s > 0 => s,
            Some(s) => return Err(EvalError::InvalidSpec(format!("stride {s} must be positive"))),
            None => return Err(EvalError::InvalidSpec("sliding windows need a stride".into())),
        },
    };
    let mut out = Vec::new();
    let mut start = t0;
    while start < t1 {
        let mut end = start.saturating_add(spec.length);
        if spec.kind == IntervalKind::Tumbling {
            end = end.min(t1);
        }
        let anchor = match spec.anchor {
            Anchor::Start => start,
            Anchor::Center => start + (end - start) / 2,
        };
        out.push(EvaluationInterval { start, anchor, end, closed: false });
        start = match start.checked_add(stride) {
            Some(s) => s,
            None => break,
        };
    }
    if let Some(last) = out.last_mut() {
        last.closed = true;
    }
    Ok(out)
}
