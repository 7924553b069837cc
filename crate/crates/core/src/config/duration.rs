//! Durations in seconds, written either as integers or with a unit suffix.

const UNITS: [(&str, i64); 6] = [("y", 365 * 86_400), ("w", 7 * 86_400), ("d", 86_400), ("h", 3600), ("m", 60), ("s", 1)];

/// Parses `"90"`, `"90s"`, `"15m"`, `"2h"`, `"5d"`, `"1w"` or `"3y"` (a year
/// is 365 days).
pub fn parse_duration(text: &str) -> Result<i64, String> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit() && c != '-').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: i64 = num.parse().map_err(|_| format!("invalid duration {text:?}"))?;
    let scale = if unit.is_empty() {
        1
    } else {
        UNITS.iter().find(|(u, _)| *u == unit).map(|(_, s)| *s).ok_or_else(|| format!("unknown duration unit {unit:?}"))?
    };
    n.checked_mul(scale).ok_or_else(|| format!("duration {text:?} overflows"))
}

/// Shortest exact spelling, e.g. `31536000 → "1y"`, `90 → "90s"`.
pub fn format_duration(seconds: i64) -> String {
    for (u, s) in UNITS {
        if seconds != 0 && seconds % s == 0 {
            return format!("{}{u}", seconds / s);
        }
    }
    format!("{seconds}s")
}
