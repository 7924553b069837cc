use serde_yaml::{Mapping, Value};

use super::{parse_duration, ConfigIssue};

/// Typed field access that records problems instead of stopping at the
/// first one.
#[derive(Default)]
pub(super) struct Walker {
    issues: Vec<ConfigIssue>,
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

impl Walker {
    pub fn issue(&mut self, path: &str, message: String) {
        self.issues.push(ConfigIssue { path: if path.is_empty() { "<root>".into() } else { path.into() }, message });
    }

    pub fn into_issues(self) -> Vec<ConfigIssue> {
        self.issues
    }

    /// A required mapping. Unknown keys are reported unless `allowed` is
    /// empty (used for a first look at a tagged section).
    pub fn mapping<'a>(&mut self, v: Option<&'a Value>, path: &str, allowed: &[&str]) -> Option<&'a Mapping> {
        match v {
            None => {
                self.issue(path, "missing section".into());
                None
            }
            Some(Value::Mapping(m)) => {
                if !allowed.is_empty() {
                    for k in m.keys() {
                        match k.as_str() {
                            Some(k) if allowed.contains(&k) => {}
                            Some(k) => self.issue(&join(path, k), "unknown key".into()),
                            None => self.issue(path, format!("non-string key {k:?}")),
                        }
                    }
                }
                Some(m)
            }
            Some(_) => {
                self.issue(path, "expected a mapping".into());
                None
            }
        }
    }

    /// An optional mapping; absent or null means "all defaults".
    pub fn mapping_or_empty<'a>(&mut self, v: Option<&'a Value>, path: &str, allowed: &[&str]) -> Option<&'a Mapping> {
        match v {
            None | Some(Value::Null) => None,
            other => self.mapping(other, path, allowed),
        }
    }

    fn field<'a>(&mut self, m: Option<&'a Mapping>, path: &str, key: &str, has_default: bool) -> Result<Option<&'a Value>, ()> {
        match m.and_then(|m| m.get(key)) {
            Some(v) => Ok(Some(v)),
            None if has_default => Ok(None),
            None => {
                self.issue(&join(path, key), "missing required key".into());
                Err(())
            }
        }
    }

    pub fn u64(&mut self, m: Option<&Mapping>, path: &str, key: &str, default: Option<u64>, min: u64, max: u64) -> Option<u64> {
        let v = match self.field(m, path, key, default.is_some()).ok()? {
            None => return default,
            Some(v) => v,
        };
        match v.as_u64() {
            Some(n) if (min..=max).contains(&n) => Some(n),
            Some(n) => {
                self.issue(&join(path, key), format!("{n} outside [{min}, {max}]"));
                None
            }
            None => {
                self.issue(&join(path, key), format!("expected a non-negative integer, got {}", describe(v)));
                None
            }
        }
    }

    pub fn f64(
        &mut self,
        m: Option<&Mapping>,
        path: &str,
        key: &str,
        default: Option<f64>,
        ok: impl Fn(f64) -> bool,
        range: &str,
    ) -> Option<f64> {
        let v = match self.field(m, path, key, default.is_some()).ok()? {
            None => return default,
            Some(v) => v,
        };
        match v.as_f64() {
            Some(x) if ok(x) => Some(x),
            Some(x) => {
                self.issue(&join(path, key), format!("{x} must be {range}"));
                None
            }
            None => {
                self.issue(&join(path, key), format!("expected a number, got {}", describe(v)));
                None
            }
        }
    }

    pub fn bool(&mut self, m: Option<&Mapping>, path: &str, key: &str, default: Option<bool>) -> Option<bool> {
        let v = match self.field(m, path, key, default.is_some()).ok()? {
            None => return default,
            Some(v) => v,
        };
        match v.as_bool() {
            Some(b) => Some(b),
            None => {
                self.issue(&join(path, key), format!("expected true or false, got {}", describe(v)));
                None
            }
        }
    }

    pub fn string(&mut self, m: Option<&Mapping>, path: &str, key: &str, default: Option<&str>) -> Option<String> {
        let v = match self.field(m, path, key, default.is_some()).ok()? {
            None => return default.map(str::to_string),
            Some(v) => v,
        };
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.issue(&join(path, key), format!("expected a string, got {}", describe(v)));
                None
            }
        }
    }

    pub fn choice(&mut self, m: Option<&Mapping>, path: &str, key: &str, default: Option<&str>, options: &[&str]) -> Option<String> {
        let s = self.string(m, path, key, default)?;
        if options.contains(&s.as_str()) {
            Some(s)
        } else {
            self.issue(&join(path, key), format!("{s:?} is not one of {}", options.join(", ")));
            None
        }
    }

    /// Positive duration in seconds: an integer or a string like `"3y"`.
    pub fn duration(&mut self, m: Option<&Mapping>, path: &str, key: &str, default: Option<i64>) -> Option<i64> {
        let v = match self.field(m, path, key, default.is_some()).ok()? {
            None => return default,
            Some(v) => v,
        };
        let parsed = match v {
            Value::Number(n) => n.as_i64().ok_or_else(|| "expected an integer number of seconds".to_string()),
            Value::String(s) => parse_duration(s),
            other => Err(format!("expected a duration, got {}", describe(other))),
        };
        match parsed {
            Ok(d) if d > 0 => Some(d),
            Ok(d) => {
                self.issue(&join(path, key), format!("duration {d} must be positive"));
                None
            }
            Err(e) => {
                self.issue(&join(path, key), e);
                None
            }
        }
    }
}

fn describe(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => format!("{s:?}"),
        Value::Sequence(_) => "a list".into(),
        Value::Mapping(_) => "a mapping".into(),
        Value::Tagged(_) => "a tagged value".into(),
    }
}
