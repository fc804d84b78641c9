//! JSON report assembly. Numbers are rounded to 12 significant digits and keys
//! keep insertion order, so a report is a deterministic byte stream.

use helikon::Complex64;
use serde_json::{Map, Value};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` rounded to 12 significant digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        });
    }
    let rounded: f64 = format!("{x:.prec$e}", prec = SIGNIFICANT_DIGITS - 1)
        .parse()
        .unwrap_or(x);
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

/// `[re, im]`.
pub fn cplx(z: Complex64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

pub fn vec3(v: [f64; 3]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

/// Named pass/fail checks; the verdict passes when every check does.
#[derive(Debug, Clone, Default)]
pub struct Verdict {
    checks: Vec<(String, bool)>,
}

impl Verdict {
    pub fn check(&mut self, name: impl Into<String>, ok: bool) -> &mut Self {
        self.checks.push((name.into(), ok));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    fn to_json(&self) -> Value {
        let mut checks = Map::new();
        for (name, ok) in &self.checks {
            checks.insert(name.clone(), Value::Bool(*ok));
        }
        let mut v = Map::new();
        v.insert("passed".into(), Value::Bool(self.passed()));
        v.insert("checks".into(), Value::Object(checks));
        Value::Object(v)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub scene_name: String,
    pub settings: Map<String, Value>,
    pub results: Map<String, Value>,
    pub verdict: Verdict,
}

impl Report {
    pub fn new(command: &str, scene_name: &str) -> Self {
        Report {
            command: command.into(),
            scene_name: scene_name.into(),
            settings: Map::new(),
            results: Map::new(),
            verdict: Verdict::default(),
        }
    }

    pub fn setting(&mut self, key: &str, v: Value) -> &mut Self {
        self.settings.insert(key.into(), v);
        self
    }

    pub fn result(&mut self, key: &str, v: Value) -> &mut Self {
        self.results.insert(key.into(), v);
        self
    }

    pub fn to_json(&self) -> Value {
        let mut top = Map::new();
        top.insert("command".into(), Value::String(self.command.clone()));
        top.insert("scene_name".into(), Value::String(self.scene_name.clone()));
        top.insert("settings".into(), Value::Object(self.settings.clone()));
        top.insert("results".into(), Value::Object(self.results.clone()));
        top.insert("verdict".into(), self.verdict.to_json());
        Value::Object(top)
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s =
            serde_json::to_string_pretty(&self.to_json()).expect("reports are always serializable");
        s.push('\n');
        s.into_bytes()
    }
}
