use std::collections::BTreeMap;

use roughkit::order::{OrderCheck, OrderReport};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// One named verification with its metrics and graded order checks.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, Value>,
    pub orders: Vec<OrderCheck>,
    /// Wall-clock seconds; kept out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl Check {
    pub fn new(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass: true,
            metrics: BTreeMap::new(),
            orders: Vec::new(),
            seconds: 0.0,
        }
    }

    pub fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.into(), v.into());
    }

    /// Records `value <= bound` under `key`.
    pub fn bound(&mut self, key: &str, value: f64, bound: f64) -> bool {
        let ok = value <= bound;
        self.metrics.insert(
            key.into(),
            serde_json::json!({ "value": finite_or_string(value), "bound": bound, "pass": ok }),
        );
        self.pass &= ok;
        ok
    }

    pub fn require(&mut self, key: &str, ok: bool) -> bool {
        self.metrics.insert(key.into(), Value::Bool(ok));
        self.pass &= ok;
        ok
    }

    /// Adds order checks under a prefix; all must pass.
    pub fn orders(&mut self, prefix: &str, r: &OrderReport) -> bool {
        for c in &r.checks {
            let mut c = c.clone();
            c.label = format!("{prefix} {}", c.label);
            self.orders.push(c);
        }
        self.pass &= r.pass();
        r.pass()
    }

    /// Adds order checks that are required to fail (negative controls).
    pub fn must_fail(&mut self, prefix: &str, r: &OrderReport, label: &str) -> bool {
        let failed = r.get(label).is_some_and(|c| !c.pass);
        for c in &r.checks {
            let mut c = c.clone();
            c.label = format!("{prefix} {}", c.label);
            self.orders.push(c);
        }
        self.require(&format!("{prefix} fails at {label}"), failed)
    }

    /// One line per failing metric or order check.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .metrics
            .iter()
            .filter(|(_, v)| {
                v.as_bool() == Some(false) || v.get("pass").and_then(Value::as_bool) == Some(false) || v.is_string()
            })
            .map(|(k, v)| format!("{k}: {v}"))
            .collect();
        out.extend(
            self.orders
                .iter()
                .filter(|o| !o.pass)
                .map(|o| format!("order {}: slope {:.3} < {:.3}", o.label, o.slope, o.threshold)),
        );
        out
    }

    pub fn fail_with(&mut self, key: &str, e: impl std::fmt::Display) {
        self.metrics.insert(key.into(), Value::String(format!("error: {e}")));
        self.pass = false;
    }
}

fn finite_or_string(v: f64) -> Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        Value::String(format!("{v}"))
    }
}

/// A machine-readable report with its provenance.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(command: &str, seed: u64, config: &impl Serialize, checks: Vec<Check>) -> Self {
        VerificationReport {
            tool: "roughkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash: config_hash(config),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// SHA-256 of the canonical JSON of a configuration.
pub fn config_hash(config: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
