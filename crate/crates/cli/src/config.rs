//! Run configuration and its validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use roughkit::roughpath::n_gamma;

/// Everything that determines the artifacts of a run. Output locations and
/// the thread count are not part of it: they do not change any bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub gamma: Option<f64>,
    pub level: Option<usize>,
    pub mesh: Option<f64>,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    /// Input name to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub params: BTreeMap<String, Value>,
    #[serde(skip)]
    pub out: Option<String>,
    #[serde(skip)]
    pub report: Option<String>,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64) -> Self {
        RunConfig {
            command: command.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(format!("gamma must lie in (0, 1), got {g}"));
            }
        }
        if let Some(m) = self.mesh {
            if !(m > 0.0 && m.is_finite()) {
                return Err(format!("mesh must be positive, got {m}"));
            }
        }
        if let (Some(g), Some(l)) = (self.gamma, self.level) {
            if l < n_gamma(g) {
                return Err(format!("level {l} is below N_gamma = {} for gamma = {g}", n_gamma(g)));
            }
        }
        for (k, v) in &self.tolerances {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(format!("tolerance {k} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn param(&mut self, key: &str, v: impl Into<Value>) {
        self.params.insert(key.into(), v.into());
    }

    /// Records an input file by content digest.
    pub fn input(&mut self, key: &str, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        self.inputs
            .insert(key.into(), digest.iter().map(|b| format!("{b:02x}")).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = RunConfig::new("rde", 1);
        assert!(c.validate().is_ok());
        c.gamma = Some(1.0);
        assert!(c.validate().is_err());
        c.gamma = Some(0.3);
        c.level = Some(2);
        assert!(c.validate().is_err());
        c.level = Some(3);
        assert!(c.validate().is_ok());
        c.mesh = Some(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn serde_roundtrip_skips_paths() {
        let mut c = RunConfig::new("sig", 3);
        c.out = Some("a.json".into());
        c.param("knots", 17);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.params, c.params);
        assert_eq!(back.out, None);
    }
}
