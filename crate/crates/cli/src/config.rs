//! Run configurations as read from JSON files.

use std::path::Path;

use anyhow::{Context, Result};
use muntzlab_core::linalg::Precision;
use muntzlab_core::suites::{default_battery, BatteryPair, BATTERY_TRUNCATIONS, INTERPOLATION_T};
use muntzlab_core::{MeasureSpec, SequenceSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A certificate to compute for the configured pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateRequest {
    // Empty braces let `deny_unknown_fields` reject stray keys.
    Psi {},
    Rho {
        #[serde(rename = "C")]
        c: f64,
        alpha: f64,
    },
    Sublinear {},
    CompactSupport { b: f64, b_prime: f64, k: usize },
    HilbertSchmidt {},
}

fn default_q_set() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_certificates() -> Vec<CertificateRequest> {
    vec![CertificateRequest::Psi {}]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sequence: SequenceSpec,
    pub measure: MeasureSpec,
    /// Truncation; defaults to the full sequence.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_q_set")]
    pub q_set: Vec<f64>,
    #[serde(default = "default_certificates")]
    pub certificates: Vec<CertificateRequest>,
    #[serde(default)]
    pub m_list: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

fn default_instances() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            seed: 0,
        }
    }
}

fn default_truncations() -> Vec<usize> {
    BATTERY_TRUNCATIONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSuiteConfig {
    #[serde(default = "default_battery")]
    pub pairs: Vec<BatteryPair>,
    #[serde(default = "default_truncations")]
    pub truncations: Vec<usize>,
}

impl Default for CertificateSuiteConfig {
    fn default() -> Self {
        Self {
            pairs: default_battery(),
            truncations: default_truncations(),
        }
    }
}

fn default_interp_sequence() -> SequenceSpec {
    SequenceSpec::Geometric {
        lambda1: 1.0,
        ratio: 2.0,
        count: 6,
    }
}

/// A measure with the label used for its suite families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMeasure {
    pub name: String,
    pub measure: MeasureSpec,
}

fn named(name: &str, measure: MeasureSpec) -> NamedMeasure {
    NamedMeasure {
        name: name.into(),
        measure,
    }
}

fn default_interp_measures() -> Vec<NamedMeasure> {
    vec![
        named("lebesgue", MeasureSpec::Lebesgue),
        named(
            "scaled_lebesgue",
            MeasureSpec::Scaled {
                c: 3.0,
                inner: Box::new(MeasureSpec::Lebesgue),
            },
        ),
        named(
            "power_tail",
            MeasureSpec::PowerTail {
                c: 1.0,
                alpha: 2.0,
                x0: 0.0,
            },
        ),
    ]
}

fn default_t_values() -> Vec<f64> {
    INTERPOLATION_T.to_vec()
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolationConfig {
    #[serde(default = "default_interp_sequence")]
    pub sequence: SequenceSpec,
    #[serde(default = "default_interp_measures")]
    pub measures: Vec<NamedMeasure>,
    #[serde(default = "default_t_values")]
    pub t_values: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        Self {
            sequence: default_interp_sequence(),
            measures: default_interp_measures(),
            t_values: default_t_values(),
            samples: default_samples(),
            seed: 0,
        }
    }
}

/// Parse a JSON config; errors name the file, line, column and field.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}
