//! Quantitative checks on computed fields: interface extraction, growth and
//! density ratios, flatness, the free boundary condition, weight traces, Weiss
//! energies, energy identities and the corkscrew geometry.

mod fbcond;
mod free_boundary;
mod identities;
mod scaling;
mod weiss;

use serde::Serialize;
use serde_json::{json, Map, Value};

pub use fbcond::{
    bump, fb_condition_residual, measure_residual, median, weight_traces, FbConditionReport,
    FbPointResidual, HolderEstimate, MeasureResidual, WeightTraces, HOLDER_EXPONENTS,
    PROBE_OFFSETS,
};
pub use free_boundary::{default_fit_radius, estimate_normal, extract_free_boundary, FreeBoundary};
pub use identities::{bump_field, identity_residuals, IdentityCheck, IdentityResiduals, TestField};
pub use scaling::{
    flatness, flatness_with_normal, nta_check, scaling_report, zero_density, NtaReport, NtaRow,
    ScalingReport, ScalingRow,
};
pub use weiss::{dyadic_radii, weiss_curve, weiss_value, WeissCurve, WEISS_TOL_FACTOR};

/// Version tag written into every report.
pub const REPORT_SCHEMA: &str = "fbmin-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Info,
}

impl CheckStatus {
    pub fn from_pass(ok: bool) -> Self {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The property of minimizers under test.
    pub checks: String,
    pub status: CheckStatus,
    pub values: Value,
}

/// Check records plus provenance, serialized with sorted keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub records: Vec<CheckRecord>,
    pub provenance: Map<String, Value>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, checks: &str, status: CheckStatus, values: impl Serialize) {
        self.records.push(CheckRecord {
            name: name.into(),
            checks: checks.into(),
            status,
            values: serde_json::to_value(values).unwrap_or(Value::Null),
        });
    }

    pub fn set_provenance(&mut self, key: &str, value: impl Serialize) {
        self.provenance.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn failures(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| r.name.as_str())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn to_value(&self) -> Value {
        json!({
            "schema": REPORT_SCHEMA,
            "provenance": Value::Object(self.provenance.clone()),
            "checks": self.records,
            "passed": self.passed(),
        })
    }

    /// Pretty JSON; object keys come out sorted and non-finite numbers as `null`.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_keys_are_sorted_and_stable() {
        let mut r = DiagnosticsReport::new();
        r.set_provenance("seed", 3);
        r.set_provenance("grid", [257, 257]);
        r.push(
            "weiss",
            "monotone energy",
            CheckStatus::Pass,
            json!({"z": 1.0, "a": 2.0}),
        );
        r.push(
            "growth",
            "linear growth",
            CheckStatus::Fail,
            json!({"ratio": 12.0}),
        );
        let s = r.to_json();
        assert_eq!(s, r.clone().to_json());
        let a = s.find("\"a\"").unwrap();
        let z = s.find("\"z\"").unwrap();
        assert!(a < z);
        assert!(s.find("\"checks\"").unwrap() < s.find("\"schema\"").unwrap());
        assert!(s.contains("fbmin-report/1"));
        assert_eq!(r.failures(), vec!["growth"]);
        assert!(!r.passed());
    }
}
