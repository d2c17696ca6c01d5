//! JSON report documents written by every command.

use koethe_core::conditions::{
    Branch, Budget, Condition, Counterexample, Status, Verdict, Witness,
};
use koethe_core::extractor::{CbsOutcome, ExtractionCertificate, VerificationReport};
use koethe_core::logmath::serde_log;
use koethe_core::operators::OpNormBound;
use serde::{Deserialize, Serialize};

use crate::files::sha256_hex;

pub const TOOL: &str = "koethe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the canonical job description, input file contents included.
    pub config_digest: String,
    /// Unix seconds. The only field allowed to differ between reruns.
    pub timestamp: u64,
    pub result: ReportBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportBody {
    Condition(ConditionReport),
    Extraction(ExtractionReport),
    Probe(ProbeReport),
    Opnorm(OpnormReport),
}

/// Digests of the two matrix spec files, in the order the condition reads them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDigests {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub pair: PairDigests,
    pub budget: Budget,
    pub ladder: Vec<usize>,
    /// Empty for condition S.
    pub schedules: Vec<String>,
    pub verdict: Status,
    pub witnesses: Vec<Witness>,
    pub counterexample: Option<Counterexample>,
    pub branches: Vec<Branch>,
}

impl ConditionReport {
    pub fn new(pair: PairDigests, budget: Budget, schedules: Vec<String>, v: Verdict) -> Self {
        ConditionReport {
            condition: v.condition,
            pair,
            ladder: budget.ladder.rungs().to_vec(),
            budget,
            schedules,
            verdict: v.status,
            witnesses: v.witnesses,
            counterexample: v.counterexample,
            branches: v.branches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegradeReport {
    pub n_k: Vec<usize>,
    #[serde(with = "serde_log::vec")]
    pub log_m: Vec<f64>,
    #[serde(with = "serde_log::vec")]
    pub log_m_used: Vec<f64>,
    /// Digest of the regraded matrix written as an explicit spec file.
    pub regraded: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
#[allow(clippy::large_enum_variant)]
pub enum ExtractionOutcome {
    Extracted {
        certificate: ExtractionCertificate,
        verification: VerificationReport,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cbs: Option<CbsOutcome>,
    },
    NjNotFound {
        j: usize,
    },
    VjNotFound {
        j: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub a: String,
    pub b: String,
    pub operator: String,
    pub norm: String,
    pub regrade: RegradeReport,
    pub outcome: ExtractionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub a: String,
    pub b: String,
    pub i: usize,
    pub v: usize,
    pub p: usize,
    pub q: usize,
    /// `ln b_v^p - ln a_i^q`.
    #[serde(with = "serde_log")]
    pub log_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpnormReport {
    pub a: String,
    pub b: String,
    pub operator: String,
    pub norm: String,
    pub p: usize,
    pub q: usize,
    pub bound: OpNormBound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub budget: usize,
    /// Lower bound found by search.
    #[serde(with = "serde_log")]
    pub log_value: f64,
}

impl Report {
    pub fn new(
        command: &str,
        seed: u64,
        config_digest: String,
        timestamp: u64,
        result: ReportBody,
    ) -> Self {
        Report {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_digest,
            timestamp,
            result,
        }
    }

    /// Canonical text: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}
