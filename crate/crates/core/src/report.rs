//! Machine-readable reports for the `analyze` and `falsify` commands.
//!
//! Reports are deterministic for fixed inputs and seed. Wall-clock timing is
//! only included on request.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyzer::{AnalysisVerdict, CaseTag, ChiEntry, Diagnostic, SimplifiedOutcome, TwoRegularity, Verdict};
use crate::harness::{MscqReport, NeighborhoodReport, TiltExperiment};
use crate::problem::{Instance, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_TILT_STABLE: i32 = 0;
pub const EXIT_NOT_TILT_STABLE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_WITNESS: i32 = 3;
pub const EXIT_INPUT: i32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEcho {
    /// SHA-256 of the compact JSON form of the instance as analyzed.
    pub hash: String,
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
}

impl InstanceEcho {
    pub fn of(inst: &Instance) -> Self {
        let canon = serde_json::to_string(&inst.to_file()).expect("instance serializes");
        InstanceEcho { hash: hex::encode(Sha256::digest(canon.as_bytes())), n: inst.n, m: inst.m, sigma: inst.sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub analysis_ms: f64,
    pub empirical_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub instance: InstanceEcho,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub case: CaseTag,
    /// `TILT_STABLE`, `NOT_TILT_STABLE` or `INCONCLUSIVE`.
    pub verdict: String,
    pub verdict_detail: Verdict,
    pub bound_estimate: Option<f64>,
    pub chi1: Option<ChiEntry>,
    pub chi2: Option<ChiEntry>,
    pub chi3: Option<ChiEntry>,
    pub out_of_kernel_min: Option<ChiEntry>,
    pub simplified_test: SimplifiedOutcome,
    pub two_regularity: TwoRegularity,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical: Option<TiltExperiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl AnalyzeReport {
    pub fn new(inst: &Instance, analysis: AnalysisVerdict, empirical: Option<TiltExperiment>) -> Self {
        AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::current(),
            instance: InstanceEcho::of(inst),
            seed: inst.seed,
            tolerances: inst.tol,
            case: analysis.case,
            verdict: analysis.verdict.label().into(),
            bound_estimate: analysis.verdict.bound(),
            verdict_detail: analysis.verdict,
            chi1: analysis.chi.chi1,
            chi2: analysis.chi.chi2,
            chi3: analysis.chi.chi3,
            out_of_kernel_min: analysis.out_of_kernel_min,
            simplified_test: analysis.simplified_test,
            two_regularity: analysis.two_regularity,
            diagnostics: analysis.diagnostics,
            empirical,
            timing: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict_detail {
            Verdict::TiltStable { .. } => EXIT_TILT_STABLE,
            Verdict::NotTiltStable { .. } => EXIT_NOT_TILT_STABLE,
            Verdict::Inconclusive { .. } => EXIT_INCONCLUSIVE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FalsifyKind {
    Mscq,
    Neighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifyReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub instance: InstanceEcho,
    pub seed: u64,
    pub test: FalsifyKind,
    pub samples: usize,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub witness_found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mscq: Option<MscqReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood: Option<NeighborhoodReport>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl FalsifyReport {
    fn header(inst: &Instance, test: FalsifyKind, samples: usize) -> Self {
        FalsifyReport {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::current(),
            instance: InstanceEcho::of(inst),
            seed: inst.seed,
            test,
            samples,
            kappa: None,
            eta: None,
            witness_found: false,
            mscq: None,
            neighborhood: None,
            warnings: Vec::new(),
            timing_ms: None,
        }
    }

    pub fn from_mscq(inst: &Instance, rep: MscqReport) -> Self {
        let mut out = Self::header(inst, FalsifyKind::Mscq, rep.samples);
        out.witness_found = rep.witness.is_some();
        if rep.heuristic {
            out.warnings.push("dimension above the grid limit: distance lower bounds are not certified".into());
        }
        out.mscq = Some(rep);
        out
    }

    pub fn from_neighborhood(inst: &Instance, kappa: f64, eta: f64, rep: NeighborhoodReport) -> Self {
        let mut out = Self::header(inst, FalsifyKind::Neighborhood, rep.samples);
        out.kappa = Some(kappa);
        out.eta = Some(eta);
        out.witness_found = rep.witness.is_some();
        out.neighborhood = Some(rep);
        out
    }

    pub fn exit_code(&self) -> i32 {
        if self.witness_found {
            EXIT_WITNESS
        } else {
            0
        }
    }
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{self, AnalyzerOpts};
    use crate::catalog;
    use crate::harness;

    #[test]
    fn analyze_report_round_trips() {
        let inst = catalog::out_of_kernel();
        let analysis = analyzer::analyze(&inst, &AnalyzerOpts::default());
        let exp = harness::empirical_tilt(&inst, 0.1, 1e-3, 5, analysis.verdict.bound());
        let rep = AnalyzeReport::new(&inst, analysis, Some(exp));
        assert_eq!(rep.exit_code(), EXIT_TILT_STABLE);
        let text = to_json(&rep);
        let back: AnalyzeReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        assert_eq!(to_json(&back), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["verdict"], "TILT_STABLE");
        assert!(v["chi1"].is_null());
        assert_eq!(v["out_of_kernel_min"]["value"].as_f64().map(|x| (x - 1.0).abs() < 1e-9), Some(true));
    }

    #[test]
    fn in_kernel_report_has_chi_certificates() {
        let inst = catalog::half_plane(2.0);
        let rep = AnalyzeReport::new(&inst, analyzer::analyze(&inst, &AnalyzerOpts::default()), None);
        let v: serde_json::Value = serde_json::from_str(&to_json(&rep)).unwrap();
        assert!(v["chi1"]["certificate"]["u"].is_array());
        assert!(v.get("empirical").is_none());
        let back: AnalyzeReport = serde_json::from_str(&to_json(&rep)).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn hash_depends_on_data() {
        let a = InstanceEcho::of(&catalog::half_plane(2.0));
        let b = InstanceEcho::of(&catalog::half_plane(3.0));
        assert_eq!(a.hash.len(), 64);
        assert_ne!(a.hash, b.hash);
        assert_eq!(a, InstanceEcho::of(&catalog::half_plane(2.0)));
    }

    #[test]
    fn falsify_report_round_trips() {
        let inst = catalog::squared_vertex();
        let rep = FalsifyReport::from_mscq(&inst, harness::mscq_falsify(&inst, 200, 3));
        assert_eq!(rep.exit_code(), EXIT_WITNESS);
        let back: FalsifyReport = serde_json::from_str(&to_json(&rep)).unwrap();
        assert_eq!(back, rep);
    }
}
