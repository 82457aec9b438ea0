//! Run configuration: a TOML file, overridden field by field from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qvsec::network::{BusId, HvdcScheme};
use qvsec::parallel::ExecMode;
use qvsec::powerflow::SolverOptions;
use qvsec::qv::SweepOptions;
use qvsec::scenario::{BranchRef, ScenarioOptions, ZonePolicy};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// MATPOWER-style `.m` or native `.toml` case.
    pub case: Option<PathBuf>,
    pub out: PathBuf,
    pub solver: SolverOptions,
    pub sweep: SweepConfig,
    pub zones: ZonePolicy,
    pub qv: QvConfig,
    pub scan: ScanConfig,
    pub cluster: ClusterConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: None,
            out: PathBuf::from("out"),
            solver: SolverOptions::default(),
            sweep: SweepConfig::default(),
            zones: ZonePolicy::default(),
            qv: QvConfig::default(),
            scan: ScanConfig::default(),
            cluster: ClusterConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub v_start_offset: f64,
    pub v_step: f64,
    pub v_floor: f64,
    pub refine_bisection_steps: u32,
    pub exec: ExecMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let d = SweepOptions::default();
        SweepConfig {
            v_start_offset: d.v_start_offset,
            v_step: d.v_step,
            v_floor: d.v_floor,
            refine_bisection_steps: d.refine_bisection_steps,
            exec: d.exec,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QvConfig {
    /// Empty means every study bus.
    pub buses: Vec<BusId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BranchSelection {
    /// `"all"`
    Keyword(String),
    /// 1-based branch ids.
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Ppf,
    Pv,
    Both,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<HvdcScheme> {
        match self {
            SchemeChoice::Ppf => vec![HvdcScheme::PPf],
            SchemeChoice::Pv => vec![HvdcScheme::PV],
            SchemeChoice::Both => vec![HvdcScheme::PPf, HvdcScheme::PV],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub branches: BranchSelection,
    /// Only branches whose both ends are at or above this kV.
    pub branch_kv_floor: f64,
    pub scheme: SchemeChoice,
    pub pv_q_limit_scale: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            branches: BranchSelection::Keyword("all".into()),
            branch_kv_floor: 0.0,
            scheme: SchemeChoice::Both,
            pv_q_limit_scale: ScenarioOptions::default().pv_q_limit_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Cluster both schemes together instead of one model per scheme.
    pub joint: bool,
    pub elbow_k_max: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 5,
            seed: 0,
            max_iter: 300,
            tol: 1e-9,
            joint: false,
            elbow_k_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub csv: bool,
    pub svg: bool,
    /// Heatmap colour saturation, percent either side of zero.
    pub heatmap_limit_pct: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            csv: true,
            svg: true,
            heatmap_limit_pct: 30.0,
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub case: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub scheme: Option<SchemeChoice>,
    pub kv_floor: Option<f64>,
    pub v_step: Option<f64>,
    pub v_floor: Option<f64>,
    pub joint: bool,
    pub sequential: bool,
}

impl RunConfig {
    /// Read `path` (if any) and apply `ov`. A relative case path in the
    /// file is taken relative to the file.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                if let (Some(case), Some(dir)) = (&cfg.case, p.parent()) {
                    if case.is_relative() {
                        cfg.case = Some(dir.join(case));
                    }
                }
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(c) = &ov.case {
            cfg.case = Some(c.clone());
        }
        if let Some(o) = &ov.out {
            cfg.out = o.clone();
        }
        if let Some(s) = ov.seed {
            cfg.cluster.seed = s;
        }
        if let Some(k) = ov.k {
            cfg.cluster.k = k;
        }
        if let Some(s) = ov.scheme {
            cfg.scan.scheme = s;
        }
        if let Some(f) = ov.kv_floor {
            cfg.zones.kv_floor = f;
        }
        if let Some(v) = ov.v_step {
            cfg.sweep.v_step = v;
        }
        if let Some(v) = ov.v_floor {
            cfg.sweep.v_floor = v;
        }
        cfg.cluster.joint |= ov.joint;
        if ov.sequential {
            cfg.sweep.exec = ExecMode::Sequential;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let Some(case) = &self.case else {
            return Err(CliError::Config("no case file given (use --case or `case = ...`)".into()));
        };
        if !case.is_file() {
            return Err(CliError::Config(format!("case file {} does not exist", case.display())));
        }
        if self.cluster.k < 1 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if self.cluster.max_iter < 1 {
            return Err(CliError::Config("cluster.max_iter must be at least 1".into()));
        }
        if !(self.report.heatmap_limit_pct > 0.0) {
            return Err(CliError::Config("report.heatmap_limit_pct must be positive".into()));
        }
        if let BranchSelection::Keyword(k) = &self.scan.branches {
            if k != "all" {
                return Err(CliError::Config(format!("scan.branches: expected \"all\" or a list of ids, got {k:?}")));
            }
        }
        self.sweep_options().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn case_path(&self) -> &Path {
        self.case.as_deref().expect("validated config has a case")
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            v_start_offset: self.sweep.v_start_offset,
            v_step: self.sweep.v_step,
            v_floor: self.sweep.v_floor,
            refine_bisection_steps: self.sweep.refine_bisection_steps,
            solver: self.solver,
            exec: self.sweep.exec,
        }
    }

    pub fn scenario_options(&self) -> ScenarioOptions {
        ScenarioOptions {
            pv_q_limit_scale: self.scan.pv_q_limit_scale,
        }
    }

    pub fn branch_refs(&self, net: &qvsec::network::Network) -> Vec<BranchRef> {
        let kv = |bus| net.bus(bus).map_or(0.0, |b| b.base_kv);
        let ids: Vec<usize> = match &self.scan.branches {
            BranchSelection::Ids(ids) => ids.clone(),
            BranchSelection::Keyword(_) => (1..=net.branches.len())
                .filter(|&i| net.branches[i - 1].in_service)
                .collect(),
        };
        ids.into_iter()
            .filter(|&i| {
                net.branches.get(i - 1).map_or(true, |br| {
                    kv(br.from_bus) >= self.scan.branch_kv_floor && kv(br.to_bus) >= self.scan.branch_kv_floor
                })
            })
            .map(BranchRef::Id)
            .collect()
    }

    /// Effective configuration as TOML, without the case and output
    /// locations or the execution mode, none of which change results.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.case = None;
        c.out = PathBuf::new();
        c.sweep.exec = ExecMode::default();
        toml::to_string(&c).expect("config serializes")
    }

    /// SHA-256 over the canonical configuration and the case file bytes,
    /// so the hash names the study rather than where it was run.
    pub fn hash(&self, case_bytes: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_toml().as_bytes());
        h.update(b"\0");
        h.update(case_bytes);
        hex(&h.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
