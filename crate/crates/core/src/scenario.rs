//! Scenario configs, built-in scenarios and the pipelines behind the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FsError, Result};
use crate::expansivity::{
    expansivity_scan, expansivity_violation_search, ExpansivityParams, ExpansivityScan, ScanParams,
    SearchStats,
};
use crate::foliation::{FoliationKind, FoliationSpec, LinearFoliation};
use crate::grid::Grid;
use crate::map::{MapSpec, ToralMap, TrigTerm};
use crate::orbit::{random_pseudo_orbit, Trajectory};
use crate::quotient::{build_quotient_system, leaf_hausdorff, transfer_shadowing_check, TransferParams};
use crate::recurrence::{
    build_chain_graph, certify_recurrent_cells, chain_recurrent_cells, CellCertificate, LoopShadowParams,
};
use crate::semiconj::{
    construct_semiconjugation, horizon_truncation_bound, paired_samples, verify_foliated_continuity,
    verify_stability_contract, ContinuityRow, SampleSet, SemiconjParams, StabilityReport,
};
use crate::shadow::{exact_shadow_hyperbolic, finite_shadow, hyperbolic_shadow_constant, ShadowProblem};
use crate::torus::{torus_dist_unchecked, TorusPoint, TAU_GEOM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// Default grid resolution per axis.
    pub grid: usize,
    pub map: MapSpec,
    pub foliation: FoliationSpec,
    #[serde(default)]
    pub cr_set: Option<CrSetConfig>,
    #[serde(default)]
    pub shadow: Option<ShadowConfig>,
    #[serde(default)]
    pub semiconj: Option<SemiconjConfig>,
    #[serde(default)]
    pub expansivity: Option<ExpansivityConfig>,
    #[serde(default)]
    pub quotient: Option<QuotientConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrSetConfig {
    pub delta: f64,
    /// Required `d(x, y_0)` bound of the periodic-leaf certificates.
    pub eps: f64,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default = "default_true")]
    pub certify: bool,
    #[serde(default = "default_leaf_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowConfig {
    pub delta: f64,
    pub eps: f64,
    pub trials: usize,
    pub length: usize,
    #[serde(default)]
    pub grid: Option<usize>,
    /// Restrict the search to cell centers.
    #[serde(default)]
    pub grid_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiconjConfig {
    /// Terms added to the map to obtain `g`.
    pub perturbation: Vec<TrigTerm>,
    pub eps: f64,
    #[serde(default)]
    pub eps_prime: Option<f64>,
    pub horizon: usize,
    pub samples: usize,
    #[serde(default = "default_orbit_len")]
    pub orbit_len: usize,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub continuity: Option<ContinuityConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub deltas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub base_points: usize,
    /// Bound checked on in-contract rows; `None` only records `rho`.
    #[serde(default)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Witness,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansivityConfig {
    #[serde(default)]
    pub e: Vec<f64>,
    /// `eps0 = eps0_ratio * e` unless `eps0` is given.
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default = "default_eps0_ratio")]
    pub eps0_ratio: f64,
    /// Defaults to `eps0`.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Defaults to the power of two at least `3 sqrt(d) / e`.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub eps0: f64,
    pub rho: f64,
    pub horizon_max: usize,
    #[serde(default)]
    pub e_start: Option<f64>,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub expect_certified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientConfig {
    pub delta: f64,
    pub eps: f64,
    pub trials: usize,
    pub length: usize,
    #[serde(default)]
    pub grid: Option<usize>,
}

fn default_true() -> bool {
    true
}
fn default_leaf_tol() -> f64 {
    1e-6
}
fn default_orbit_len() -> usize {
    10
}
fn default_eps0_ratio() -> f64 {
    0.2
}
fn default_horizon() -> usize {
    30
}
fn default_halvings() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    CrSet,
    Shadow,
    Semiconj,
    ExpansivityScan,
    Quotient,
    All,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::CrSet => "cr-set",
            Step::Shadow => "shadow",
            Step::Semiconj => "semiconj",
            Step::ExpansivityScan => "expansivity-scan",
            Step::Quotient => "quotient",
            Step::All => "all",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Step::CrSet => 1,
            Step::Shadow => 2,
            Step::Semiconj => 3,
            Step::ExpansivityScan => 4,
            Step::Quotient => 5,
            Step::All => 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FsError::Config(format!(
            "{name} must be positive and finite (got {v})"
        )))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(FsError::Config(format!(
            "{name} must be at least {min} (got {v})"
        )))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| FsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| FsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `builtin:<name>`, a `.json` file, or a TOML file.
    pub fn load(path: &str) -> Result<Self> {
        if let Some(name) = path.strip_prefix("builtin:") {
            return builtin_scenario(name);
        }
        let text =
            fs::read_to_string(path).map_err(|e| FsError::Config(format!("cannot read {path}: {e}")))?;
        if path.ends_with(".json") || text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn build_map(&self) -> Result<ToralMap> {
        ToralMap::from_spec(&self.map).map_err(|e| FsError::Config(format!("map: {e}")))
    }

    pub fn build_foliation(&self) -> Result<LinearFoliation> {
        LinearFoliation::from_spec(&self.foliation, self.map.matrix.len())
            .map_err(|e| FsError::Config(format!("foliation: {e}")))
    }

    fn grid(&self, over: Option<usize>) -> Result<Grid> {
        Grid::new(self.map.matrix.len(), over.unwrap_or(self.grid))
            .map_err(|e| FsError::Config(format!("grid: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.build_map()?;
        self.build_foliation()?;
        self.grid(None)?;
        if let Some(c) = &self.cr_set {
            positive("cr_set.delta", c.delta)?;
            positive("cr_set.eps", c.eps)?;
            positive("cr_set.tol", c.tol)?;
            self.grid(c.grid)?;
        }
        if let Some(c) = &self.shadow {
            positive("shadow.delta", c.delta)?;
            positive("shadow.eps", c.eps)?;
            at_least("shadow.trials", c.trials, 1)?;
            at_least("shadow.length", c.length, 2)?;
            self.grid(c.grid)?;
        }
        if let Some(c) = &self.semiconj {
            positive("semiconj.eps", c.eps)?;
            if let Some(e) = c.eps_prime {
                positive("semiconj.eps_prime", e)?;
            }
            at_least("semiconj.samples", c.samples, 1)?;
            at_least("semiconj.orbit_len", c.orbit_len, 1)?;
            f.perturbed(c.perturbation.clone())
                .map_err(|e| FsError::Config(format!("semiconj.perturbation: {e}")))?;
            self.grid(c.grid)?;
            if let Some(k) = &c.continuity {
                for &d in &k.deltas {
                    positive("semiconj.continuity.deltas", d)?;
                }
                at_least("semiconj.continuity.base_points", k.base_points, 1)?;
                if let Some(r) = k.rho {
                    positive("semiconj.continuity.rho", r)?;
                }
            }
        }
        if let Some(c) = &self.expansivity {
            for &e in &c.e {
                positive("expansivity.e", e)?;
            }
            positive("expansivity.eps0_ratio", c.eps0_ratio)?;
            if let Some(v) = c.eps0 {
                positive("expansivity.eps0", v)?;
            }
            if let Some(v) = c.rho {
                positive("expansivity.rho", v)?;
            }
            at_least("expansivity.horizon", c.horizon, 1)?;
            self.grid(c.grid)?;
            if let Some(s) = &c.scan {
                positive("expansivity.scan.eps0", s.eps0)?;
                positive("expansivity.scan.rho", s.rho)?;
                at_least("expansivity.scan.horizon_max", s.horizon_max, 1)?;
                self.grid(s.grid)?;
            }
        }
        if let Some(c) = &self.quotient {
            positive("quotient.delta", c.delta)?;
            positive("quotient.eps", c.eps)?;
            at_least("quotient.trials", c.trials, 1)?;
            at_least("quotient.length", c.length, 2)?;
            self.grid(c.grid)?;
        }
        Ok(())
    }

    fn rng(&self, step: Step) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ step.salt().wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

const BUILTINS: &[(&str, &str, &str)] = &[
    (
        "catmap-expansive",
        "cat map, point foliation: no expansivity violation at e = 0.1",
        r#"
name = "catmap-expansive"
grid = 64
map = { matrix = [[2, 1], [1, 1]] }
foliation = { kind = "points" }
[expansivity]
e = [0.1]
eps0 = 0.05
rho = 0.05
horizon = 30
expect = "none"
[expansivity.scan]
eps0 = 0.05
rho = 0.01
horizon_max = 16
expect_certified = true
"#,
    ),
    (
        "catmap-shadow",
        "cat map, point foliation: layered shadows against the hyperbolic oracle",
        r#"
name = "catmap-shadow"
grid = 128
map = { matrix = [[2, 1], [1, 1]] }
foliation = { kind = "points" }
[shadow]
delta = 0.002
eps = 0.02
trials = 100
length = 50
grid_only = true
"#,
    ),
    (
        "catmap-stability",
        "cat map vs 0.002 sin perturbation: stability contract and continuity rows",
        r#"
name = "catmap-stability"
grid = 256
map = { matrix = [[2, 1], [1, 1]] }
foliation = { kind = "points" }
[semiconj]
perturbation = [{ freq = [0, 1], coeff = [0.002, 0.0], phase = "sin" }]
eps = 0.05
horizon = 20
samples = 500
orbit_len = 10
[semiconj.continuity]
deltas = [0.1, 0.01, 0.001]
horizons = [10, 20, 40]
base_points = 20
"#,
    ),
    (
        "single-leaf-trivial",
        "single-leaf foliation: every pseudo-orbit shadows itself",
        r#"
name = "single-leaf-trivial"
grid = 32
map = { matrix = [[2, 1], [1, 1]] }
foliation = { kind = "whole_manifold" }
[shadow]
delta = 0.05
eps = 0.05
trials = 20
length = 20
[expansivity]
e = [0.05]
eps0 = 0.05
rho = 0.001
horizon = 5
expect = "none"
"#,
    ),
    (
        "t2-vertical-noexp",
        "skew rotation with vertical circles: expansivity witnesses",
        r#"
name = "t2-vertical-noexp"
grid = 64
map = { matrix = [[1, 0], [0, 1]], perturbation = [
    { freq = [0, 0], coeff = [0.377, 0.0], phase = "cos" },
    { freq = [1, 0], coeff = [0.0, 0.1], phase = "sin" },
] }
foliation = { kind = "linear", directions = [[0, 1]] }
[expansivity]
e = [0.1, 0.05, 0.02]
eps0_ratio = 0.2
horizon = 100
expect = "witness"
[quotient]
delta = 0.005
eps = 0.05
trials = 10
length = 20
grid = 128
"#,
    ),
    (
        "t3-center",
        "A x id on T^3 with center circles: recurrence, periodic leaves, quotient transfer",
        r#"
name = "t3-center"
grid = 32
map = { matrix = [[2, 1, 0], [1, 1, 0], [0, 0, 1]] }
foliation = { kind = "linear", directions = [[0, 0, 1]] }
[cr_set]
delta = 0.02
eps = 0.1
[quotient]
delta = 0.005
eps = 0.05
trials = 50
length = 20
grid = 64
"#,
    ),
];

/// Built-in scenario names with one-line descriptions, sorted by name.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|(n, d, _)| (*n, *d)).collect()
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, desc, text) = BUILTINS
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| FsError::Config(format!("unknown built-in scenario {name:?}")))?;
    let mut cfg = ScenarioConfig::from_toml(text)?;
    cfg.description = desc.to_string();
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: String,
    pub pass: bool,
    pub error: Option<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub steps: Vec<StepOutcome>,
    pub pass: bool,
}

impl Manifest {
    /// 0 when every step passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Writes `bytes` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, files: &mut Vec<String>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FsError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(&dir.join(name), text.as_bytes())?;
    files.push(name.to_string());
    Ok(())
}

fn write_csv(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())?;
    files.push(name.to_string());
    Ok(())
}

/// Runs `step` (every configured block for `Step::All`) and writes reports
/// plus `manifest.json` into `out`. Step failures are recorded in the
/// manifest; only configuration and I/O problems are returned as errors.
pub fn run_scenario(cfg: &ScenarioConfig, step: Step, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let steps: Vec<Step> = match step {
        Step::All => {
            let mut v = Vec::new();
            if cfg.cr_set.is_some() {
                v.push(Step::CrSet);
            }
            if cfg.shadow.is_some() {
                v.push(Step::Shadow);
            }
            if cfg.semiconj.is_some() {
                v.push(Step::Semiconj);
            }
            if cfg.expansivity.is_some() {
                v.push(Step::ExpansivityScan);
            }
            if cfg.quotient.is_some() {
                v.push(Step::Quotient);
            }
            if v.is_empty() {
                return Err(FsError::Config("scenario configures no pipeline step".into()));
            }
            v
        }
        s => {
            let present = match s {
                Step::CrSet => cfg.cr_set.is_some(),
                Step::Shadow => cfg.shadow.is_some(),
                Step::Semiconj => cfg.semiconj.is_some(),
                Step::ExpansivityScan => cfg.expansivity.is_some(),
                Step::Quotient => cfg.quotient.is_some(),
                Step::All => true,
            };
            if !present {
                return Err(FsError::Config(format!(
                    "scenario {:?} has no [{}] block",
                    cfg.name,
                    s.name().replace('-', "_").replace("_scan", "")
                )));
            }
            vec![s]
        }
    };
    fs::create_dir_all(out)?;
    let mut outcomes = Vec::new();
    for s in steps {
        let mut files = Vec::new();
        let res = match s {
            Step::CrSet => run_cr_set(cfg, out, &mut files),
            Step::Shadow => run_shadow(cfg, out, &mut files),
            Step::Semiconj => run_semiconj(cfg, out, &mut files),
            Step::ExpansivityScan => run_expansivity(cfg, out, &mut files),
            Step::Quotient => run_quotient(cfg, out, &mut files),
            Step::All => unreachable!(),
        };
        let (pass, error) = match res {
            Ok(p) => (p, None),
            Err(e @ FsError::Io(_)) => return Err(e),
            Err(e) => (false, Some(e.to_string())),
        };
        outcomes.push(StepOutcome {
            step: s.name().to_string(),
            pass,
            error,
            files,
        });
    }
    let manifest = Manifest {
        tool: "foliashadow".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        pass: outcomes.iter().all(|o| o.pass),
        steps: outcomes,
    };
    let mut files = Vec::new();
    write_json(out, "manifest.json", &manifest, &mut files)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
struct CrSetReport {
    delta: f64,
    eps: f64,
    resolution: usize,
    resolution_limited: bool,
    cells: usize,
    edges: usize,
    scc_count: usize,
    recurrent_cells: usize,
    certified: usize,
    worst_distance: f64,
    worst_leaf_return_defect: f64,
    failures: Vec<CellCertificate>,
}

fn run_cr_set(cfg: &ScenarioConfig, out: &Path, files: &mut Vec<String>) -> Result<bool> {
    let c = cfg.cr_set.as_ref().expect("checked");
    let f = cfg.build_map()?;
    let fol = cfg.build_foliation()?;
    let grid = cfg.grid(c.grid)?;
    let g = build_chain_graph(&f, &fol, c.delta, grid)?;
    let rr = chain_recurrent_cells(&g);
    let mut params = LoopShadowParams::new(c.eps, grid);
    params.tol = c.tol;
    let certs = if c.certify {
        certify_recurrent_cells(&f, &fol, &g, &params)
    } else {
        Vec::new()
    };
    let ok = |x: &CellCertificate| {
        x.error.is_none() && x.distance <= c.eps + TAU_GEOM && x.leaf_return_defect <= c.tol
    };
    let report = CrSetReport {
        delta: c.delta,
        eps: c.eps,
        resolution: grid.resolution(),
        resolution_limited: rr.resolution_limited,
        cells: g.num_cells(),
        edges: g.num_edges(),
        scc_count: rr.scc_count,
        recurrent_cells: rr.recurrent_cells.len(),
        certified: certs.iter().filter(|x| ok(x)).count(),
        worst_distance: certs.iter().map(|x| x.distance).fold(0.0, f64::max),
        worst_leaf_return_defect: certs.iter().map(|x| x.leaf_return_defect).fold(0.0, f64::max),
        failures: certs.iter().filter(|x| !ok(x)).cloned().collect(),
    };
    write_json(out, "cr_set.json", &report, files)?;
    let mut csv = String::from("cell");
    for i in 0..grid.dim() {
        let _ = write!(csv, ",x{i}");
    }
    csv.push_str(",period,distance,leaf_return_defect,certified\n");
    for x in &certs {
        let _ = write!(csv, "{}", x.cell);
        for v in grid.cell_center(x.cell).coords() {
            let _ = write!(csv, ",{v}");
        }
        let _ = writeln!(
            csv,
            ",{},{},{},{}",
            x.period,
            x.distance,
            x.leaf_return_defect,
            ok(x)
        );
    }
    if !c.certify {
        for &cell in &rr.recurrent_cells {
            let _ = write!(csv, "{cell}");
            for v in grid.cell_center(cell).coords() {
                let _ = write!(csv, ",{v}");
            }
            csv.push_str(",,,,\n");
        }
    }
    write_csv(out, "cr_cells.csv", &csv, files)?;
    Ok(!c.certify || report.certified == report.recurrent_cells)
}

#[derive(Debug, Clone, Serialize)]
struct ShadowTrialRow {
    found: bool,
    max_offset: f64,
    oracle_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ShadowReport {
    delta: f64,
    eps: f64,
    resolution: usize,
    grid_only: bool,
    oracle_constant: Option<f64>,
    oracle_bound: Option<f64>,
    found: usize,
    worst_offset: f64,
    worst_oracle_distance: Option<f64>,
    trials: Vec<ShadowTrialRow>,
}

fn run_shadow(cfg: &ScenarioConfig, out: &Path, files: &mut Vec<String>) -> Result<bool> {
    let c = cfg.shadow.as_ref().expect("checked");
    let f = cfg.build_map()?;
    let fol = cfg.build_foliation()?;
    let grid = cfg.grid(c.grid)?;
    let mut rng = cfg.rng(Step::Shadow);
    let oracle = (fol.kind() == FoliationKind::Points && f.is_linear())
        .then(|| hyperbolic_shadow_constant(&f).ok())
        .flatten();
    let bound = oracle.map(|k| grid.cell_diameter() + c.delta * k);
    let mut rows = Vec::with_capacity(c.trials);
    for _ in 0..c.trials {
        let t = random_pseudo_orbit(&f, c.length, c.delta, &mut rng)?;
        let mut prob = ShadowProblem::new(&f, &fol, &t, c.eps, grid);
        if c.grid_only {
            prob = prob.grid_only();
        }
        let row = match finite_shadow(&prob) {
            Ok(sol) => {
                let oracle_distance = match oracle {
                    Some(_) => Some(max_dist(&exact_shadow_hyperbolic(&f, &t)?, &sol.trajectory)),
                    None => None,
                };
                ShadowTrialRow {
                    found: true,
                    max_offset: sol.max_offset,
                    oracle_distance,
                }
            }
            Err(FsError::ShadowNotFound { .. }) => ShadowTrialRow {
                found: false,
                max_offset: f64::INFINITY,
                oracle_distance: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let found = rows.iter().filter(|r| r.found).count();
    let worst_oracle = oracle.map(|_| rows.iter().filter_map(|r| r.oracle_distance).fold(0.0, f64::max));
    let report = ShadowReport {
        delta: c.delta,
        eps: c.eps,
        resolution: grid.resolution(),
        grid_only: c.grid_only,
        oracle_constant: oracle,
        oracle_bound: bound,
        found,
        worst_offset: rows.iter().map(|r| r.max_offset).fold(0.0, f64::max),
        worst_oracle_distance: worst_oracle,
        trials: rows,
    };
    write_json(out, "shadow.json", &report, files)?;
    let oracle_ok = match (worst_oracle, bound) {
        (Some(w), Some(b)) => w <= b + TAU_GEOM,
        _ => true,
    };
    Ok(found == c.trials && oracle_ok)
}

fn max_dist(a: &Trajectory, b: &Trajectory) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(x, y)| torus_dist_unchecked(x, y))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
struct SemiconjReport {
    samples: usize,
    horizon: usize,
    resolution: usize,
    image_sizes_max: usize,
    stability: StabilityReport,
    continuity: Vec<ContinuityRow>,
    continuity_monotone_in_delta: Option<bool>,
    continuity_nonincreasing_in_horizon: Option<bool>,
    continuity_decrease_observed: Option<bool>,
}

fn run_semiconj(cfg: &ScenarioConfig, out: &Path, files: &mut Vec<String>) -> Result<bool> {
    let c = cfg.semiconj.as_ref().expect("checked");
    let f = cfg.build_map()?;
    let fol = cfg.build_foliation()?;
    let grid = cfg.grid(c.grid)?;
    let g = f.perturbed(c.perturbation.clone())?;
    let eps_prime = c.eps_prime.unwrap_or(c.eps / 8.0);
    let mut rng = cfg.rng(Step::Semiconj);
    let samples = SampleSet::random_orbits(&g, c.samples, c.orbit_len, &mut rng);
    let params = SemiconjParams::new(eps_prime, c.horizon, grid);
    let h = construct_semiconjugation(&f, &fol, &g, &params, &samples)?;
    let stability = verify_stability_contract(&h, &f, &g, &fol, c.eps, grid.cell_diameter())?;
    let mut rows = Vec::new();
    let (mut mono_delta, mut mono_n, mut strict_n) = (None, None, None);
    if let Some(k) = &c.continuity {
        let d = f.dim();
        let base: Vec<TorusPoint> = (0..k.base_points)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                TorusPoint::wrap(&v)
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<(SampleSet, Vec<(usize, usize)>)> = k
            .deltas
            .iter()
            .map(|&delta| paired_samples(&base, delta, &mut rng))
            .collect();
        for &n in &k.horizons {
            let p = SemiconjParams::new(eps_prime, n, grid);
            for (&delta, (s, pr)) in k.deltas.iter().zip(&pairs) {
                let hk = construct_semiconjugation(&f, &fol, &g, &p, s)?;
                rows.push(verify_foliated_continuity(&hk, &fol, c.eps, k.rho, delta, pr)?);
            }
        }
        let nd = k.deltas.len();
        let mut md = true;
        let mut mn = true;
        let mut decreased = false;
        for (hi, _) in k.horizons.iter().enumerate() {
            for di in 0..nd {
                let r = &rows[hi * nd + di];
                for dj in 0..nd {
                    let q = &rows[hi * nd + dj];
                    if k.deltas[dj] < k.deltas[di] && q.observed_rho > r.observed_rho + 1e-12 {
                        md = false;
                    }
                }
                let tol = horizon_truncation_bound(&f, eps_prime, k.horizons[hi]);
                for (hj, _) in k.horizons.iter().enumerate() {
                    let q = &rows[hj * nd + di];
                    if k.horizons[hj] > k.horizons[hi] {
                        if q.observed_rho > r.observed_rho + tol {
                            mn = false;
                        }
                        if q.observed_rho < r.observed_rho {
                            decreased = true;
                        }
                    }
                }
            }
        }
        mono_delta = Some(md);
        mono_n = Some(mn);
        strict_n = Some(decreased);
        let mut csv = String::from("delta,horizon,observed_rho,pairs,in_contract,pass\n");
        for r in &rows {
            let pass = r.pass.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.delta, r.horizon, r.observed_rho, r.pairs, r.in_contract, pass
            );
        }
        write_csv(out, "continuity.csv", &csv, files)?;
    }
    let report = SemiconjReport {
        samples: h.len(),
        horizon: c.horizon,
        resolution: grid.resolution(),
        image_sizes_max: h.images.iter().map(Vec::len).max().unwrap_or(0),
        continuity_monotone_in_delta: mono_delta,
        continuity_nonincreasing_in_horizon: mono_n,
        continuity_decrease_observed: strict_n,
        stability,
        continuity: rows,
    };
    write_json(out, "semiconj.json", &report, files)?;
    Ok(report.stability.pass
        && mono_delta != Some(false)
        && mono_n != Some(false)
        && report.continuity.iter().all(|r| r.pass != Some(false)))
}

#[derive(Debug, Clone, Serialize)]
struct WitnessDump {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    index_offset: usize,
    max_pair_distance: f64,
    defect: f64,
    transverse_separation: f64,
    revalidated: bool,
    /// `max_k |sep(x_k, y_k) - sep(x_0, y_0)|` in the leaf space.
    quotient_separation_spread: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ExpansivityRow {
    e: f64,
    eps0: f64,
    rho: f64,
    horizon: usize,
    stats: SearchStats,
    witness: Option<WitnessDump>,
}

#[derive(Debug, Clone, Serialize)]
struct ExpansivityReport {
    searches: Vec<ExpansivityRow>,
    scan: Option<ExpansivityScan>,
}

/// Smallest power of two `n` with `n >= 3 sqrt(d) / e`.
pub fn auto_resolution(dim: usize, e: f64) -> usize {
    let need = (3.0 * (dim as f64).sqrt() / e).ceil() as usize;
    need.next_power_of_two().max(8)
}

fn run_expansivity(cfg: &ScenarioConfig, out: &Path, files: &mut Vec<String>) -> Result<bool> {
    let c = cfg.expansivity.as_ref().expect("checked");
    let f = cfg.build_map()?;
    let fol = cfg.build_foliation()?;
    let d = f.dim();
    let mut pass = true;
    let mut rows = Vec::new();
    for &e in &c.e {
        let eps0 = c.eps0.unwrap_or(c.eps0_ratio * e);
        let rho = c.rho.unwrap_or(eps0);
        let grid = match c.grid {
            Some(n) => cfg.grid(Some(n))?,
            None => cfg.grid(Some(auto_resolution(d, e)))?,
        };
        let p = ExpansivityParams::new(e, eps0, rho, c.horizon, grid);
        let r = expansivity_violation_search(&f, &fol, &p)?;
        let witness = match r.witness() {
            Some(w) => {
                let spread = match fol.kind() {
                    FoliationKind::WholeManifold => None,
                    _ => Some(
                        w.x.points()
                            .iter()
                            .zip(w.y.points())
                            .map(|(a, b)| (fol.transverse_separation(a, b) - w.transverse_separation).abs())
                            .fold(0.0, f64::max),
                    ),
                };
                Some(WitnessDump {
                    x: w.x.points().iter().map(|p| p.coords().to_vec()).collect(),
                    y: w.y.points().iter().map(|p| p.coords().to_vec()).collect(),
                    index_offset: w.x.index_offset(),
                    max_pair_distance: w.max_pair_distance,
                    defect: w.defect,
                    transverse_separation: w.transverse_separation,
                    revalidated: w.validate(&f, &fol, e, eps0, rho, p.tol)?,
                    quotient_separation_spread: spread,
                })
            }
            None => None,
        };
        pass &= witness.as_ref().is_none_or(|w| w.revalidated);
        pass &= match c.expect {
            Some(Expectation::Witness) => witness.is_some(),
            Some(Expectation::None) => witness.is_none(),
            None => true,
        };
        rows.push(ExpansivityRow {
            e,
            eps0,
            rho,
            horizon: c.horizon,
            stats: r.stats,
            witness,
        });
    }
    let scan = match &c.scan {
        Some(s) => {
            let grid = cfg.grid(s.grid)?;
            let mut sp = ScanParams::new(s.eps0, s.rho, s.horizon_max, grid);
            if let Some(e0) = s.e_start {
                sp.e_start = e0;
            }
            sp.max_halvings = s.max_halvings;
            let scan = expansivity_scan(&f, &fol, &sp)?;
            if let Some(want) = s.expect_certified {
                pass &= scan.certified.is_some() == want;
            }
            Some(scan)
        }
        None => None,
    };
    write_json(
        out,
        "expansivity.json",
        &ExpansivityReport { searches: rows, scan },
        files,
    )?;
    Ok(pass)
}

#[derive(Debug, Clone, Serialize)]
struct QuotientReport {
    quotient_matrix: Vec<Vec<i64>>,
    quotient_perturbation: Vec<TrigTerm>,
    commutation_defect: f64,
    transfer: crate::quotient::TransferReport,
    /// `|Hausdorff(leaves) - d(pi x, pi y)|` on random pairs; axis-aligned
    /// foliations only.
    hausdorff_discrepancy: Option<f64>,
}

fn run_quotient(cfg: &ScenarioConfig, out: &Path, files: &mut Vec<String>) -> Result<bool> {
    let c = cfg.quotient.as_ref().expect("checked");
    let f = cfg.build_map()?;
    let fol = cfg.build_foliation()?;
    let grid = cfg.grid(c.grid)?;
    let qs = build_quotient_system(&f, &fol)?;
    let mut rng = cfg.rng(Step::Quotient);
    let p = TransferParams {
        delta: c.delta,
        eps: c.eps,
        grid,
        trials: c.trials,
        length: c.length,
    };
    let transfer = transfer_shadowing_check(&qs, &f, &p, &mut rng)?;
    let axis_aligned = fol.kind() == FoliationKind::Linear
        && fol
            .directions()
            .iter()
            .all(|v| v.iter().filter(|&&c| c != 0).count() == 1 && v.iter().all(|c| c.abs() <= 1));
    let hausdorff_discrepancy = if axis_aligned {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let x: Vec<f64> = (0..f.dim()).map(|_| rng.gen()).collect();
            let y: Vec<f64> = (0..f.dim()).map(|_| rng.gen()).collect();
            let (x, y) = (TorusPoint::wrap(&x)?, TorusPoint::wrap(&y)?);
            let h = leaf_hausdorff(&fol, &x, &y, 32)?;
            let q = torus_dist_unchecked(&qs.project(&x)?, &qs.project(&y)?);
            worst = worst.max((h - q).abs());
        }
        Some(worst)
    } else {
        None
    };
    let pass = transfer.pass && hausdorff_discrepancy.is_none_or(|h| h <= TAU_GEOM);
    let report = QuotientReport {
        quotient_matrix: qs.quotient.matrix().clone(),
        quotient_perturbation: qs.quotient.perturbation().to_vec(),
        commutation_defect: qs.commutation_defect,
        transfer,
        hausdorff_discrepancy,
    };
    write_json(out, "quotient.json", &report, files)?;
    Ok(pass)
}
