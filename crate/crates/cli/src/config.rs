//! Per-command run configurations. A configuration is resolved from an
//! optional JSON file with command-line flags laid over it, then validated.

use std::path::{Path, PathBuf};

use fa_core::fields::{default_xi, FieldSpec, DEFAULT_DEPTH};
use fa_core::geometry::{IfsParams, ALPHA_INTERVAL};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

pub trait RunConfig: Serialize + DeserializeOwned {
    /// Checks ranges and fills derived defaults so the echo is complete.
    fn finish(&mut self) -> Result<(), Failure>;
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive, got {v}")))
    }
}

fn alpha_ok(path: &str, alpha: f64) -> Result<(), Failure> {
    IfsParams::derive(alpha)
        .map(|_| ())
        .map_err(|_| invalid(path, format!("{alpha} is outside {ALPHA_INTERVAL}")))
}

/// Reads `file` (a bare configuration or a manifest of an earlier run of the
/// same command), lays `flags` over it and deserializes the result.
pub fn resolve<C: RunConfig + Default>(
    command: &str,
    file: Option<&Path>,
    flags: impl Serialize,
) -> Result<C, Failure> {
    let mut base = as_object(command, serde_json::to_value(C::default()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        overlay(&mut base, as_object(command, Ok(unwrap_manifest(command, v)?))?);
    }
    overlay(&mut base, as_object(command, serde_json::to_value(flags))?);
    let mut cfg: C = serde_path_to_error::deserialize(Value::Object(base))
        .map_err(|e| invalid(&format!("{command}.{}", e.path()), e.inner()))?;
    cfg.finish().map_err(|f| match f {
        Failure::Config(m) => Failure::Config(format!("{command}.{m}")),
        other => other,
    })?;
    Ok(cfg)
}

fn as_object(command: &str, v: serde_json::Result<Value>) -> Result<Map<String, Value>, Failure> {
    match v {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::Config(format!(
            "{command}: configuration must be a JSON object"
        ))),
        Err(e) => Err(Failure::Config(format!("{command}: {e}"))),
    }
}

fn unwrap_manifest(command: &str, v: Value) -> Result<Value, Failure> {
    match v {
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
            let found = m.get("command").and_then(Value::as_str).unwrap_or_default().to_string();
            if found != command {
                return Err(Failure::Config(format!("manifest is for `{found}`, not `{command}`")));
            }
            Ok(m.remove("config").unwrap_or(Value::Null))
        }
        other => Ok(other),
    }
}

/// Flags that were given win; nested objects merge key by key.
fn overlay(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        match v {
            Value::Null => {}
            Value::Object(inner) => {
                let slot = base.entry(k).or_insert_with(|| Value::Object(Map::new()));
                if let Value::Object(b) = slot {
                    overlay(b, inner);
                } else {
                    *slot = Value::Object(inner);
                }
            }
            v => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorConfig {
    pub alpha: Option<f64>,
    /// Target dimension; sets `alpha = 2^{-1/h}`.
    pub h: Option<f64>,
    pub depth: usize,
    pub separation_depth: usize,
    /// Random-word samples of the homogeneous attractor written to `attractor.csv`.
    pub samples: usize,
    pub sample_depth: usize,
    pub seed: u64,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            h: None,
            depth: 6,
            separation_depth: 4,
            samples: 20_000,
            sample_depth: 10,
            seed: 0,
        }
    }
}

impl RunConfig for AttractorConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        match (self.alpha, self.h) {
            (Some(_), Some(_)) => return Err(invalid("alpha", "give either alpha or h, not both")),
            (None, None) => self.alpha = Some(0.6),
            (Some(a), None) => alpha_ok("alpha", a)?,
            (None, Some(h)) => {
                IfsParams::from_dimension(h).map_err(|e| invalid("h", e))?;
            }
        }
        if self.separation_depth == 0 {
            return Err(invalid("separation_depth", "must be at least 1"));
        }
        Ok(())
    }
}

impl AttractorConfig {
    pub fn params(&self) -> IfsParams {
        match (self.alpha, self.h) {
            (Some(a), _) => IfsParams::derive(a),
            (None, Some(h)) => IfsParams::from_dimension(h),
            (None, None) => IfsParams::derive(0.6),
        }
        .expect("validated in finish")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    pub alpha: f64,
    pub depth: usize,
    pub dt: f64,
    pub tol: f64,
    /// Snapshots written to the trajectory file.
    pub records: usize,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            depth: 3,
            dt: 1e-4,
            tol: 1e-5,
            records: 10,
        }
    }
}

impl RunConfig for ContractionConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        alpha_ok("alpha", self.alpha)?;
        positive("dt", self.dt)?;
        positive("tol", self.tol)?;
        if self.depth > 12 {
            return Err(invalid("depth", format!("at most 12, got {}", self.depth)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub alpha: f64,
    pub xi: Option<f64>,
    /// Last window checked.
    pub k: usize,
    pub sample_depth: usize,
    pub slack: f64,
    pub dt: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            xi: None,
            k: 3,
            sample_depth: 4,
            slack: 1e-5,
            dt: 1e-3,
        }
    }
}

impl RunConfig for CollapseConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        alpha_ok("alpha", self.alpha)?;
        let gamma = IfsParams::derive(self.alpha).expect("checked").gamma;
        let xi = *self.xi.get_or_insert_with(|| default_xi(gamma));
        fa_core::fields::check_xi(gamma, xi).map_err(|e| invalid("xi", e))?;
        positive("slack", self.slack)?;
        positive("dt", self.dt)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullDimConfig {
    pub kmax: usize,
    pub sample_depth: usize,
    pub dt: f64,
}

impl Default for FullDimConfig {
    fn default() -> Self {
        Self {
            kmax: 5,
            sample_depth: 3,
            dt: 1e-4,
        }
    }
}

impl RunConfig for FullDimConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        if self.kmax == 0 {
            return Err(invalid("kmax", "must be at least 1"));
        }
        positive("dt", self.dt)
    }
}

/// Shared by `slit` and `ribbon`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveConfig {
    pub n: usize,
    /// Mollification radius; `2/N` when absent.
    pub eps: Option<f64>,
    pub dt: f64,
    /// End time; `2/rate + 0.1` when absent.
    pub t_end: Option<f64>,
    pub record_every: usize,
    pub adaptive_tol: f64,
    /// Spacing of the optional velocity grid sample.
    pub grid_spacing: Option<f64>,
    /// Time of the grid sample; the last record when absent.
    pub grid_time: Option<f64>,
    /// Nodes across the ribbon used by its velocity.
    pub m_nodes: usize,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            n: 200,
            eps: None,
            dt: 1e-3,
            t_end: None,
            record_every: 10,
            adaptive_tol: 1e-10,
            grid_spacing: None,
            grid_time: None,
            m_nodes: 8,
        }
    }
}

impl ActiveConfig {
    pub fn finish_for(&mut self, rate: f64) -> Result<(), Failure> {
        if self.n < 2 || self.n % 2 == 1 {
            return Err(invalid(
                "n",
                format!("particle count must be even and at least 2, got {}", self.n),
            ));
        }
        let eps = *self.eps.get_or_insert(2.0 / self.n as f64);
        positive("eps", eps)?;
        positive("dt", self.dt)?;
        positive("t_end", *self.t_end.get_or_insert(2.0 / rate + 0.1))?;
        positive("adaptive_tol", self.adaptive_tol)?;
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if let Some(h) = self.grid_spacing {
            positive("grid_spacing", h)?;
        }
        if self.m_nodes == 0 {
            return Err(invalid("m_nodes", "must be at least 1"));
        }
        Ok(())
    }

    pub fn solver(&self) -> fa_core::SolverConfig {
        let mut s = fa_core::SolverConfig::new(self.n, self.eps, self.dt, self.t_end.unwrap_or(2.1));
        s.record_every = self.record_every;
        s.adaptive_tol = self.adaptive_tol;
        s
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlitConfig(pub ActiveConfig);

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RibbonConfig(pub ActiveConfig);

impl RunConfig for SlitConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        self.0.finish_for(1.0)
    }
}

impl RunConfig for RibbonConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        self.0.finish_for(2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Reversed slit runs with `(1/N, eps, dt)` halved per level.
    Slit,
    /// Ribbon runs with `N` and the nodes across the ribbon doubled per level.
    Ribbon,
    /// Particles advected by `U` with the record count doubled per level.
    U,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    pub scenario: Scenario,
    /// Number of refinements; `refine + 1` levels.
    pub refine: usize,
    /// Base resolution: particles for slit and ribbon, records for `u`.
    pub n: Option<usize>,
    /// Saved slit or ribbon histories used instead of fresh runs.
    pub inputs: Vec<PathBuf>,
    pub test_functions: usize,
    pub seed: u64,
    pub min_order: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Slit,
            refine: 2,
            n: None,
            inputs: Vec::new(),
            test_functions: 20,
            seed: 11,
            min_order: 1.0,
        }
    }
}

impl RunConfig for ResidualConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        if !self.inputs.is_empty() {
            if self.scenario == Scenario::U {
                return Err(invalid(
                    "inputs",
                    "saved histories apply to the slit and ribbon scenarios only",
                ));
            }
            if self.inputs.len() < 2 {
                return Err(invalid("inputs", "need at least two histories to measure an order"));
            }
            for p in &self.inputs {
                if !p.is_file() {
                    return Err(Failure::Input(format!("input file {} does not exist", p.display())));
                }
            }
            return Ok(());
        }
        if self.refine == 0 {
            return Err(invalid("refine", "must be at least 1"));
        }
        let n = *self.n.get_or_insert(match self.scenario {
            Scenario::Slit => 100,
            Scenario::Ribbon => 40,
            Scenario::U => 64,
        });
        if self.scenario != Scenario::U && (n < 2 || n % 2 == 1) {
            return Err(invalid(
                "n",
                format!("particle count must be even and at least 2, got {n}"),
            ));
        }
        if self.test_functions == 0 {
            return Err(invalid("test_functions", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    pub input: PathBuf,
    /// Use the scales `4 alpha^j`, `j = 2..depth`, matched to attractor samples.
    pub alpha: Option<f64>,
    pub depth: usize,
    /// Explicit scales; overrides `alpha`.
    pub scales: Option<Vec<f64>>,
    /// Expected slope; `-log 2 / log alpha` when `alpha` is set.
    pub expect: Option<f64>,
    pub tol: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            alpha: None,
            depth: 10,
            scales: None,
            expect: None,
            tol: 0.1,
        }
    }
}

impl RunConfig for DimensionConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        if self.input.as_os_str().is_empty() {
            return Err(invalid("input", "an input point file is required"));
        }
        if !self.input.is_file() {
            return Err(Failure::Input(format!(
                "input file {} does not exist",
                self.input.display()
            )));
        }
        if let Some(a) = self.alpha {
            alpha_ok("alpha", a)?;
            if self.scales.is_none() && self.depth < 4 {
                return Err(invalid("depth", "need depth >= 4 for at least two scales"));
            }
            self.expect.get_or_insert(-(2f64.ln()) / a.ln());
        }
        positive("tol", self.tol)
    }
}

impl DimensionConfig {
    pub fn scales(&self) -> Vec<f64> {
        match (&self.scales, self.alpha) {
            (Some(s), _) => s.clone(),
            (None, Some(a)) => fa_core::measures::attractor_scales(a, self.depth),
            (None, None) => fa_core::measures::default_scales(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridFormat {
    Csv,
    Binary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSampleConfig {
    pub field: FieldSpec,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub spacing: f64,
    pub t: f64,
    pub format: GridFormat,
}

impl Default for FieldSampleConfig {
    fn default() -> Self {
        Self {
            field: FieldSpec::SeriesU {
                alpha: 0.6,
                depth: DEFAULT_DEPTH,
            },
            lo: [-2.2, -1.6],
            hi: [2.2, 1.6],
            spacing: 0.05,
            t: 0.5,
            format: GridFormat::Csv,
        }
    }
}

impl RunConfig for FieldSampleConfig {
    fn finish(&mut self) -> Result<(), Failure> {
        positive("spacing", self.spacing)?;
        if !(self.lo[0] < self.hi[0] && self.lo[1] < self.hi[1]) {
            return Err(invalid("hi", "each upper bound must exceed the lower bound"));
        }
        self.field.build().map_err(|e| invalid("field", e))?;
        Ok(())
    }
}
