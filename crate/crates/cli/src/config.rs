//! Run configuration: TOML file, flag overrides, validation and hashing.

use std::path::{Path, PathBuf};

use anisolab::gauge::{DualMode, GaugeConfig};
use anisolab::spectrum::{Branch, ProblemParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsCfg {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub gamma: f64,
    /// γ grid for `sweep` and exponent tables; empty means `[gamma]`.
    pub gammas: Vec<f64>,
}

impl Default for ParamsCfg {
    fn default() -> Self {
        ParamsCfg { n: 4, p: 2.0, gamma: 0.75, gammas: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCfg {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg { t_min: 1e-4, t_max: 1e4, points: 1601 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesCfg {
    pub identities: usize,
    pub divergence: usize,
    pub volume: usize,
    pub inequalities: usize,
    pub hardy_profiles: usize,
    pub pair_rounds: usize,
}

impl Default for SamplesCfg {
    fn default() -> Self {
        SamplesCfg {
            identities: 1000,
            divergence: 100,
            volume: 100_000,
            inequalities: 10_000,
            hardy_profiles: 1000,
            pair_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolerancesCfg {
    pub exponent_residual: f64,
    pub identity_analytic: f64,
    pub identity_numerical: f64,
    pub divergence: f64,
    pub fd_step: f64,
    pub power_residual: f64,
    pub oracle_refinement: f64,
    pub hardy_extremal: f64,
    pub talenti: f64,
    pub comparison_residual: f64,
}

impl Default for TolerancesCfg {
    fn default() -> Self {
        TolerancesCfg {
            exponent_residual: 1e-10,
            identity_analytic: 1e-8,
            identity_numerical: 1e-5,
            divergence: 1e-3,
            fd_step: 1e-4,
            power_residual: 1e-8,
            oracle_refinement: 0.01,
            hardy_extremal: 0.05,
            talenti: 0.02,
            comparison_residual: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupersolutionCfg {
    #[serde(rename = "A")]
    pub a: f64,
    /// Exponent for the origin branch; default `p/2`.
    pub alpha_origin: Option<f64>,
    /// Exponent for the infinity branch; default `p + 1`.
    pub alpha_infinity: Option<f64>,
    pub grid_points: usize,
}

impl Default for SupersolutionCfg {
    fn default() -> Self {
        SupersolutionCfg { a: 1.0, alpha_origin: None, alpha_infinity: None, grid_points: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitCfg {
    Talenti,
    PowerTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationalCfg {
    pub kappa: f64,
    pub init: InitCfg,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Re-run the minimization on the wider truncation.
    pub sensitivity: bool,
}

impl Default for VariationalCfg {
    fn default() -> Self {
        VariationalCfg { kappa: 1.0, init: InitCfg::Talenti, grad_tol: 1e-8, max_iters: 100_000, sensitivity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleCfg {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub points: usize,
    /// Both branches when empty.
    pub branches: Vec<Branch>,
}

impl Default for LiouvilleCfg {
    fn default() -> Self {
        LiouvilleCfg { a: 0.1, b: 10.0, c: 1.0, points: 512, branches: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareCfg {
    pub radii: Vec<f64>,
}

impl Default for CompareCfg {
    fn default() -> Self {
        CompareCfg { radii: vec![10.0, 20.0, 40.0, 80.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitiesCfg {
    /// Exponent of the vector inequalities; defaults to `params.p`.
    pub p: Option<f64>,
    pub delta: f64,
}

impl Default for InequalitiesCfg {
    fn default() -> Self {
        InequalitiesCfg { p: None, delta: 0.1 }
    }
}

/// File form of the configuration. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: ParamsCfg,
    pub gauge: Option<GaugeConfig>,
    pub grid: GridCfg,
    pub samples: SamplesCfg,
    pub tolerances: TolerancesCfg,
    pub supersolution: SupersolutionCfg,
    pub variational: VariationalCfg,
    pub liouville: LiouvilleCfg,
    pub compare: CompareCfg,
    pub inequalities: InequalitiesCfg,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub gammas: Option<Vec<f64>>,
    pub gauge: Option<String>,
    pub q: Option<f64>,
    pub dimension: Option<usize>,
    pub dual_mode: Option<DualMode>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub samples: Option<usize>,
    pub kappa: Option<f64>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.n {
            self.params.n = v;
        }
        if let Some(v) = o.p {
            self.params.p = v;
        }
        if let Some(v) = o.gamma {
            self.params.gamma = v;
        }
        if let Some(v) = &o.gammas {
            self.params.gammas = v.clone();
        }
        if o.gauge.is_some() || o.q.is_some() || o.dimension.is_some() || o.dual_mode.is_some() {
            let mut g = self.gauge.clone().unwrap_or_else(|| default_gauge(self.params.n));
            if let Some(v) = &o.gauge {
                g.variant = v.clone();
            }
            if let Some(v) = o.q {
                g.q = Some(v);
            }
            if let Some(v) = o.dimension {
                g.dimension = v;
            }
            if let Some(v) = o.dual_mode {
                g.dual_mode = Some(v);
            }
            self.gauge = Some(g);
        }
        if let Some(v) = o.t_min {
            self.grid.t_min = v;
        }
        if let Some(v) = o.t_max {
            self.grid.t_max = v;
        }
        if let Some(v) = o.points {
            self.grid.points = v;
        }
        if let Some(v) = o.samples {
            self.samples.inequalities = v;
        }
        if let Some(v) = o.kappa {
            self.variational.kappa = v;
        }
    }

    /// Fill derived defaults and check every field before any computation.
    pub fn resolve(mut self, command: &str) -> Result<RunConfig, ConfigError> {
        self.command = Some(command.to_string());
        if self.gauge.is_none() {
            self.gauge = Some(default_gauge(self.params.n));
        }
        if self.params.gammas.is_empty() {
            self.params.gammas = vec![self.params.gamma];
        }
        let p = self.params.p;
        self.supersolution.alpha_origin.get_or_insert(p / 2.0);
        self.supersolution.alpha_infinity.get_or_insert(p + 1.0);
        self.inequalities.p.get_or_insert(p);
        if self.liouville.branches.is_empty() {
            self.liouville.branches = vec![Branch::Origin, Branch::Infinity];
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let pp = self.problem_params().map_err(|e| ConfigError(format!("params: {e}")))?;
        for &g in &self.params.gammas {
            pp.with_gamma(g).map_err(|e| ConfigError(format!("params.gammas: {e}")))?;
        }
        let gauge = self.gauge.as_ref().expect("resolved");
        gauge.build(self.seed).map_err(|e| ConfigError(format!("gauge: {e}")))?;
        let g = &self.grid;
        if !(g.t_min > 0.0 && g.t_min < g.t_max && g.t_max.is_finite()) {
            return bad(format!("grid: need 0 < t_min < t_max < inf, got [{}, {}]", g.t_min, g.t_max));
        }
        if g.points < 64 {
            return bad(format!("grid: need at least 64 points, got {}", g.points));
        }
        let s = &self.samples;
        for (name, v) in [
            ("identities", s.identities),
            ("divergence", s.divergence),
            ("inequalities", s.inequalities),
            ("hardy_profiles", s.hardy_profiles),
            ("pair_rounds", s.pair_rounds),
        ] {
            if v == 0 {
                return bad(format!("samples.{name} must be positive"));
            }
        }
        if s.volume < 10_000 {
            return bad("samples.volume must be at least 10000");
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("exponent_residual", t.exponent_residual),
            ("identity_analytic", t.identity_analytic),
            ("identity_numerical", t.identity_numerical),
            ("divergence", t.divergence),
            ("fd_step", t.fd_step),
            ("power_residual", t.power_residual),
            ("oracle_refinement", t.oracle_refinement),
            ("hardy_extremal", t.hardy_extremal),
            ("talenti", t.talenti),
            ("comparison_residual", t.comparison_residual),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        let sc = &self.supersolution;
        if !(sc.a > 0.0 && sc.a.is_finite()) {
            return bad("supersolution.A must be positive");
        }
        let (ao, ai) = (sc.alpha_origin.unwrap(), sc.alpha_infinity.unwrap());
        if !(ao < pp.p) || !(ai > pp.p) {
            return bad(format!("supersolution: need alpha_origin < p < alpha_infinity, got {ao}, {ai}"));
        }
        if sc.grid_points < 2 {
            return bad("supersolution.grid_points must be at least 2");
        }
        let v = &self.variational;
        if !(v.kappa > 0.0) || !(v.grad_tol > 0.0) || v.max_iters == 0 {
            return bad("variational: kappa and grad_tol must be positive, max_iters at least 1");
        }
        let l = &self.liouville;
        if !(l.a > 0.0 && l.a < l.b && l.b.is_finite() && l.c > 0.0) || l.points < 16 {
            return bad("liouville: need 0 < a < b, c > 0 and at least 16 points");
        }
        let c = &self.compare;
        if c.radii.len() < 2 || c.radii.iter().any(|r| !(*r > 0.0)) || c.radii.windows(2).any(|w| w[1] <= w[0]) {
            return bad("compare.radii: need at least two increasing positive radii");
        }
        let ip = self.inequalities.p.unwrap();
        if !(ip > 1.0 && ip.is_finite()) || !(self.inequalities.delta > 0.0) {
            return bad("inequalities: need p > 1 and delta > 0");
        }
        Ok(())
    }

    pub fn problem_params(&self) -> anisolab::Result<ProblemParams> {
        ProblemParams::new(self.params.n, self.params.p, self.params.gamma)
    }

    pub fn gauge_config(&self) -> &GaugeConfig {
        self.gauge.as_ref().expect("resolved config has a gauge")
    }

    /// First 12 hex digits of the SHA-256 of the resolved config without the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

fn default_gauge(n: usize) -> GaugeConfig {
    GaugeConfig { variant: "euclidean".into(), dimension: n, q: None, matrix: None, dual_mode: None }
}
