//! Run configuration (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! seed = 42
//! mode = "image"            # or "numeric"
//! target_class = 3          # image mode only
//! link_epsilon = 1e-6       # optional
//! out = "results"           # optional, relative to this file
//!
//! [[parameters]]
//! name = "brightness"
//! lower = 0.0
//! upper = 2.0
//! p = 1.0                   # Beta shapes, both default to 1 (uniform)
//! q = 1.0
//!
//! [sampling]
//! n = 1000
//!
//! [basis]
//! max_total_order = 4       # and/or
//! max_order_per_dim = [6, 5]
//!
//! [evaluator]
//! command = ["python3", "runner.py", "--mode", "image"]   # or builtin = "ishigami"
//! n_classes = 10
//! timeout_secs = 30
//! max_inflight = 8
//!
//! [image]                   # image mode only
//! path = "input.png"
//! fill = 0
//! focal_length = 224.0      # optional, defaults to the image height
//! perturbations = [
//!   { kind = "brightness", parameter = "brightness" },
//!   { kind = "rotation", parameter = "rotation" },
//! ]
//!
//! [grid]                    # optional defaults for `grid` and `run`
//! x = "brightness"
//! y = "rotation"
//! resolution = 50
//! scale = "probability"
//! fixed = { tilt = 0.0 }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gpc_sense::adapter::{EvalMode, EvaluatorConfig};
use gpc_sense::basis::Truncation;
use gpc_sense::benchmarks::BenchmarkKind;
use gpc_sense::perturb::{GeometryOptions, PerturbationSpec, PerturbationStep};
use gpc_sense::randomspace::{ParameterSpace, RandomParameter};
use gpc_sense::surrogate::{LinkSpec, DEFAULT_LINK_EPSILON};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_GRID_RESOLUTION: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub mode: EvalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub link_epsilon: f64,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub parameters: Vec<RandomParameter<f64>>,
    pub sampling: SamplingSection,
    pub basis: Truncation,
    pub evaluator: EvaluatorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
}

fn default_epsilon() -> f64 {
    DEFAULT_LINK_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BenchmarkKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_inflight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    pub path: PathBuf,
    pub perturbations: Vec<PerturbationStep>,
    #[serde(default)]
    pub fill: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    /// Raw surrogate output (logit space in image mode).
    Logit,
    Probability,
}

impl std::str::FromStr for GridScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "logit" => Ok(Self::Logit),
            "probability" => Ok(Self::Probability),
            other => Err(format!("unknown grid scale `{other}` (logit or probability)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x: String,
    pub y: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<GridScale>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

fn default_resolution() -> usize {
    DEFAULT_GRID_RESOLUTION
}

/// A validated configuration plus everything derived from where it was loaded.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub digest: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn space(&self) -> CliResult<ParameterSpace<f64>> {
        Ok(ParameterSpace::new(self.parameters.clone(), self.seed)?)
    }

    pub fn link(&self) -> LinkSpec {
        match self.mode {
            EvalMode::Image => LinkSpec::logit(self.link_epsilon),
            EvalMode::Numeric => LinkSpec::identity(),
        }
    }

    pub fn perturbation_spec(&self) -> CliResult<Option<PerturbationSpec>> {
        self.image
            .as_ref()
            .map(|img| PerturbationSpec::new(img.perturbations.clone()).map_err(CliError::from))
            .transpose()
    }

    pub fn geometry(&self) -> GeometryOptions {
        let img = self.image.as_ref();
        GeometryOptions {
            fill: img.map_or(0, |i| i.fill),
            focal_length: img.and_then(|i| i.focal_length),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let space = self.space()?;
        if self.sampling.n == 0 {
            return bad("sampling.n must be at least 1".into());
        }
        if self.basis.max_total_order.is_none() && self.basis.max_order_per_dim.is_none() {
            return bad("basis needs max_total_order and/or max_order_per_dim".into());
        }
        if let Some(caps) = &self.basis.max_order_per_dim {
            if caps.len() != space.dimension() {
                return bad(format!(
                    "basis.max_order_per_dim has {} entries for {} parameters",
                    caps.len(),
                    space.dimension()
                ));
            }
        }

        let ev = &self.evaluator;
        match (&ev.command, ev.builtin) {
            (Some(_), Some(_)) => return bad("evaluator: set either command or builtin, not both".into()),
            (None, None) => return bad("evaluator: set command or builtin".into()),
            (Some(cmd), None) if cmd.is_empty() => return bad("evaluator.command is empty".into()),
            _ => {}
        }
        if !(ev.timeout_secs.is_finite() && ev.timeout_secs > 0.0) {
            return bad(format!("evaluator.timeout_secs must be positive, got {}", ev.timeout_secs));
        }
        if ev.max_inflight == 0 {
            return bad("evaluator.max_inflight must be at least 1".into());
        }

        match self.mode {
            EvalMode::Numeric => {
                if self.image.is_some() {
                    return bad("numeric mode takes no [image] section".into());
                }
                if self.target_class.is_some() {
                    return bad("target_class only applies to image mode".into());
                }
                if let Some(kind) = ev.builtin {
                    let expected = kind.space(0)?.dimension();
                    if expected != space.dimension() {
                        return bad(format!(
                            "builtin {kind} takes {expected} parameters, config has {}",
                            space.dimension()
                        ));
                    }
                }
            }
            EvalMode::Image => {
                let Some(img) = &self.image else {
                    return bad("image mode needs an [image] section".into());
                };
                if ev.builtin.is_some() {
                    return bad("builtin evaluators are numeric only".into());
                }
                let Some(target) = self.target_class else {
                    return bad("image mode needs target_class".into());
                };
                if let Some(k) = ev.n_classes {
                    if k == 0 || target >= k {
                        return bad(format!("target_class {target} out of range for {k} classes"));
                    }
                }
                self.link().validate()?;
                if img.perturbations.is_empty() {
                    return bad("image.perturbations is empty".into());
                }
                self.perturbation_spec()?;
                for step in &img.perturbations {
                    if space.position(&step.parameter).is_none() {
                        return bad(format!(
                            "perturbation parameter `{}` is not a declared parameter",
                            step.parameter
                        ));
                    }
                }
                if let Some(f) = img.focal_length {
                    if !(f.is_finite() && f > 0.0) {
                        return bad(format!("image.focal_length must be positive, got {f}"));
                    }
                }
            }
        }
        if let Some(g) = &self.grid {
            GridRequest::from_section(g, &space)?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the config (without `out`)
    /// and, in image mode, the bytes of the input image.
    pub fn digest(&self, base_dir: &Path) -> CliResult<String> {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).map_err(gpc_sense::Error::from)?);
        if let Some(img) = &self.image {
            let path = base_dir.join(&img.path);
            let bytes = std::fs::read(&path).map_err(|e| {
                CliError::Validation(format!("cannot read image {}: {e}", path.display()))
            })?;
            hasher.update(b"\nimage\n");
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn evaluator_config(&self, base_dir: &Path) -> Option<EvaluatorConfig> {
        let command = self.evaluator.command.as_ref()?;
        let mut command = command.clone();
        // a relative program path with a separator is taken relative to the config
        if command[0].contains('/') && Path::new(&command[0]).is_relative() {
            command[0] = base_dir.join(&command[0]).to_string_lossy().into_owned();
        }
        Some(EvaluatorConfig {
            command,
            mode: self.mode,
            n_classes: self.evaluator.n_classes,
            timeout: Duration::from_secs_f64(self.evaluator.timeout_secs),
            max_inflight: self.evaluator.max_inflight,
        })
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Context {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(RunConfig::from_toml(&text)?, base_dir, overrides)
    }

    pub fn from_config(mut config: RunConfig, base_dir: PathBuf, overrides: &Overrides) -> CliResult<Self> {
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        config.validate()?;
        let out_dir = match (&overrides.out, &config.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => base_dir.join("out"),
        };
        let digest = config.digest(&base_dir)?;
        Ok(Self {
            config,
            base_dir,
            out_dir,
            digest,
        })
    }

    pub fn image_path(&self) -> Option<PathBuf> {
        self.config.image.as_ref().map(|i| self.base_dir.join(&i.path))
    }

    pub fn evaluator_config(&self) -> Option<EvaluatorConfig> {
        self.config.evaluator_config(&self.base_dir)
    }
}

/// Validated request for a two-parameter surface.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRequest {
    pub x: usize,
    pub y: usize,
    pub resolution: usize,
    pub scale: GridScale,
    /// Value of every parameter; entries `x` and `y` are ignored.
    pub fixed: Vec<f64>,
}

impl GridRequest {
    pub fn new(
        space: &ParameterSpace<f64>,
        x: &str,
        y: &str,
        resolution: usize,
        scale: GridScale,
        fixed: &BTreeMap<String, f64>,
    ) -> CliResult<Self> {
        let bad = |m: String| Err(CliError::Validation(m));
        let pos = |name: &str| {
            space
                .position(name)
                .ok_or_else(|| CliError::Validation(format!("unknown grid parameter `{name}`")))
        };
        let (xi, yi) = (pos(x)?, pos(y)?);
        if xi == yi {
            return bad("grid x and y must differ".into());
        }
        if resolution < 2 {
            return bad(format!("grid resolution must be at least 2, got {resolution}"));
        }
        // unspecified parameters sit at the middle of their range
        let mut values: Vec<f64> = space.parameters.iter().map(|p| p.midpoint()).collect();
        for (name, &v) in fixed {
            let i = pos(name)?;
            if i == xi || i == yi {
                return bad(format!("`{name}` is a grid axis and cannot be fixed"));
            }
            let p = &space.parameters[i];
            if !(v >= p.lower && v <= p.upper) {
                return bad(format!(
                    "fixed value {v} for `{name}` outside [{}, {}]",
                    p.lower, p.upper
                ));
            }
            values[i] = v;
        }
        Ok(Self {
            x: xi,
            y: yi,
            resolution,
            scale,
            fixed: values,
        })
    }

    pub fn from_section(g: &GridSection, space: &ParameterSpace<f64>) -> CliResult<Self> {
        Self::new(
            space,
            &g.x,
            &g.y,
            g.resolution,
            g.scale.unwrap_or(GridScale::Logit),
            &g.fixed,
        )
    }
}
