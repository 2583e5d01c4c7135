//! Experiment configuration: TOML, unknown keys rejected, defaults filled in
//! by [`ExperimentConfig::resolve`] so that reports embed the full setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Eigenmode,
    EpsilonSweep,
    Refinement,
    PicardGammaSweep,
    CompatCheck,
    NormEquivalence,
    EnergyVerify,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Eigenmode => "eigenmode",
            Kind::EpsilonSweep => "epsilon_sweep",
            Kind::Refinement => "refinement",
            Kind::PicardGammaSweep => "picard_gamma_sweep",
            Kind::CompatCheck => "compat_check",
            Kind::NormEquivalence => "norm_equivalence",
            Kind::EnergyVerify => "energy_verify",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub grading: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default = "default_g")]
    pub g: Vec<f64>,
    /// `straight`, `bent`, or a path to a background CSV.
    #[serde(default = "default_background")]
    pub background: String,
    /// Amplitude of the bent steady configuration.
    #[serde(default)]
    pub bend: Option<f64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            g: default_g(),
            background: default_background(),
            bend: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Bessel,
    Zero,
    Constant,
    Random,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "bessel")]
    pub u0: Generator,
    #[serde(default = "zero")]
    pub u1: Generator,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub velocity_amplitude: f64,
    /// Direction of vector data; defaults to the unit vector across gravity.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// CSV with columns `s,comp,u0,u1`, used by the `file` generator.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            u0: Generator::Bessel,
            u1: Generator::Zero,
            amplitude: 1.0,
            velocity_amplitude: 1.0,
            direction: None,
            modes: default_modes(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Scalar,
    String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub eps_list: Option<Vec<f64>>,
    pub gamma_list: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    /// Jet order for compatibility checks.
    pub m: Option<usize>,
    pub tolerance: Option<f64>,
    pub min_order: Option<f64>,
    pub min_slope: Option<f64>,
    pub slope_range: Option<[f64; 2]>,
    pub match_tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub draws: Option<usize>,
    pub max_ratio: Option<f64>,
    pub stability: Option<f64>,
    pub cap: Option<f64>,
    pub lambda: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub dt_coeff: Option<f64>,
    pub system: Option<System>,
    /// Viscosity for a single run.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn default_g() -> Vec<f64> {
    vec![0.0, -1.0]
}
fn default_background() -> String {
    "straight".into()
}
fn bessel() -> Generator {
    Generator::Bessel
}
fn zero() -> Generator {
    Generator::Zero
}
fn default_modes() -> usize {
    6
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
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

fn positive(name: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => bad(format!("{name} must be positive, got {x}")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Parses, validates and resolves a config file. Relative paths inside
    /// the file are taken relative to its directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        cfg.check_files()?;
        Ok(cfg.resolve())
    }

    fn rebase(&mut self, base: &Path) {
        let rel = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if let Some(f) = &self.data.file {
            self.data.file = Some(rel(f));
        }
        if !matches!(self.physics.background.as_str(), "straight" | "bent") {
            self.physics.background = rel(Path::new(&self.physics.background)).display().to_string();
        }
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        let mut files: Vec<&Path> = self.data.file.iter().map(PathBuf::as_path).collect();
        if !matches!(self.physics.background.as_str(), "straight" | "bent") {
            files.push(Path::new(&self.physics.background));
        }
        match files.into_iter().find(|f| !f.is_file()) {
            Some(f) => bad(format!("referenced file {} does not exist", f.display())),
            None => Ok(()),
        }
    }

    pub fn time(&self) -> &TimeConfig {
        self.time.as_ref().expect("validated")
    }

    pub fn g_norm(&self) -> f64 {
        self.physics.g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        if self.mesh.n < 8 {
            return bad(format!("mesh.n must be at least 8, got {}", self.mesh.n));
        }
        positive("mesh.grading", Some(self.mesh.grading))?;
        if let Some(t) = &self.time {
            positive("time.T", Some(t.t_end))?;
            positive("time.dt", Some(t.dt))?;
            if t.dt > t.t_end {
                return bad("time.dt exceeds time.T");
            }
        }
        if self.physics.g.is_empty() || self.g_norm() == 0.0 {
            return bad("physics.g must be a nonzero vector");
        }
        for (name, v) in [
            ("params.tolerance", p.tolerance),
            ("params.min_order", p.min_order),
            ("params.min_slope", p.min_slope),
            ("params.match_tolerance", p.match_tolerance),
            ("params.max_ratio", p.max_ratio),
            ("params.stability", p.stability),
            ("params.cap", p.cap),
            ("params.dt_coeff", p.dt_coeff),
            (
                "data.amplitude",
                (self.data.u0 != Generator::Zero).then_some(self.data.amplitude.abs()),
            ),
        ] {
            positive(name, v)?;
        }
        if p.lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("params.lambda must be non-negative");
        }
        if p.eps.is_some_and(|e| !(0.0..=1.0).contains(&e)) {
            return bad("params.eps must lie in [0, 1]");
        }
        if let Some([lo, hi]) = p.slope_range {
            if !(lo < hi) {
                return bad("params.slope_range must be increasing");
            }
        }
        if (self.data.u0 == Generator::File || self.data.u1 == Generator::File) && self.data.file.is_none() {
            return bad("data.file is required by the file generator");
        }
        if self
            .data
            .direction
            .as_ref()
            .is_some_and(|d| d.len() != self.physics.g.len())
        {
            return bad("data.direction and physics.g differ in length");
        }
        let needs_time = !matches!(self.kind, Kind::CompatCheck | Kind::NormEquivalence);
        if needs_time && self.time.is_none() {
            return bad(format!("{} needs a [time] section", self.kind.name()));
        }
        match self.kind {
            Kind::EpsilonSweep => {
                let Some(list) = &p.eps_list else {
                    return bad("epsilon_sweep needs params.eps_list");
                };
                if list.len() < 3 || list.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return bad("params.eps_list needs at least 3 entries in [0, 1]");
                }
                if list.windows(2).any(|w| w[1] >= w[0]) {
                    return bad("params.eps_list must be strictly decreasing");
                }
            }
            Kind::PicardGammaSweep | Kind::EnergyVerify => {
                let Some(list) = &p.gamma_list else {
                    return bad(format!("{} needs params.gamma_list", self.kind.name()));
                };
                if list.len() < 2 || list.iter().any(|g| !(*g > 0.0)) {
                    return bad("params.gamma_list needs at least 2 positive entries");
                }
                if self.kind == Kind::PicardGammaSweep && self.physics.g.len() < 2 {
                    return bad("the string needs at least two space dimensions");
                }
            }
            Kind::Refinement => {
                let Some(list) = &p.n_list else {
                    return bad("refinement needs params.n_list");
                };
                if list.len() < 2 || list.iter().any(|n| *n < 8) || list.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("params.n_list needs at least 2 increasing entries, each at least 8");
                }
            }
            Kind::CompatCheck if p.m.is_some_and(|m| !(2..=4).contains(&m)) => {
                return bad("params.m must lie in 2..=4");
            }
            _ => {}
        }
        Ok(())
    }

    /// Fills every parameter the kind reads with its default.
    pub fn resolve(mut self) -> ExperimentConfig {
        let p = &mut self.params;
        match self.kind {
            Kind::Eigenmode => {
                p.tolerance.get_or_insert(0.01);
                p.snapshot_every.get_or_insert(100);
            }
            Kind::EpsilonSweep => {
                p.min_slope.get_or_insert(0.9);
            }
            Kind::Refinement => {
                p.min_order.get_or_insert(1.8);
            }
            Kind::PicardGammaSweep => {
                p.slope_range.get_or_insert([-1.3, -0.7]);
                p.match_tolerance.get_or_insert(1e-6);
                p.max_iter.get_or_insert(30);
                p.tolerance.get_or_insert(1e-12);
                p.snapshot_every.get_or_insert(10);
            }
            Kind::CompatCheck => {
                p.m.get_or_insert(2);
                p.tolerance.get_or_insert(1e-6);
                p.dt_coeff.get_or_insert(1e-3);
            }
            Kind::NormEquivalence => {
                p.draws.get_or_insert(50);
                p.max_ratio.get_or_insert(20.0);
                p.stability.get_or_insert(0.1);
            }
            Kind::EnergyVerify => {
                p.cap.get_or_insert(50.0);
                p.lambda.get_or_insert(0.0);
                p.system.get_or_insert(System::Scalar);
                p.eps.get_or_insert(0.0);
            }
        }
        if self.data.direction.is_none() && self.physics.g.len() > 1 {
            self.data.direction = Some(hangstring_core::string::transverse_direction(&self.physics.g));
        }
        self
    }
}
