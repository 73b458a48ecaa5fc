use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{lorenz63, lorenz96, navier_stokes_spectral, DissipativeModel, State, VelocityMode};
use crate::error::{Error, Result};
use crate::filters::{default_ball_radius, default_vnorm, VNorm};
use crate::observation::{
    coordinate_projection, every_third_unobserved, fourier_cutoff, InitialCondition, NoiseLaw, NoiseModel,
    ObservationOperator,
};

/// Built-in configurations, addressable by name wherever a path is accepted.
pub const PRESETS: &[(&str, &str)] = &[
    ("l63_table1", include_str!("../../configs/l63_table1.toml")),
    ("l96_table2", include_str!("../../configs/l96_table2.toml")),
    ("l63_sandwich", include_str!("../../configs/l63_sandwich.toml")),
    ("l63_squeeze", include_str!("../../configs/l63_squeeze.toml")),
    ("ns_demo", include_str!("../../configs/ns_demo.toml")),
    ("ns_squeeze", include_str!("../../configs/ns_squeeze.toml")),
    ("detect_diag", include_str!("../../configs/detect_diag.toml")),
    ("detect_rotation", include_str!("../../configs/detect_rotation.toml")),
];

fn two_pi() -> f64 {
    2.0 * PI
}

/// A forced wavevector; `amplitude = (re, im)` of the scalar coefficient
/// along `i k⊥/|k|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub k: [i32; 2],
    pub amplitude: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Lorenz63 {
        substeps: Option<usize>,
    },
    Lorenz96 {
        dim: usize,
        substeps: Option<usize>,
    },
    NavierStokes {
        viscosity: f64,
        kmax: i32,
        #[serde(default = "two_pi")]
        period: f64,
        forcing: Vec<ForcingMode>,
        substeps: Option<usize>,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<DissipativeModel> {
        let (model, substeps) = match self {
            ModelConfig::Lorenz63 { substeps } => (lorenz63(), substeps),
            ModelConfig::Lorenz96 { dim, substeps } => (lorenz96(*dim)?, substeps),
            ModelConfig::NavierStokes { viscosity, kmax, period, forcing, substeps } => {
                let modes: Vec<VelocityMode> = forcing
                    .iter()
                    .map(|f| {
                        let [k1, k2] = f.k;
                        let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
                        let a = Complex64::new(f.amplitude[0], f.amplitude[1]) * Complex64::i();
                        VelocityMode { lattice: (k1, k2), v: [a * (-k2 as f64 / norm), a * (k1 as f64 / norm)] }
                    })
                    .collect();
                (navier_stokes_spectral(*viscosity, &modes, *kmax, *period)?, substeps)
            }
        };
        match substeps {
            Some(n) => model.with_substeps(*n),
            None => Ok(model),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservationConfig {
    /// 0-based observed coordinates.
    Coordinates {
        observed: Vec<usize>,
        #[serde(default)]
        noise: NoiseLaw,
    },
    EveryThirdUnobserved {
        #[serde(default)]
        noise: NoiseLaw,
    },
    /// Spectral noise normalized in H¹.
    FourierCutoff { lambda: f64 },
}

impl ObservationConfig {
    pub fn build(&self, model: &DissipativeModel) -> Result<(ObservationOperator, NoiseModel)> {
        match self {
            ObservationConfig::Coordinates { observed, noise } => {
                let op = coordinate_projection(model.dim(), observed)?;
                let n = NoiseModel::new(&op, *noise);
                Ok((op, n))
            }
            ObservationConfig::EveryThirdUnobserved { noise } => {
                let op = every_third_unobserved(model.dim())?;
                let n = NoiseModel::new(&op, *noise);
                Ok((op, n))
            }
            ObservationConfig::FourierCutoff { lambda } => {
                let ns = model
                    .spectral()
                    .ok_or_else(|| Error::Config("fourier-cutoff observation needs a navier-stokes model".into()))?;
                let op = fourier_cutoff(ns, *lambda)?;
                let n = NoiseModel::spectral(ns, &op)?;
                Ok((op, n))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorSpec {
    Observer,
    Truncated,
    Particle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GainSpec {
    Identity,
    /// 3DVAR gain with background covariance `σ²I` and `Γ = (1/m)I`.
    #[serde(rename = "3dvar")]
    ThreeDVar {
        background_variance: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterStart {
    #[default]
    Zero,
    /// An independent draw from the signal's initial law, projected into `B_V`.
    PriorDraw,
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![EstimatorSpec::Truncated]
}

fn default_gain() -> GainSpec {
    GainSpec::Identity
}

fn default_particles() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_gain")]
    pub gain: GainSpec,
    /// Radius of `B_V`; defaults to `√2 r` (ODE models) or `r` (Navier–Stokes).
    pub ball_radius: Option<f64>,
    #[serde(default)]
    pub start: FilterStart,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Off by default: the signal is deterministic.
    #[serde(default)]
    pub jitter: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            estimators: default_estimators(),
            gain: default_gain(),
            ball_radius: None,
            start: FilterStart::Zero,
            particles: default_particles(),
            jitter: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseMode {
    /// Error at the final time only.
    #[default]
    Final,
    /// Average over the second half of the run.
    TimeAverage,
}

fn default_h() -> f64 {
    0.01
}

fn default_one() -> usize {
    1
}

fn default_init_std() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    pub final_time: f64,
    #[serde(default = "default_one")]
    pub n_inits: usize,
    #[serde(default = "default_one")]
    pub n_noise: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: MseMode,
    /// `v_0 ~ N(0, σ²I)`; for Navier–Stokes the std of coordinate `k` is `σ/k²`.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    pub output: Option<String>,
}

impl ExperimentSection {
    /// Number of assimilation steps `J = T/h`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.final_time / self.h;
        let j = ratio.round();
        if !(self.h > 0.0) || !(self.final_time > 0.0) || (ratio - j).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "final_time {} is not a positive integer multiple of h {}",
                self.final_time, self.h
            )));
        }
        Ok(j as usize)
    }
}

fn default_samples() -> usize {
    10_000
}

fn default_bins() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezeSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Overrides `experiment.h`.
    pub h: Option<f64>,
    /// Cutoffs to scan for Fourier observations.
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

fn default_budget() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    /// Rows of `L`.
    pub l: Vec<Vec<f64>>,
    /// Rows of `P`.
    pub p: Vec<Vec<f64>>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular array of rows")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl LinearSection {
    pub fn matrices(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let l = matrix_from_rows(&self.l, "linear.l")?;
        let p = matrix_from_rows(&self.p, "linear.p")?;
        if !l.is_square() || p.ncols() != l.ncols() {
            return Err(Error::Config(format!(
                "linear.l is {}×{} and linear.p is {}×{}; need L square and P with matching columns",
                l.nrows(),
                l.ncols(),
                p.nrows(),
                p.ncols()
            )));
        }
        Ok((l, p))
    }
}

/// Sections: `[model]`, `[observation]`, `[filter]`, `[experiment]`,
/// `[squeeze]`, `[linear]`. Each subcommand requires only the ones it uses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelConfig>,
    pub observation: Option<ObservationConfig>,
    #[serde(default)]
    pub filter: FilterConfig,
    pub experiment: Option<ExperimentSection>,
    pub squeeze: Option<SqueezeSection>,
    pub linear: Option<LinearSection>,
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing [{section}] section"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml_str(text).expect("built-in presets are valid"))
    }

    /// Reads a file, or falls back to a built-in preset of that name.
    pub fn load(path_or_preset: &str) -> Result<Self> {
        let path = Path::new(path_or_preset);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::from_toml_str(&text);
        }
        Self::preset(path_or_preset).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("config '{path_or_preset}' is neither a file nor a preset ({})", names.join(", ")))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(exp) = &self.experiment {
            exp.steps()?;
            if exp.epsilons.is_empty() || exp.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
                return Err(Error::Config("epsilons must be a non-empty list of finite values ≥ 0".into()));
            }
            if exp.n_inits == 0 || exp.n_noise == 0 {
                return Err(Error::Config("n_inits and n_noise must be at least 1".into()));
            }
            if !(exp.init_std >= 0.0) {
                return Err(Error::Config("init_std must be nonnegative".into()));
            }
        }
        if self.filter.estimators.is_empty() {
            return Err(Error::Config("filter.estimators is empty".into()));
        }
        if self.filter.particles < 2 {
            return Err(Error::Config("filter.particles must be at least 2".into()));
        }
        if !(self.filter.jitter >= 0.0) {
            return Err(Error::Config("filter.jitter must be nonnegative".into()));
        }
        if let Some(r) = self.filter.ball_radius {
            if !(r > 0.0) {
                return Err(Error::Config("filter.ball_radius must be positive".into()));
            }
        }
        if let GainSpec::ThreeDVar { background_variance } = self.filter.gain {
            if !(background_variance > 0.0) {
                return Err(Error::Config("background_variance must be positive".into()));
            }
        }
        if let Some(lin) = &self.linear {
            lin.matrices()?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    pub fn observation_config(&self) -> Result<&ObservationConfig> {
        self.observation.as_ref().ok_or_else(|| missing("observation"))
    }

    pub fn experiment(&self) -> Result<&ExperimentSection> {
        self.experiment.as_ref().ok_or_else(|| missing("experiment"))
    }

    pub fn linear(&self) -> Result<&LinearSection> {
        self.linear.as_ref().ok_or_else(|| missing("linear"))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(exp) = &mut self.experiment {
            exp.seed = seed;
        }
        self
    }

    /// Builds the model, observation operator, noise, norm and initial law.
    pub fn setup(&self) -> Result<Setup> {
        let model = self.model_config()?.build()?;
        let (op, noise) = self.observation_config()?.build(&model)?;
        let vnorm = default_vnorm(&model, &op);
        let radius = self.filter.ball_radius.unwrap_or_else(|| default_ball_radius(&model));
        let init_std = self.experiment.as_ref().map_or(default_init_std(), |e| e.init_std);
        let std = match model.spectral() {
            Some(ns) => State::from_fn(model.dim(), |i, _| init_std / ns.coordinate_k2(i)),
            None => State::from_element(model.dim(), init_std),
        };
        let init = InitialCondition::Gaussian { mean: State::zeros(model.dim()), std };
        Ok(Setup { model, op, noise, vnorm, radius, init })
    }
}

/// Objects assembled from a configuration.
#[derive(Clone, Debug)]
pub struct Setup {
    pub model: DissipativeModel,
    pub op: ObservationOperator,
    pub noise: NoiseModel,
    pub vnorm: VNorm,
    pub radius: f64,
    pub init: InitialCondition,
}

impl Setup {
    /// Diagonal of the model's phase-space norm.
    pub fn norm_weights(&self) -> DVector<f64> {
        self.model.norm_weights()
    }
}
