//! JSON run configuration. Matrices are row-major nested arrays; an entry is
//! either a number or the ascending coefficient list of a polynomial in `t`.

use std::path::Path;

use covsteer::sim::{NoiseComponent, NoiseKind, NoiseModel};
use covsteer::{BoundaryData, GeneralChannel, MatrixPoly, Poly, SystemSpec, Tolerances};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Constant(f64),
    Poly(Vec<f64>),
}

impl Entry {
    fn poly(&self) -> Poly<f64> {
        match self {
            Entry::Constant(c) => Poly::constant(*c),
            Entry::Poly(c) => Poly::new(c.clone()),
        }
    }
}

pub type MatrixSpec = Vec<Vec<Entry>>;

fn matrix_poly(name: &str, m: &MatrixSpec) -> Result<MatrixPoly<f64>, CliError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{name} must be a non-empty rectangular matrix")));
    }
    // entries are stored column-major
    let entries = m.iter().flatten().map(Entry::poly).collect();
    MatrixPoly::from_entries(rows, cols, entries).map_err(|e| CliError::Config(format!("{name}: {e}")))
}

fn constant_matrix(name: &str, m: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChannelSpec {
    pub e: MatrixSpec,
    pub nu: Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    /// Derived from the noise model when omitted.
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Entry>,
    #[serde(rename = "Q")]
    pub q: MatrixSpec,
    #[serde(rename = "R")]
    pub r: MatrixSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub general_channels: Vec<ChannelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum NoiseKindSpec {
    Wiener { rate: Entry },
    #[serde(rename_all = "camelCase")]
    CompoundPoisson { rate: Entry, jump_std: f64 },
}

impl NoiseKindSpec {
    fn build(&self) -> NoiseKind<f64> {
        match self {
            NoiseKindSpec::Wiener { rate } => NoiseKind::Wiener { rate: rate.poly() },
            NoiseKindSpec::CompoundPoisson { rate, jump_std } => NoiseKind::CompoundPoisson {
                rate: rate.poly(),
                jump_std: *jump_std,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdditiveSpec {
    pub channel: usize,
    #[serde(flatten)]
    pub kind: NoiseKindSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NoiseConfig {
    #[serde(default)]
    pub additive: Vec<AdditiveSpec>,
    #[serde(default)]
    pub multiplicative: Vec<NoiseKindSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundaryConfig {
    pub sigma0: Vec<Vec<f64>>,
    pub sigma1: Vec<Vec<f64>>,
}

/// Overrides of the solver tolerances; absent keys keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_condition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisection_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_halvings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homotopy_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes_per_subinterval: Option<usize>,
}

impl ToleranceConfig {
    pub fn build(&self) -> Tolerances<f64> {
        let mut t = Tolerances::default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { t.$f = v; } )* };
        }
        set!(
            ode_rtol,
            ode_atol,
            quad_tol,
            max_condition,
            validation_grid,
            pd_threshold,
            psd_threshold,
            bisection_tol,
            blowup_norm,
            newton_tol,
            newton_max_iter,
            newton_max_halvings,
            admissibility_margin,
            homotopy_steps,
            rank_tol,
            probes_per_subinterval
        );
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GainChoice {
    Optimal,
    Zero,
}

fn default_grid() -> usize {
    1001
}
fn default_paths() -> usize {
    100_000
}
fn default_step() -> f64 {
    1e-3
}
fn default_retain() -> usize {
    10
}
fn default_out() -> String {
    "out".into()
}
fn default_gain() -> GainChoice {
    GainChoice::Optimal
}
fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Options {
    /// Points of the output time grid on `[0, 1]`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub num_paths: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_retain")]
    pub retain_paths: usize,
    /// Gain used by `simulate`.
    #[serde(default = "default_gain")]
    pub gain: GainChoice,
    /// Derivative order `H` imposed on the constructed input at both ends.
    #[serde(default)]
    pub construct_order: usize,
    /// Relative tolerance of the `certify` covariance and cost checks.
    #[serde(default = "default_tolerance")]
    pub certify_tolerance: f64,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

impl Default for Options {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all option keys have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub options: Options,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn noise_model(&self) -> Result<Option<NoiseModel<f64>>, CliError> {
        let Some(noise) = &self.noise else {
            return Ok(None);
        };
        let channels = self.system.c.first().map_or(0, Vec::len);
        Ok(Some(NoiseModel {
            channels,
            additive: noise
                .additive
                .iter()
                .map(|a| NoiseComponent {
                    channel: a.channel,
                    kind: a.kind.build(),
                })
                .collect(),
            multiplicative: noise.multiplicative.iter().map(NoiseKindSpec::build).collect(),
        }))
    }

    pub fn system(&self) -> Result<SystemSpec<f64>, CliError> {
        let s = &self.system;
        let noise = self.noise_model()?;
        let derived = noise
            .as_ref()
            .map(covsteer::derive_intensities)
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let d = match (&s.d, &derived) {
            (Some(d), _) => matrix_poly("D", d)?,
            (None, Some((d, _))) => d.clone(),
            (None, None) => return Err(CliError::Config("D is required without a noise model".into())),
        };
        let nu = match (&s.nu, &derived) {
            (Some(nu), _) => MatrixPoly::scalar(nu.poly()),
            (None, Some((_, nu))) => nu.clone(),
            (None, None) => MatrixPoly::scalar(Poly::zero()),
        };
        let channels = s
            .general_channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(GeneralChannel {
                    e: matrix_poly(&format!("generalChannels[{i}].e"), &c.e)?,
                    nu: MatrixPoly::scalar(c.nu.poly()),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let sys = SystemSpec::new(
            matrix_poly("A", &s.a)?,
            matrix_poly("B", &s.b)?,
            matrix_poly("C", &s.c)?,
            d,
            nu,
            matrix_poly("Q", &s.q)?,
            matrix_poly("R", &s.r)?,
        )
        .with_channels(channels);
        Ok(sys)
    }

    pub fn boundary(&self) -> Result<BoundaryData<f64>, CliError> {
        let s0 = constant_matrix("sigma0", &self.boundary.sigma0)?;
        let s1 = constant_matrix("sigma1", &self.boundary.sigma1)?;
        BoundaryData::new(s0, s1).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn tolerances(&self) -> Tolerances<f64> {
        self.options.tolerances.build()
    }
}
