//! Scenario files: one TOML document per scenario.
//!
//! Parsing is strict (unknown keys are rejected) and every semantic check
//! reports the dotted key it concerns, so a config error always points at
//! the line to fix.

use std::path::{Path, PathBuf};

use mpflow::fields::{NoiseModel, Schedule, VectorFieldSpec};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dimension: usize,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub noise: Vec<FieldConfig>,
    pub noise_kernels: Option<KernelGenerator>,
    pub drift: DriftConfig,
    pub landmarks: Landmarks,
    #[serde(default)]
    pub mpp: MppConfig,
    #[serde(default)]
    pub bvp: BvpConfig,
    #[serde(default)]
    pub outputs: Outputs,
    pub epdiff: Option<EpdiffConfig>,
    /// directory the scenario was loaded from; relative files resolve here
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub steps: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub ellipticity_floor: f64,
    pub blowup_bound: f64,
}

impl Default for Solver {
    fn default() -> Self {
        Solver {
            steps: 200,
            tolerance: 1e-10,
            max_iter: 50,
            ellipticity_floor: 1e-6,
            blowup_bound: 1e6,
        }
    }
}

/// A vector field, tagged by `kind`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        value: Vec<f64>,
    },
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Gaussian {
        center: Vec<f64>,
        amplitude: Vec<f64>,
        width: f64,
    },
    Conformal {
        axis: usize,
        beta: f64,
    },
    KernelMomentum {
        points: Vec<Vec<f64>>,
        momenta: Vec<Vec<f64>>,
        width: f64,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    Sum {
        terms: Vec<FieldConfig>,
    },
    TimeScaled {
        field: Box<FieldConfig>,
        schedule: ScheduleConfig,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant {
        value: f64,
    },
    Linear {
        offset: f64,
        slope: f64,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Exponential {
        scale: f64,
        rate: f64,
    },
}

/// The drift is either an ordinary field or a reference to a 1D
/// EPDiff/optimal drift, read from a file or integrated from `[epdiff]`.
#[derive(Debug, Clone)]
pub enum DriftConfig {
    Epdiff(EpdiffDrift),
    Field(FieldConfig),
}

impl<'de> Deserialize<'de> for DriftConfig {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = toml::Value::deserialize(de)?;
        if v.get("kind").and_then(toml::Value::as_str) == Some("epdiff1d") {
            EpdiffDrift::deserialize(v).map(DriftConfig::Epdiff)
        } else {
            FieldConfig::deserialize(v).map(DriftConfig::Field)
        }
        .map_err(|e| D::Error::custom(format!("drift: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpdiffDrift {
    /// always `epdiff1d`; kept so unknown-key checking sees the tag
    #[allow(dead_code)]
    pub kind: EpdiffTag,
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub subtract_ito_correction: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpdiffTag {
    Epdiff1d,
}

/// `d` axis-aligned Gaussian noise fields at every center.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelGenerator {
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    pub grid: Option<Grid>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// amplitude of spatially constant axis fields added everywhere
    #[serde(default)]
    pub background: f64,
}

fn default_width() -> f64 {
    0.5
}

fn default_amplitude() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub count: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmarks {
    pub line: Option<Line>,
    pub grid: Option<Grid>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppConfig {
    /// initial momentum `a(0)` shared by all landmarks
    pub initial_momentum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpConfig {
    /// explicit targets; the deterministic endpoints when absent
    pub targets: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub deterministic: bool,
    pub mpp_forward: bool,
    pub mpp_bvp: bool,
    pub plot: bool,
    pub ensemble: Option<EnsembleConfig>,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            deterministic: true,
            mpp_forward: true,
            mpp_bvp: true,
            plot: true,
            ensemble: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormConfig {
    #[default]
    Stratonovich,
    Ito,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperConfig {
    #[default]
    Heun,
    EulerMaruyama,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub steps: Option<usize>,
    #[serde(default)]
    pub form: FormConfig,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub independent_points: bool,
    /// number of sample paths to write to `ensemble_paths.csv`
    #[serde(default)]
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Epdiff,
    #[default]
    Optu,
}

/// Settings for the periodic 1D drift solver. Noise fields are sampled on
/// the grid nodes of `[0, 2π)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpdiffConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub alpha: f64,
    pub steps: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub equation: Equation,
    pub initial_velocity: FieldConfig,
}

fn one() -> f64 {
    1.0
}

fn default_snapshots() -> usize {
    100
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut sc: Scenario = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        sc.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = self.dimension;
        if !(1..=3).contains(&d) {
            return Err(bad("dimension", format!("must be 1, 2 or 3, got {d}")));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad("horizon", "must be positive"));
        }
        let s = &self.solver;
        if s.steps < 2 {
            return Err(bad("solver.steps", "must be at least 2"));
        }
        if !(s.tolerance > 0.0) {
            return Err(bad("solver.tolerance", "must be positive"));
        }
        if !(s.ellipticity_floor > 0.0) {
            return Err(bad("solver.ellipticity_floor", "must be positive"));
        }
        if self.noise.is_empty() && self.noise_kernels.is_none() {
            return Err(bad(
                "noise",
                "no noise fields given (use [[noise]] or [noise_kernels])",
            ));
        }
        for (i, f) in self.noise.iter().enumerate() {
            check_field(&format!("noise[{i}]"), f, d)?;
        }
        if let Some(k) = &self.noise_kernels {
            if k.centers.is_empty() && k.grid.is_none() {
                return Err(bad("noise_kernels", "needs `centers` or `grid`"));
            }
            for (i, c) in k.centers.iter().enumerate() {
                check_len(&format!("noise_kernels.centers[{i}]"), c, d)?;
            }
            if let Some(g) = &k.grid {
                check_grid("noise_kernels.grid", g, d)?;
            }
            if !(k.width > 0.0) {
                return Err(bad("noise_kernels.width", "must be positive"));
            }
        }
        match &self.drift {
            DriftConfig::Field(f) => check_field("drift", f, d)?,
            DriftConfig::Epdiff(e) => {
                if d != 1 {
                    return Err(bad("drift.kind", "epdiff1d drift needs dimension = 1"));
                }
                match &e.file {
                    Some(f) => {
                        let p = self.resolve(f);
                        if !p.is_file() {
                            return Err(bad(
                                "drift.file",
                                format!("{} does not exist", p.display()),
                            ));
                        }
                    }
                    None if self.epdiff.is_none() => {
                        return Err(bad(
                            "drift",
                            "epdiff1d drift needs `file` or an [epdiff] table",
                        ));
                    }
                    None => {}
                }
            }
        }
        if let Some(e) = &self.epdiff {
            if d != 1 {
                return Err(bad("epdiff", "needs dimension = 1"));
            }
            if e.n < 8 || e.n % 2 != 0 {
                return Err(bad("epdiff.n", "must be even and at least 8"));
            }
            if !(e.alpha > 0.0) {
                return Err(bad("epdiff.alpha", "must be positive"));
            }
            if e.steps == 0 || e.snapshots == 0 || e.steps % e.snapshots != 0 {
                return Err(bad(
                    "epdiff.snapshots",
                    "must be positive and divide epdiff.steps",
                ));
            }
            check_field("epdiff.initial_velocity", &e.initial_velocity, 1)?;
        }
        let l = &self.landmarks;
        let given = [l.line.is_some(), l.grid.is_some(), l.points.is_some()];
        if given.iter().filter(|&&b| b).count() != 1 {
            return Err(bad(
                "landmarks",
                "give exactly one of `line`, `grid`, `points`",
            ));
        }
        if let Some(line) = &l.line {
            check_len("landmarks.line.from", &line.from, d)?;
            check_len("landmarks.line.to", &line.to, d)?;
            if line.count == 0 {
                return Err(bad("landmarks.line.count", "must be at least 1"));
            }
        }
        if let Some(g) = &l.grid {
            check_grid("landmarks.grid", g, d)?;
        }
        if let Some(p) = &l.points {
            if p.is_empty() {
                return Err(bad("landmarks.points", "must not be empty"));
            }
            for (i, x) in p.iter().enumerate() {
                check_len(&format!("landmarks.points[{i}]"), x, d)?;
            }
        }
        if let Some(a) = &self.mpp.initial_momentum {
            check_len("mpp.initial_momentum", a, d)?;
        }
        if let Some(t) = &self.bvp.targets {
            if t.len() != self.landmark_points().len() {
                return Err(bad("bvp.targets", "needs one target per landmark"));
            }
            for (i, x) in t.iter().enumerate() {
                check_len(&format!("bvp.targets[{i}]"), x, d)?;
            }
        }
        if let Some(e) = &self.outputs.ensemble {
            if e.samples == 0 {
                return Err(bad("outputs.ensemble.samples", "must be at least 1"));
            }
            if e.steps == Some(0) {
                return Err(bad("outputs.ensemble.steps", "must be at least 1"));
            }
            if e.paths > e.samples {
                return Err(bad(
                    "outputs.ensemble.paths",
                    "exceeds outputs.ensemble.samples",
                ));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn landmark_points(&self) -> Vec<Vec<f64>> {
        let l = &self.landmarks;
        if let Some(line) = &l.line {
            let n = line.count;
            (0..n)
                .map(|i| {
                    let s = if n == 1 {
                        0.5
                    } else {
                        i as f64 / (n - 1) as f64
                    };
                    line.from
                        .iter()
                        .zip(&line.to)
                        .map(|(a, b)| a + s * (b - a))
                        .collect()
                })
                .collect()
        } else if let Some(g) = &l.grid {
            grid_points(g)
        } else {
            l.points.clone().unwrap_or_default()
        }
    }

    /// Centers of localized noise fields, for plotting.
    pub fn noise_centers(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut push = |c: &Vec<f64>| {
            if !out.contains(c) {
                out.push(c.clone());
            }
        };
        for f in &self.noise {
            collect_centers(f, &mut push);
        }
        if let Some(k) = &self.noise_kernels {
            k.centers.iter().for_each(&mut push);
            if let Some(g) = &k.grid {
                grid_points(g).iter().for_each(&mut push);
            }
        }
        out
    }

    pub fn noise_model(&self) -> NoiseModel<f64> {
        let d = self.dimension;
        let mut sigmas: Vec<_> = self.noise.iter().map(|f| build_field(f, d)).collect();
        if let Some(k) = &self.noise_kernels {
            let mut centers = k.centers.clone();
            if let Some(g) = &k.grid {
                centers.extend(grid_points(g));
            }
            for c in &centers {
                for axis in 0..d {
                    let mut amplitude = vec![0.0; d];
                    amplitude[axis] = k.amplitude;
                    sigmas.push(VectorFieldSpec::GaussianKernel {
                        center: c.clone(),
                        amplitude,
                        width: k.width,
                    });
                }
            }
            if k.background != 0.0 {
                for axis in 0..d {
                    let mut v = vec![0.0; d];
                    v[axis] = k.background;
                    sigmas.push(VectorFieldSpec::Constant(v));
                }
            }
        }
        NoiseModel::new(sigmas, self.solver.ellipticity_floor)
    }
}

fn collect_centers(f: &FieldConfig, push: &mut impl FnMut(&Vec<f64>)) {
    match f {
        FieldConfig::Gaussian { center, .. } => push(center),
        FieldConfig::KernelMomentum { points, .. } => points.iter().for_each(push),
        FieldConfig::Sum { terms } => terms.iter().for_each(|t| collect_centers(t, push)),
        FieldConfig::TimeScaled { field, .. } => collect_centers(field, push),
        _ => {}
    }
}

pub fn grid_points(g: &Grid) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for axis in 0..g.min.len() {
        let n = g.count[axis];
        let coords: Vec<f64> = (0..n)
            .map(|i| {
                let s = if n == 1 {
                    0.5
                } else {
                    i as f64 / (n - 1) as f64
                };
                g.min[axis] + s * (g.max[axis] - g.min[axis])
            })
            .collect();
        out = out
            .into_iter()
            .flat_map(|p| {
                coords.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

fn check_len(key: &str, v: &[f64], d: usize) -> Result<(), CliError> {
    if v.len() != d {
        return Err(bad(
            key,
            format!("expected {d} components, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad(key, "components must be finite"));
    }
    Ok(())
}

fn check_grid(key: &str, g: &Grid, d: usize) -> Result<(), CliError> {
    check_len(&format!("{key}.min"), &g.min, d)?;
    check_len(&format!("{key}.max"), &g.max, d)?;
    if g.count.len() != d || g.count.contains(&0) {
        return Err(bad(
            &format!("{key}.count"),
            format!("needs {d} positive counts"),
        ));
    }
    Ok(())
}

fn check_field(key: &str, f: &FieldConfig, d: usize) -> Result<(), CliError> {
    match f {
        FieldConfig::Constant { value } => check_len(&format!("{key}.value"), value, d),
        FieldConfig::Linear { matrix, offset } => {
            if matrix.len() != d {
                return Err(bad(&format!("{key}.matrix"), format!("needs {d} rows")));
            }
            for (i, row) in matrix.iter().enumerate() {
                check_len(&format!("{key}.matrix[{i}]"), row, d)?;
            }
            if let Some(o) = offset {
                check_len(&format!("{key}.offset"), o, d)?;
            }
            Ok(())
        }
        FieldConfig::Gaussian {
            center,
            amplitude,
            width,
        } => {
            check_len(&format!("{key}.center"), center, d)?;
            check_len(&format!("{key}.amplitude"), amplitude, d)?;
            if !(*width > 0.0) {
                return Err(bad(&format!("{key}.width"), "must be positive"));
            }
            Ok(())
        }
        FieldConfig::Conformal { axis, .. } => {
            if *axis >= d {
                return Err(bad(&format!("{key}.axis"), format!("must be below {d}")));
            }
            Ok(())
        }
        FieldConfig::KernelMomentum {
            points,
            momenta,
            width,
        } => {
            if points.len() != momenta.len() || points.is_empty() {
                return Err(bad(
                    &format!("{key}.momenta"),
                    "needs one momentum per point (and at least one point)",
                ));
            }
            for (i, (p, m)) in points.iter().zip(momenta).enumerate() {
                check_len(&format!("{key}.points[{i}]"), p, d)?;
                check_len(&format!("{key}.momenta[{i}]"), m, d)?;
            }
            if !(*width > 0.0) {
                return Err(bad(&format!("{key}.width"), "must be positive"));
            }
            Ok(())
        }
        FieldConfig::Sinusoid {
            amplitude,
            wavevector,
            ..
        } => {
            check_len(&format!("{key}.amplitude"), amplitude, d)?;
            check_len(&format!("{key}.wavevector"), wavevector, d)
        }
        FieldConfig::Sum { terms } => {
            if terms.is_empty() {
                return Err(bad(&format!("{key}.terms"), "must not be empty"));
            }
            for (i, t) in terms.iter().enumerate() {
                check_field(&format!("{key}.terms[{i}]"), t, d)?;
            }
            Ok(())
        }
        FieldConfig::TimeScaled { field, .. } => check_field(&format!("{key}.field"), field, d),
    }
}

pub fn build_field(f: &FieldConfig, d: usize) -> VectorFieldSpec<f64> {
    match f {
        FieldConfig::Constant { value } => VectorFieldSpec::Constant(value.clone()),
        FieldConfig::Linear { matrix, offset } => VectorFieldSpec::Linear {
            matrix: matrix.clone(),
            offset: offset.clone().unwrap_or_else(|| vec![0.0; d]),
        },
        FieldConfig::Gaussian {
            center,
            amplitude,
            width,
        } => VectorFieldSpec::GaussianKernel {
            center: center.clone(),
            amplitude: amplitude.clone(),
            width: *width,
        },
        FieldConfig::Conformal { axis, beta } => VectorFieldSpec::ConformalAxis {
            dim: d,
            axis: *axis,
            beta: *beta,
        },
        FieldConfig::KernelMomentum {
            points,
            momenta,
            width,
        } => VectorFieldSpec::KernelMomentum {
            points: points.clone(),
            momenta: momenta.clone(),
            width: *width,
        },
        FieldConfig::Sinusoid {
            amplitude,
            wavevector,
            phase,
        } => VectorFieldSpec::Sinusoid {
            amplitude: amplitude.clone(),
            wavevector: wavevector.clone(),
            phase: *phase,
        },
        FieldConfig::Sum { terms } => {
            VectorFieldSpec::Sum(terms.iter().map(|t| build_field(t, d)).collect())
        }
        FieldConfig::TimeScaled { field, schedule } => VectorFieldSpec::TimeScaled {
            field: Box::new(build_field(field, d)),
            schedule: match *schedule {
                ScheduleConfig::Constant { value } => Schedule::Constant(value),
                ScheduleConfig::Linear { offset, slope } => Schedule::Linear { offset, slope },
                ScheduleConfig::Sine {
                    offset,
                    amplitude,
                    frequency,
                    phase,
                } => Schedule::Sine {
                    offset,
                    amplitude,
                    frequency,
                    phase,
                },
                ScheduleConfig::Exponential { scale, rate } => {
                    Schedule::Exponential { scale, rate }
                }
            },
        },
    }
}
