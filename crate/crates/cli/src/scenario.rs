//! Scenario operations: everything a subcommand does after the config has
//! been parsed. Artifacts are computed in memory and written once at the end
//! of each operation.

use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use mpflow::epdiff1d::{epdiff_integrate, optu_integrate, DriftField, DriftHistory, GridState};
use mpflow::fields::{NoiseModel, VectorFieldSpec};
use mpflow::mpp::{deterministic_flow, mpp_flow, FlowMode, FlowPoint, MppOptions, PointStatus};
use mpflow::om::{om_integral, Path as Trajectory};
use mpflow::sde::{
    ensemble_summary, simulate_ito, simulate_stratonovich, Form, SdeConfig, Stepper,
};
use mpflow::{geometry, Error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_paths, write_json, write_paths, SCHEMA_VERSION};
use crate::config::{
    build_field, DriftConfig, EpdiffConfig, Equation, FormConfig, Scenario, StepperConfig,
};
use crate::error::CliError;
use crate::svg::Figure;

pub const DETERMINISTIC_CSV: &str = "deterministic.csv";
pub const FORWARD_CSV: &str = "mpp_forward.csv";
pub const BVP_CSV: &str = "mpp_bvp.csv";
pub const BVP_JSON: &str = "bvp_summary.json";
pub const ENSEMBLE_JSON: &str = "ensemble_summary.json";
pub const ENSEMBLE_CSV: &str = "ensemble_paths.csv";
pub const DRIFT_JSON: &str = "epdiff_drift.json";
pub const FIGURE_SVG: &str = "figure.svg";

/// Noise, drift and starting points of a scenario.
pub struct Model {
    pub noise: NoiseModel<f64>,
    pub drift: VectorFieldSpec<f64>,
    pub landmarks: Vec<Vec<f64>>,
}

/// On-disk form of a 1D drift history.
#[derive(Debug, Serialize, Deserialize)]
pub struct DriftFile {
    pub schema_version: u32,
    pub equation: String,
    pub alpha: f64,
    pub n: usize,
    pub horizon: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub u_t: Vec<Vec<f64>>,
    /// X-energy `½⟨Lu, u⟩` per snapshot
    pub energies: Vec<f64>,
    /// `½ Σ σ σ′` on the grid
    pub ito_correction: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DriftFile {
    fn history(&self) -> DriftHistory<f64> {
        DriftHistory {
            alpha: self.alpha,
            n: self.n,
            times: self.times.clone(),
            u: self.u.clone(),
            u_t: self.u_t.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

pub fn compute_drift(sc: &Scenario, cfg: &EpdiffConfig) -> Result<DriftFile, CliError> {
    let initial = build_field(&cfg.initial_velocity, 1);
    let nodes: Vec<f64> = (0..cfg.n)
        .map(|i| std::f64::consts::TAU * i as f64 / cfg.n as f64)
        .collect();
    let u0: Vec<f64> = nodes.iter().map(|&x| initial.value(0.0, &[x])[0]).collect();
    let sigma_fields: Vec<Vec<f64>> = match cfg.equation {
        Equation::Epdiff => vec![],
        Equation::Optu => sc
            .noise_model()
            .sigmas
            .iter()
            .map(|s| nodes.iter().map(|&x| s.value(0.0, &[x])[0]).collect())
            .collect(),
    };
    let state = GridState::from_velocity(cfg.alpha, u0, sigma_fields)?;
    let hist = match cfg.equation {
        Equation::Epdiff => epdiff_integrate(&state, sc.horizon, cfg.steps, cfg.snapshots)?,
        Equation::Optu => optu_integrate(&state, sc.horizon, cfg.steps, cfg.snapshots)?,
    };
    for w in &hist.warnings {
        warn!("{w}");
    }
    Ok(DriftFile {
        schema_version: SCHEMA_VERSION,
        equation: match cfg.equation {
            Equation::Epdiff => "epdiff".into(),
            Equation::Optu => "optu".into(),
        },
        alpha: cfg.alpha,
        n: cfg.n,
        horizon: sc.horizon,
        steps: cfg.steps,
        energies: hist.energies()?,
        ito_correction: state.ito_correction(),
        times: hist.times,
        u: hist.u,
        u_t: hist.u_t,
        warnings: hist.warnings,
    })
}

pub fn build_model(sc: &Scenario) -> Result<Model, CliError> {
    let noise = sc.noise_model();
    let drift = match &sc.drift {
        DriftConfig::Field(f) => build_field(f, sc.dimension),
        DriftConfig::Epdiff(e) => {
            let file = match &e.file {
                Some(p) => {
                    let p = sc.resolve(p);
                    let text = std::fs::read_to_string(&p).map_err(|err| {
                        CliError::Config(format!("drift.file: {}: {err}", p.display()))
                    })?;
                    serde_json::from_str::<DriftFile>(&text).map_err(|err| {
                        CliError::Config(format!("drift.file: {}: {err}", p.display()))
                    })?
                }
                None => compute_drift(sc, sc.epdiff.as_ref().expect("validated"))?,
            };
            let subtract = e
                .subtract_ito_correction
                .then_some(file.ito_correction.as_slice());
            let field = DriftField::new(&file.history(), subtract)
                .map_err(|err| CliError::Config(format!("drift.file: {err}")))?;
            VectorFieldSpec::Grid(Arc::new(field))
        }
    };
    noise.validate(sc.dimension)?;
    drift.validate(sc.dimension)?;
    let landmarks = sc.landmark_points();
    for x in &landmarks {
        geometry::cometric(&noise, 0.0, x)?;
    }
    Ok(Model {
        noise,
        drift,
        landmarks,
    })
}

/// Per-landmark failures gathered while running, turned into the exit status
/// once all artifacts are written.
#[derive(Default)]
pub struct Tally {
    not_converged: Vec<usize>,
    ellipticity: Vec<usize>,
    failed: Vec<usize>,
}

impl Tally {
    fn record(&mut self, what: &str, points: &[FlowPoint<f64>]) {
        for (i, p) in points.iter().enumerate() {
            match &p.status {
                PointStatus::Converged => {}
                PointStatus::NotConverged { residual } => {
                    warn!("{what}: landmark {i} not converged (residual {residual:.3e})");
                    self.not_converged.push(i);
                }
                PointStatus::Failed(e @ Error::EllipticityViolation { .. }) => {
                    warn!("{what}: landmark {i}: {e}");
                    self.ellipticity.push(i);
                }
                PointStatus::Failed(e) => {
                    warn!("{what}: landmark {i}: {e}");
                    self.failed.push(i);
                }
            }
        }
    }

    pub fn finish(self) -> Result<(), CliError> {
        if !self.ellipticity.is_empty() {
            return Err(CliError::Ellipticity(format!(
                "landmarks {:?} left the elliptic region",
                self.ellipticity
            )));
        }
        if !self.not_converged.is_empty() || !self.failed.is_empty() {
            return Err(CliError::NonConvergence(format!(
                "landmarks {:?} did not converge, {:?} failed",
                self.not_converged, self.failed
            )));
        }
        Ok(())
    }
}

fn options(sc: &Scenario) -> MppOptions<f64> {
    MppOptions {
        blowup_bound: sc.solver.blowup_bound,
    }
}

pub fn deterministic(sc: &Scenario, model: &Model) -> Result<Vec<Trajectory<f64>>, CliError> {
    let paths = model
        .landmarks
        .par_iter()
        .map(|x| deterministic_flow(&model.drift, x, sc.horizon, sc.solver.steps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(paths)
}

pub fn forward(sc: &Scenario, model: &Model) -> Result<Vec<FlowPoint<f64>>, CliError> {
    let shared: Option<Vec<Vec<f64>>> = sc
        .mpp
        .initial_momentum
        .as_ref()
        .map(|a| vec![a.clone(); model.landmarks.len()]);
    let mode = FlowMode::Forward {
        initial_a: shared.as_deref(),
    };
    Ok(mpp_flow(
        &model.noise,
        &model.drift,
        &model.landmarks,
        &mode,
        sc.horizon,
        sc.solver.steps,
        &options(sc),
    )?)
}

#[derive(Serialize)]
struct BvpEntry {
    index: usize,
    x0: Vec<f64>,
    target: Vec<f64>,
    v0: Option<Vec<f64>>,
    residual: Option<f64>,
    iterations: usize,
    status: &'static str,
    error: Option<String>,
    om_integral: Option<f64>,
}

#[derive(Serialize)]
struct BvpSummary {
    schema_version: u32,
    scenario: String,
    horizon: f64,
    steps: usize,
    tolerance: f64,
    total: usize,
    converged: usize,
    all_converged: bool,
    landmarks: Vec<BvpEntry>,
}

pub fn bvp_targets(
    sc: &Scenario,
    det: Option<&[Trajectory<f64>]>,
    model: &Model,
) -> Result<Vec<Vec<f64>>, CliError> {
    if let Some(t) = &sc.bvp.targets {
        return Ok(t.clone());
    }
    Ok(match det {
        Some(paths) => paths.iter().map(|p| p.end().to_vec()).collect(),
        None => deterministic(sc, model)?
            .iter()
            .map(|p| p.end().to_vec())
            .collect(),
    })
}

pub fn bvp(
    sc: &Scenario,
    model: &Model,
    targets: &[Vec<f64>],
    out: &Path,
    tally: &mut Tally,
) -> Result<Vec<FlowPoint<f64>>, CliError> {
    let mode = FlowMode::Targets {
        targets,
        tolerance: sc.solver.tolerance,
        max_iter: sc.solver.max_iter,
    };
    let points = mpp_flow(
        &model.noise,
        &model.drift,
        &model.landmarks,
        &mode,
        sc.horizon,
        sc.solver.steps,
        &options(sc),
    )?;
    tally.record("bvp", &points);
    let entries: Vec<BvpEntry> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let om = p
                .path
                .as_ref()
                .and_then(|path| om_integral(&model.noise, &model.drift, path).ok());
            let finite = |v: f64| v.is_finite().then_some(v);
            BvpEntry {
                index: i,
                x0: model.landmarks[i].clone(),
                target: targets[i].clone(),
                v0: p.path.as_ref().map(|_| p.v0.clone()),
                residual: finite(p.residual),
                iterations: p.iterations,
                status: match p.status {
                    PointStatus::Converged => "converged",
                    PointStatus::NotConverged { .. } => "not_converged",
                    PointStatus::Failed(_) => "failed",
                },
                error: match &p.status {
                    PointStatus::Failed(e) => Some(e.to_string()),
                    _ => None,
                },
                om_integral: om.and_then(finite),
            }
        })
        .collect();
    let converged = entries.iter().filter(|e| e.status == "converged").count();
    let summary = BvpSummary {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        horizon: sc.horizon,
        steps: sc.solver.steps,
        tolerance: sc.solver.tolerance,
        total: entries.len(),
        converged,
        all_converged: converged == entries.len(),
        landmarks: entries,
    };
    info!("bvp: {converged}/{} landmarks converged", summary.total);
    let paths: Vec<_> = points.iter().map(|p| p.path.as_ref()).collect();
    write_paths(&out.join(BVP_CSV), sc.dimension, &paths)?;
    write_json(&out.join(BVP_JSON), &summary)?;
    Ok(points)
}

#[derive(Serialize)]
struct EnsembleLandmark {
    index: usize,
    x0: Vec<f64>,
    /// `mean[k][i]` at `times[k]`
    mean: Vec<Vec<f64>>,
    variance: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EnsembleArtifact {
    schema_version: u32,
    scenario: String,
    seed: u64,
    n_samples: usize,
    steps: usize,
    form: &'static str,
    stepper: &'static str,
    independent_points: bool,
    times: Vec<f64>,
    landmarks: Vec<EnsembleLandmark>,
}

pub fn ensemble(sc: &Scenario, model: &Model, seed: u64, out: &Path) -> Result<(), CliError> {
    let Some(e) = &sc.outputs.ensemble else {
        return Err(CliError::Config(
            "outputs.ensemble: missing (needed for simulation)".into(),
        ));
    };
    let mut cfg = SdeConfig::new(
        model.noise.clone(),
        model.drift.clone(),
        sc.horizon,
        e.steps.unwrap_or(sc.solver.steps),
    );
    cfg.seed = seed;
    cfg.n_samples = e.samples;
    cfg.independent_points = e.independent_points;
    cfg.blowup_bound = sc.solver.blowup_bound;
    cfg.stepper = match e.stepper {
        StepperConfig::Heun => Stepper::Heun,
        StepperConfig::EulerMaruyama => Stepper::EulerMaruyama,
    };
    let form = match e.form {
        FormConfig::Stratonovich => Form::Stratonovich,
        FormConfig::Ito => Form::Ito,
    };
    let summary = ensemble_summary(&cfg, form, &model.landmarks)?;
    let artifact = EnsembleArtifact {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        seed,
        n_samples: summary.n_samples,
        steps: cfg.steps,
        form: match form {
            Form::Stratonovich => "stratonovich",
            Form::Ito => "ito",
        },
        stepper: match cfg.stepper {
            Stepper::Heun => "heun",
            Stepper::EulerMaruyama => "euler_maruyama",
        },
        independent_points: cfg.independent_points,
        times: summary.times.clone(),
        landmarks: model
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, x)| EnsembleLandmark {
                index: i,
                x0: x.clone(),
                mean: summary.mean[i].clone(),
                variance: summary.variance[i].clone(),
            })
            .collect(),
    };
    write_json(&out.join(ENSEMBLE_JSON), &artifact)?;
    if e.paths > 0 {
        cfg.n_samples = e.paths;
        let ens = match form {
            Form::Stratonovich => simulate_stratonovich(&cfg, &model.landmarks)?,
            Form::Ito => simulate_ito(&cfg, &model.landmarks)?,
        };
        let mut paths = Vec::new();
        for s in 0..ens.samples.len() {
            for p in 0..model.landmarks.len() {
                paths.push(ens.path(s, p)?);
            }
        }
        let refs: Vec<_> = paths.iter().map(Some).collect();
        write_paths(&out.join(ENSEMBLE_CSV), sc.dimension, &refs)?;
    }
    info!("ensemble: {} samples written", e.samples);
    Ok(())
}

/// Render `figure.svg` from whichever trajectory CSVs exist in `out`.
pub fn plot(sc: &Scenario, model: &Model, out: &Path) -> Result<(), CliError> {
    let load = |name: &str| -> Result<Vec<Trajectory<f64>>, CliError> {
        let f = out.join(name);
        if f.is_file() {
            Ok(read_paths(&f)?.into_values().collect())
        } else {
            Ok(vec![])
        }
    };
    let deterministic = load(DETERMINISTIC_CSV)?;
    let bvp = load(BVP_CSV)?;
    let targets = match &sc.bvp.targets {
        Some(t) => t.clone(),
        None if !bvp.is_empty() => deterministic.iter().map(|p| p.end().to_vec()).collect(),
        None => vec![],
    };
    let fig = Figure {
        title: sc.name.clone(),
        dim: sc.dimension,
        horizon: sc.horizon,
        drift: Some(&model.drift),
        noise_centers: sc.noise_centers(),
        forward: load(FORWARD_CSV)?,
        deterministic,
        bvp,
        targets,
    };
    std::fs::write(out.join(FIGURE_SVG), fig.render())?;
    Ok(())
}

/// The full scenario as configured by `[outputs]`.
pub fn run(sc: &Scenario, model: &Model, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut tally = Tally::default();
    let o = &sc.outputs;
    let det = if o.deterministic || (o.mpp_bvp && sc.bvp.targets.is_none()) {
        Some(deterministic(sc, model)?)
    } else {
        None
    };
    if o.deterministic {
        let refs: Vec<_> = det.iter().flatten().map(Some).collect();
        write_paths(&out.join(DETERMINISTIC_CSV), sc.dimension, &refs)?;
        info!("deterministic: {} trajectories", refs.len());
    }
    if o.mpp_forward {
        write_forward(sc, model, out, &mut tally)?;
    }
    if o.mpp_bvp {
        let targets = bvp_targets(sc, det.as_deref(), model)?;
        bvp(sc, model, &targets, out, &mut tally)?;
    }
    if o.ensemble.is_some() {
        ensemble(sc, model, seed, out)?;
    }
    if o.plot {
        plot(sc, model, out)?;
    }
    tally.finish()
}

pub fn write_forward(
    sc: &Scenario,
    model: &Model,
    out: &Path,
    tally: &mut Tally,
) -> Result<(), CliError> {
    let points = forward(sc, model)?;
    tally.record("forward", &points);
    let paths: Vec<_> = points.iter().map(|p| p.path.as_ref()).collect();
    write_paths(&out.join(FORWARD_CSV), sc.dimension, &paths)?;
    info!("forward: {} trajectories", paths.iter().flatten().count());
    Ok(())
}

/// OM functional of every trajectory in `csv`, in trajectory order.
pub fn om_eval(model: &Model, csv: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    read_paths(csv)?
        .into_iter()
        .map(|(id, p)| Ok((id, om_integral(&model.noise, &model.drift, &p)?)))
        .collect()
}
