//! Monte-Carlo simulation of the flow SDE in Stratonovich and Itô form, and
//! tube (sojourn) probability estimates.
//!
//! Every sample owns a ChaCha8 stream selected by its index, so results do
//! not depend on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{NoiseModel, VectorFieldSpec};
use crate::om::Path;
use crate::scalar::Scalar;

/// Time stepping scheme for [`simulate_stratonovich`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stepper {
    /// predictor-corrector, consistent with the Stratonovich integral
    #[default]
    Heun,
    /// plain Euler-Maruyama; matches the Stratonovich solution only when
    /// the noise fields are spatially constant
    EulerMaruyama,
}

#[derive(Clone, Debug)]
pub struct SdeConfig<T> {
    pub noise: NoiseModel<T>,
    pub drift: VectorFieldSpec<T>,
    pub horizon: T,
    pub steps: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub stepper: Stepper,
    /// draw separate Brownian motions per tracked point instead of one flow
    pub independent_points: bool,
    /// `‖x‖` above this counts as blow-up
    pub blowup_bound: T,
}

impl<T: Scalar> SdeConfig<T> {
    pub fn new(noise: NoiseModel<T>, drift: VectorFieldSpec<T>, horizon: T, steps: usize) -> Self {
        SdeConfig {
            noise,
            drift,
            horizon,
            steps,
            seed: 0,
            n_samples: 1,
            stepper: Stepper::Heun,
            independent_points: false,
            blowup_bound: T::lit(1e6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.horizon > T::zero()) {
            return Err(Error::InvalidInput(
                "SDE config needs steps >= 1 and a positive horizon".into(),
            ));
        }
        if self.noise.sigmas.is_empty() {
            return Err(Error::InvalidInput("SDE config has no noise fields".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<T> {
        let h = self.step_size();
        (0..=self.steps).map(|k| h * T::lit(k as f64)).collect()
    }

    fn step_size(&self) -> T {
        self.horizon / T::lit(self.steps as f64)
    }
}

/// Which SDE to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Stratonovich,
    Ito,
}

/// Itô drift `û = u + ½ Σ_j (Dσ_j) σ_j` of the Stratonovich SDE with drift `u`.
pub fn ito_drift_conversion<T: Scalar>(
    noise: &NoiseModel<T>,
    drift: &VectorFieldSpec<T>,
    t: T,
    x: &[T],
) -> Result<Vec<T>> {
    let mut out = drift.value(t, x);
    let half = T::lit(0.5);
    for s in &noise.sigmas {
        let jet = s.eval_jet(t, x, 1)?;
        for (k, o) in out.iter_mut().enumerate() {
            let corr: T = (0..x.len())
                .map(|i| jet.jacobian[k][i] * jet.value[i])
                .sum();
            *o += half * corr;
        }
    }
    Ok(out)
}

struct Integrator<'a, T> {
    cfg: &'a SdeConfig<T>,
    form: Form,
    d: usize,
}

impl<T: Scalar> Integrator<'_, T> {
    /// `u h + Σ_j σ_j ΔW_j` at `(t, x)`, added to `out`.
    fn increment(&self, t: T, x: &[T], dw: &[T], out: &mut [T]) {
        let h = self.cfg.step_size();
        self.cfg.drift.accumulate(t, x, h, out);
        for (s, &w) in self.cfg.noise.sigmas.iter().zip(dw) {
            s.accumulate(t, x, w, out);
        }
    }

    fn advance(&self, t: T, x: &mut [T], dw: &[T], k1: &mut [T], k2: &mut [T]) -> Result<()> {
        let h = self.cfg.step_size();
        k1.iter_mut().for_each(|v| *v = T::zero());
        match (self.form, self.cfg.stepper) {
            (Form::Ito, _) => {
                let uh = ito_drift_conversion(&self.cfg.noise, &self.cfg.drift, t, x)?;
                for (s, &w) in self.cfg.noise.sigmas.iter().zip(dw) {
                    s.accumulate(t, x, w, k1);
                }
                for i in 0..self.d {
                    x[i] += uh[i] * h + k1[i];
                }
            }
            (Form::Stratonovich, Stepper::EulerMaruyama) => {
                self.increment(t, x, dw, k1);
                for i in 0..self.d {
                    x[i] += k1[i];
                }
            }
            (Form::Stratonovich, Stepper::Heun) => {
                self.increment(t, x, dw, k1);
                let pred: Vec<T> = x.iter().zip(k1.iter()).map(|(&a, &b)| a + b).collect();
                k2.iter_mut().for_each(|v| *v = T::zero());
                self.increment(t + h, &pred, dw, k2);
                let half = T::lit(0.5);
                for i in 0..self.d {
                    x[i] += half * (k1[i] + k2[i]);
                }
            }
        }
        Ok(())
    }

    /// Integrate one sample, calling `visit(k, points)` after every node;
    /// stops early when `visit` returns false. Returns `BlowUp` on overflow.
    fn run(
        &self,
        sample: usize,
        x0: &[Vec<T>],
        mut visit: impl FnMut(usize, &[Vec<T>]) -> bool,
    ) -> Result<()> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(sample as u64);
        let h = cfg.step_size();
        let sqrt_h = h.sqrt();
        let j = cfg.noise.sigmas.len();
        let draws = if cfg.independent_points {
            j * x0.len()
        } else {
            j
        };
        let mut dw = vec![T::zero(); draws];
        let mut x = x0.to_vec();
        let mut k1 = vec![T::zero(); self.d];
        let mut k2 = vec![T::zero(); self.d];
        if !visit(0, &x) {
            return Ok(());
        }
        for k in 0..cfg.steps {
            let t = h * T::lit(k as f64);
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = T::lit(z) * sqrt_h;
            }
            for (p, xp) in x.iter_mut().enumerate() {
                let w = if cfg.independent_points {
                    &dw[p * j..(p + 1) * j]
                } else {
                    &dw[..]
                };
                self.advance(t, xp, w, &mut k1, &mut k2)?;
                let size = xp.iter().map(|&v| v * v).sum::<T>().sqrt();
                if !size.is_finite() || size > cfg.blowup_bound {
                    return Err(Error::BlowUp {
                        t: (t + h).as_f64(),
                        norm: size.as_f64(),
                    });
                }
            }
            if !visit(k + 1, &x) {
                return Ok(());
            }
        }
        Ok(())
    }
}

fn integrator<'a, T: Scalar>(
    cfg: &'a SdeConfig<T>,
    form: Form,
    x0: &[Vec<T>],
) -> Result<Integrator<'a, T>> {
    cfg.validate()?;
    let d = x0
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("at least one starting point is required".into()))?;
    if x0.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput(
            "starting points have inconsistent dimension".into(),
        ));
    }
    cfg.noise.validate(d)?;
    cfg.drift.validate(d)?;
    Ok(Integrator { cfg, form, d })
}

/// All simulated trajectories: `samples[s][p][k]` is point `p` of sample `s`
/// at time `times[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    pub times: Vec<T>,
    pub samples: Vec<Vec<Vec<Vec<T>>>>,
}

impl<T: Scalar> Ensemble<T> {
    /// Trajectory of one tracked point in one sample.
    pub fn path(&self, sample: usize, point: usize) -> Result<Path<T>> {
        Path::new(self.times.clone(), self.samples[sample][point].clone())
    }
}

fn simulate<T: Scalar>(cfg: &SdeConfig<T>, form: Form, x0: &[Vec<T>]) -> Result<Ensemble<T>> {
    let integ = integrator(cfg, form, x0)?;
    let samples = (0..cfg.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut traj = vec![Vec::with_capacity(cfg.steps + 1); x0.len()];
            integ.run(s, x0, |_, pts| {
                for (tr, p) in traj.iter_mut().zip(pts) {
                    tr.push(p.clone());
                }
                true
            })?;
            Ok(traj)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        times: cfg.times(),
        samples,
    })
}

/// Stratonovich SDE `dX = u dt + Σ σ_j ∘ dW^j`, one Brownian path per sample
/// shared by all points (one flow realization).
pub fn simulate_stratonovich<T: Scalar>(cfg: &SdeConfig<T>, x0: &[Vec<T>]) -> Result<Ensemble<T>> {
    simulate(cfg, Form::Stratonovich, x0)
}

/// Itô SDE `dX = û dt + Σ σ_j dW^j` by Euler-Maruyama, with `û` from
/// [`ito_drift_conversion`]. Same seeding contract as the Stratonovich form.
pub fn simulate_ito<T: Scalar>(cfg: &SdeConfig<T>, x0: &[Vec<T>]) -> Result<Ensemble<T>> {
    simulate(cfg, Form::Ito, x0)
}

/// Pointwise mean and variance over the ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary<T> {
    pub times: Vec<T>,
    pub n_samples: usize,
    /// `mean[p][k][c]`
    pub mean: Vec<Vec<Vec<T>>>,
    /// unbiased variance, same layout as `mean`
    pub variance: Vec<Vec<Vec<T>>>,
}

const CHUNK: usize = 256;

type Trajectories<T> = Vec<Vec<Vec<T>>>;

/// Streaming mean/variance of the simulated trajectories; the reduction is
/// done in fixed chunks so the result is independent of the thread count.
pub fn ensemble_summary<T: Scalar>(
    cfg: &SdeConfig<T>,
    form: Form,
    x0: &[Vec<T>],
) -> Result<EnsembleSummary<T>> {
    let integ = integrator(cfg, form, x0)?;
    let d = integ.d;
    let shape = || vec![vec![vec![T::zero(); d]; cfg.steps + 1]; x0.len()];
    // per-chunk sums of x and x² indexed [point][step][component]
    let chunks: Vec<(Trajectories<T>, Trajectories<T>)> = (0..cfg.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let (mut s1, mut s2) = (shape(), shape());
            for s in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_samples) {
                integ.run(s, x0, |k, pts| {
                    for (p, x) in pts.iter().enumerate() {
                        for i in 0..d {
                            s1[p][k][i] += x[i];
                            s2[p][k][i] += x[i] * x[i];
                        }
                    }
                    true
                })?;
            }
            Ok((s1, s2))
        })
        .collect::<Result<_>>()?;
    let (mut s1, mut s2) = (shape(), shape());
    for (a, b) in chunks {
        for p in 0..x0.len() {
            for k in 0..=cfg.steps {
                for i in 0..d {
                    s1[p][k][i] += a[p][k][i];
                    s2[p][k][i] += b[p][k][i];
                }
            }
        }
    }
    let n = T::lit(cfg.n_samples as f64);
    let denom = T::lit(cfg.n_samples.saturating_sub(1).max(1) as f64);
    let mut variance = shape();
    for p in 0..x0.len() {
        for k in 0..=cfg.steps {
            for i in 0..d {
                let m = s1[p][k][i] / n;
                variance[p][k][i] = ((s2[p][k][i] - n * m * m) / denom).max(T::zero());
                s1[p][k][i] = m;
            }
        }
    }
    Ok(EnsembleSummary {
        times: cfg.times(),
        n_samples: cfg.n_samples,
        mean: s1,
        variance,
    })
}

/// Tube around `center` of radius `epsilon` in the discrete-time sup norm.
#[derive(Clone, Debug)]
pub struct TubeQuery<T> {
    pub center: Path<T>,
    pub epsilon: T,
}

/// Fraction of samples staying inside the tube, with its binomial standard
/// error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubeEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub hits: u64,
    pub samples: u64,
}

impl TubeEstimate {
    fn new(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        TubeEstimate {
            estimate: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            hits,
            samples,
        }
    }
}

/// Linear interpolation of `path` at `times` (clamped at the ends).
fn resample<T: Scalar>(path: &Path<T>, times: &[T]) -> Vec<Vec<T>> {
    let mut j = 0;
    times
        .iter()
        .map(|&t| {
            while j + 2 < path.times.len() && path.times[j + 1] < t {
                j += 1;
            }
            let (t0, t1) = (path.times[j], path.times[j + 1]);
            let s = ((t - t0) / (t1 - t0)).max(T::zero()).min(T::one());
            path.points[j]
                .iter()
                .zip(&path.points[j + 1])
                .map(|(&a, &b)| a + s * (b - a))
                .collect()
        })
        .collect()
}

/// Tube probability for the single tracked point `x0` (Stratonovich form).
pub fn tube_probability<T: Scalar>(
    cfg: &SdeConfig<T>,
    x0: &[T],
    query: &TubeQuery<T>,
) -> Result<TubeEstimate> {
    Ok(tube_probabilities(cfg, x0, std::slice::from_ref(query))?[0])
}

/// Several tube probabilities from the same samples (common random numbers);
/// a sample is abandoned once it has left every tube.
pub fn tube_probabilities<T: Scalar>(
    cfg: &SdeConfig<T>,
    x0: &[T],
    queries: &[TubeQuery<T>],
) -> Result<Vec<TubeEstimate>> {
    let start = vec![x0.to_vec()];
    let integ = integrator(cfg, Form::Stratonovich, &start)?;
    let times = cfg.times();
    let mut centers = Vec::with_capacity(queries.len());
    for q in queries {
        q.center.validate()?;
        if !(q.epsilon > T::zero()) {
            return Err(Error::InvalidInput("tube radius must be positive".into()));
        }
        if q.center.dim() != x0.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                got: q.center.dim(),
            });
        }
        centers.push(resample(&q.center, &times));
    }
    let nq = queries.len();
    let counts: Vec<Vec<u64>> = (0..cfg.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut hits = vec![0u64; nq];
            let mut inside = vec![true; nq];
            for s in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_samples) {
                inside.iter_mut().for_each(|v| *v = true);
                let outcome = integ.run(s, &start, |k, pts| {
                    let mut any = false;
                    for (q, alive) in inside.iter_mut().enumerate() {
                        if *alive {
                            let dist2: T = pts[0]
                                .iter()
                                .zip(&centers[q][k])
                                .map(|(&a, &b)| (a - b) * (a - b))
                                .sum();
                            *alive = dist2 < queries[q].epsilon * queries[q].epsilon;
                            any |= *alive;
                        }
                    }
                    any
                });
                match outcome {
                    Ok(()) => {
                        for (h, &alive) in hits.iter_mut().zip(&inside) {
                            *h += alive as u64;
                        }
                    }
                    Err(Error::BlowUp { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let mut totals = vec![0u64; nq];
    for c in counts {
        for (t, h) in totals.iter_mut().zip(c) {
            *t += h;
        }
    }
    Ok(totals
        .into_iter()
        .map(|h| TubeEstimate::new(h, cfg.n_samples as u64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_noise_needs_no_correction() {
        let noise = NoiseModel::new(vec![VectorFieldSpec::Constant(vec![0.5, 0.2])], 0.0);
        let u = VectorFieldSpec::Constant(vec![1.0, -1.0]);
        assert_eq!(
            ito_drift_conversion(&noise, &u, 0.0, &[0.3, 0.4]).unwrap(),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn linear_noise_correction() {
        let a = vec![vec![0.3, -0.2], vec![0.5, 0.1]];
        let noise = NoiseModel::new(
            vec![VectorFieldSpec::Linear {
                matrix: a.clone(),
                offset: vec![0.0, 0.0],
            }],
            0.0,
        );
        let u = VectorFieldSpec::Constant(vec![0.0, 0.0]);
        let x = [0.7, -1.1];
        let got = ito_drift_conversion(&noise, &u, 0.0, &x).unwrap();
        let ax: Vec<f64> = (0..2).map(|i| a[i][0] * x[0] + a[i][1] * x[1]).collect();
        for i in 0..2 {
            let want = 0.5 * (a[i][0] * ax[0] + a[i][1] * ax[1]);
            assert!((got[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let mut cfg = SdeConfig::new(
            NoiseModel::brownian(2),
            VectorFieldSpec::Constant(vec![0.0, 0.0]),
            1.0,
            10,
        );
        cfg.n_samples = 3;
        cfg.seed = 7;
        let x0 = vec![vec![0.0, 0.0]];
        let a = simulate_stratonovich(&cfg, &x0).unwrap();
        let b = simulate_stratonovich(&cfg, &x0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples[0], a.samples[1]);
        cfg.seed = 8;
        assert_ne!(simulate_stratonovich(&cfg, &x0).unwrap(), a);
    }

    #[test]
    fn wide_tube_always_hit() {
        let mut cfg = SdeConfig::new(
            NoiseModel::brownian(1),
            VectorFieldSpec::Constant(vec![0.0]),
            1.0,
            50,
        );
        cfg.n_samples = 200;
        let center = Path::straight_line(&[0.0], &[0.0], 1.0, 10).unwrap();
        let est = tube_probability(
            &cfg,
            &[0.0],
            &TubeQuery {
                center,
                epsilon: 100.0,
            },
        )
        .unwrap();
        assert_eq!(est.estimate, 1.0);
    }

    #[test]
    fn resample_interpolates() {
        let p = Path::new(vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0], vec![0.0]]).unwrap();
        let r = resample(&p, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(
            r,
            vec![vec![0.0], vec![0.5], vec![1.0], vec![0.5], vec![0.0]]
        );
    }
}
