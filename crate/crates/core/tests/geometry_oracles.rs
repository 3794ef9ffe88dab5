use mpflow::fields::{NoiseModel, VectorFieldSpec};
use mpflow::geometry::{self, generator_apply, Quadratic};
use mpflow::linalg::Matrix;
use mpflow::oracles;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_kernels(shift: [f64; 2]) -> (NoiseModel<f64>, VectorFieldSpec<f64>) {
    let centers = [[-0.4, 0.1], [0.3, -0.2], [0.1, 0.5]];
    let amps = [[0.8, 0.3], [-0.2, 0.9], [0.5, -0.6]];
    let mut sigmas: Vec<_> = centers
        .iter()
        .zip(&amps)
        .map(|(c, a)| VectorFieldSpec::GaussianKernel {
            center: vec![c[0] + shift[0], c[1] + shift[1]],
            amplitude: a.to_vec(),
            width: 0.6,
        })
        .collect();
    sigmas.push(VectorFieldSpec::Constant(vec![0.3, 0.0]));
    sigmas.push(VectorFieldSpec::Constant(vec![0.0, 0.3]));
    let drift = VectorFieldSpec::KernelMomentum {
        points: vec![vec![shift[0], shift[1]]],
        momenta: vec![vec![0.4, -0.3]],
        width: 0.7,
    };
    (NoiseModel::new(sigmas, 1e-6), drift)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn flat3(t: &[Matrix<f64>]) -> Vec<f64> {
    t.iter().flatten().flatten().copied().collect()
}

#[test]
fn kernel_geometry_matches_finite_differences() {
    let (noise, u) = three_kernels([0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let md = geometry::metric_and_derivatives(&noise, 0.0, &x).unwrap();
        let fd_dg = oracles::fd_metric_gradient(&noise, 0.0, &x, 1e-4).unwrap();
        assert!(rel(&flat3(&md.first), &flat3(&fd_dg)) < 1e-5);
        let gam = geometry::christoffel(&noise, 0.0, &x).unwrap();
        let fd_gam = oracles::fd_christoffel(&noise, 0.0, &x, 1e-4).unwrap();
        assert!(rel(&flat3(&gam), &flat3(&fd_gam)) < 1e-5);
        let s = geometry::scalar_curvature(&noise, 0.0, &x).unwrap();
        let fd_s = oracles::fd_scalar_curvature(&noise, 0.0, &x, 1e-4).unwrap();
        assert!(rel(&[s], &[fd_s]) < 1e-4, "{s} vs {fd_s}");
        let jet = geometry::evaluate(&noise, &u, 0.0, &x).unwrap();
        let fd_df = oracles::fd_potential_gradient(&noise, &u, 0.0, &x, 1e-4).unwrap();
        assert!(rel(&jet.df, &fd_df) < 1e-4);
        let brute = oracles::brute_force_cometric(&noise, 0.0, &x);
        assert!(rel(&jet.cometric.concat(), &brute.concat()) < 1e-14);
    }
}

#[test]
fn generator_identity_and_metric_compatibility() {
    let (noise, u) = three_kernels([0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a01 = rng.random_range(-1.0..1.0);
        let phi = Quadratic {
            c: rng.random_range(-1.0..1.0),
            b: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            a: vec![
                vec![rng.random_range(-1.0..1.0), a01],
                vec![a01, rng.random_range(-1.0..1.0)],
            ],
        };
        let jet = geometry::evaluate(&noise, &u, 0.0, &x).unwrap();
        let direct = generator_apply(&noise, &u, 0.0, &x, &phi).unwrap();
        assert!((jet.generator(&phi, &x) - direct).abs() < 1e-8);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut rhs = 0.0;
                    for l in 0..2 {
                        rhs += jet.christoffel[l][k][i] * jet.metric[l][j]
                            + jet.christoffel[l][k][j] * jet.metric[l][i];
                    }
                    assert!((jet.metric_grad[k][i][j] - rhs).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn geodesics_conserve_speed() {
    let (noise, _) = three_kernels([0.0, 0.0]);
    let drift =
        oracles::geodesic_energy_drift(&noise, &[-0.5, -0.3], &[0.8, 0.5], 1.0, 400).unwrap();
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn translation_invariance() {
    let shift = [0.7, -0.35];
    let (n0, u0) = three_kernels([0.0, 0.0]);
    let (n1, u1) = three_kernels(shift);
    let x = [0.2, 0.1];
    let a = geometry::evaluate(&n0, &u0, 0.0, &x).unwrap();
    let b = geometry::evaluate(&n1, &u1, 0.0, &[x[0] + shift[0], x[1] + shift[1]]).unwrap();
    assert!(rel(&[a.f, a.scalar_curvature], &[b.f, b.scalar_curvature]) < 1e-12);
    assert!(rel(&flat3(&a.christoffel), &flat3(&b.christoffel)) < 1e-12);
    assert!(rel(&a.z, &b.z) < 1e-12);
}
