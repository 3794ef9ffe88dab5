use mpflow::epdiff1d::{epdiff_integrate, optu_integrate, DriftField, GridState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| std::f64::consts::TAU * i as f64 / n as f64)
        .collect()
}

/// Random trigonometric polynomial with modes `1..=kmax`.
fn band_limited(rng: &mut ChaCha8Rng, n: usize, kmax: usize, offset: f64) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (0..kmax)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    nodes(n)
        .iter()
        .map(|&x| {
            offset
                + coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let k = (k + 1) as f64;
                        (a * (k * x).cos() + b * (k * x).sin()) / (k * k)
                    })
                    .sum::<f64>()
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    std::f64::consts::TAU / a.len() as f64 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

#[test]
fn helmholtz_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
    let st = GridState::from_velocity(0.8, vec![0.0; 128], vec![]).unwrap();
    let back = st.helmholtz_invert(&st.helmholtz_apply(&v));
    assert!(max_diff(&back, &v) < 1e-10);
    let c = st.helmholtz_apply(&vec![1.5; 128]);
    assert!(c.iter().all(|&v| (v - 1.5).abs() < 1e-13));
}

#[test]
fn rhs_of_cosine_matches_trig_identity() {
    let x = nodes(256);
    let u: Vec<f64> = x.iter().map(|&x| x.cos()).collect();
    let st = GridState::from_velocity(1.0, u, vec![]).unwrap();
    let want: Vec<f64> = x.iter().map(|&x| 3.0 * (2.0 * x).sin()).collect();
    assert!(max_diff(&st.epdiff_rhs(), &want) < 1e-10);
}

#[test]
fn energy_is_conserved() {
    let x = nodes(256);
    let u: Vec<f64> = x.iter().map(|&x| x.cos() + 0.3 * (2.0 * x).sin()).collect();
    let st = GridState::from_velocity(1.0, u, vec![]).unwrap();
    let hist = epdiff_integrate(&st, 1.0, 200, 10).unwrap();
    let e = hist.energies().unwrap();
    let drift = e.iter().fold(0.0f64, |m, v| m.max((v - e[0]).abs())) / e[0];
    assert!(drift < 1e-4, "{drift}");
    assert!((st.x_energy() - st.x_energy_spectral()).abs() / st.x_energy() < 1e-10);
}

#[test]
fn optu_without_noise_is_epdiff() {
    let x = nodes(128);
    let u: Vec<f64> = x.iter().map(|&x| 0.5 * x.sin()).collect();
    let plain = GridState::from_velocity(1.0, u.clone(), vec![]).unwrap();
    let zero_noise = GridState::from_velocity(1.0, u, vec![vec![0.0; 128]]).unwrap();
    let a = epdiff_integrate(&plain, 1.0, 100, 4).unwrap();
    let b = optu_integrate(&zero_noise, 1.0, 100, 4).unwrap();
    for (p, q) in a.u.iter().zip(&b.u) {
        assert!(max_diff(p, q) < 1e-12);
    }
}

#[test]
fn box_matches_sigma_squared_second_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = nodes(64);
    let sigma: Vec<f64> = x.iter().map(|&x| 1.0 + 0.3 * x.sin()).collect();
    let st = GridState::from_velocity(1.0, vec![0.0; 64], vec![sigma.clone()]).unwrap();
    let v = band_limited(&mut rng, 64, 6, 0.0);
    let vxx = st.spectral().derivative(&v, 2);
    let want: Vec<f64> = (0..64).map(|i| sigma[i] * sigma[i] * vxx[i]).collect();
    assert!(max_diff(&st.box_apply(&v), &want) < 1e-9);

    let c = GridState::from_velocity(1.0, vec![0.0; 64], vec![vec![0.7; 64]]).unwrap();
    let s: Vec<f64> = x.iter().map(|&x| x.sin()).collect();
    let want: Vec<f64> = s.iter().map(|&v| -0.49 * v).collect();
    assert!(max_diff(&c.box_apply(&s), &want) < 1e-12);
    let none = GridState::from_velocity(1.0, vec![0.0; 64], vec![]).unwrap();
    assert!(none.box_apply(&s).iter().all(|&v| v == 0.0));
}

#[test]
fn box_symmetry_in_x_inner_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 64;
    let st =
        GridState::from_velocity(0.9, vec![0.0; n], vec![vec![0.6; n], vec![-0.3; n]]).unwrap();
    for _ in 0..5 {
        let v = band_limited(&mut rng, n, 8, 0.2);
        let w = band_limited(&mut rng, n, 8, -0.1);
        let lhs = inner(&st.helmholtz_apply(&st.box_apply(&v)), &w);
        let rhs = inner(&st.helmholtz_apply(&v), &st.box_apply(&w));
        assert!((lhs - rhs).abs() < 1e-8);
    }
}

#[test]
fn box_is_not_symmetric_for_variable_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 64;
    let sigma: Vec<f64> = nodes(n).iter().map(|&x| 1.0 + 0.5 * x.sin()).collect();
    let st = GridState::from_velocity(1.0, vec![0.0; n], vec![sigma]).unwrap();
    let v = band_limited(&mut rng, n, 4, 0.0);
    let w = band_limited(&mut rng, n, 4, 0.0);
    let lhs = inner(&st.helmholtz_apply(&st.box_apply(&v)), &w);
    let rhs = inner(&st.helmholtz_apply(&v), &st.box_apply(&w));
    assert!((lhs - rhs).abs() > 1e-3);
}

#[test]
fn flat_connection_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 64;
    let st = GridState::from_velocity(1.0, vec![0.0; n], vec![]).unwrap();
    let sp = st.spectral();
    let (u, v, w) = (
        band_limited(&mut rng, n, 4, 0.3),
        band_limited(&mut rng, n, 4, -0.2),
        band_limited(&mut rng, n, 4, 0.1),
    );
    let cov = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let bx = sp.derivative(b, 1);
        a.iter().zip(&bx).map(|(p, q)| p * q).collect()
    };
    let bracket = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let (ab, ba) = (cov(a, b), cov(b, a));
        ab.iter().zip(&ba).map(|(p, q)| p - q).collect()
    };
    assert!(max_diff(&st.hessian_apply(&v, &w, &u), &st.hessian_apply(&w, &v, &u)) < 1e-8);
    let t1 = bracket(&u, &cov(&v, &w));
    let t2 = cov(&bracket(&u, &v), &w);
    let t3 = cov(&v, &bracket(&u, &w));
    let lhs: Vec<f64> = (0..n).map(|i| t1[i] - t2[i] - t3[i]).collect();
    assert!(max_diff(&lhs, &st.hessian_apply(&v, &w, &u)) < 1e-8);
}

#[test]
fn small_noise_perturbation_scales_quadratically() {
    let n = 64;
    let x = nodes(n);
    let u: Vec<f64> = x
        .iter()
        .map(|&x| 0.2 * x.cos() + 0.1 * (2.0 * x).sin())
        .collect();
    let base = epdiff_integrate(
        &GridState::from_velocity(1.0, u.clone(), vec![]).unwrap(),
        1.0,
        200,
        1,
    )
    .unwrap();
    let dist = |s: f64| {
        let st = GridState::from_velocity(1.0, u.clone(), vec![vec![s; n]]).unwrap();
        let h = optu_integrate(&st, 1.0, 200, 1).unwrap();
        assert!(h.warnings.is_empty(), "{:?}", h.warnings);
        max_diff(&h.u[1], &base.u[1])
    };
    let ratio = dist(0.1) / dist(0.05);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn rk4_converges_at_fourth_order() {
    let n = 64;
    let x = nodes(n);
    let u: Vec<f64> = x
        .iter()
        .map(|&x| 0.6 * x.cos() + 0.2 * (2.0 * x).sin())
        .collect();
    let st = GridState::from_velocity(1.0, u, vec![vec![0.1; n]]).unwrap();
    let end = |steps: usize| optu_integrate(&st, 1.0, steps, 1).unwrap().u[1].clone();
    let reference = end(1280);
    let (e1, e2) = (
        max_diff(&end(20), &reference),
        max_diff(&end(40), &reference),
    );
    let order = (e1 / e2).log2();
    assert!((3.5..4.5).contains(&order), "{order}");
}

#[test]
fn drift_field_reproduces_snapshots() {
    let x = nodes(64);
    let u: Vec<f64> = x.iter().map(|&x| 0.5 * x.sin()).collect();
    let hist = epdiff_integrate(
        &GridState::from_velocity(1.0, u, vec![]).unwrap(),
        0.5,
        50,
        5,
    )
    .unwrap();
    let field = DriftField::new(&hist, None).unwrap();
    for (t, snap) in hist.times.iter().zip(&hist.u) {
        for (i, &xi) in x.iter().enumerate().step_by(7) {
            assert!((field.value(*t, xi) - snap[i]).abs() < 1e-12);
        }
    }
}
