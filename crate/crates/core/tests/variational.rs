use mpflow::fields::{NoiseModel, VectorFieldSpec};
use mpflow::mpp::{integrate_mpp, shoot, MppOptions, ShootingProblem};
use mpflow::om::{direct_minimize, om_gradient, om_integral, MinimizeOptions, Path};

fn conformal() -> (NoiseModel<f64>, VectorFieldSpec<f64>) {
    let noise = NoiseModel::new(
        (0..2)
            .map(|k| VectorFieldSpec::ConformalAxis {
                dim: 2,
                axis: k,
                beta: 0.3,
            })
            .collect(),
        1e-9,
    );
    (noise, VectorFieldSpec::Constant(vec![0.2, -0.1]))
}

fn single_kernel() -> (NoiseModel<f64>, VectorFieldSpec<f64>) {
    let mut sigmas = Vec::new();
    for k in 0..2 {
        let mut a = vec![0.0; 2];
        a[k] = 0.1;
        sigmas.push(VectorFieldSpec::GaussianKernel {
            center: vec![0.0, 0.0],
            amplitude: a.clone(),
            width: 0.5,
        });
        sigmas.push(VectorFieldSpec::Constant(a));
    }
    let drift = VectorFieldSpec::KernelMomentum {
        points: vec![vec![-0.5, -0.5], vec![0.5, -0.5]],
        momenta: vec![vec![0.0, 0.5], vec![0.0, 0.5]],
        width: 0.5,
    };
    (NoiseModel::new(sigmas, 1e-4), drift)
}

fn cross_check(noise: &NoiseModel<f64>, u: &VectorFieldSpec<f64>, x0: [f64; 2], xt: [f64; 2]) {
    let n = 200;
    let prob = ShootingProblem::new(x0.to_vec(), xt.to_vec(), 1.0);
    let opts = MppOptions::default();
    let shot = shoot(noise, u, &prob, n, &opts).unwrap();
    let (_, g) = om_gradient(noise, u, &shot.path).unwrap();
    let gmax = g[1..n].iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let init = Path::straight_line(&x0, &xt, 1.0, n).unwrap();
    let min = direct_minimize(noise, u, &init, &MinimizeOptions::default()).unwrap();
    let j_shot = om_integral(noise, u, &shot.path).unwrap();
    let sup = shot.path.sup_distance(&min.path);
    println!(
        "grad {gmax:e} sup {sup:e} J {j_shot} vs {} iters {}",
        min.value, min.iterations
    );
    assert!(gmax < 1e-3);
    assert!(sup < 1e-3);
    assert!(((j_shot - min.value) / min.value).abs() < 1e-4);
    let _ = integrate_mpp(noise, u, &x0, &shot.v0, 1.0, n, &opts).unwrap();
}

#[test]
fn conformal_shoot_matches_minimizer() {
    let (noise, u) = conformal();
    cross_check(&noise, &u, [-0.8, -0.2], [0.9, 0.4]);
}

#[test]
fn single_kernel_shoot_matches_minimizer() {
    let (noise, u) = single_kernel();
    cross_check(&noise, &u, [-0.6, -0.5], [0.7, 0.4]);
}
