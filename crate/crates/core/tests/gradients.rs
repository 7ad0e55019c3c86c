use ndarray::{Array1, Array2};
use tilted_vae::sampler::RngStream;
use tilted_vae::tilted::TiltedPrior;
use tilted_vae::vae::{tilted_kld_grad, Prior, VaeModel};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn quadratic_kld_gradient_matches_finite_differences() {
    let mut rng = RngStream::new(11);
    for _ in 0..20 {
        let d = 1 + rng.below(6);
        let mu = Array1::from_shape_fn(d, |_| 3.0 * rng.normal());
        let gamma = 5.0 * rng.uniform();
        let f = |m: &Array1<f64>| 0.5 * (m.dot(m).sqrt() - gamma).powi(2);
        let g = tilted_kld_grad(mu.view(), gamma);
        for i in 0..d {
            let h = 1e-5 * mu[i].abs().max(1.0);
            let (mut p, mut m) = (mu.clone(), mu.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!(rel_err(g[i], fd) < 1e-5 || (g[i] - fd).abs() < 1e-9, "{} vs {}", g[i], fd);
        }
    }
}

fn check_model(prior: Prior, seed: u64) {
    let model = VaeModel::new(8, 3, prior, &[5], seed).unwrap();
    let mut rng = RngStream::substream(seed, 99);
    let x = Array2::from_shape_fn((4, 8), |_| rng.uniform());
    let eps = Array2::from_shape_fn((4, 3), |_| rng.normal());
    let (_, grads) = model.loss_with_noise(x.view(), eps.view(), true).unwrap();
    let analytic = grads.unwrap().flatten();
    let params = model.parameters();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, &p0) in params.iter().enumerate() {
        let h = 1e-5 * p0.abs().max(1.0);
        let mut eval = |v: f64| {
            let mut p = params.clone();
            p[k] = v;
            probe.set_parameters(&p).unwrap();
            probe.loss_with_noise(x.view(), eps.view(), false).unwrap().0.total()
        };
        let fd = (eval(p0 + h) - eval(p0 - h)) / (2.0 * h);
        let err = if analytic[k].abs().max(fd.abs()) < 1e-6 {
            (analytic[k] - fd).abs()
        } else {
            rel_err(analytic[k], fd)
        };
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "{prior:?}: worst relative error {worst:e}");
}

#[test]
fn full_elbo_gradient_matches_finite_differences() {
    for seed in 0..4 {
        check_model(Prior::Tilted(TiltedPrior::new(3.0, 3).unwrap()), seed);
        check_model(Prior::Gaussian, seed);
        check_model(Prior::GaussianUnitSigma, seed);
    }
}
