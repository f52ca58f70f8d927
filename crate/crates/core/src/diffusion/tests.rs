use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gaussian::{gaussian_kl, gaussian_nll, mu_from_eps, posterior_params, q_sample};
use super::losses::{prior_kl, vlb_term};
use super::*;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::imaging::tsim::ImageBatch;

struct FnModel<F>(F);

impl<F: Fn(&Tensor, &[usize]) -> Result<ModelOutput>> EpsModel for FnModel<F> {
    fn predict(&self, x_t: &Tensor, t: &[usize]) -> Result<ModelOutput> {
        (self.0)(x_t, t)
    }
}

/// Recovers the exact noise from `x_t` given the clean batch.
fn oracle_eps(s: &NoiseSchedule, x0: &Tensor, x_t: &Tensor, t: &[usize]) -> Tensor {
    let b = t.len();
    let d = x0.numel() / b;
    let (x0d, xtd) = (x0.data(), x_t.data());
    let eps = (0..b * d)
        .map(|i| {
            let ab = s.alpha_bar(t[i / d]);
            (xtd[i] - ab.sqrt() * x0d[i]) / (1.0 - ab).sqrt()
        })
        .collect();
    Tensor::new(eps, x0.shape()).unwrap()
}

fn batch(seed: u64, shape: &[usize]) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
    (Tensor::new(x0, shape).unwrap(), Tensor::randn(shape, 1.0, &mut rng))
}

#[test]
fn simple_loss_is_zero_for_oracle_and_one_for_zero_model() {
    let s = linear_schedule(50).unwrap();
    let (x0, noise) = batch(1, &[64, 1, 4, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t: Vec<usize> = (0..64).map(|_| rng.random_range(1..=50)).collect();
    let w = vec![1.0; 64];
    let oracle = FnModel(|xt: &Tensor, t: &[usize]| {
        Ok(ModelOutput { eps: oracle_eps(&s, &x0, xt, t), v: None })
    });
    let out = compute_losses(&oracle, &s, Objective::Simple, 0.0, &x0, &t, &w, &noise).unwrap();
    assert!(out.loss.item().abs() < 1e-20);

    let (x0, noise) = batch(3, &[400, 1, 8, 8]);
    let t: Vec<usize> = (0..400).map(|_| rng.random_range(1..=50)).collect();
    let zero = FnModel(|xt: &Tensor, _: &[usize]| Ok(ModelOutput { eps: Tensor::zeros(xt.shape()), v: None }));
    let out = compute_losses(&zero, &s, Objective::Simple, 0.0, &x0, &t, &vec![1.0; 400], &noise).unwrap();
    assert!((out.loss.item() - 1.0).abs() < 0.02, "{}", out.loss.item());
    assert!(out.loss.item() >= 0.0);
}

#[test]
fn vlb_terms_vanish_for_exact_posterior() {
    let s = cosine_schedule(20, 0.008).unwrap();
    let (x0, noise) = batch(4, &[20, 1, 3, 3]);
    let t: Vec<usize> = (1..=20).collect();
    let oracle = FnModel(|xt: &Tensor, t: &[usize]| {
        Ok(ModelOutput {
            eps: oracle_eps(&s, &x0, xt, t),
            v: Some(Tensor::zeros(xt.shape())),
        })
    });
    let out = compute_losses(&oracle, &s, Objective::Vlb, 0.0, &x0, &t, &[1.0; 20], &noise).unwrap();
    for (k, v) in out.per_sample.iter().enumerate().skip(1) {
        assert!(v.abs() < 1e-9, "t={} term {v}", k + 1);
    }
}

#[test]
fn tensor_losses_agree_with_scalar_terms() {
    let s = linear_schedule(10).unwrap();
    let (x0, noise) = batch(5, &[4, 2, 1, 3]);
    let t = [1, 3, 7, 10];
    let w = [0.5, 1.0, 2.0, 1.5];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps_hat = Tensor::randn(&[4, 2, 1, 3], 0.5, &mut rng);
    let v = Tensor::new((0..24).map(|_| rng.random_range(-0.5..1.5)).collect(), &[4, 2, 1, 3]).unwrap();
    let model = FnModel(|_: &Tensor, _: &[usize]| Ok(ModelOutput { eps: eps_hat.clone(), v: Some(v.clone()) }));
    let out = compute_losses(&model, &s, Objective::Vlb, 0.0, &x0, &t, &w, &noise).unwrap();
    let (x0d, nd, ed, vd) = (x0.data(), noise.data(), eps_hat.data(), v.data());
    let mut total = 0.0;
    for k in 0..4 {
        let r = k * 6..(k + 1) * 6;
        let xt = q_sample(&s, &x0d[r.clone()], t[k], &nd[r.clone()]).unwrap();
        let term = vlb_term(&s, &x0d[r.clone()], &xt, t[k], &ed[r.clone()], Some(&vd[r.clone()])).unwrap();
        assert!((term - out.per_sample[k]).abs() < 1e-12);
        total += prior_kl(&s, &x0d[r]) + 10.0 * w[k] * term;
    }
    assert!((out.loss.item() - total / 4.0).abs() < 1e-10);
}

#[test]
fn hybrid_with_zero_lambda_equals_simple_and_stops_eps_gradient() {
    let s = cosine_schedule(10, 0.008).unwrap();
    let (x0, noise) = batch(7, &[3, 1, 2, 2]);
    let t = [2, 5, 9];
    let w = [1.0; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e = Tensor::randn(&[3, 1, 2, 2], 1.0, &mut rng).requiring_grad();
    let v = Tensor::randn(&[3, 1, 2, 2], 0.3, &mut rng).requiring_grad();
    let model = FnModel(|_: &Tensor, _: &[usize]| Ok(ModelOutput { eps: e.clone(), v: Some(v.clone()) }));

    let simple = compute_losses(&model, &s, Objective::Simple, 0.0, &x0, &t, &w, &noise).unwrap();
    let h0 = compute_losses(&model, &s, Objective::Hybrid, 0.0, &x0, &t, &w, &noise).unwrap();
    assert_eq!(simple.loss.item(), h0.loss.item());

    simple.loss.backward().unwrap();
    let g_simple = e.grad().unwrap();
    e.zero_grad();
    let h = compute_losses(&model, &s, Objective::Hybrid, 0.5, &x0, &t, &w, &noise).unwrap();
    h.loss.backward().unwrap();
    assert_eq!(e.grad().unwrap(), g_simple);
    assert!(v.grad().unwrap().iter().any(|g| *g != 0.0));
    assert!(compute_losses(&model, &s, Objective::Hybrid, -1.0, &x0, &t, &w, &noise).is_err());
}

#[test]
fn scalar_gaussian_terms_match_quadrature() {
    let s = cosine_schedule(3, 0.008).unwrap();
    let x0 = 0.4;
    let e = -0.7;
    let eps_hat = 0.2;
    let v = 0.3;
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let n = 40_000;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let logd = |x: f64, m: f64, var: f64| -(x - m).powi(2) / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let kl_integrand = |y: f64, m1: f64, v1: f64, m2: f64, v2: f64| logd(y, m1, v1).exp() * (logd(y, m1, v1) - logd(y, m2, v2));
    for t in 1..=3 {
        let xt = q_sample(&s, &[x0], t, &[e]).unwrap();
        let got = vlb_term(&s, &[x0], &xt, t, &[eps_hat], Some(&[v])).unwrap();
        let mu = mu_from_eps(&s, &xt, t, &[eps_hat]).unwrap()[0];
        let var = (v * s.beta(t).ln() + (1.0 - v) * s.log_beta_tilde_clipped(t)).exp();
        let expect = if t == 1 {
            -logd(x0, mu, var)
        } else {
            let (pm, pv) = posterior_params(&s, &[x0], &xt, t).unwrap();
            let sd = pv.sqrt();
            simpson(&|y| kl_integrand(y, pm[0], pv, mu, var), pm[0] - 14.0 * sd, pm[0] + 14.0 * sd)
        };
        assert!((got - expect).abs() < 1e-5, "t={t}: {got} vs {expect}");
    }
    let ab = s.alpha_bar(3);
    let sd = (1.0 - ab).sqrt();
    let m = ab.sqrt() * x0;
    let lt = simpson(&|y| kl_integrand(y, m, 1.0 - ab, 0.0, 1.0), m - 14.0 * sd, m + 14.0 * sd);
    assert!((prior_kl(&s, &[x0]) - lt).abs() < 1e-5);
    assert_eq!(gaussian_nll(0.0, 0.0, 1.0), 0.5 * (2.0 * std::f64::consts::PI).ln());
    assert!(gaussian_kl(0.0, 1.0, 0.0, 1.0).unwrap() == 0.0);
}

#[test]
fn prior_term_vanishes_as_signal_disappears() {
    let s = cosine_schedule(1000, 0.008).unwrap();
    assert!(prior_kl(&s, &[1.0, -1.0, 0.3]) < 1e-6);
}

#[test]
fn final_step_without_noise_returns_model_mean() {
    let s = linear_schedule(1).unwrap();
    let c = 0.37;
    let (ra, ec) = gaussian::mu_coefs(&s, 1);
    let m = FnModel(move |xt: &Tensor, _: &[usize]| {
        let eps = xt.data().iter().map(|x| (x - c / ra) / ec).collect();
        Ok(ModelOutput { eps: Tensor::new(eps, xt.shape())?, v: None })
    });
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let out = ancestral_sample(&m, &s, &[5, 2], &mut rng).unwrap();
    assert!(out.iter().all(|v| (v - c).abs() < 1e-12), "{out:?}");
}

#[test]
fn gaussian_toy_sampling_matches_target_moments() {
    let s = linear_schedule(1000).unwrap();
    let (mean, var) = (2.0, 0.25);
    let m = FnModel(|xt: &Tensor, t: &[usize]| {
        let ab = s.alpha_bar(t[0]);
        let eps = xt
            .data()
            .iter()
            .map(|x| (1.0 - ab).sqrt() * (x - ab.sqrt() * mean) / (ab * var + 1.0 - ab))
            .collect();
        Ok(ModelOutput { eps: Tensor::new(eps, xt.shape())?, v: None })
    });
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 10_000;
    let x = ancestral_sample(&m, &s, &[n, 1], &mut rng).unwrap();
    let mu = x.iter().sum::<f64>() / n as f64;
    let v = x.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mu - mean).abs() / mean < 0.05, "mean {mu}");
    assert!((v - var).abs() / var < 0.05, "var {v}");
}

#[test]
fn inactive_clip_matches_the_plain_chain() {
    let s = cosine_schedule(20, 0.008).unwrap();
    let m = FnModel(|xt: &Tensor, _: &[usize]| Ok(ModelOutput { eps: xt.scale(0.1), v: None }));
    let plain = ancestral_sample(&m, &s, &[4, 3], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let wide = ancestral_sample_clipped(&m, &s, &[4, 3], Some((-1e300, 1e300)), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for (a, b) in plain.iter().zip(&wide) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn clipped_chain_stays_in_range_with_a_useless_model() {
    let s = cosine_schedule(20, 0.008).unwrap();
    let m = FnModel(|xt: &Tensor, _: &[usize]| Ok(ModelOutput { eps: xt.scale(0.0), v: None }));
    let x = ancestral_sample_clipped(&m, &s, &[50, 2], Some((-1.0, 1.0)), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(x.iter().all(|v| v.abs() <= 1.0 + 1e-12), "{x:?}");
}

fn toy_images(n: usize, seed: u64) -> ImageBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * 4 * 4).map(|_| rng.random_range(-0.5..0.5)).collect();
    ImageBatch::new(3, 4, 4, data).unwrap()
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let data = toy_images(8, 11);
    let cfg = DdpmTrainConfig { steps: 5, batch_size: 4, diffusion_steps: 10, hidden: 4, time_dim: 4, lr: 1e-3, seed: 3 };
    for id in ["00", "01", "02"] {
        let case = CaseConfig::case(id).unwrap();
        let (m1, tr1) = train_ddpm(&data, case, &cfg).unwrap();
        let (_, tr2) = train_ddpm(&data, case, &cfg).unwrap();
        assert_eq!(tr1, tr2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsnn");
        m1.save(&path).unwrap();
        let m2 = DdpmModel::load(&path).unwrap();
        assert_eq!(m2.case, case);
        assert_eq!(m1.sample(3, 4).unwrap(), m2.sample(3, 4).unwrap());
    }
}

#[test]
fn case_table() {
    let c0 = CaseConfig::case("00").unwrap();
    assert_eq!((c0.learn_sigma, c0.schedule, c0.objective, c0.sampler), (false, ScheduleKind::Linear, Objective::Simple, SamplerKind::Uniform));
    let c2 = CaseConfig::case("02").unwrap();
    assert_eq!((c2.learn_sigma, c2.schedule, c2.objective, c2.sampler), (true, ScheduleKind::Cosine, Objective::Vlb, SamplerKind::LossSecondMoment));
    assert!(CaseConfig::case("03").is_err());
    let bad = CaseConfig { objective: Objective::Hybrid, ..c0 };
    assert!(bad.validate().is_err());
}

#[test]
fn non_finite_loss_aborts_with_step() {
    let data = ImageBatch::new(3, 2, 2, vec![f64::NAN; 12]).unwrap();
    let cfg = DdpmTrainConfig { steps: 3, batch_size: 1, diffusion_steps: 5, hidden: 2, time_dim: 2, lr: 1e-3, seed: 0 };
    let case = CaseConfig::case("01").unwrap();
    match train_ddpm(&data, case, &cfg) {
        Err(crate::Error::Divergence { step }) => assert_eq!(step, 1),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("expected divergence"),
    }
}
