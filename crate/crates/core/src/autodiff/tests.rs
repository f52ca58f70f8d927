use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{instance_norm, BatchNorm1d, Conv1d, Conv2d, ConvTranspose1d, Dense};
use super::*;
use crate::error::{Error, Result};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut rng(seed)).requiring_grad()
}

/// Fixed random weights so a loss is not symmetric in its inputs.
fn weighted(y: &Tensor, seed: u64) -> Result<Tensor> {
    let w = Tensor::randn(y.shape(), 1.0, &mut rng(seed ^ 0xabcdef));
    Ok(y.mul(&w)?.sum())
}

fn assert_grads(params: &[Tensor], f: impl Fn() -> Result<Tensor>, tol: f64) {
    let r = grad_check(params, f, 1e-4).unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error <= tol, "max rel error {} > {tol}", r.max_rel_error);
}

#[test]
fn elementwise_binary_ops() {
    let a = randn(&[3, 4], 1);
    let b = randn(&[3, 4], 2);
    let bpos = Tensor::param(b.data().iter().map(|v| v.abs() + 0.5).collect(), &[3, 4]).unwrap();
    assert_grads(&[a.clone(), b.clone()], || weighted(&a.add(&b)?, 3), 1e-5);
    assert_grads(&[a.clone(), b.clone()], || weighted(&a.sub(&b)?, 4), 1e-5);
    assert_grads(&[a.clone(), b.clone()], || weighted(&a.mul(&b)?, 5), 1e-5);
    assert_grads(&[a.clone(), bpos.clone()], || weighted(&a.div(&bpos)?, 6), 1e-5);
}

#[test]
fn broadcasting_ops() {
    let a = randn(&[2, 3, 4], 7);
    let b = randn(&[1, 3, 1], 8);
    assert_grads(&[a.clone(), b.clone()], || weighted(&a.mul(&b)?.add(&b)?, 9), 1e-5);
    let c = randn(&[3, 1], 10);
    assert_grads(std::slice::from_ref(&c), || weighted(&c.expand(&[2, 3, 5])?, 11), 1e-5);
    assert_grads(std::slice::from_ref(&a), || weighted(&a.sum_to(&[1, 3, 1])?, 12), 1e-5);
    assert_grads(std::slice::from_ref(&a), || weighted(&a.mean_to(&[2, 1, 4])?, 13), 1e-5);
}

#[test]
fn unary_ops() {
    let x = randn(&[10], 14);
    let pos = Tensor::param(x.data().iter().map(|v| v.abs() + 0.3).collect(), &[10]).unwrap();
    let away: Vec<f64> = x.data().iter().map(|v| if v.abs() < 0.1 { v + 0.3 } else { *v }).collect();
    let away = Tensor::param(away, &[10]).unwrap();
    assert_grads(std::slice::from_ref(&x), || weighted(&x.neg(), 15), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.scale(-2.5), 16), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.add_scalar(3.0), 17), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.tanh(), 18), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.sigmoid(), 19), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.silu(), 20), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.softplus(), 21), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.exp(), 22), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&x.square(), 23), 1e-5);
    assert_grads(std::slice::from_ref(&pos), || weighted(&pos.log(), 24), 1e-5);
    assert_grads(std::slice::from_ref(&pos), || weighted(&pos.sqrt(), 25), 1e-5);
    assert_grads(std::slice::from_ref(&away), || weighted(&away.relu(), 26), 1e-5);
    assert_grads(std::slice::from_ref(&away), || weighted(&away.leaky_relu(0.2), 27), 1e-5);
    assert_grads(std::slice::from_ref(&x), || Ok(x.sum()), 1e-5);
    assert_grads(std::slice::from_ref(&x), || Ok(x.mean()), 1e-5);
}

#[test]
fn structural_ops() {
    let a = randn(&[2, 6], 28);
    let b = randn(&[2, 3], 29);
    assert_grads(std::slice::from_ref(&a), || weighted(&a.reshape(&[3, 4])?, 30), 1e-5);
    assert_grads(std::slice::from_ref(&a), || weighted(&a.transpose()?, 31), 1e-5);
    assert_grads(&[a.clone(), b.clone()], || weighted(&concat(&[a.clone(), b.clone()], 1)?, 32), 1e-5);
    assert_grads(std::slice::from_ref(&a), || weighted(&a.slice(1, 2, 3)?, 33), 1e-5);
}

#[test]
fn matmul_and_dense() {
    let a = randn(&[3, 4], 34);
    let b = randn(&[4, 5], 35);
    assert_grads(&[a.clone(), b.clone()], || weighted(&a.matmul(&b)?, 36), 1e-5);
    let d = Dense::new(4, 3, &mut rng(37));
    let params = d.parameter_tensors();
    let x = randn(&[5, 4], 38);
    let mut all = params.clone();
    all.push(x.clone());
    assert_grads(&all, || weighted(&d.forward(&x)?, 39), 1e-5);
}

#[test]
fn sum_of_product_gradient_is_ones_times_b_transpose() {
    let a = randn(&[3, 4], 40);
    let b = Tensor::randn(&[4, 2], 1.0, &mut rng(41));
    a.matmul(&b).unwrap().sum().backward().unwrap();
    let g = a.grad().unwrap();
    let bd = b.data();
    for i in 0..3 {
        for k in 0..4 {
            let expected: f64 = (0..2).map(|j| bd[k * 2 + j]).sum();
            assert!((g[i * 4 + k] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn convolutions() {
    let x = randn(&[2, 3, 9], 42);
    let c = Conv1d::new(3, 4, 4, 2, 1, &mut rng(43));
    let mut p = c.parameter_tensors();
    p.push(x.clone());
    assert_grads(&p, || weighted(&c.forward(&x)?, 44), 1e-5);

    let xt = randn(&[2, 3, 5], 45);
    let ct = ConvTranspose1d::new(3, 2, 4, 2, 1, &mut rng(46));
    let mut p = ct.parameter_tensors();
    p.push(xt.clone());
    assert_grads(&p, || weighted(&ct.forward(&xt)?, 47), 1e-5);

    let x2 = randn(&[2, 2, 5, 4], 48);
    let c2 = Conv2d::new(2, 3, 3, 1, 1, &mut rng(49));
    let mut p = c2.parameter_tensors();
    p.push(x2.clone());
    assert_grads(&p, || weighted(&c2.forward(&x2)?, 50), 1e-5);

    let c2s = Conv2d::new(2, 2, 3, 2, 1, &mut rng(51));
    let mut p = c2s.parameter_tensors();
    p.push(x2.clone());
    assert_grads(&p, || weighted(&c2s.forward(&x2)?, 52), 1e-5);
}

#[test]
fn normalization_layers() {
    let x = randn(&[4, 3, 6], 53);
    let bn = BatchNorm1d::new(3);
    bn.gamma.set_data(vec![1.5, 0.7, -1.1]).unwrap();
    let mut p = bn.parameter_tensors();
    p.push(x.clone());
    assert_grads(&p, || weighted(&bn.forward(&x, Mode::Train)?, 54), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&bn.forward(&x, Mode::Eval)?, 55), 1e-5);
    assert_grads(std::slice::from_ref(&x), || weighted(&instance_norm(&x, 1e-5)?, 56), 1e-5);
}

#[test]
fn batch_norm_running_stats_use_momentum_and_unbiased_variance() {
    let bn = BatchNorm1d::new(1);
    let x = Tensor::new(vec![1.0, 2.0, 3.0, 6.0], &[2, 1, 2]).unwrap();
    bn.forward(&x, Mode::Train).unwrap();
    // mean 3, unbiased variance 14/3
    assert!((bn.running_mean.item() - 0.3).abs() < 1e-12);
    assert!((bn.running_var.item() - (0.9 + 0.1 * 14.0 / 3.0)).abs() < 1e-12);
    let y = bn.forward(&x, Mode::Eval).unwrap();
    let std = (bn.running_var.item() + 1e-5).sqrt();
    assert!((y.data()[0] - (1.0 - bn.running_mean.item()) / std).abs() < 1e-12);
}

#[test]
fn linear_module_check_is_exact() {
    let d = Dense::new(5, 1, &mut rng(57));
    let x = Tensor::randn(&[3, 5], 1.0, &mut rng(58));
    let r = grad_check(&d.parameter_tensors(), || Ok(d.forward(&x)?.sum()), 1e-4).unwrap();
    assert!(r.max_rel_error <= 1e-9, "{}", r.max_rel_error);
}

#[test]
fn two_layer_conv_net_check() {
    let c1 = Conv1d::new(1, 4, 4, 2, 1, &mut rng(59));
    let c2 = Conv1d::new(4, 2, 3, 1, 1, &mut rng(60));
    let x = Tensor::randn(&[3, 1, 16], 1.0, &mut rng(61));
    let mut p = c1.parameter_tensors();
    p.extend(c2.parameter_tensors());
    let r = grad_check(&p, || weighted(&c2.forward(&c1.forward(&x)?.tanh())?, 62), 1e-4).unwrap();
    assert!(r.max_rel_error <= 1e-5, "{}", r.max_rel_error);
}

#[test]
fn relu_kink_is_skipped() {
    let x = Tensor::param(vec![0.0, 1.0, -1.0], &[3]).unwrap();
    let r = grad_check(std::slice::from_ref(&x), || Ok(x.relu().sum()), 1e-4).unwrap();
    assert_eq!(r.skipped, 1);
    assert_eq!(r.checked, 2);
    assert!(r.max_rel_error < 1e-9);
}

#[test]
fn trivial_forward_examples() {
    let eye = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
    assert_eq!(eye.matmul(&a).unwrap().to_vec(), a.to_vec());

    let x = Tensor::randn(&[2, 3, 10], 1.0, &mut rng(63));
    let y = x.conv1d(&Tensor::zeros(&[4, 3, 3]), 1, 1).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));

    let z = Tensor::zeros(&[1, 2, 32]);
    let up = z.conv_transpose1d(&Tensor::zeros(&[2, 1, 4]), 2, 1).unwrap();
    assert_eq!(up.shape(), &[1, 1, 64]);
}

#[test]
fn square_gradient_and_accumulation() {
    let x = Tensor::param(vec![3.0], &[]).unwrap();
    x.square().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
    x.square().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![12.0], "backward accumulates");
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn non_scalar_backward_and_shape_errors() {
    let x = randn(&[3], 64);
    assert!(matches!(x.backward(), Err(Error::Shape { .. })));
    let a = randn(&[2, 3], 65);
    let err = a.matmul(&a).unwrap_err();
    assert!(err.to_string().contains("matmul"), "{err}");
    assert!(a.add(&randn(&[4], 66)).is_err());
}

#[test]
fn unreached_parameters_get_zero_from_grad() {
    let a = randn(&[2], 67);
    let b = randn(&[2], 68);
    let g = grad(&a.sum(), &[&a, &b], false).unwrap();
    assert_eq!(g[1].to_vec(), vec![0.0, 0.0]);
}

#[test]
fn input_gradient_examples() {
    let w = Tensor::new(vec![0.5, -1.0, 2.0], &[3, 1]).unwrap();
    let x = Tensor::randn(&[4, 3], 1.0, &mut rng(69));
    let g = input_gradient(&x, |x| x.matmul(&w)).unwrap();
    for row in g.to_vec().chunks(3) {
        assert_eq!(row, &[0.5, -1.0, 2.0]);
    }
    let g = input_gradient(&x, |x| x.square().sum_to(&[4, 1])).unwrap();
    for (gv, xv) in g.to_vec().iter().zip(x.data().iter()) {
        assert!((gv - 2.0 * xv).abs() < 1e-14);
    }
    assert!(input_gradient(&x, |x| Ok(x.clone())).is_err());
}

#[test]
fn input_gradient_of_mlp_matches_finite_differences() {
    let l1 = Dense::new(3, 5, &mut rng(70));
    let l2 = Dense::new(5, 1, &mut rng(71));
    let f = |x: &Tensor| l2.forward(&l1.forward(x)?.tanh());
    let x = Tensor::randn(&[2, 3], 1.0, &mut rng(72));
    let g = input_gradient(&x, f).unwrap().to_vec();
    let eps = 1e-5;
    for i in 0..6 {
        let mut xp = x.to_vec();
        xp[i] += eps;
        let mut xm = x.to_vec();
        xm[i] -= eps;
        let fp = f(&Tensor::new(xp, &[2, 3]).unwrap()).unwrap().sum().item();
        let fm = f(&Tensor::new(xm, &[2, 3]).unwrap()).unwrap().sum().item();
        let num = (fp - fm) / (2.0 * eps);
        assert!((g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-8) < 1e-5);
    }
}

#[test]
fn second_derivative_of_cube() {
    let x = Tensor::param(vec![1.5, -2.0], &[2]).unwrap();
    let y = x.square().mul(&x).unwrap().sum();
    let g = grad(&y, &[&x], true).unwrap().remove(0);
    let gg = grad(&g.sum(), &[&x], false).unwrap().remove(0);
    assert_eq!(gg.to_vec(), vec![9.0, -12.0]);
}

/// `(‖∇ₓ D(x)‖ - 1)²` averaged over the batch, for a small conv critic.
fn penalty_of(conv: &Conv1d, head: &Dense, x: &Tensor) -> Result<Tensor> {
    let x = x.requiring_grad();
    let h = instance_norm(&conv.forward(&x)?, 1e-5)?.leaky_relu(0.2);
    let b = x.shape()[0];
    let d = head.forward(&h.reshape(&[b, h.numel() / b])?)?;
    let gx = grad(&d.sum(), &[&x], true)?.remove(0);
    let norms = gx.square().sum_to(&[b, 1, 1])?.add_scalar(1e-12).sqrt();
    Ok(norms.add_scalar(-1.0).square().mean())
}

#[test]
fn gradient_penalty_parameter_gradients() {
    let conv = Conv1d::new(1, 3, 4, 2, 1, &mut rng(73));
    let head = Dense::new(3 * 8, 1, &mut rng(74));
    let x = Tensor::randn(&[3, 1, 16], 1.0, &mut rng(75));
    let mut p = conv.parameter_tensors();
    p.extend(head.parameter_tensors());
    let r = grad_check(&p, || penalty_of(&conv, &head, &x), 1e-4).unwrap();
    assert!(r.max_rel_error <= 1e-5, "{r:?}");
}

#[test]
fn conv2d_double_backward_is_rejected() {
    let c = Conv2d::new(1, 1, 3, 1, 1, &mut rng(76));
    let x = Tensor::randn(&[1, 1, 4, 4], 1.0, &mut rng(77)).requiring_grad();
    let y = c.forward(&x).unwrap().square().sum();
    let gx = grad(&y, &[&x], true).unwrap().remove(0);
    let err = grad(&gx.square().sum(), &[&c.weight], false).unwrap_err();
    assert!(matches!(err, Error::DoubleBackward("conv2d")), "{err}");
}
