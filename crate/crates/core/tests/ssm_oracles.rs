mod common;

use dgssm_core::nn::gradcheck::{grad_check_inputs, DEFAULT_EPS};
use dgssm_core::nn::{Tape, Tensor, Var};
use dgssm_core::ssm::{discretize, init_s4d, kernel_table, kernel_table_var, ssm_scan_reference, SsmParams};
use dgssm_core::Result;
use proptest::prelude::*;
use rand::Rng;

fn random_params(seed: u64, state: usize, width: usize) -> SsmParams {
    init_s4d(state, width, 0.01, 1.0, seed).unwrap()
}

fn random_seq(rng: &mut impl Rng, len: usize, width: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..width).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
}

/// Classical RK4 on `h' = a h + b u` with `u` held constant.
fn rk4(a: f64, b: f64, u: f64, h0: f64, t: f64, steps: usize) -> f64 {
    let f = |h: f64| a * h + b * u;
    let dt = t / steps as f64;
    let mut h = h0;
    for _ in 0..steps {
        let k1 = f(h);
        let k2 = f(h + 0.5 * dt * k1);
        let k3 = f(h + 0.5 * dt * k2);
        let k4 = f(h + dt * k3);
        h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    h
}

#[test]
fn one_step_matches_integrated_ode() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let a = -rng.random_range(0.2..5.0);
        let dt = rng.random_range(0.01..1.0);
        let b = rng.random_range(-2.0..2.0);
        let p = SsmParams::from_parts(&[a], &[dt], vec![b], vec![1.0], 1).unwrap();
        let disc = discretize(&p).unwrap();
        let h0 = rng.random_range(-1.0..1.0);
        let u = rng.random_range(-1.0..1.0);
        let step = disc.a_bar[0] * h0 + disc.b_bar[0] * u;
        let exact = rk4(a, b, u, h0, dt, 2000);
        assert!((step - exact).abs() < 1e-10, "a={a} dt={dt}: {step} vs {exact}");
        assert!(disc.a_bar[0] > 0.0 && disc.a_bar[0] < 1.0);
    }
}

#[test]
fn impulse_response_reproduces_table() {
    for seed in 0..10 {
        let (state, width, k) = (4, 5, 6);
        let p = random_params(seed, state, width);
        let table = kernel_table(&p, k).unwrap();
        for j in 0..width {
            let mut xs = vec![vec![0.0; width]; k + 1];
            xs[0][j] = 1.0;
            let ys = ssm_scan_reference(&p, &xs).unwrap();
            for (step, y) in ys.iter().enumerate() {
                for i in 0..width {
                    assert!((y[i] - table.get(step, i, j)).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn zero_input_gives_zero_output() {
    let p = random_params(3, 4, 3);
    let ys = ssm_scan_reference(&p, &vec![vec![0.0; 3]; 5]).unwrap();
    assert!(ys.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn powers_of_the_state_matrix_decay() {
    let p = random_params(5, 6, 2);
    let disc = discretize(&p).unwrap();
    let sup = |k: i32| disc.a_bar.iter().map(|a| a.powi(k).abs()).fold(0.0, f64::max);
    assert_eq!(sup(0), 1.0);
    for k in 0..20 {
        assert!(sup(k + 1) < sup(k));
    }
}

#[test]
fn convolution_matches_recurrence_on_random_instances() {
    let mut rng = common::rng(21);
    for seed in 0..30 {
        let len = rng.random_range(1..=32);
        let width = rng.random_range(1..=32);
        let state = rng.random_range(1..=16);
        let p = random_params(seed, state, width);
        let xs = random_seq(&mut rng, len, width);
        let table = kernel_table(&p, len - 1).unwrap();
        let conv = table.convolve(&xs);
        let rec = ssm_scan_reference(&p, &xs).unwrap();
        for (a, b) in conv.iter().zip(&rec) {
            assert!(common::max_abs_diff(a, b) <= 1e-10);
        }
    }
}

#[test]
fn differentiable_table_matches_plain_table() {
    for seed in 0..5 {
        let (state, width, k) = (3, 4, 5);
        let p = random_params(seed, state, width);
        let plain = kernel_table(&p, k).unwrap();
        let tape = Tape::new(false);
        let c = |v: &[f64], s: &[usize]| tape.constant(Tensor::from_f64(s.to_vec(), v).unwrap());
        let t = kernel_table_var(
            &tape,
            c(&p.a_raw, &[state]),
            c(&p.log_dt, &[state]),
            c(&p.b, &[state, width]),
            c(&p.c, &[width, state]),
            k,
        )
        .unwrap()
        .value();
        assert_eq!(t.shape(), &[k + 1, width, width]);
        let flat: Vec<f64> = plain.mats.iter().flatten().copied().collect();
        assert!(common::max_abs_diff(&t.to_f64(), &flat) < 1e-13);
    }
}

fn table_loss<'t>(tape: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
    let t = kernel_table_var(tape, x[0], x[1], x[2], x[3], 4)?;
    let w = tape.constant(Tensor::from_f64(
        [5, 3, 3],
        &(0..45).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect::<Vec<_>>(),
    )?);
    Ok(t.mul(w)?.sum_all())
}

#[test]
fn kernel_table_gradient() {
    let p = random_params(8, 2, 3);
    let inputs = vec![
        Tensor::from_f64([2], &p.a_raw).unwrap(),
        Tensor::from_f64([2], &[-0.7, -1.6]).unwrap(),
        Tensor::from_f64([2, 3], &p.b).unwrap(),
        Tensor::from_f64([3, 2], &p.c).unwrap(),
    ];
    let r = grad_check_inputs(table_loss, &inputs, DEFAULT_EPS).unwrap();
    assert!(r.passes(1e-4), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scan_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0, len in 1usize..12) {
        let width = 3;
        let p = random_params(seed, 4, width);
        let mut rng = common::rng(seed + 1);
        let x = random_seq(&mut rng, len, width);
        let z = random_seq(&mut rng, len, width);
        let mix: Vec<Vec<f64>> = x.iter().zip(&z)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| alpha * u + beta * v).collect())
            .collect();
        let (yx, yz, ym) = (
            ssm_scan_reference(&p, &x).unwrap(),
            ssm_scan_reference(&p, &z).unwrap(),
            ssm_scan_reference(&p, &mix).unwrap(),
        );
        for t in 0..len {
            let lin: Vec<f64> = yx[t].iter().zip(&yz[t]).map(|(a, b)| alpha * a + beta * b).collect();
            prop_assert!(common::max_abs_diff(&lin, &ym[t]) <= 1e-10);
        }
    }
}
