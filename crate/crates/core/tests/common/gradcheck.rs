//! Central finite-difference checks of every backward pass in f64.

use pump_anomaly::nn::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, global_avg_pool,
    global_avg_pool_backward, mse_loss, relu, relu_backward, BatchNormParams, ConvParams, Mode,
    Model, ModelConfig, Tensor,
};
use pump_anomaly::rng::Rng;

const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const CONFIGS: u64 = 120;

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over paired entries.
fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect()
}

fn random_tensor(rng: &mut Rng, channels: usize, length: usize) -> Tensor<f64> {
    Tensor::from_vec(channels, length, random_vec(rng, channels * length)).unwrap()
}

fn weighted_sum(t: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    t.values().iter().zip(w.values()).map(|(a, b)| a * b).sum()
}

struct Shape {
    depth: usize,
    kernel: usize,
    channels: usize,
    length: usize,
    enhanced: bool,
}

fn random_shape(rng: &mut Rng) -> Shape {
    Shape {
        depth: 2 + rng.below(3) as usize,
        kernel: [1, 3, 5][rng.below(3) as usize],
        channels: 1 + rng.below(4) as usize,
        length: 1 + rng.below(16) as usize,
        enhanced: rng.below(2) == 1,
    }
}

fn check_conv(rng: &mut Rng, s: &Shape) -> f64 {
    let cin = 1 + rng.below(4) as usize;
    let params = ConvParams::new(
        cin,
        s.channels,
        s.kernel,
        random_vec(rng, cin * s.channels * s.kernel),
        random_vec(rng, s.channels),
    )
    .unwrap();
    let x = random_tensor(rng, cin, s.length);
    let r = random_tensor(rng, s.channels, s.length);
    let loss = |x: &Tensor<f64>, p: &ConvParams<f64>| weighted_sum(&conv1d_forward(x, p).unwrap(), &r);

    let mut grads = ConvParams::new(
        cin,
        s.channels,
        s.kernel,
        vec![0.0; params.weights.len()],
        vec![0.0; s.channels],
    )
    .unwrap();
    let grad_x = conv1d_backward(&r, &x, &params, &mut grads).unwrap();

    let num_x: Vec<f64> = (0..x.values().len())
        .map(|i| {
            central(x.values()[i], |v| {
                let mut xp = x.clone();
                xp.values_mut()[i] = v;
                loss(&xp, &params)
            })
        })
        .collect();
    let num_w: Vec<f64> = (0..params.weights.len())
        .map(|i| {
            central(params.weights[i], |v| {
                let mut p = params.clone();
                p.weights[i] = v;
                loss(&x, &p)
            })
        })
        .collect();
    let num_b: Vec<f64> = (0..params.bias.len())
        .map(|i| {
            central(params.bias[i], |v| {
                let mut p = params.clone();
                p.bias[i] = v;
                loss(&x, &p)
            })
        })
        .collect();
    max_relative_error(grad_x.values(), &num_x)
        .max(max_relative_error(&grads.weights, &num_w))
        .max(max_relative_error(&grads.bias, &num_b))
}

fn check_batchnorm(rng: &mut Rng, s: &Shape) -> f64 {
    let batch_size = 2 + rng.below(3) as usize;
    let length = s.length.max(2);
    let batch: Vec<Tensor<f64>> = (0..batch_size).map(|_| random_tensor(rng, s.channels, length)).collect();
    let r: Vec<Tensor<f64>> = (0..batch_size).map(|_| random_tensor(rng, s.channels, length)).collect();
    let mut params = BatchNormParams::<f64>::identity(s.channels);
    params.gamma = (0..s.channels).map(|_| rng.uniform_in(0.5, 1.5)).collect();
    params.beta = random_vec(rng, s.channels);

    let loss = |batch: &[Tensor<f64>], p: &BatchNormParams<f64>| {
        let mut p = p.clone();
        let (out, _) = batchnorm_forward(batch, &mut p, Mode::Training).unwrap();
        out.iter().zip(&r).map(|(o, w)| weighted_sum(o, w)).sum::<f64>()
    };

    let mut work = params.clone();
    let (_, cache) = batchnorm_forward(&batch, &mut work, Mode::Training).unwrap();
    let mut grads = BatchNormParams::<f64>::zeros(s.channels);
    let grad_in = batchnorm_backward(&r, &cache.unwrap(), &params, &mut grads).unwrap();

    let mut analytic_in = Vec::new();
    let mut numeric_in = Vec::new();
    for b in 0..batch_size {
        analytic_in.extend_from_slice(grad_in[b].values());
        for i in 0..batch[b].values().len() {
            numeric_in.push(central(batch[b].values()[i], |v| {
                let mut bp = batch.clone();
                bp[b].values_mut()[i] = v;
                loss(&bp, &params)
            }));
        }
    }
    let num_gamma: Vec<f64> = (0..s.channels)
        .map(|c| {
            central(params.gamma[c], |v| {
                let mut p = params.clone();
                p.gamma[c] = v;
                loss(&batch, &p)
            })
        })
        .collect();
    let num_beta: Vec<f64> = (0..s.channels)
        .map(|c| {
            central(params.beta[c], |v| {
                let mut p = params.clone();
                p.beta[c] = v;
                loss(&batch, &p)
            })
        })
        .collect();
    max_relative_error(&analytic_in, &numeric_in)
        .max(max_relative_error(&grads.gamma, &num_gamma))
        .max(max_relative_error(&grads.beta, &num_beta))
}

fn check_relu_and_pool(rng: &mut Rng, s: &Shape) -> f64 {
    // Inputs keep a distance from the kink larger than the step.
    let values: Vec<f64> = (0..s.channels * s.length)
        .map(|_| {
            let v = rng.uniform_in(0.01, 1.0);
            if rng.below(2) == 0 { v } else { -v }
        })
        .collect();
    let x = Tensor::from_vec(s.channels, s.length, values).unwrap();
    let r = random_tensor(rng, s.channels, s.length);
    let grad = relu_backward(&x, &r).unwrap();
    let numeric: Vec<f64> = (0..x.values().len())
        .map(|i| {
            central(x.values()[i], |v| {
                let mut xp = x.clone();
                xp.values_mut()[i] = v;
                weighted_sum(&relu(&xp), &r)
            })
        })
        .collect();
    let mut err = max_relative_error(grad.values(), &numeric);

    let single = random_tensor(rng, 1, s.length);
    let g = rng.uniform_in(-2.0, 2.0);
    let pooled = global_avg_pool_backward(g, s.length);
    let numeric: Vec<f64> = (0..s.length)
        .map(|i| {
            central(single.values()[i], |v| {
                let mut xp = single.clone();
                xp.values_mut()[i] = v;
                g * global_avg_pool(&xp).unwrap()
            })
        })
        .collect();
    err = err.max(max_relative_error(pooled.values(), &numeric));

    let p = rng.uniform_in(-1.0, 2.0);
    for target in [0u8, 1] {
        let (_, d) = mse_loss(p, target);
        let n = central(p, |v| mse_loss(v, target).0);
        err = err.max(max_relative_error(&[d], &[n]));
    }
    err
}

/// Full network: gradients of `Σ_b r_b · output_b` w.r.t. every parameter.
fn check_model(rng: &mut Rng, s: &Shape) -> f64 {
    let base = if s.enhanced {
        ModelConfig::ecnn(s.depth, s.kernel, s.channels)
    } else {
        ModelConfig::cnn(s.depth, s.kernel, s.channels)
    };
    let config = base.with_length(s.length.max(2));
    let mut model = Model::<f64>::init(config, rng).unwrap();
    for slice in model.param_slices_mut() {
        for v in slice.iter_mut() {
            *v += rng.uniform_in(-0.3, 0.3);
        }
    }
    let batch_size = 3;
    let inputs: Vec<Tensor<f64>> = (0..batch_size)
        .map(|_| random_tensor(rng, config.input_channels(), config.length))
        .collect();
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let r = random_vec(rng, batch_size);

    let loss = |m: &Model<f64>| {
        let mut m = m.clone();
        let (out, _) = m.forward_batch_train(&refs).unwrap();
        out.iter().zip(&r).map(|(o, w)| o * w).sum::<f64>()
    };

    let mut work = model.clone();
    let (_, trace) = work.forward_batch_train(&refs).unwrap();
    let grads = model.backward_batch(&trace, &r).unwrap();
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|(_, s)| s.to_vec()).collect();

    let sizes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for (slot, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let x = model.param_slices_mut()[slot][i];
            numeric.push(central(x, |v| {
                let mut m = model.clone();
                m.param_slices_mut()[slot][i] = v;
                loss(&m)
            }));
        }
    }
    max_relative_error(&analytic, &numeric)
}

/// Checks every layer on `configs` seeded random shapes and returns the
/// worst relative error, or a description of the first failure.
pub fn run_suite(configs: u64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for id in 0..configs {
        let mut rng = Rng::stream(0x6772_6164, id);
        let shape = random_shape(&mut rng);
        let errors = [
            ("conv", check_conv(&mut rng, &shape)),
            ("batchnorm", check_batchnorm(&mut rng, &shape)),
            ("relu/pool/mse", check_relu_and_pool(&mut rng, &shape)),
            ("model", check_model(&mut rng, &shape)),
        ];
        for (layer, err) in errors {
            if !(err < TOLERANCE) {
                return Err(format!(
                    "config {id} (depth {}, K {}, C {}, L {}, enhanced {}): {layer} relative error {err:e}",
                    shape.depth, shape.kernel, shape.channels, shape.length, shape.enhanced
                ));
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
