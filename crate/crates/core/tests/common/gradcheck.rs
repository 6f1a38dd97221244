//! Central-difference checks of reverse-mode gradients in `f64`.

use helmfno::autodiff::{Grads, ParamStore, Tape, Tensor, Var};
use helmfno::nn::{forward_graph, Activation, FnoConfig, ForwardNetConfig, ModelConfig, PfnoConfig, WidthRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub struct Case {
    pub name: &'static str,
    pub run: fn(u64) -> f64,
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), normal(rng, shape.iter().product())).unwrap()
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = tensor(rng, shape);
    t.data.iter_mut().for_each(|v| *v = 0.5 + v.abs());
    t
}

type Graph = dyn for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Var;

fn eval(inputs: &[Tensor<f64>], f: &Graph, w: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|t| tape.param_owned(t.clone())).collect();
    let out = f(&mut tape, &vs);
    tape.value(out).iter().zip(w).map(|(a, b)| a * b).sum()
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Worst relative error between the reverse-mode directional derivative of
/// `w . f(inputs)` and its central difference, over three random directions.
pub fn check(inputs: Vec<Tensor<f64>>, seed: u64, f: &Graph) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xd1b5);
    let mut tape = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|t| tape.param_owned(t.clone())).collect();
    let out = f(&mut tape, &vs);
    let w = normal(&mut rng, tape.value(out).len());
    let mut grads = Grads::new();
    tape.backward_with(out, &w, &mut grads).unwrap();
    let g: Vec<Vec<f64>> = vs.iter().zip(&inputs).map(|(v, t)| grads.get(*v).map_or(vec![0.0; t.len()], |g| g.to_vec())).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let dir: Vec<Vec<f64>> = inputs.iter().map(|t| normal(&mut rng, t.len())).collect();
        let analytic: f64 = g.iter().zip(&dir).map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>()).sum();
        let h = 1e-6;
        let shifted = |s: f64| -> Vec<Tensor<f64>> {
            inputs
                .iter()
                .zip(&dir)
                .map(|(t, d)| Tensor::new(t.shape.clone(), t.data.iter().zip(d).map(|(x, e)| x + s * e).collect()).unwrap())
                .collect()
        };
        let numeric = (eval(&shifted(h), f, &w) - eval(&shifted(-h), f, &w)) / (2.0 * h);
        worst = worst.max(rel(analytic, numeric));
    }
    worst
}

/// Same check over every parameter of a network, with the input fixed.
fn check_network(config: &ModelConfig, x: Tensor<f64>, freqs: &[f64], seed: u64, buffers: bool) -> f64 {
    let (params, mut bufs): (ParamStore<f64>, ParamStore<f64>) = config.init(seed).unwrap();
    if buffers {
        // running statistics from a warm-up batch, as after training
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0f);
        let mut shape = x.shape.clone();
        shape[0] = 4;
        let warm = tensor(&mut rng, &shape);
        let mut tape = Tape::new();
        let vars = params.bind_frozen(&mut tape);
        let xv = tape.constant(warm);
        let out = forward_graph(&mut tape, config, &params, &vars, None, xv, freqs).unwrap();
        for (name, st) in out.stats {
            bufs.get_mut(&format!("{name}.bn.mean")).unwrap().data = st.mean;
            bufs.get_mut(&format!("{name}.bn.var")).unwrap().data = st.var;
        }
    }
    let inputs: Vec<Tensor<f64>> = (0..params.len()).map(|i| params.tensor(i)).collect();
    let config = config.clone();
    let freqs = freqs.to_vec();
    // the store only resolves names; values flow through `vs`
    let store = params.clone();
    let graph = move |tape: &mut Tape<'_, f64>, vs: &[Var]| -> Var {
        let xv = tape.constant(x.clone());
        let b = buffers.then_some(&bufs);
        forward_graph(tape, &config, &store, vs, b, xv, &freqs).unwrap().out
    };
    check_coordinates(inputs, seed, &graph, 16)
}

/// Central difference along a line through a piecewise-smooth function.
/// While the one-sided slopes disagree a kink lies inside `[-h, h]`, so the
/// step shrinks until the bracket is smooth.
fn kink_aware(line: impl Fn(f64) -> f64, h0: f64) -> f64 {
    let f0 = line(0.0);
    let mut h = h0;
    loop {
        let (fp, fm) = (line(h), line(-h));
        let (dp, dm) = ((fp - f0) / h, (f0 - fm) / h);
        let c = (fp - fm) / (2.0 * h);
        let noise = 16.0 * f64::EPSILON * (f0.abs() + fp.abs() + fm.abs()) / h;
        if (dp - dm).abs() <= 1e-6 * c.abs() + noise || h < h0 * 1e-2 {
            return c;
        }
        h /= 4.0;
    }
}

/// Coordinate-wise variant for whole networks. The error is measured over
/// the vector of sampled partials: with piecewise-linear activations a step
/// moves enough pre-activations across a kink that tiny partials pick up
/// differencing error far above their own size.
pub fn check_coordinates(inputs: Vec<Tensor<f64>>, seed: u64, f: &Graph, count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x7a11);
    let mut tape = Tape::new();
    let vs: Vec<Var> = inputs.iter().map(|t| tape.param_owned(t.clone())).collect();
    let out = f(&mut tape, &vs);
    let w = normal(&mut rng, tape.value(out).len());
    let mut grads = Grads::new();
    tape.backward_with(out, &w, &mut grads).unwrap();
    let (mut diff, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for k in 0..count {
        // cycle through tensors so every seed touches biases and norms too
        let i = (k + rng.gen_range(0..inputs.len())) % inputs.len();
        let j = rng.gen_range(0..inputs[i].len());
        let analytic = grads.get(vs[i]).map_or(0.0, |g| g[j]);
        let shifted = |s: f64| -> Vec<Tensor<f64>> {
            let mut v = inputs.clone();
            v[i].data[j] += s;
            v
        };
        let numeric = kink_aware(|s| eval(&shifted(s), f, &w), 1e-6);
        diff += (analytic - numeric).powi(2);
        a2 += analytic * analytic;
        n2 += numeric * numeric;
    }
    let scale = a2.max(n2).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

fn small_fno(in_channels: usize) -> FnoConfig {
    FnoConfig { layers: 2, modes: 3, width: 4, in_channels, out_channels: 2, head_width: 6, activation: Activation::Gelu }
}

pub fn catalog() -> Vec<Case> {
    vec![
        Case {
            name: "add (broadcast)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 3, 4]), tensor(&mut r, &[3, 1])], s, &|t, v| t.add(v[0], v[1]).unwrap())
            },
        },
        Case {
            name: "sub (broadcast)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[4]), tensor(&mut r, &[2, 3, 4])], s, &|t, v| t.sub(v[0], v[1]).unwrap())
            },
        },
        Case {
            name: "mul",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 5]), tensor(&mut r, &[2, 5])], s, &|t, v| t.mul(v[0], v[1]).unwrap())
            },
        },
        Case {
            name: "mul (broadcast)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 3, 1, 4]), tensor(&mut r, &[5, 1])], s, &|t, v| t.mul(v[0], v[1]).unwrap())
            },
        },
        Case {
            name: "scale",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[7])], s, &|t, v| t.scale(v[0], -1.7))
            },
        },
        Case {
            name: "leaky_relu",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[3, 8])], s, &|t, v| t.leaky_relu(v[0], 0.2))
            },
        },
        Case {
            name: "gelu",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let mut x = tensor(&mut r, &[40]);
                x.data.iter_mut().for_each(|v| *v *= 3.0);
                check(vec![x], s, &|t, v| t.gelu(v[0]))
            },
        },
        Case {
            name: "identity",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[6])], s, &|t, v| t.identity(v[0]))
            },
        },
        Case {
            name: "sum",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[3, 4])], s, &|t, v| t.sum(v[0]))
            },
        },
        Case {
            name: "mean",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[3, 4])], s, &|t, v| t.mean(v[0]))
            },
        },
        Case {
            name: "mse",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 2, 3]), tensor(&mut r, &[2, 2, 3])], s, &|t, v| t.mse(v[0], v[1]).unwrap())
            },
        },
        Case {
            name: "l2norm",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[3, 2, 5])], s, &|t, v| t.l2norm(v[0]).unwrap())
            },
        },
        Case {
            name: "narrow",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 5, 3])], s, &|t, v| t.narrow(v[0], 1, 1, 3).unwrap())
            },
        },
        Case {
            name: "reshape",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 6])], s, &|t, v| {
                    let y = t.reshape(v[0], &[3, 4]).unwrap();
                    t.mul(y, y).unwrap()
                })
            },
        },
        Case {
            name: "channel_mix",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 3, 4, 5]), tensor(&mut r, &[3, 6]), tensor(&mut r, &[6])];
                check(ins, s, &|t, v| t.channel_mix(v[0], v[1], Some(v[2])).unwrap())
            },
        },
        Case {
            name: "conv2d (stride 1, pad 1)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 3, 6, 6]), tensor(&mut r, &[4, 3, 3, 3]), tensor(&mut r, &[4])];
                check(ins, s, &|t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap())
            },
        },
        Case {
            name: "conv2d (stride 2, pad 0)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 2, 7, 7]), tensor(&mut r, &[3, 2, 3, 3])];
                check(ins, s, &|t, v| t.conv2d(v[0], v[1], None, 2, 0).unwrap())
            },
        },
        Case {
            name: "batchnorm2d (batch statistics)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[3, 2, 4, 4]), tensor(&mut r, &[2]), tensor(&mut r, &[2])];
                check(ins, s, &|t, v| t.batchnorm2d_train(v[0], v[1], v[2], 1e-5).unwrap().0)
            },
        },
        Case {
            name: "batchnorm2d (running statistics)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 3, 3, 3]), tensor(&mut r, &[3]), tensor(&mut r, &[3])];
                let mean = normal(&mut r, 3);
                let var = positive(&mut r, &[3]).data;
                check(ins, s, &move |t, v| t.batchnorm2d_eval(v[0], v[1], v[2], &mean, &var, 1e-5).unwrap())
            },
        },
        Case {
            name: "upsample_nearest",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[1, 2, 3, 4])], s, &|t, v| t.upsample_nearest(v[0], 2).unwrap())
            },
        },
        Case {
            name: "crop_center",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[1, 2, 8, 7])], s, &|t, v| t.crop_center(v[0], 5, 4).unwrap())
            },
        },
        Case {
            name: "rfft2",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 3, 6, 8])], s, &|t, v| t.rfft2(v[0]).unwrap())
            },
        },
        Case {
            name: "irfft2",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check(vec![tensor(&mut r, &[2, 6, 5, 2])], s, &|t, v| t.irfft2(v[0], 8).unwrap())
            },
        },
        Case {
            name: "mode_multiply",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 2, 8, 5, 2]), tensor(&mut r, &[2, 2, 3, 2, 3]), tensor(&mut r, &[2, 2, 3, 2, 3])];
                check(ins, s, &|t, v| t.mode_multiply(v[0], v[1], v[2]).unwrap())
            },
        },
        Case {
            name: "spectral_conv",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let ins = vec![tensor(&mut r, &[2, 2, 8, 9]), tensor(&mut r, &[2, 3, 3, 2, 3]), tensor(&mut r, &[2, 3, 3, 2, 3])];
                check(ins, s, &|t, v| t.spectral_conv(v[0], v[1], v[2]).unwrap())
            },
        },
        Case {
            name: "FNO graph",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                check_network(&ModelConfig::Fno(small_fno(3)), tensor(&mut r, &[2, 3, 8, 8]), &[], s, false)
            },
        },
        Case {
            name: "PFNO graph",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let mut c = PfnoConfig::new(vec![10.0, 30.0]);
                c.rule = WidthRule::default().scaled(0.1);
                c.layers = 2;
                c.modes = 3;
                c.head_width = 5;
                check_network(&ModelConfig::Pfno(c), tensor(&mut r, &[3, 4, 8, 8]), &[30.0, 10.0, 30.0], s, false)
            },
        },
        Case {
            name: "ForwardNet graph (training mode)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let c = ForwardNetConfig { base: 1, ..Default::default() };
                check_network(&ModelConfig::ForwardNet(c), tensor(&mut r, &[2, 3, 70, 70]), &[], s, false)
            },
        },
        Case {
            name: "ForwardNet graph (inference mode)",
            run: |s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let c = ForwardNetConfig { base: 1, ..Default::default() };
                check_network(&ModelConfig::ForwardNet(c), tensor(&mut r, &[1, 3, 70, 70]), &[], s, true)
            },
        },
    ]
}

/// Worst error and seed per case.
pub fn run_all(seeds: u64) -> Vec<(&'static str, f64, u64)> {
    catalog()
        .into_iter()
        .map(|c| {
            let mut worst = (0.0, 0);
            for s in 0..seeds {
                let e = (c.run)(s);
                if !(e <= worst.0) {
                    worst = (e, s);
                }
            }
            (c.name, worst.0, worst.1)
        })
        .collect()
}
