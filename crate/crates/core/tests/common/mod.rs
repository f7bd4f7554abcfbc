//! Gradient-check cases shared by the gradient tests and the acceptance run.

#![allow(dead_code)]

use gankyoku::augment::ClassLabel;
use gankyoku::autodiff::layers::{self, Activation, LstmVars, NormMode};
use gankyoku::autodiff::{grad_check, AutodiffError, GradCheckReport, Graph, Tensor, Var};
use gankyoku::gan::{
    condition_batch, noise_batch, Critic, CriticConfig, Generator, GeneratorConfig, NormStats,
};
use gankyoku::rng;

pub const STEP: f64 = 1e-5;
pub const SMOOTH_TOL: f64 = 1e-6;
pub const KINK_TOL: f64 = 1e-4;

pub struct Case {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

fn rand_tensor(shape: &[usize], scale: f64, tag: u64) -> Tensor {
    layers::uniform(shape, scale, &mut rng::stream("gradcheck", tag))
}

/// `sum(c * y)` with fixed random `c`, so every output entry matters.
fn project(g: &mut Graph, y: Var, tag: u64) -> Result<Var, AutodiffError> {
    let shape = g.value(y).shape().to_vec();
    let c = g.constant(rand_tensor(&shape, 1.0, 1000 + tag));
    let p = g.mul(y, c)?;
    Ok(g.sum(p))
}

fn check<F>(name: &'static str, tolerance: f64, f: F, params: &[Tensor]) -> Case
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let report = grad_check(f, params, STEP).expect("gradient check runs");
    Case {
        name,
        tolerance,
        report,
    }
}

pub fn tanh_case() -> Case {
    check(
        "tanh",
        SMOOTH_TOL,
        |g, v| {
            let y = g.tanh(v[0]);
            project(g, y, 1)
        },
        &[rand_tensor(&[3, 4], 2.0, 1)],
    )
}

pub fn dense_case() -> Case {
    check(
        "dense",
        SMOOTH_TOL,
        |g, v| {
            let y = layers::dense(g, v[0], v[1], v[2], Activation::Tanh)?;
            project(g, y, 2)
        },
        &[
            rand_tensor(&[3, 5], 0.8, 21),
            rand_tensor(&[3], 0.5, 22),
            rand_tensor(&[4, 5], 1.0, 23),
        ],
    )
}

pub fn conv1d_case() -> Case {
    check(
        "conv1d",
        SMOOTH_TOL,
        |g, v| {
            let y = g.conv1d(v[0], v[1], v[2])?;
            project(g, y, 3)
        },
        &[
            rand_tensor(&[2, 7, 3], 1.0, 31),
            rand_tensor(&[4, 3, 2], 1.0, 32),
            rand_tensor(&[4], 0.5, 33),
        ],
    )
}

pub fn lstm_case() -> Case {
    // T = 5 steps, 3 inputs, 4 units, batch 2.
    check(
        "lstm",
        SMOOTH_TOL,
        |g, v| {
            let p = LstmVars {
                w_input: v[0],
                w_hidden: v[1],
                bias: v[2],
            };
            let xs = (0..5)
                .map(|t| g.slice(v[3], 3 * t, 3))
                .collect::<Result<Vec<_>, _>>()?;
            let h0 = g.constant(Tensor::zeros(&[2, 4]));
            let c0 = g.constant(Tensor::zeros(&[2, 4]));
            let hs = layers::lstm_forward(g, &p, &xs, h0, c0, true)?;
            let all = g.concat(&hs)?;
            project(g, all, 4)
        },
        &[
            rand_tensor(&[16, 3], 0.7, 41),
            rand_tensor(&[16, 4], 0.5, 42),
            rand_tensor(&[16], 0.5, 43),
            rand_tensor(&[2, 15], 1.0, 44),
        ],
    )
}

pub fn batch_norm_case() -> Case {
    check(
        "batch_norm",
        SMOOTH_TOL,
        |g, v| {
            let mode = NormMode::Train {
                running: None,
                momentum: 0.99,
            };
            let y = layers::batch_norm(g, v[0], v[1], v[2], 1e-5, mode)?;
            project(g, y, 5)
        },
        &[
            rand_tensor(&[2, 4, 3], 1.5, 51),
            rand_tensor(&[3], 1.0, 52),
            rand_tensor(&[3], 1.0, 53),
        ],
    )
}

pub fn leaky_relu_case() -> Case {
    // Keep every entry at least 0.1 away from the kink.
    let mut x = rand_tensor(&[4, 5], 1.0, 61);
    for v in x.data_mut() {
        *v += 0.1f64.copysign(*v);
    }
    check(
        "leaky_relu",
        KINK_TOL,
        |g, v| {
            let y = g.leaky_relu(v[0], 0.2);
            project(g, y, 6)
        },
        &[x],
    )
}

/// Tiny generator feeding a tiny critic: `mean(D(G(z))) - mean(D(real))`,
/// differentiated with respect to every parameter of both networks.
pub fn end_to_end_case() -> Case {
    let gcfg = GeneratorConfig {
        noise_len: 3,
        seq_len: 6,
        lstm_units: 3,
        ..GeneratorConfig::default()
    };
    let dcfg = CriticConfig {
        seq_len: 6,
        filters: [2, 3, 4, 5],
        ..CriticConfig::default()
    };
    let gen = Generator::init(gcfg, &mut rng::stream("e2e-g", 7)).unwrap();
    let critic = Critic::init(dcfg.clone(), &mut rng::stream("e2e-d", 7)).unwrap();
    let labels: Vec<ClassLabel> = [0, 1, 2, 3]
        .iter()
        .map(|&c| ClassLabel::new(c).unwrap())
        .collect();
    let cond = condition_batch(&labels, 4);
    let z = noise_batch(4, 3, 1.0, &mut rng::stream("e2e-z", 7));
    let real = rand_tensor(&[4, 6], 0.9, 71);
    let n_gen = gen.params.len();
    let mut params = gen.params.tensors();
    params.extend(critic.params.tensors());

    check(
        "generator+critic",
        KINK_TOL,
        move |g, v| {
            let gp = gen.params.attach(&v[..n_gen])?;
            let dp = critic.params.attach(&v[n_gen..])?;
            // Fresh stream per evaluation: identical dropout masks every time.
            let mut r = rng::stream("e2e-dropout", 7);
            let (zv, cv) = (g.constant(z.clone()), g.constant(cond.clone()));
            let fake = gen
                .forward(g, &gp, zv, cv, true, &mut r)
                .map_err(unwrap_gan)?;
            let realv = g.constant(real.clone());
            let mut means = Vec::new();
            for seq in [fake, realv] {
                let out =
                    Critic::forward(&dcfg, g, &dp, NormStats::BatchOnly, seq, cv, true, &mut r)
                        .map_err(unwrap_gan)?;
                means.push(g.mean(out.scores));
            }
            g.sub(means[0], means[1])
        },
        &params,
    )
}

fn unwrap_gan(e: gankyoku::gan::GanError) -> AutodiffError {
    match e {
        gankyoku::gan::GanError::Autodiff(a) => a,
        other => panic!("{other}"),
    }
}

pub fn all_cases() -> Vec<Case> {
    vec![
        tanh_case(),
        dense_case(),
        conv1d_case(),
        lstm_case(),
        batch_norm_case(),
        leaky_relu_case(),
        end_to_end_case(),
    ]
}
