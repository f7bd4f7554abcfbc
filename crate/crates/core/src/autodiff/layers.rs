//! Layer building blocks composed from graph primitives.

use rand::distr::{Distribution, Uniform};
use rand::Rng as _;

use super::{AutodiffError, Graph, Tensor, Var};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    LeakyRelu(f64),
}

pub fn activate(g: &mut Graph, x: Var, act: Activation) -> Var {
    match act {
        Activation::Identity => x,
        Activation::Tanh => g.tanh(x),
        Activation::Sigmoid => g.sigmoid(x),
        Activation::LeakyRelu(slope) => g.leaky_relu(x, slope),
    }
}

/// `activation(x · wᵀ + b)` with `w: [out, in]`, batched over leading axes.
pub fn dense(g: &mut Graph, w: Var, b: Var, x: Var, act: Activation) -> Result<Var, AutodiffError> {
    let y = g.matmul_t(x, w)?;
    let y = g.add_row(y, b)?;
    Ok(activate(g, y, act))
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` so inference
/// needs no rescaling. Identity when not training or when `rate == 0`.
pub fn dropout(
    g: &mut Graph,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Var, AutodiffError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(AutodiffError::InvalidRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.value(x).shape().to_vec();
    let mask: Vec<f64> = (0..g.value(x).len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let mask = g.constant(Tensor::from_raw(shape, mask));
    g.mul(x, mask)
}

/// Handles for one LSTM layer. Gate order in the stacked matrices is
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    /// `[4*units, input]`
    pub w_input: Var,
    /// `[4*units, units]`
    pub w_hidden: Var,
    /// `[4*units]`
    pub bias: Var,
}

/// One recurrence step; returns `(h, c)`.
pub fn lstm_cell(
    g: &mut Graph,
    p: &LstmVars,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var), AutodiffError> {
    let units = g.value(h).last_dim();
    let zx = g.matmul_t(x, p.w_input)?;
    let zh = g.matmul_t(h, p.w_hidden)?;
    let z = g.add(zx, zh)?;
    let z = g.add_row(z, p.bias)?;
    let i = g.slice(z, 0, units)?;
    let f = g.slice(z, units, units)?;
    let cand = g.slice(z, 2 * units, units)?;
    let o = g.slice(z, 3 * units, units)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs the recurrence over `xs` (each `[batch, input]`). Returns every
/// hidden state when `return_sequences`, otherwise only the last one.
pub fn lstm_forward(
    g: &mut Graph,
    p: &LstmVars,
    xs: &[Var],
    h0: Var,
    c0: Var,
    return_sequences: bool,
) -> Result<Vec<Var>, AutodiffError> {
    if xs.is_empty() {
        return Err(AutodiffError::SequenceTooShort { len: 0, kernel: 1 });
    }
    let (mut h, mut c) = (h0, c0);
    let mut out = Vec::with_capacity(if return_sequences { xs.len() } else { 1 });
    for &x in xs {
        (h, c) = lstm_cell(g, p, x, h, c)?;
        if return_sequences {
            out.push(h);
        }
    }
    if !return_sequences {
        out.push(h);
    }
    Ok(out)
}

/// How a batch-norm layer obtains its statistics.
pub enum NormMode<'a> {
    /// Normalise with batch statistics. When running estimates are given they
    /// are updated as `m*running + (1-m)*batch` (unbiased batch variance).
    Train {
        running: Option<(&'a mut Tensor, &'a mut Tensor)>,
        momentum: f64,
    },
    /// Normalise with stored running statistics.
    Eval { mean: &'a Tensor, var: &'a Tensor },
}

pub fn batch_norm(
    g: &mut Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: f64,
    mode: NormMode<'_>,
) -> Result<Var, AutodiffError> {
    match mode {
        NormMode::Eval { mean, var } => {
            let (y, _) = g.batch_norm(x, gamma, beta, eps, Some((mean.data(), var.data())))?;
            Ok(y)
        }
        NormMode::Train { running, momentum } => {
            let (y, stats) = g.batch_norm(x, gamma, beta, eps, None)?;
            if let (Some((rm, rv)), Some(stats)) = (running, stats) {
                let n = stats.count as f64;
                let correction = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
                for (r, m) in rm.data_mut().iter_mut().zip(&stats.mean) {
                    *r = momentum * *r + (1.0 - momentum) * m;
                }
                for (r, v) in rv.data_mut().iter_mut().zip(&stats.var) {
                    *r = momentum * *r + (1.0 - momentum) * v * correction;
                }
            }
            Ok(y)
        }
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}

/// Uniform in `±limit`.
pub fn uniform(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Tensor::from_raw(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn dense_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap());
        let w = g.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::vector(vec![1.0]));
        let y = dense(&mut g, w, b, x, Activation::Identity).unwrap();
        assert_eq!(g.value(y).data(), &[12.0]);

        let eye = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let zb = g.constant(Tensor::zeros(&[2]));
        let y = dense(&mut g, eye, zb, x, Activation::Identity).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0]);

        let zw = g.constant(Tensor::zeros(&[2, 2]));
        let cb = g.constant(Tensor::vector(vec![0.3, -0.2]));
        let y = dense(&mut g, zw, cb, x, Activation::Tanh).unwrap();
        assert_eq!(g.value(y).data(), &[0.3f64.tanh(), (-0.2f64).tanh()]);
    }

    #[test]
    fn leaky_relu_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, -1.0, 0.0]));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[1.0, -0.2, 0.0]);
    }

    #[test]
    fn dropout_modes() {
        let mut g = Graph::new();
        let mut r = rng::stream("dropout", 1);
        let x = g.constant(Tensor::full(&[100, 100], 1.0));
        assert_eq!(dropout(&mut g, x, 0.0, true, &mut r).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.5, false, &mut r).unwrap(), x);
        assert!(dropout(&mut g, x, 1.0, true, &mut r).is_err());
        assert!(dropout(&mut g, x, -0.1, true, &mut r).is_err());

        let y = dropout(&mut g, x, 0.5, true, &mut r).unwrap();
        let data = g.value(y).data();
        assert!(data.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = data.iter().filter(|&&v| v == 2.0).count() as f64 / 1e4;
        assert!((kept - 0.5).abs() <= 0.05, "keep fraction {kept}");
    }

    fn zero_lstm(g: &mut Graph, input: usize, units: usize) -> LstmVars {
        LstmVars {
            w_input: g.constant(Tensor::zeros(&[4 * units, input])),
            w_hidden: g.constant(Tensor::zeros(&[4 * units, units])),
            bias: g.constant(Tensor::zeros(&[4 * units])),
        }
    }

    #[test]
    fn zero_lstm_stays_zero() {
        let mut g = Graph::new();
        let p = zero_lstm(&mut g, 3, 4);
        let xs: Vec<Var> = (0..6)
            .map(|t| g.constant(Tensor::full(&[2, 3], t as f64)))
            .collect();
        let h0 = g.constant(Tensor::zeros(&[2, 4]));
        let c0 = g.constant(Tensor::zeros(&[2, 4]));
        let hs = lstm_forward(&mut g, &p, &xs, h0, c0, true).unwrap();
        assert_eq!(hs.len(), 6);
        for h in hs {
            assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        }
        let last = lstm_forward(&mut g, &p, &xs, h0, c0, false).unwrap();
        assert_eq!(last.len(), 1);
    }

    #[test]
    fn single_step_equals_cell() {
        let mut r = rng::stream("lstm", 2);
        let mut g = Graph::new();
        let p = LstmVars {
            w_input: g.constant(uniform(&[8, 3], 0.5, &mut r)),
            w_hidden: g.constant(uniform(&[8, 2], 0.5, &mut r)),
            bias: g.constant(uniform(&[8], 0.5, &mut r)),
        };
        let x = g.constant(uniform(&[1, 3], 1.0, &mut r));
        let h0 = g.constant(uniform(&[1, 2], 1.0, &mut r));
        let c0 = g.constant(uniform(&[1, 2], 1.0, &mut r));
        let seq = lstm_forward(&mut g, &p, &[x], h0, c0, false).unwrap()[0];
        let (h, _) = lstm_cell(&mut g, &p, x, h0, c0).unwrap();
        assert_eq!(g.value(seq), g.value(h));

        // Hand-computed recurrence for the same step.
        let v = |var: Var, g: &Graph| g.value(var).data().to_vec();
        let (wi, wh, b) = (v(p.w_input, &g), v(p.w_hidden, &g), v(p.bias, &g));
        let (xv, hv, cv) = (v(x, &g), v(h0, &g), v(c0, &g));
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let z: Vec<f64> = (0..8)
            .map(|r| {
                b[r] + (0..3).map(|k| wi[r * 3 + k] * xv[k]).sum::<f64>()
                    + (0..2).map(|k| wh[r * 2 + k] * hv[k]).sum::<f64>()
            })
            .collect();
        for u in 0..2 {
            let c = sig(z[2 + u]) * cv[u] + sig(z[u]) * z[4 + u].tanh();
            let h = sig(z[6 + u]) * c.tanh();
            assert!((g.value(seq).data()[u] - h).abs() < 1e-14);
        }
    }

    #[test]
    fn batch_norm_examples() {
        let mut g = Graph::new();
        let one = g.constant(Tensor::full(&[2], 1.0));
        let zero = g.constant(Tensor::zeros(&[2]));
        let train = || NormMode::Train {
            running: None,
            momentum: 0.99,
        };

        let x = g.constant(Tensor::full(&[5, 2], 3.5));
        let y = batch_norm(&mut g, x, one, zero, 1e-5, train()).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));

        let x = g.constant(
            Tensor::new(vec![4, 2], vec![1.0, -3.0, 2.0, 0.5, -1.0, 8.0, 7.0, 1.0]).unwrap(),
        );
        let y = batch_norm(&mut g, x, one, zero, 1e-12, train()).unwrap();
        let d = g.value(y).data();
        for c in 0..2 {
            let col: Vec<f64> = (0..4).map(|r| d[r * 2 + c]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }

        let beta = g.constant(Tensor::vector(vec![0.25, -0.5]));
        let y = batch_norm(&mut g, x, zero, beta, 1e-5, train()).unwrap();
        for row in g.value(y).data().chunks(2) {
            assert_eq!(row, &[0.25, -0.5]);
        }
    }

    #[test]
    fn batch_norm_running_stats() {
        let mut g = Graph::new();
        let one = g.constant(Tensor::full(&[1], 1.0));
        let zero = g.constant(Tensor::zeros(&[1]));
        let x = g.constant(Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap());
        let mut rm = Tensor::zeros(&[1]);
        let mut rv = Tensor::full(&[1], 1.0);
        batch_norm(
            &mut g,
            x,
            one,
            zero,
            1e-5,
            NormMode::Train {
                running: Some((&mut rm, &mut rv)),
                momentum: 0.5,
            },
        )
        .unwrap();
        // batch mean 2, unbiased variance 2
        assert_eq!(rm.data(), &[1.0]);
        assert_eq!(rv.data(), &[1.5]);

        let y = batch_norm(
            &mut g,
            x,
            one,
            zero,
            0.0,
            NormMode::Eval {
                mean: &rm,
                var: &rv,
            },
        )
        .unwrap();
        let s = 1.5f64.sqrt();
        assert_eq!(g.value(y).data(), &[0.0, 2.0 / s]);
    }
}
