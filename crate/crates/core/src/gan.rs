//! Conditional generator (dense -> two LSTMs -> dense/tanh) and critic
//! (four kernel-2 convolutions -> flatten ++ condition -> one linear unit).

use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::augment::{ClassLabel, NUM_CLASSES};
use crate::autodiff::layers::{
    self, batch_norm, dense, dropout, glorot_uniform, Activation, LstmVars, NormMode,
};
use crate::autodiff::{AutodiffError, Bound, Graph, ParameterStore, Tensor, Var};
use crate::rng::Rng;

pub const KERNEL_SIZE: usize = 2;
pub const NUM_CONV_LAYERS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub noise_len: usize,
    pub seq_len: usize,
    pub lstm_units: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            noise_len: 128,
            seq_len: 576,
            lstm_units: 1024,
            num_classes: NUM_CLASSES,
            dropout_rate: 0.3,
        }
    }
}

impl GeneratorConfig {
    /// Same topology at a size that trains in minutes on one core.
    pub fn desk() -> Self {
        GeneratorConfig {
            noise_len: 8,
            seq_len: 48,
            lstm_units: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.noise_len == 0 || self.seq_len == 0 || self.lstm_units == 0 {
            return Err(GanError::InvalidConfig(
                "generator sizes must be positive".into(),
            ));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(GanError::InvalidConfig(format!(
                "num_classes must be {NUM_CLASSES}"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(GanError::InvalidConfig(format!(
                "generator dropout {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticConfig {
    pub seq_len: usize,
    pub filters: [usize; NUM_CONV_LAYERS],
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            seq_len: 576,
            filters: [32, 64, 128, 256],
            kernel_size: KERNEL_SIZE,
            leaky_slope: 0.2,
            dropout_rate: 0.3,
            num_classes: NUM_CLASSES,
            bn_momentum: 0.99,
            bn_eps: 1e-5,
        }
    }
}

impl CriticConfig {
    pub fn desk() -> Self {
        CriticConfig {
            seq_len: 48,
            filters: [4, 8, 12, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::InvalidConfig(m));
        if self.kernel_size != KERNEL_SIZE {
            return bad(format!("kernel_size must be {KERNEL_SIZE}"));
        }
        if self.seq_len < NUM_CONV_LAYERS + 1 {
            return bad(format!(
                "critic seq_len must be at least {}",
                NUM_CONV_LAYERS + 1
            ));
        }
        if self.filters[0] == 0 || self.filters.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "filter counts {:?} must be positive and strictly increasing",
                self.filters
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky slope {} outside (0, 1)", self.leaky_slope));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "critic dropout {} outside [0, 1)",
                self.dropout_rate
            ));
        }
        if self.num_classes != NUM_CLASSES {
            return bad(format!("num_classes must be {NUM_CLASSES}"));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return bad("batch-norm momentum must be in [0, 1) and eps positive".into());
        }
        Ok(())
    }

    /// Sequence length entering and leaving each convolution.
    pub fn conv_lengths(&self) -> Vec<usize> {
        (0..=NUM_CONV_LAYERS)
            .map(|i| self.seq_len - i * (self.kernel_size - 1))
            .collect()
    }

    /// Width of the final dense layer's input.
    pub fn dense_inputs(&self) -> usize {
        self.conv_lengths()[NUM_CONV_LAYERS] * self.filters[NUM_CONV_LAYERS - 1] + self.num_classes
    }
}

/// One-hot rows, `[labels.len(), num_classes]`.
pub fn condition_batch(labels: &[ClassLabel], num_classes: usize) -> Tensor {
    let mut data = vec![0.0; labels.len() * num_classes];
    for (row, l) in data.chunks_mut(num_classes).zip(labels) {
        row[l.index()] = 1.0;
    }
    Tensor::from_raw(vec![labels.len(), num_classes], data)
}

/// Standard normal noise scaled by `scale`, `[batch, noise_len]`.
pub fn noise_batch(batch: usize, noise_len: usize, scale: f64, rng: &mut Rng) -> Tensor {
    let data = (0..batch * noise_len)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_raw(vec![batch, noise_len], data)
}

fn lstm_params(
    store: &mut ParameterStore,
    prefix: &str,
    input: usize,
    units: usize,
    rng: &mut Rng,
) -> Result<(), AutodiffError> {
    store.insert(
        format!("{prefix}.w_input"),
        glorot_uniform(&[4 * units, input], input, 4 * units, rng),
    )?;
    store.insert(
        format!("{prefix}.w_hidden"),
        layers::uniform(&[4 * units, units], (1.0 / units as f64).sqrt(), rng),
    )?;
    let mut bias = Tensor::zeros(&[4 * units]);
    bias.data_mut()[units..2 * units].fill(1.0);
    store.insert(format!("{prefix}.bias"), bias)
}

fn lstm_vars(bound: &Bound, prefix: &str) -> Result<LstmVars, AutodiffError> {
    Ok(LstmVars {
        w_input: bound.var(&format!("{prefix}.w_input"))?,
        w_hidden: bound.var(&format!("{prefix}.w_hidden"))?,
        bias: bound.var(&format!("{prefix}.bias"))?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pub params: ParameterStore,
}

impl Generator {
    pub fn init(cfg: GeneratorConfig, rng: &mut Rng) -> Result<Self, GanError> {
        cfg.validate()?;
        let (inputs, t, u) = (cfg.noise_len + cfg.num_classes, cfg.seq_len, cfg.lstm_units);
        let mut p = ParameterStore::new();
        p.insert("dense_in.w", glorot_uniform(&[t, inputs], inputs, t, rng))?;
        p.insert("dense_in.b", Tensor::zeros(&[t]))?;
        lstm_params(&mut p, "lstm1", 1, u, rng)?;
        lstm_params(&mut p, "lstm2", u, u, rng)?;
        p.insert("dense_out.w", glorot_uniform(&[t, u], u, t, rng))?;
        p.insert("dense_out.b", Tensor::zeros(&[t]))?;
        Ok(Generator { cfg, params: p })
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> Bound {
        self.params.bind(g, requires_grad)
    }

    /// `z: [batch, noise_len]`, `cond: [batch, num_classes]` to
    /// `[batch, seq_len]` values strictly inside (-1, 1).
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        cond: Var,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var, GanError> {
        let cfg = &self.cfg;
        let (zs, cs) = (g.value(z).shape().to_vec(), g.value(cond).shape().to_vec());
        if zs.len() != 2 || zs[1] != cfg.noise_len || cs != [zs[0], cfg.num_classes] {
            return Err(AutodiffError::ShapeMismatch {
                op: "generator input",
                left: zs,
                right: cs,
            }
            .into());
        }
        let batch = zs[0];
        let x = g.concat(&[z, cond])?;
        let x = dense(
            g,
            p.var("dense_in.w")?,
            p.var("dense_in.b")?,
            x,
            Activation::Identity,
        )?;
        // One scalar feature per time step.
        let steps = (0..cfg.seq_len)
            .map(|t| g.slice(x, t, 1))
            .collect::<Result<Vec<_>, _>>()?;
        let h0 = g.constant(Tensor::zeros(&[batch, cfg.lstm_units]));
        let c0 = g.constant(Tensor::zeros(&[batch, cfg.lstm_units]));
        let hs = layers::lstm_forward(g, &lstm_vars(p, "lstm1")?, &steps, h0, c0, true)?;
        let hs = hs
            .into_iter()
            .map(|h| dropout(g, h, cfg.dropout_rate, training, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let last = layers::lstm_forward(g, &lstm_vars(p, "lstm2")?, &hs, h0, c0, false)?[0];
        let last = dropout(g, last, cfg.dropout_rate, training, rng)?;
        Ok(dense(
            g,
            p.var("dense_out.w")?,
            p.var("dense_out.b")?,
            last,
            Activation::Tanh,
        )?)
    }

    /// Inference-mode forward on plain tensors.
    pub fn generate(&self, z: &Tensor, cond: &Tensor) -> Result<Tensor, GanError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let z = g.constant(z.clone());
        let cond = g.constant(cond.clone());
        // No RNG is consumed when training is false.
        let mut unused = crate::rng::stream("unused", 0);
        let out = self.forward(&mut g, &p, z, cond, false, &mut unused)?;
        Ok(g.value(out).clone())
    }
}

/// Where the critic's batch-norm layers take their statistics from.
pub enum NormStats<'a> {
    /// Batch statistics, folding them into the running estimates.
    Update(&'a mut ParameterStore),
    /// Batch statistics, running estimates untouched.
    BatchOnly,
    /// Stored running estimates.
    Running(&'a ParameterStore),
}

#[derive(Clone, Debug)]
pub struct CriticOutput {
    /// `[batch]` unbounded scores.
    pub scores: Var,
    /// Sequence length before the first and after each convolution.
    pub trace: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub cfg: CriticConfig,
    pub params: ParameterStore,
    /// Batch-norm running estimates; not trained and not clipped.
    pub buffers: ParameterStore,
}

impl Critic {
    pub fn init(cfg: CriticConfig, rng: &mut Rng) -> Result<Self, GanError> {
        cfg.validate()?;
        let mut p = ParameterStore::new();
        let mut buffers = ParameterStore::new();
        let k = cfg.kernel_size;
        let mut in_ch = 1;
        for (i, &f) in cfg.filters.iter().enumerate() {
            let n = i + 1;
            p.insert(
                format!("conv{n}.kernel"),
                glorot_uniform(&[f, in_ch, k], in_ch * k, f * k, rng),
            )?;
            p.insert(format!("conv{n}.bias"), Tensor::zeros(&[f]))?;
            if i > 0 {
                p.insert(format!("bn{n}.gamma"), Tensor::full(&[f], 1.0))?;
                p.insert(format!("bn{n}.beta"), Tensor::zeros(&[f]))?;
                buffers.insert(format!("bn{n}.running_mean"), Tensor::zeros(&[f]))?;
                buffers.insert(format!("bn{n}.running_var"), Tensor::full(&[f], 1.0))?;
            }
            in_ch = f;
        }
        let inputs = cfg.dense_inputs();
        p.insert("dense.w", glorot_uniform(&[1, inputs], inputs, 1, rng))?;
        p.insert("dense.b", Tensor::zeros(&[1]))?;
        Ok(Critic {
            cfg,
            params: p,
            buffers,
        })
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> Bound {
        self.params.bind(g, requires_grad)
    }

    /// Scores `seq: [batch, seq_len]` under `cond: [batch, num_classes]`.
    /// Layer order per block: conv, batch norm (blocks 2-4), leaky ReLU,
    /// dropout.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        cfg: &CriticConfig,
        g: &mut Graph,
        p: &Bound,
        mut stats: NormStats<'_>,
        seq: Var,
        cond: Var,
        training: bool,
        rng: &mut Rng,
    ) -> Result<CriticOutput, GanError> {
        let (ss, cs) = (
            g.value(seq).shape().to_vec(),
            g.value(cond).shape().to_vec(),
        );
        if ss.len() != 2 || ss[1] != cfg.seq_len || cs != [ss[0], cfg.num_classes] {
            return Err(AutodiffError::ShapeMismatch {
                op: "critic input",
                left: ss,
                right: cs,
            }
            .into());
        }
        let batch = ss[0];
        let mut x = g.reshape(seq, &[batch, cfg.seq_len, 1])?;
        let mut trace = vec![cfg.seq_len];
        for n in 1..=NUM_CONV_LAYERS {
            x = g.conv1d(
                x,
                p.var(&format!("conv{n}.kernel"))?,
                p.var(&format!("conv{n}.bias"))?,
            )?;
            trace.push(g.value(x).shape()[1]);
            if n > 1 {
                let gamma = p.var(&format!("bn{n}.gamma"))?;
                let beta = p.var(&format!("bn{n}.beta"))?;
                let (mk, vk) = (format!("bn{n}.running_mean"), format!("bn{n}.running_var"));
                x = match &mut stats {
                    NormStats::Update(buffers) => {
                        let mut mean = buffers.get(&mk)?.clone();
                        let mut var = buffers.get(&vk)?.clone();
                        let y = batch_norm(
                            g,
                            x,
                            gamma,
                            beta,
                            cfg.bn_eps,
                            NormMode::Train {
                                running: Some((&mut mean, &mut var)),
                                momentum: cfg.bn_momentum,
                            },
                        )?;
                        *buffers.get_mut(&mk)? = mean;
                        *buffers.get_mut(&vk)? = var;
                        y
                    }
                    NormStats::BatchOnly => batch_norm(
                        g,
                        x,
                        gamma,
                        beta,
                        cfg.bn_eps,
                        NormMode::Train {
                            running: None,
                            momentum: cfg.bn_momentum,
                        },
                    )?,
                    NormStats::Running(buffers) => batch_norm(
                        g,
                        x,
                        gamma,
                        beta,
                        cfg.bn_eps,
                        NormMode::Eval {
                            mean: buffers.get(&mk)?,
                            var: buffers.get(&vk)?,
                        },
                    )?,
                };
            }
            x = g.leaky_relu(x, cfg.leaky_slope);
            x = dropout(g, x, cfg.dropout_rate, training, rng)?;
        }
        let flat_len = g.value(x).len() / batch;
        let flat = g.reshape(x, &[batch, flat_len])?;
        let joined = g.concat(&[flat, cond])?;
        let score = dense(
            g,
            p.var("dense.w")?,
            p.var("dense.b")?,
            joined,
            Activation::Identity,
        )?;
        let scores = g.reshape(score, &[batch])?;
        Ok(CriticOutput { scores, trace })
    }

    /// Inference-mode scores using the running batch-norm estimates.
    pub fn score(&self, seq: &Tensor, cond: &Tensor) -> Result<Tensor, GanError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let seq = g.constant(seq.clone());
        let cond = g.constant(cond.clone());
        let mut unused = crate::rng::stream("unused", 0);
        let out = Critic::forward(
            &self.cfg,
            &mut g,
            &p,
            NormStats::Running(&self.buffers),
            seq,
            cond,
            false,
            &mut unused,
        )?;
        Ok(g.value(out.scores).clone())
    }
}
