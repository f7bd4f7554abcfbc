//! Conditional Wasserstein training: `n_critic` critic updates (RMSProp then
//! weight clipping) per generator update, metric logging and binary
//! checkpoints that resume bit-for-bit.

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use rand::Rng as _;
use thiserror::Error;

use crate::augment::{ClassLabel, LabeledSample, NUM_CLASSES};
use crate::autodiff::{
    clip_params, rmsprop_step, AutodiffError, Bound, Graph, OptimizerState, ParameterStore, Tensor,
    Var,
};
use crate::config::{load_config, ConfigError, RunConfig, TrainConfig};
use crate::gan::{condition_batch, noise_batch, Critic, GanError, Generator, NormStats};
use crate::rng::{self, Rng, RngState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GANK";
pub const CHECKPOINT_VERSION: u8 = 1;
pub const METRICS_HEADER: &str = "step,critic_loss,generator_loss,wasserstein_estimate";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("empty score vector")]
    EmptyScores,
    #[error("sample {index} has length {len}, model expects {expected}")]
    SequenceLength {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("non-finite {which} loss at generator step {step}")]
    NonFiniteLoss { step: u64, which: &'static str },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        TrainError::Gan(e.into())
    }
}

/// `mean(fake) - mean(real)`; the critic minimises this.
pub fn critic_loss(real: &[f64], fake: &[f64]) -> Result<f64, TrainError> {
    Ok(mean(fake)? - mean(real)?)
}

/// `-mean(fake)`.
pub fn generator_loss(fake: &[f64]) -> Result<f64, TrainError> {
    Ok(-mean(fake)?)
}

fn mean(v: &[f64]) -> Result<f64, TrainError> {
    if v.is_empty() {
        return Err(TrainError::EmptyScores);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// One row of the metric log. Critic figures are averaged over the step's
/// critic updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub wasserstein_estimate: f64,
}

pub fn metrics_csv(rows: &[StepMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.step, m.critic_loss, m.generator_loss, m.wasserstein_estimate
        );
    }
    out
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: u64,
    pub generator: ParameterStore,
    pub critic: ParameterStore,
    pub critic_buffers: ParameterStore,
    pub generator_accum: ParameterStore,
    pub critic_accum: ParameterStore,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn generator(&self) -> Generator {
        Generator {
            cfg: self.config.train.generator.clone(),
            params: self.generator.clone(),
        }
    }

    pub fn critic(&self) -> Critic {
        Critic {
            cfg: self.config.train.critic.clone(),
            params: self.critic.clone(),
            buffers: self.critic_buffers.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        put_bytes(&mut out, self.config.to_text().as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        for store in self.stores() {
            put_store(&mut out, store);
        }
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    fn stores(&self) -> [&ParameterStore; 5] {
        [
            &self.generator,
            &self.critic,
            &self.critic_buffers,
            &self.generator_accum,
            &self.critic_accum,
        ]
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.take(1)?[0];
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::UnsupportedVersion(version));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| corrupt("config is not UTF-8"))?;
        let config = load_config(text).map_err(|e| corrupt(&format!("config: {e}")))?;
        let step = r.u64()?;
        let mut stores = Vec::with_capacity(5);
        for _ in 0..5 {
            stores.push(r.store()?);
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.take(32)?);
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let mut it = stores.into_iter();
        let mut next = || it.next().unwrap();
        let ck = Checkpoint {
            config,
            step,
            generator: next(),
            critic: next(),
            critic_buffers: next(),
            generator_accum: next(),
            critic_accum: next(),
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
        };
        ck.check_layout()?;
        Ok(ck)
    }

    /// Rejects stores whose names or shapes do not match the embedded config.
    fn check_layout(&self) -> Result<(), TrainError> {
        let t = &self.config.train;
        let mut scratch = rng::stream("layout", 0);
        let g = Generator::init(t.generator.clone(), &mut scratch)?;
        let d = Critic::init(t.critic.clone(), &mut scratch)?;
        let ok = self.generator.same_layout(&g.params)
            && self.generator_accum.same_layout(&g.params)
            && self.critic.same_layout(&d.params)
            && self.critic_accum.same_layout(&d.params)
            && self.critic_buffers.same_layout(&d.buffers);
        if ok {
            Ok(())
        } else {
            Err(corrupt("parameter layout does not match config"))
        }
    }
}

fn corrupt(msg: &str) -> TrainError {
    TrainError::CorruptCheckpoint(msg.to_string())
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn put_store(out: &mut Vec<u8>, store: &ParameterStore) {
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        put_bytes(out, name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn store(&mut self) -> Result<ParameterStore, TrainError> {
        let count = self.u32()?;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let rank = self.u32()? as usize;
            if rank > 8 {
                return Err(corrupt("tensor rank too large"));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| corrupt("tensor too large"))?;
            let data = self
                .take(n)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).map_err(|_| corrupt("non-finite tensor value"))?;
            store
                .insert(name, t)
                .map_err(|_| corrupt("duplicate tensor name"))?;
        }
        Ok(store)
    }
}

/// Writes the checkpoint and returns the number of bytes written.
pub fn checkpoint_save(ck: &Checkpoint, sink: &mut impl Write) -> Result<usize, TrainError> {
    let bytes = ck.to_bytes();
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

pub fn checkpoint_load(source: &mut impl Read) -> Result<Checkpoint, TrainError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

/// Training state: both models, their optimizers and the single RNG stream
/// every stochastic choice is drawn from.
pub struct Trainer<'a> {
    config: RunConfig,
    data: &'a [LabeledSample],
    generator: Generator,
    critic: Critic,
    g_opt: OptimizerState,
    d_opt: OptimizerState,
    rng: Rng,
    step: u64,
    critic_updates: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(config: RunConfig, data: &'a [LabeledSample]) -> Result<Self, TrainError> {
        config.validate()?;
        check_data(&config.train, data)?;
        let t = &config.train;
        let generator = Generator::init(
            t.generator.clone(),
            &mut rng::stream("init-generator", t.seed),
        )?;
        let critic = Critic::init(t.critic.clone(), &mut rng::stream("init-critic", t.seed))?;
        let g_opt = OptimizerState::new(t.rmsprop(), &generator.params);
        let d_opt = OptimizerState::new(t.rmsprop(), &critic.params);
        let rng = rng::stream("train", t.seed);
        Ok(Trainer {
            config,
            data,
            generator,
            critic,
            g_opt,
            d_opt,
            rng,
            step: 0,
            critic_updates: 0,
        })
    }

    pub fn resume(ck: Checkpoint, data: &'a [LabeledSample]) -> Result<Self, TrainError> {
        ck.check_layout()?;
        check_data(&ck.config.train, data)?;
        let rms = ck.config.train.rmsprop();
        Ok(Trainer {
            generator: ck.generator(),
            critic: ck.critic(),
            g_opt: OptimizerState {
                config: rms,
                accum: ck.generator_accum,
            },
            d_opt: OptimizerState {
                config: rms,
                accum: ck.critic_accum,
            },
            rng: ck.rng.restore(),
            step: ck.step,
            critic_updates: 0,
            config: ck.config,
            data,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Critic updates performed by this trainer since it was created.
    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn critic(&self) -> &Critic {
        &self.critic
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            step: self.step,
            generator: self.generator.params.clone(),
            critic: self.critic.params.clone(),
            critic_buffers: self.critic.buffers.clone(),
            generator_accum: self.g_opt.accum.clone(),
            critic_accum: self.d_opt.accum.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    fn tcfg(&self) -> &TrainConfig {
        &self.config.train
    }

    fn random_labels(&mut self, n: usize) -> Vec<ClassLabel> {
        (0..n)
            .map(|_| ClassLabel::new(self.rng.random_range(0..NUM_CLASSES as i64)).unwrap())
            .collect()
    }

    fn real_batch(&mut self) -> (Tensor, Vec<ClassLabel>) {
        let (b, len) = (self.tcfg().batch_size, self.tcfg().generator.seq_len);
        let mut data = Vec::with_capacity(b * len);
        let mut labels = Vec::with_capacity(b);
        for _ in 0..b {
            let s = &self.data[self.rng.random_range(0..self.data.len())];
            data.extend_from_slice(s.seq.values());
            labels.push(s.label);
        }
        (Tensor::from_raw(vec![b, len], data), labels)
    }

    /// Generator output in training mode, as plain values.
    fn fake_batch(&mut self, labels: &[ClassLabel]) -> Result<Tensor, TrainError> {
        let cfg = &self.generator.cfg;
        let z = noise_batch(labels.len(), cfg.noise_len, 1.0, &mut self.rng);
        let cond = condition_batch(labels, cfg.num_classes);
        let mut g = Graph::new();
        let p = self.generator.bind(&mut g, false);
        let (z, cond) = (g.constant(z), g.constant(cond));
        let out = self
            .generator
            .forward(&mut g, &p, z, cond, true, &mut self.rng)?;
        Ok(g.value(out).clone())
    }

    /// One critic update; returns the critic loss (including any gradient
    /// penalty).
    pub fn critic_update(&mut self) -> Result<f64, TrainError> {
        let b = self.tcfg().batch_size;
        let (real, real_labels) = self.real_batch();
        let fake_labels = self.random_labels(b);
        let fake = self.fake_batch(&fake_labels)?;
        let nc = self.critic.cfg.num_classes;
        let real_cond = condition_batch(&real_labels, nc);
        let fake_cond = condition_batch(&fake_labels, nc);

        let mut g = Graph::new();
        let p = self.critic.bind(&mut g, true);
        let mut scores = Vec::with_capacity(2);
        let mut means = Vec::with_capacity(2);
        for (seq, cond) in [(&real, &real_cond), (&fake, &fake_cond)] {
            let (seq, cond) = (g.constant(seq.clone()), g.constant(cond.clone()));
            let out = Critic::forward(
                &self.critic.cfg,
                &mut g,
                &p,
                NormStats::Update(&mut self.critic.buffers),
                seq,
                cond,
                true,
                &mut self.rng,
            )?;
            scores.push(g.value(out.scores).clone());
            means.push(g.mean(out.scores));
        }
        let loss = g.sub(means[1], means[0])?;
        let grads = g.backward(loss)?;
        let mut grads = p.gradients(&g, &grads);
        let mut value = critic_loss(scores[0].data(), scores[1].data())?;

        let t = self.tcfg().clone();
        if t.use_gradient_penalty {
            let eps: Vec<f64> = (0..b).map(|_| self.rng.random::<f64>()).collect();
            let len = real.shape()[1];
            let mut mix = real.clone();
            for (i, row) in mix.data_mut().chunks_mut(len).enumerate() {
                let f = &fake.data()[i * len..(i + 1) * len];
                for (x, &y) in row.iter_mut().zip(f) {
                    *x = eps[i] * *x + (1.0 - eps[i]) * y;
                }
            }
            let (gp, gp_grads) = gradient_penalty(&self.critic, &mix, &real_cond, t.gp_lambda)?;
            value += gp;
            for (a, d) in grads.iter_mut().zip(&gp_grads) {
                for (x, y) in a.data_mut().iter_mut().zip(d.data()) {
                    *x += y;
                }
            }
        }
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step: self.step,
                which: "critic",
            });
        }
        rmsprop_step(&mut self.d_opt, &mut self.critic.params, &grads)?;
        if !t.use_gradient_penalty {
            clip_params(&mut self.critic.params, t.clip_value)?;
        }
        self.critic_updates += 1;
        Ok(value)
    }

    /// One generator update through the critic; returns the generator loss.
    /// The critic's parameters and running statistics are left untouched.
    pub fn generator_update(&mut self) -> Result<f64, TrainError> {
        let b = self.tcfg().batch_size;
        let labels = self.random_labels(b);
        let gcfg = &self.generator.cfg;
        let z = noise_batch(b, gcfg.noise_len, 1.0, &mut self.rng);
        let cond = condition_batch(&labels, gcfg.num_classes);

        let mut g = Graph::new();
        let gp = self.generator.bind(&mut g, true);
        let dp = self.critic.bind(&mut g, false);
        let (z, cond) = (g.constant(z), g.constant(cond));
        let fake = self
            .generator
            .forward(&mut g, &gp, z, cond, true, &mut self.rng)?;
        let out = Critic::forward(
            &self.critic.cfg,
            &mut g,
            &dp,
            NormStats::BatchOnly,
            fake,
            cond,
            true,
            &mut self.rng,
        )?;
        let value = generator_loss(g.value(out.scores).data())?;
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step: self.step,
                which: "generator",
            });
        }
        let m = g.mean(out.scores);
        let loss = g.scale(m, -1.0);
        let grads = g.backward(loss)?;
        let grads = gp.gradients(&g, &grads);
        rmsprop_step(&mut self.g_opt, &mut self.generator.params, &grads)?;
        Ok(value)
    }

    /// `n_critic` critic updates followed by one generator update.
    pub fn train_step(&mut self) -> Result<StepMetrics, TrainError> {
        let n = self.tcfg().n_critic;
        let mut total = 0.0;
        for _ in 0..n {
            total += self.critic_update()?;
        }
        let generator_loss = self.generator_update()?;
        self.step += 1;
        let critic_loss = total / n as f64;
        Ok(StepMetrics {
            step: self.step,
            critic_loss,
            generator_loss,
            wasserstein_estimate: -critic_loss,
        })
    }

    /// Trains until `total` generator steps have been taken, handing each
    /// checkpoint due under `checkpoint_interval` to `on_checkpoint`.
    pub fn run_to(
        &mut self,
        total: u64,
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), TrainError>,
    ) -> Result<Vec<StepMetrics>, TrainError> {
        let interval = self.tcfg().checkpoint_interval;
        let mut log = Vec::new();
        while self.step < total {
            log.push(self.train_step()?);
            if interval > 0 && self.step.is_multiple_of(interval) {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(log)
    }
}

fn check_data(t: &TrainConfig, data: &[LabeledSample]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let expected = t.generator.seq_len;
    for (index, s) in data.iter().enumerate() {
        if s.seq.len() != expected {
            return Err(TrainError::SequenceLength {
                index,
                len: s.seq.len(),
                expected,
            });
        }
    }
    Ok(())
}

/// Critic used for the penalty: batch statistics, no dropout.
fn critic_sum(
    critic: &Critic,
    x: &Tensor,
    cond: &Tensor,
    params_grad: bool,
) -> Result<(Graph, Bound, Var, Var), TrainError> {
    let mut g = Graph::new();
    let p = critic.bind(&mut g, params_grad);
    let xv = g.leaf(x.clone(), !params_grad);
    let cv = g.constant(cond.clone());
    let mut unused = rng::stream("unused", 0);
    let out = Critic::forward(
        &critic.cfg,
        &mut g,
        &p,
        NormStats::BatchOnly,
        xv,
        cv,
        false,
        &mut unused,
    )?;
    let s = g.sum(out.scores);
    Ok((g, p, xv, s))
}

/// `lambda * mean_i (|grad_x D(x_i)| - 1)^2` and its gradient with respect to
/// the critic parameters. The parameter gradient needs a mixed second
/// derivative; it is taken as a central difference of first-order parameter
/// gradients along the penalty's input direction.
pub fn gradient_penalty(
    critic: &Critic,
    x: &Tensor,
    cond: &Tensor,
    lambda: f64,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let (g, _, xv, s) = critic_sum(critic, x, cond, false)?;
    let gx = g.backward(s)?.get_or_zeros(xv, x);
    let (b, len) = (x.shape()[0], x.shape()[1]);
    let mut penalty = 0.0;
    let mut dir = vec![0.0; b * len];
    for i in 0..b {
        let row = &gx.data()[i * len..(i + 1) * len];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        penalty += (norm - 1.0).powi(2);
        // d/dg_i of (|g_i| - 1)^2, scaled for the mean and lambda.
        let w = if norm > 0.0 {
            2.0 * lambda * (norm - 1.0) / (norm * b as f64)
        } else {
            0.0
        };
        for (d, &v) in dir[i * len..(i + 1) * len].iter_mut().zip(row) {
            *d = w * v;
        }
    }
    let penalty = lambda * penalty / b as f64;

    let scale = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zeros = || {
        critic
            .params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect()
    };
    if scale == 0.0 {
        return Ok((penalty, zeros()));
    }
    let h = 1e-4 / scale;
    let param_grad = |sign: f64| -> Result<Vec<Tensor>, TrainError> {
        let mut shifted = x.clone();
        for (v, d) in shifted.data_mut().iter_mut().zip(&dir) {
            *v += sign * h * d;
        }
        let (g, p, _, s) = critic_sum(critic, &shifted, cond, true)?;
        let grads = g.backward(s)?;
        Ok(p.gradients(&g, &grads))
    };
    let plus = param_grad(1.0)?;
    let minus = param_grad(-1.0)?;
    let grads = plus
        .into_iter()
        .zip(minus)
        .map(|(mut a, m)| {
            for (x, y) in a.data_mut().iter_mut().zip(m.data()) {
                *x = (*x - y) / (2.0 * h);
            }
            a
        })
        .collect();
    Ok((penalty, grads))
}

/// Trains a fresh model pair for `total_generator_steps`.
pub fn train_run(
    dataset: &[LabeledSample],
    config: &RunConfig,
    on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), TrainError>,
) -> Result<(Checkpoint, Vec<StepMetrics>), TrainError> {
    let mut trainer = Trainer::new(config.clone(), dataset)?;
    let log = trainer.run_to(config.train.total_generator_steps, on_checkpoint)?;
    Ok((trainer.checkpoint(), log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(critic_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(critic_loss(&[0.0], &[3.0]).unwrap(), 3.0);
        assert_eq!(critic_loss(&[0.5, -2.0], &[0.5, -2.0]).unwrap(), 0.0);
        assert_eq!(generator_loss(&[2.0, 4.0]).unwrap(), -3.0);
        assert_eq!(generator_loss(&[0.0]).unwrap(), 0.0);
        assert_eq!(generator_loss(&[-1.0]).unwrap(), 1.0);
        assert!(matches!(
            critic_loss(&[], &[1.0]),
            Err(TrainError::EmptyScores)
        ));
        assert!(matches!(generator_loss(&[]), Err(TrainError::EmptyScores)));
    }

    #[test]
    fn metrics_csv_format() {
        let rows = [StepMetrics {
            step: 1,
            critic_loss: -0.5,
            generator_loss: 0.25,
            wasserstein_estimate: 0.5,
        }];
        assert_eq!(
            metrics_csv(&rows),
            "step,critic_loss,generator_loss,wasserstein_estimate\n1,-0.5,0.25,0.5\n"
        );
    }

    fn tiny_checkpoint() -> Checkpoint {
        let config = RunConfig::desk();
        let t = &config.train;
        let g = Generator::init(t.generator.clone(), &mut rng::stream("g", 1)).unwrap();
        let d = Critic::init(t.critic.clone(), &mut rng::stream("d", 1)).unwrap();
        Checkpoint {
            step: 3,
            generator_accum: g.params.zeros_like(),
            critic_accum: d.params.zeros_like(),
            generator: g.params,
            critic: d.params,
            critic_buffers: d.buffers,
            rng: RngState::capture(&rng::indexed_stream("train", 1, 2)),
            config,
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let ck = tiny_checkpoint();
        let mut bytes = Vec::new();
        let n = checkpoint_save(&ck, &mut bytes).unwrap();
        assert_eq!(n, bytes.len());
        assert_eq!(&bytes[..5], b"GANK\x01");
        let back = checkpoint_load(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn checkpoint_errors() {
        let bytes = tiny_checkpoint().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&[]),
            Err(TrainError::CorruptCheckpoint(_))
        ));
        for cut in [3, 5, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(TrainError::CorruptCheckpoint(_))
            ));
        }
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(TrainError::UnsupportedVersion(2))
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&magic).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&long),
            Err(TrainError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn layout_must_match_config() {
        let mut ck = tiny_checkpoint();
        ck.config.train.generator.lstm_units = 8;
        assert!(matches!(
            Checkpoint::from_bytes(&ck.to_bytes()),
            Err(TrainError::CorruptCheckpoint(_))
        ));
    }
}
