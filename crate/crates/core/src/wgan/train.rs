use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{CriticArch, GeneratorArch};
use super::checkpoint::Checkpoint;
use super::loss::{critic_loss, generator_loss, sample_epsilon};
use super::model::{Critic, Generator};
use crate::error::{Error, Result};
use crate::signals::Signals;
use crate::tensor::{gaussian_sample, grad, AdamConfig, AdamState, Mode, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Generator updates. Each one is preceded by `n_critic` critic updates.
    #[serde(alias = "epochs")]
    pub iterations: usize,
    pub batch_size: usize,
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub init_std: f64,
    pub latent_std: f64,
    pub seed: u64,
    /// Emit a checkpoint every this many iterations; 0 means only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            batch_size: 32,
            n_critic: 5,
            lambda_gp: 10.0,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.99,
            init_std: 0.02,
            latent_std: 0.02,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("train config: {what}")));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1");
        }
        let positive = [self.lr, self.init_std, self.latent_std];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("lr, init_std and latent_std must be positive");
        }
        if !(self.lambda_gp.is_finite() && self.lambda_gp >= 0.0) {
            return bad("lambda_gp must be non-negative");
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return bad("betas must lie in [0, 1)");
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

/// Per-iteration log row. Critic quantities are averaged over the
/// iteration's critic updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterMetrics {
    pub iteration: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub wasserstein_estimate: f64,
    pub mean_grad_norm: f64,
}

pub const METRICS_HEADER: &str = "iteration,critic_loss,gen_loss,wasserstein_estimate,mean_grad_norm";

pub fn write_metrics_csv<W: Write>(mut w: W, log: &[IterMetrics]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in log {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            m.iteration, m.critic_loss, m.gen_loss, m.wasserstein_estimate, m.mean_grad_norm
        )?;
    }
    Ok(())
}

/// Hooks invoked during [`train`]. Both default to no-ops.
pub trait TrainObserver {
    fn on_iteration(&mut self, _metrics: &IterMetrics) {}
    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<IterMetrics>,
    pub critic_updates: u64,
    pub generator_updates: u64,
}

/// Draws minibatches without replacement, reshuffling once the epoch runs out.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize) -> Self {
        BatchSampler { order: (0..n).collect(), pos: n }
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

fn latent(batch: usize, gen: &GeneratorArch, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Tensor {
    gaussian_sample(&[batch, gen.latent_dim], 0.0, cfg.latent_std, rng)
}

fn check_finite(iteration: usize, what: &str, v: f64, last: &Option<Checkpoint>) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    Err(Error::NonFinite { iteration, what: format!("{what} = {v}"), last_checkpoint: last.clone().map(Box::new) })
}

/// WGAN-GP training. Fully determined by `cfg.seed`.
pub fn train(
    data: &Signals,
    gen_arch: &GeneratorArch,
    critic_arch: &CriticArch,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.n == 0 {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let shape_ok = data.channels == critic_arch.in_channels
        && data.len == critic_arch.in_len
        && data.channels == gen_arch.out_channels
        && data.len == gen_arch.out_len;
    if !shape_ok {
        return Err(Error::ShapeMismatch(format!(
            "dataset is {}x{}, generator emits {}x{}, critic takes {}x{}",
            data.channels,
            data.len,
            gen_arch.out_channels,
            gen_arch.out_len,
            critic_arch.in_channels,
            critic_arch.in_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut generator = Generator::build(gen_arch, cfg.init_std, &mut rng)?;
    let mut critic = Critic::build(critic_arch, cfg.init_std, &mut rng)?;
    let mut gen_opt = AdamState::new(cfg.adam(), generator.params.tensors());
    let mut critic_opt = AdamState::new(cfg.adam(), critic.params.tensors());
    let mut sampler = BatchSampler::new(data.n);
    let b = cfg.batch_size;

    let mut log = Vec::with_capacity(cfg.iterations);
    let mut last: Option<Checkpoint> = None;
    for iteration in 1..=cfg.iterations {
        let mut sums = [0.0; 3];
        for _ in 0..cfg.n_critic {
            let real = data.select(&sampler.next(b, &mut rng)).to_tensor();
            let z = latent(b, gen_arch, cfg, &mut rng);
            let fake = generator.forward(&z, Mode::Train)?;
            let eps = sample_epsilon(b, &mut rng);

            let tape = Tape::new(true);
            let params = critic.params.bind(&tape);
            let out = critic_loss(&critic, &params, &real, &fake, &eps, cfg.lambda_gp)?;
            check_finite(iteration, "critic loss", out.loss.item(), &last)?;
            let wrt: Vec<&Tensor> = params.iter().collect();
            let grads = grad(&out.loss, &wrt, false)?;
            critic_opt.step(critic.params.tensors_mut(), &grads)?;
            sums[0] += out.loss.item();
            sums[1] += out.wasserstein_estimate();
            sums[2] += out.mean_grad_norm;
        }

        let z = latent(b, gen_arch, cfg, &mut rng);
        let tape = Tape::new(false);
        let gen_params = generator.params.bind(&tape);
        let critic_params = critic.params.tensors().to_vec();
        let gen_loss = generator_loss(&critic, &critic_params, &mut generator, &gen_params, &z, Mode::Train)?;
        check_finite(iteration, "generator loss", gen_loss.item(), &last)?;
        let wrt: Vec<&Tensor> = gen_params.iter().collect();
        let grads = grad(&gen_loss, &wrt, false)?;
        drop(gen_params);
        gen_opt.step(generator.params.tensors_mut(), &grads)?;

        let k = cfg.n_critic as f64;
        let m = IterMetrics {
            iteration,
            critic_loss: sums[0] / k,
            gen_loss: gen_loss.item(),
            wasserstein_estimate: sums[1] / k,
            mean_grad_norm: sums[2] / k,
        };
        observer.on_iteration(&m);
        log.push(m);

        let periodic = cfg.checkpoint_every > 0 && iteration % cfg.checkpoint_every == 0;
        if periodic || iteration == cfg.iterations {
            let ck = Checkpoint::capture(&generator, &critic, cfg, iteration, &log, None);
            observer.on_checkpoint(&ck)?;
            last = Some(ck);
        }
    }
    Ok(TrainOutcome {
        checkpoint: last.expect("final iteration always checkpoints"),
        log,
        critic_updates: critic_opt.step,
        generator_updates: gen_opt.step,
    })
}

/// `n` samples from the checkpoint's generator in eval mode, with
/// `z ~ N(0, latent_std²)` drawn from `seed`.
pub fn generate(checkpoint: &Checkpoint, n: usize, seed: u64) -> Result<Signals> {
    let (mut generator, _) = checkpoint.restore()?;
    let cfg = &checkpoint.manifest.config;
    let arch = generator.arch.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Signals::empty(arch.out_channels, arch.out_len);
    const CHUNK: usize = 64;
    let mut done = 0;
    while done < n {
        let m = CHUNK.min(n - done);
        let z = latent(m, &arch, cfg, &mut rng);
        let x = generator.forward(&z, Mode::Eval)?;
        out.extend(&Signals::from_tensor(&x)?)?;
        done += m;
    }
    Ok(out)
}
