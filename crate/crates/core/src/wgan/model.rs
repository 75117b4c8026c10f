use rand::Rng;

use super::arch::{upsample_target, CriticArch, GeneratorArch, TraceRow};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::{BatchNormStats, Mode, Tensor};

fn push_trace(trace: &mut Option<&mut Vec<TraceRow>>, layer: &str, t: &Tensor) {
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(TraceRow::new(layer, &t.shape()[1..]));
    }
}

/// Hands out parameters in declaration order; counts are checked up front.
struct ParamCursor<'a> {
    params: &'a [Tensor],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    fn new(params: &'a [Tensor]) -> Self {
        ParamCursor { params, pos: 0 }
    }

    fn next(&mut self) -> &'a Tensor {
        self.pos += 1;
        &self.params[self.pos - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub arch: GeneratorArch,
    pub params: ModelParams,
    pub bn: Vec<BatchNormStats>,
}

impl Generator {
    /// Weights from `N(0, init_std²)`, zero biases, unit batch-norm scale.
    pub fn build<R: Rng + ?Sized>(arch: &GeneratorArch, init_std: f64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let h = arch.hidden_channels;
        let k = arch.kernel;
        let mut p = ModelParams::new();
        p.push_gaussian("dense_in.weight", &[h * arch.init_len, arch.latent_dim], init_std, rng);
        p.push("dense_in.bias", Tensor::zeros(&[h * arch.init_len]));
        for i in 0..arch.conv_blocks() {
            p.push_gaussian(format!("conv{i}.weight"), &[h, h, k], init_std, rng);
            p.push(format!("conv{i}.bias"), Tensor::zeros(&[h]));
            p.push(format!("bn{i}.gamma"), Tensor::ones(&[h]));
            p.push(format!("bn{i}.beta"), Tensor::zeros(&[h]));
        }
        let trace = arch.shape_trace()?;
        let last_len = trace[trace.len() - 2].shape[1];
        p.push_gaussian("out_conv.weight", &[arch.out_channels, h, 1], init_std, rng);
        p.push("out_conv.bias", Tensor::zeros(&[arch.out_channels]));
        p.push_gaussian("dense_out.weight", &[arch.out_len, last_len], init_std, rng);
        p.push("dense_out.bias", Tensor::zeros(&[arch.out_len]));
        let bn = (0..arch.conv_blocks()).map(|_| BatchNormStats::new(h)).collect();
        Ok(Generator { arch: arch.clone(), params: p, bn })
    }

    /// Forward pass with the stored (detached) parameters.
    pub fn forward(&mut self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let params = self.params.tensors().to_vec();
        self.forward_with(&params, z, mode, None)
    }

    /// Forward pass with externally supplied parameters (e.g. bound to a
    /// tape), in declaration order. Train mode updates the running
    /// batch-norm statistics.
    pub fn forward_with(
        &mut self,
        params: &[Tensor],
        z: &Tensor,
        mode: Mode,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<Tensor> {
        let a = &self.arch;
        let &[b, width] = z.shape() else {
            return Err(Error::ShapeMismatch(format!("latent must be [B, {}], got {:?}", a.latent_dim, z.shape())));
        };
        if width != a.latent_dim {
            return Err(Error::ShapeMismatch(format!("latent width {width}, expected {}", a.latent_dim)));
        }
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, generator has {}",
                params.len(),
                self.params.len()
            )));
        }
        let alpha = a.leaky_alpha;
        let mut p = ParamCursor::new(params);
        let bn = &mut self.bn;
        let mut block = 0;
        let mut conv_block = |x: &Tensor, p: &mut ParamCursor| -> Result<Tensor> {
            let (w, bias, gamma, beta) = (p.next(), p.next(), p.next(), p.next());
            let y = x.conv1d(w, bias)?.batch_norm1d(gamma, beta, &mut bn[block], mode)?.leaky_relu(alpha)?;
            block += 1;
            Ok(y)
        };

        let x = z.dense(p.next(), p.next())?;
        push_trace(&mut trace, "Input (z), Dense", &x);
        let mut x = x.reshape(&[b, a.hidden_channels, a.init_len])?;
        x = conv_block(&x, &mut p)?;
        push_trace(&mut trace, "Conv, BatchNorm, LRELU", &x);
        for stage in 1..=a.stages {
            let len = x.shape()[2];
            x = x.upsample_linear(upsample_target(len))?;
            push_trace(&mut trace, "Upsample", &x);
            let convs = if stage < a.stages { 2 } else { 1 };
            for _ in 0..convs {
                x = conv_block(&x, &mut p)?;
                push_trace(&mut trace, "Conv, BatchNorm, LRELU", &x);
            }
        }
        let x = x.conv1d(p.next(), p.next())?;
        push_trace(&mut trace, "Conv", &x);
        let x = x.dense(p.next(), p.next())?;
        push_trace(&mut trace, "Dense", &x);
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub arch: CriticArch,
    pub params: ModelParams,
}

impl Critic {
    pub fn build<R: Rng + ?Sized>(arch: &CriticArch, init_std: f64, rng: &mut R) -> Result<Self> {
        let final_len = arch.final_len()?;
        let (h, k) = (arch.hidden_channels, arch.kernel);
        let mut p = ModelParams::new();
        let mut cin = arch.in_channels;
        for blk in 0..arch.blocks {
            for j in 0..2 {
                p.push_gaussian(format!("block{blk}.conv{j}.weight"), &[h, cin, k], init_std, rng);
                p.push(format!("block{blk}.conv{j}.bias"), Tensor::zeros(&[h]));
                cin = h;
            }
        }
        p.push_gaussian("out_conv.weight", &[arch.in_channels, h, 1], init_std, rng);
        p.push("out_conv.bias", Tensor::zeros(&[arch.in_channels]));
        p.push_gaussian("dense_out.weight", &[1, final_len], init_std, rng);
        p.push("dense_out.bias", Tensor::zeros(&[1]));
        Ok(Critic { arch: arch.clone(), params: p })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(self.params.tensors(), x, None)
    }

    /// Scores `[B]`: the mean over channels of the per-channel dense readout.
    pub fn forward_with(&self, params: &[Tensor], x: &Tensor, mut trace: Option<&mut Vec<TraceRow>>) -> Result<Tensor> {
        let a = &self.arch;
        let &[_, c, l] = x.shape() else {
            return Err(Error::ShapeMismatch(format!("critic input must be [B, C, L], got {:?}", x.shape())));
        };
        if c != a.in_channels || l != a.in_len {
            return Err(Error::ShapeMismatch(format!(
                "critic expects [B, {}, {}], got {:?}",
                a.in_channels,
                a.in_len,
                x.shape()
            )));
        }
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, critic has {}",
                params.len(),
                self.params.len()
            )));
        }
        push_trace(&mut trace, "Input", x);
        let mut p = ParamCursor::new(params);
        let mut h = x.clone();
        for _ in 0..a.blocks {
            for _ in 0..2 {
                h = h.conv1d(p.next(), p.next())?.leaky_relu(a.leaky_alpha)?;
                push_trace(&mut trace, "Conv, LRELU", &h);
            }
            h = h.avg_pool1d()?;
            push_trace(&mut trace, "Downsample", &h);
        }
        let h = h.conv1d(p.next(), p.next())?;
        push_trace(&mut trace, "Conv", &h);
        let h = h.dense(p.next(), p.next())?;
        push_trace(&mut trace, "Dense", &h);
        Ok(h.sum_keep(1, c)?.scale(1.0 / c as f64)?)
    }
}
