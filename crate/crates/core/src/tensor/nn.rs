//! Layer-level ops composed from the recorded primitives.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::ops::SparseMap;
use super::{Result, Tensor, TensorError};

/// Exponential moving-average factor for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub initialized: bool,
    pub eps: f64,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats { mean: vec![0.0; channels], var: vec![1.0; channels], initialized: false, eps: 1e-5 }
    }
}

impl Tensor {
    /// `[B,Cin,L] ⊛ [Cout,Cin,k] + bias[Cout]`, stride 1, no padding.
    pub fn conv1d(&self, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let y = self.conv1d_nobias(kernels)?;
        let &[b, cout, lout] = y.shape() else { unreachable!() };
        if bias.numel() != cout {
            return Err(TensorError::Shape { op: "conv1d", axis: "bias".into(), expected: cout, got: bias.numel() });
        }
        y.add(&bias.expand(&[b, cout, lout], b, lout)?)
    }

    /// Affine map over the last axis with a weight `[Lout,Lin]` shared by
    /// every leading index.
    pub fn dense(&self, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let &[lout, lin] = weight.shape() else {
            return Err(TensorError::Rank { op: "dense", expected: 2, shape: weight.shape().to_vec() });
        };
        let last = self.shape().last().copied().unwrap_or(0);
        if last != lin {
            return Err(TensorError::Shape { op: "dense", axis: "last axis".into(), expected: lin, got: last });
        }
        if bias.numel() != lout {
            return Err(TensorError::Shape { op: "dense", axis: "bias".into(), expected: lout, got: bias.numel() });
        }
        let rows = self.numel() / lin;
        let y =
            self.reshape(&[rows, lin])?.matmul(&weight.transpose2d()?)?.add(&bias.expand(&[rows, lout], rows, 1)?)?;
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = lout;
        y.reshape(&shape)
    }

    /// Batch normalization over batch and time per channel of `[B,C,L]`.
    ///
    /// Train mode normalizes with the (biased) batch statistics and folds
    /// them into `stats` with momentum [`BN_MOMENTUM`], using the unbiased
    /// variance for the running estimate. Eval mode uses `stats`.
    pub fn batch_norm1d(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        stats: &mut BatchNormStats,
        mode: Mode,
    ) -> Result<Tensor> {
        let &[b, c, l] = self.shape() else {
            return Err(TensorError::Rank { op: "batch_norm1d", expected: 3, shape: self.shape().to_vec() });
        };
        if gamma.numel() != c || beta.numel() != c || stats.mean.len() != c {
            return Err(TensorError::Shape {
                op: "batch_norm1d",
                axis: "channels".into(),
                expected: c,
                got: gamma.numel(),
            });
        }
        let shape = [b, c, l];
        let n = (b * l) as f64;
        let normalized = match mode {
            Mode::Train => {
                if b * l < 2 {
                    return Err(TensorError::Invalid {
                        op: "batch_norm1d",
                        msg: "train mode needs more than one value per channel".into(),
                    });
                }
                let mean = self.sum_keep(b, l)?.scale(1.0 / n)?;
                let centered = self.sub(&mean.expand(&shape, b, l)?)?;
                let var = centered.square()?.sum_keep(b, l)?.scale(1.0 / n)?;
                let inv_std = var.shift(stats.eps)?.powf(-0.5)?;

                let unbias = n / (n - 1.0);
                for ch in 0..c {
                    let (m, v) = (mean.data()[ch], var.data()[ch] * unbias);
                    if stats.initialized {
                        stats.mean[ch] = (1.0 - BN_MOMENTUM) * stats.mean[ch] + BN_MOMENTUM * m;
                        stats.var[ch] = (1.0 - BN_MOMENTUM) * stats.var[ch] + BN_MOMENTUM * v;
                    } else {
                        stats.mean[ch] = m;
                        stats.var[ch] = v;
                    }
                }
                stats.initialized = true;
                centered.mul(&inv_std.expand(&shape, b, l)?)?
            }
            Mode::Eval => {
                if !stats.initialized {
                    return Err(TensorError::Invalid {
                        op: "batch_norm1d",
                        msg: "running statistics are uninitialized".into(),
                    });
                }
                let mean = Tensor::from_slice(&stats.mean, &[c])?;
                let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
                let inv_std = Tensor::new(inv_std, vec![c])?;
                self.sub(&mean.expand(&shape, b, l)?)?.mul(&inv_std.expand(&shape, b, l)?)?
            }
        };
        normalized.mul(&gamma.expand(&shape, b, l)?)?.add(&beta.expand(&shape, b, l)?)
    }

    /// Endpoint-aligned linear interpolation of the last axis to `target`.
    pub fn upsample_linear(&self, target: usize) -> Result<Tensor> {
        let len = self.shape().last().copied().unwrap_or(0);
        if target < len {
            return Err(TensorError::Invalid {
                op: "upsample_linear",
                msg: format!("target {target} shorter than input {len}"),
            });
        }
        let map = Rc::new(SparseMap::linear_resample(len, target)?);
        self.axis_map(&map, false)
    }

    /// Kernel-2 stride-2 average pooling of the last axis (floor length).
    pub fn avg_pool1d(&self) -> Result<Tensor> {
        let len = self.shape().last().copied().unwrap_or(0);
        let map = Rc::new(SparseMap::avg_pool2(len)?);
        self.axis_map(&map, false)
    }

    /// Mean softmax cross-entropy of `[N,K]` logits against class indices.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let &[n, k] = self.shape() else {
            return Err(TensorError::Rank { op: "cross_entropy", expected: 2, shape: self.shape().to_vec() });
        };
        if labels.len() != n {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                axis: "batch".into(),
                expected: n,
                got: labels.len(),
            });
        }
        let mut onehot = vec![0.0; n * k];
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(TensorError::Invalid {
                    op: "cross_entropy",
                    msg: format!("label {y} out of range for {k} classes"),
                });
            }
            onehot[i * k + y] = 1.0;
        }
        let onehot = Tensor::new(onehot, vec![n, k])?;
        self.log_softmax()?.mul(&onehot)?.sum()?.scale(-1.0 / n as f64)
    }
}
