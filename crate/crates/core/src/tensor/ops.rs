//! Recorded primitive ops and their backward rules.
//!
//! Every backward rule is expressed with primitives from this file, which
//! keeps the op set closed under differentiation.

use std::rc::Rc;

use super::{fault, kernels, Result, Tensor, TensorError};

/// Fixed sparse linear map applied along the last axis.
///
/// Row `i` of `taps` lists `(source index, weight)` pairs contributing to
/// output position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    pub in_len: usize,
    pub out_len: usize,
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl SparseMap {
    /// Endpoint-aligned linear interpolation from `len` to `target` samples.
    /// Output `j` samples source coordinate `j·(len−1)/(target−1)`.
    pub fn linear_resample(len: usize, target: usize) -> Result<Self> {
        if len < 2 || target < 2 {
            return Err(TensorError::Invalid {
                op: "upsample_linear",
                msg: format!("lengths must be at least 2 (got {len} -> {target})"),
            });
        }
        let num = len - 1;
        let den = target - 1;
        let taps = (0..target)
            .map(|j| {
                // Exact rational position: j·num/den = i0 + rem/den.
                let mut i0 = j * num / den;
                let mut rem = j * num % den;
                if i0 == len - 1 {
                    i0 = len - 2;
                    rem = den;
                }
                let frac = rem as f64 / den as f64;
                vec![(i0, 1.0 - frac), (i0 + 1, frac)]
            })
            .collect();
        Ok(SparseMap { in_len: len, out_len: target, taps })
    }

    /// Kernel-2, stride-2 average; a trailing odd sample is dropped.
    pub fn avg_pool2(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(TensorError::Invalid {
                op: "avg_pool1d",
                msg: format!("length must be at least 2 (got {len})"),
            });
        }
        let out_len = len / 2;
        let taps = (0..out_len).map(|t| vec![(2 * t, 0.5), (2 * t + 1, 0.5)]).collect();
        Ok(SparseMap { in_len: len, out_len, taps })
    }

    fn apply(&self, x: &[f64], transposed: bool) -> Vec<f64> {
        let (src_len, dst_len) = if transposed { (self.out_len, self.in_len) } else { (self.in_len, self.out_len) };
        let rows = x.len() / src_len;
        let mut out = vec![0.0; rows * dst_len];
        for r in 0..rows {
            let src = &x[r * src_len..(r + 1) * src_len];
            let dst = &mut out[r * dst_len..(r + 1) * dst_len];
            if transposed {
                for (i, taps) in self.taps.iter().enumerate() {
                    for &(j, w) in taps {
                        dst[j] += w * src[i];
                    }
                }
            } else {
                for (i, taps) in self.taps.iter().enumerate() {
                    dst[i] = taps.iter().map(|&(j, w)| w * src[j]).sum();
                }
            }
        }
        out
    }
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Shift,
    Powf(f64),
    Sqrt,
    RecipSafe,
    Exp,
    LeakyRelu(f64),
    Reshape,
    Transpose2d,
    MatMul,
    Expand { outer: usize, inner: usize },
    SumKeep { outer: usize, inner: usize },
    Conv1d,
    ConvTranspose1d,
    ConvWeightGrad,
    AxisMap { map: Rc<SparseMap>, transposed: bool },
    LogSoftmax,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        if a.rank() != b.rank() {
            return Err(TensorError::Rank { op, expected: a.rank(), shape: b.shape.clone() });
        }
        let ax = a.shape.iter().zip(&b.shape).position(|(x, y)| x != y).unwrap_or(0);
        return Err(TensorError::Shape { op, axis: format!("axis {ax}"), expected: a.shape[ax], got: b.shape[ax] });
    }
    Ok(())
}

fn rank3(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(TensorError::Rank { op, expected: 3, shape: t.shape.clone() }),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Vec<f64> {
    t.data.iter().map(|&v| f(v)).collect()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect()
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        Tensor::record(Op::Add, &[self, other], self.shape.clone(), zip(self, other, |x, y| x + y))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        Tensor::record(Op::Sub, &[self, other], self.shape.clone(), zip(self, other, |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        Tensor::record(Op::Mul, &[self, other], self.shape.clone(), zip(self, other, |x, y| x * y))
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        Tensor::record(Op::Scale(c), &[self], self.shape.clone(), map(self, |x| c * x))
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    /// Adds a constant to every element.
    pub fn shift(&self, c: f64) -> Result<Tensor> {
        Tensor::record(Op::Shift, &[self], self.shape.clone(), map(self, |x| x + c))
    }

    pub fn powf(&self, p: f64) -> Result<Tensor> {
        Tensor::record(Op::Powf(p), &[self], self.shape.clone(), map(self, |x| x.powf(p)))
    }

    pub fn square(&self) -> Result<Tensor> {
        self.mul(self)
    }

    /// Square root. The derivative at 0 is taken as 0.
    pub fn sqrt(&self) -> Result<Tensor> {
        Tensor::record(Op::Sqrt, &[self], self.shape.clone(), map(self, f64::sqrt))
    }

    /// `1/x`, with 0 mapped to 0.
    pub fn recip_safe(&self) -> Result<Tensor> {
        let f = |x: f64| if x == 0.0 { 0.0 } else { 1.0 / x };
        Tensor::record(Op::RecipSafe, &[self], self.shape.clone(), map(self, f))
    }

    pub fn exp(&self) -> Result<Tensor> {
        Tensor::record(Op::Exp, &[self], self.shape.clone(), map(self, f64::exp))
    }

    /// `x` for `x ≥ 0`, `alpha·x` otherwise. The derivative at 0 is `alpha`
    /// and the second derivative is 0 everywhere.
    pub fn leaky_relu(&self, alpha: f64) -> Result<Tensor> {
        let f = |x: f64| if x >= 0.0 { x } else { alpha * x };
        Tensor::record(Op::LeakyRelu(alpha), &[self], self.shape.clone(), map(self, f))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::Invalid {
                op: "reshape",
                msg: format!("cannot reshape {:?} into {:?}", self.shape, shape),
            });
        }
        Tensor::record(Op::Reshape, &[self], shape.to_vec(), self.data.as_ref().clone())
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let [r, c] = self.shape[..] else {
            return Err(TensorError::Rank { op: "transpose2d", expected: 2, shape: self.shape.clone() });
        };
        Tensor::record(Op::Transpose2d, &[self], vec![c, r], kernels::transpose2d(&self.data, r, c))
    }

    /// `[m,k] × [k,n] → [m,n]`
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (&self.shape[..], &other.shape[..]) else {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: 2,
                shape: if self.rank() != 2 { self.shape.clone() } else { other.shape.clone() },
            });
        };
        if k != k2 {
            return Err(TensorError::Shape { op: "matmul", axis: "inner dimension".into(), expected: k, got: k2 });
        }
        let data = kernels::matmul(&self.data, &other.data, m, k, n);
        Tensor::record(Op::MatMul, &[self, other], vec![m, n], data)
    }

    /// Broadcasts a tensor of `M` elements to `shape`, viewed as
    /// `[outer, M, inner]`.
    pub fn expand(&self, shape: &[usize], outer: usize, inner: usize) -> Result<Tensor> {
        let m = self.numel();
        if outer * m * inner != shape.iter().product::<usize>() {
            return Err(TensorError::Invalid {
                op: "expand",
                msg: format!("{outer}x{m}x{inner} does not fill {shape:?}"),
            });
        }
        let mut data = Vec::with_capacity(outer * m * inner);
        for _ in 0..outer {
            for &v in self.data.iter() {
                data.extend(std::iter::repeat_n(v, inner));
            }
        }
        Tensor::record(Op::Expand { outer, inner }, &[self], shape.to_vec(), data)
    }

    /// Views the tensor as `[outer, M, inner]` and sums over the outer and
    /// inner axes, giving shape `[M]`.
    pub fn sum_keep(&self, outer: usize, inner: usize) -> Result<Tensor> {
        let n = self.numel();
        if outer == 0 || inner == 0 || !n.is_multiple_of(outer * inner) {
            return Err(TensorError::Invalid {
                op: "sum_keep",
                msg: format!("{outer}x?x{inner} does not divide {:?}", self.shape),
            });
        }
        let m = n / (outer * inner);
        let mut data = vec![0.0; m];
        for o in 0..outer {
            for (i, d) in data.iter_mut().enumerate() {
                let base = (o * m + i) * inner;
                *d += self.data[base..base + inner].iter().sum::<f64>();
            }
        }
        Tensor::record(Op::SumKeep { outer, inner }, &[self], vec![m], data)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&self) -> Result<Tensor> {
        self.sum_keep(1, self.numel().max(1))?.reshape(&[])
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// Cross-correlation without bias: `[B,Cin,L] ⊛ [Cout,Cin,k] → [B,Cout,L−k+1]`.
    pub fn conv1d_nobias(&self, kernels: &Tensor) -> Result<Tensor> {
        let (b, cin, len) = rank3("conv1d", self)?;
        let (cout, cin2, k) = rank3("conv1d", kernels)?;
        if cin != cin2 {
            return Err(TensorError::Shape { op: "conv1d", axis: "input channels".into(), expected: cin2, got: cin });
        }
        if k == 0 || len < k {
            return Err(TensorError::Shape {
                op: "conv1d",
                axis: "length (must be >= kernel size)".into(),
                expected: k,
                got: len,
            });
        }
        let data = kernels::conv1d(&self.data, &kernels.data, b, cin, len, cout, k);
        Tensor::record(Op::Conv1d, &[self, kernels], vec![b, cout, len + 1 - k], data)
    }

    /// Adjoint of [`Tensor::conv1d_nobias`] in its input:
    /// `[B,Cout,Lout] , [Cout,Cin,k] → [B,Cin,Lout+k−1]`.
    pub fn conv_transpose1d(&self, kernels: &Tensor) -> Result<Tensor> {
        let (b, cout, lout) = rank3("conv_transpose1d", self)?;
        let (cout2, cin, k) = rank3("conv_transpose1d", kernels)?;
        if cout != cout2 {
            return Err(TensorError::Shape {
                op: "conv_transpose1d",
                axis: "output channels".into(),
                expected: cout2,
                got: cout,
            });
        }
        let data = kernels::conv_transpose1d(&self.data, &kernels.data, b, cout, lout, cin, k);
        Tensor::record(Op::ConvTranspose1d, &[self, kernels], vec![b, cin, lout + k - 1], data)
    }

    /// Adjoint of [`Tensor::conv1d_nobias`] in its kernel:
    /// `x [B,Cin,L], g [B,Cout,Lout] → [Cout,Cin,L−Lout+1]`.
    pub fn conv1d_weight_grad(&self, g: &Tensor) -> Result<Tensor> {
        let (b, cin, len) = rank3("conv1d_weight_grad", self)?;
        let (b2, cout, lout) = rank3("conv1d_weight_grad", g)?;
        if b != b2 {
            return Err(TensorError::Shape { op: "conv1d_weight_grad", axis: "batch".into(), expected: b, got: b2 });
        }
        if lout == 0 || lout > len {
            return Err(TensorError::Shape {
                op: "conv1d_weight_grad",
                axis: "length".into(),
                expected: len,
                got: lout,
            });
        }
        let data = kernels::conv1d_weight_grad(&self.data, &g.data, b, cin, len, cout, lout);
        Tensor::record(Op::ConvWeightGrad, &[self, g], vec![cout, cin, len + 1 - lout], data)
    }

    /// Applies `map` (or its transpose) along the last axis.
    pub fn axis_map(&self, map: &Rc<SparseMap>, transposed: bool) -> Result<Tensor> {
        let last =
            *self.shape.last().ok_or(TensorError::Rank { op: "axis_map", expected: 1, shape: self.shape.clone() })?;
        let (src, dst) = if transposed { (map.out_len, map.in_len) } else { (map.in_len, map.out_len) };
        if last != src {
            return Err(TensorError::Shape { op: "axis_map", axis: "last axis".into(), expected: src, got: last });
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = dst;
        let data = map.apply(&self.data, transposed);
        Tensor::record(Op::AxisMap { map: Rc::clone(map), transposed }, &[self], shape, data)
    }

    /// Log-softmax over the last axis of a `[N,K]` tensor.
    pub fn log_softmax(&self) -> Result<Tensor> {
        let [n, k] = self.shape[..] else {
            return Err(TensorError::Rank { op: "log_softmax", expected: 2, shape: self.shape.clone() });
        };
        let mut data = vec![0.0; n * k];
        for i in 0..n {
            let row = &self.data[i * k..(i + 1) * k];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
            for (d, &v) in data[i * k..(i + 1) * k].iter_mut().zip(row) {
                *d = v - lse;
            }
        }
        Tensor::record(Op::LogSoftmax, &[self], vec![n, k], data)
    }
}

/// Adjoints of `op`'s inputs given the output adjoint `g`. Entries of `want`
/// that are false may be returned as `None`.
pub(crate) fn backward(
    op: &Op,
    inputs: &[Tensor],
    output: &Tensor,
    g: &Tensor,
    want: &[bool],
) -> Result<Vec<Option<Tensor>>> {
    let need = |i: usize| want.get(i).copied().unwrap_or(false);
    let x = &inputs[0];
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::Add => vec![Some(g.clone()), Some(g.clone())],
        Op::Sub => vec![Some(g.clone()), if need(1) { Some(g.neg()?) } else { None }],
        Op::Mul => {
            let y = &inputs[1];
            vec![if need(0) { Some(g.mul(y)?) } else { None }, if need(1) { Some(g.mul(x)?) } else { None }]
        }
        Op::Scale(c) => vec![Some(g.scale(*c)?)],
        Op::Shift => vec![Some(g.clone())],
        Op::Powf(p) => vec![Some(g.mul(&x.powf(p - 1.0)?.scale(*p)?)?)],
        Op::Sqrt => vec![Some(g.mul(&output.recip_safe()?.scale(0.5)?)?)],
        Op::RecipSafe => vec![Some(g.mul(&output.square()?.neg()?)?)],
        Op::Exp => vec![Some(g.mul(output)?)],
        Op::LeakyRelu(alpha) => {
            let slope: Vec<f64> = x.data.iter().map(|&v| if v > 0.0 { 1.0 } else { *alpha }).collect();
            let mask = Tensor::new(slope, x.shape.clone())?;
            vec![Some(g.mul(&mask)?)]
        }
        Op::Reshape => vec![Some(g.reshape(&x.shape)?)],
        Op::Transpose2d => vec![Some(g.transpose2d()?)],
        Op::MatMul => {
            let y = &inputs[1];
            vec![
                if need(0) { Some(g.matmul(&y.transpose2d()?)?) } else { None },
                if need(1) { Some(x.transpose2d()?.matmul(g)?) } else { None },
            ]
        }
        Op::Expand { outer, inner } => {
            vec![Some(g.sum_keep(*outer, *inner)?.reshape(&x.shape)?)]
        }
        Op::SumKeep { outer, inner } => vec![Some(g.expand(&x.shape, *outer, *inner)?)],
        Op::Conv1d => {
            let w = &inputs[1];
            let gx = if need(0) {
                let gx = g.conv_transpose1d(w)?;
                Some(if fault::conv1d_backward_fault() { gx.scale(1.01)? } else { gx })
            } else {
                None
            };
            let gw = if need(1) { Some(x.conv1d_weight_grad(g)?) } else { None };
            vec![gx, gw]
        }
        Op::ConvTranspose1d => {
            // z = convT(h, w):  dh = conv1d(g, w),  dw = wgrad(g, h)
            let w = &inputs[1];
            vec![
                if need(0) { Some(g.conv1d_nobias(w)?) } else { None },
                if need(1) { Some(g.conv1d_weight_grad(x)?) } else { None },
            ]
        }
        Op::ConvWeightGrad => {
            // u = wgrad(x, h):  dx = convT(h, g),  dh = conv1d(x, g)
            let h = &inputs[1];
            vec![
                if need(0) { Some(h.conv_transpose1d(g)?) } else { None },
                if need(1) { Some(x.conv1d_nobias(g)?) } else { None },
            ]
        }
        Op::AxisMap { map, transposed } => vec![Some(g.axis_map(map, !transposed)?)],
        Op::LogSoftmax => {
            let [n, k] = x.shape[..] else { unreachable!() };
            let row_sum = g.sum_keep(1, k)?.expand(&[n, k], 1, k)?;
            vec![Some(g.sub(&output.exp()?.mul(&row_sum)?)?)]
        }
    })
}
