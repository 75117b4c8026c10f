//! Raw slice kernels. Each output row is produced by exactly one task with a
//! fixed summation order, so parallel execution is bitwise deterministic.
//!
//! Row functions are compiled twice: once for the baseline target and once
//! with AVX2 enabled, selected at runtime. Neither build fuses multiply-adds,
//! so both produce identical bits.

use rayon::prelude::*;

const PAR_MIN_WORK: usize = 1 << 14;

/// Instantiates `$name` for the baseline target and, on x86-64, an AVX2
/// variant; returns a pointer to the best one available.
macro_rules! multiversion {
    ($pick:ident, $name:ident ( $($arg:ident : $ty:ty),* )) => {
        fn $pick() -> fn($($ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn avx2($($arg: $ty),*) {
                    $name($($arg),*)
                }
                fn avx2_entry($($arg: $ty),*) {
                    // SAFETY: only returned after the runtime check below.
                    unsafe { avx2($($arg),*) }
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    return avx2_entry;
                }
            }
            $name
        }
    };
}

fn run_rows(out: &mut [f64], row_len: usize, work: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if row_len == 0 {
        return;
    }
    if work >= PAR_MIN_WORK {
        out.par_chunks_mut(row_len).enumerate().for_each(|(i, d)| f(i, d));
    } else {
        out.chunks_mut(row_len).enumerate().for_each(|(i, d)| f(i, d));
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    cin: usize,
    len: usize,
    cout: usize,
    k: usize,
}

impl ConvDims {
    fn lout(&self) -> usize {
        self.len + 1 - self.k
    }
}

#[inline(always)]
fn conv1d_row(x: &[f64], w: &[f64], d: ConvDims, idx: usize, dst: &mut [f64]) {
    let lout = d.lout();
    let (bi, o) = (idx / d.cout, idx % d.cout);
    for c in 0..d.cin {
        let src = &x[(bi * d.cin + c) * d.len..(bi * d.cin + c + 1) * d.len];
        let wk = &w[(o * d.cin + c) * d.k..(o * d.cin + c + 1) * d.k];
        for (j, &wv) in wk.iter().enumerate() {
            for (o, s) in dst.iter_mut().zip(&src[j..j + lout]) {
                *o += wv * s;
            }
        }
    }
}
multiversion!(conv1d_row_fn, conv1d_row(x: &[f64], w: &[f64], d: ConvDims, idx: usize, dst: &mut [f64]));

/// `out[b,o,t] = Σ_{c,j} x[b,c,t+j] · w[o,c,j]`
pub fn conv1d(x: &[f64], w: &[f64], b: usize, cin: usize, len: usize, cout: usize, k: usize) -> Vec<f64> {
    let d = ConvDims { cin, len, cout, k };
    let mut out = vec![0.0; b * cout * d.lout()];
    let row = conv1d_row_fn();
    let work = out.len() * cin * k;
    run_rows(&mut out, d.lout(), work, |i, dst| row(x, w, d, i, dst));
    out
}

#[inline(always)]
fn conv_transpose1d_row(g: &[f64], w: &[f64], d: ConvDims, idx: usize, dst: &mut [f64]) {
    let lout = d.lout();
    let (bi, c) = (idx / d.cin, idx % d.cin);
    for o in 0..d.cout {
        let src = &g[(bi * d.cout + o) * lout..(bi * d.cout + o + 1) * lout];
        let wk = &w[(o * d.cin + c) * d.k..(o * d.cin + c + 1) * d.k];
        for (j, &wv) in wk.iter().enumerate() {
            for (t, s) in dst[j..j + lout].iter_mut().zip(src) {
                *t += wv * s;
            }
        }
    }
}
multiversion!(conv_transpose1d_row_fn, conv_transpose1d_row(g: &[f64], w: &[f64], d: ConvDims, idx: usize, dst: &mut [f64]));

/// Adjoint of [`conv1d`] in its input: `z[b,c,t+j] += g[b,o,t] · w[o,c,j]`.
pub fn conv_transpose1d(g: &[f64], w: &[f64], b: usize, cout: usize, lout: usize, cin: usize, k: usize) -> Vec<f64> {
    let d = ConvDims { cin, len: lout + k - 1, cout, k };
    let mut out = vec![0.0; b * cin * d.len];
    let row = conv_transpose1d_row_fn();
    let work = out.len() * cout * k;
    run_rows(&mut out, d.len, work, |i, dst| row(g, w, d, i, dst));
    out
}

#[inline(always)]
fn weight_grad_row(x: &[f64], g: &[f64], d: ConvDims, b: usize, o: usize, dst: &mut [f64]) {
    let lout = d.lout();
    for c in 0..d.cin {
        for j in 0..d.k {
            let mut acc = 0.0;
            for bi in 0..b {
                let xs = &x[(bi * d.cin + c) * d.len + j..(bi * d.cin + c) * d.len + j + lout];
                let gs = &g[(bi * d.cout + o) * lout..(bi * d.cout + o + 1) * lout];
                acc += dot(xs, gs);
            }
            dst[c * d.k + j] = acc;
        }
    }
}
multiversion!(weight_grad_row_fn, weight_grad_row(x: &[f64], g: &[f64], d: ConvDims, b: usize, o: usize, dst: &mut [f64]));

/// Adjoint of [`conv1d`] in its kernel: `u[o,c,j] = Σ_{b,t} x[b,c,t+j] · g[b,o,t]`.
pub fn conv1d_weight_grad(
    x: &[f64],
    g: &[f64],
    b: usize,
    cin: usize,
    len: usize,
    cout: usize,
    lout: usize,
) -> Vec<f64> {
    let d = ConvDims { cin, len, cout, k: len + 1 - lout };
    let mut out = vec![0.0; cout * cin * d.k];
    let row = weight_grad_row_fn();
    let work = out.len() * b * lout;
    run_rows(&mut out, cin * d.k, work, |o, dst| row(x, g, d, b, o, dst));
    out
}

#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums let the compiler vectorize; order is fixed.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline(always)]
fn matmul_row(a: &[f64], b: &[f64], k: usize, n: usize, i: usize, dst: &mut [f64]) {
    for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
        for (d, bv) in dst.iter_mut().zip(&b[p * n..(p + 1) * n]) {
            *d += av * bv;
        }
    }
}
multiversion!(matmul_row_fn, matmul_row(a: &[f64], b: &[f64], k: usize, n: usize, i: usize, dst: &mut [f64]));

/// `[m,k] × [k,n] → [m,n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let row = matmul_row_fn();
    run_rows(&mut out, n, m * k * n, |i, dst| row(a, b, k, n, i, dst));
    out
}

pub fn transpose2d(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
