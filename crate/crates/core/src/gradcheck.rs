//! Finite-difference verification of every differentiable op, including
//! second-order paths and the gradient-penalty composite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::tensor::{self, grad, grad_allow_unused, uniform_sample, BatchNormStats, Mode, Tape, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Tolerance for single ops.
pub const OP_TOL: f64 = 1e-5;
/// Tolerance for second-order paths and the gradient-penalty composite.
pub const COMPOSITE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub op: String,
    pub point: String,
    pub rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    /// One row per op: configuration count, worst relative error, status.
    pub fn summary_table(&self) -> String {
        let mut ops: Vec<&str> = Vec::new();
        for r in &self.results {
            if !ops.contains(&r.op.as_str()) {
                ops.push(&r.op);
            }
        }
        let mut out = format!("{:<34} {:>7} {:>12} {:>9}  status\n", "op", "configs", "max rel err", "tol");
        for op in ops {
            let rows: Vec<_> = self.results.iter().filter(|r| r.op == op).collect();
            let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
            let ok = rows.iter().all(|r| r.passed);
            out.push_str(&format!(
                "{:<34} {:>7} {:>12.3e} {:>9.0e}  {}\n",
                op,
                rows.len(),
                worst,
                rows[0].tol,
                if ok { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute difference when both
/// vectors are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Compares the recorded gradient of `f` against central differences.
///
/// `f` receives the inputs registered on a fresh higher-order tape and must
/// return a scalar; it may take gradients internally.
pub fn check_gradient<F, E>(f: F, inputs: &[Tensor], step: f64) -> Result<f64, E>
where
    F: Fn(&[Tensor]) -> Result<Tensor, E>,
    E: From<tensor::TensorError>,
{
    let eval = |xs: &[Tensor]| -> Result<(Tensor, Vec<Tensor>), E> {
        let tape = Tape::new(true);
        let vars: Vec<Tensor> = xs.iter().map(|x| tape.var(x)).collect();
        Ok((f(&vars)?, vars))
    };
    let (out, vars) = eval(inputs)?;
    let refs: Vec<&Tensor> = vars.iter().collect();
    let analytic = grad_allow_unused(&out, &refs, false)?;

    let mut a = Vec::new();
    let mut n = Vec::new();
    for (k, x) in inputs.iter().enumerate() {
        a.extend_from_slice(analytic[k].data());
        for i in 0..x.numel() {
            let mut probe = inputs.to_vec();
            let mut plus = x.clone();
            plus.data_mut()?[i] += step;
            probe[k] = plus;
            let fp = eval(&probe)?.0.item();
            let mut minus = x.clone();
            minus.data_mut()?[i] -= step;
            probe[k] = minus;
            let fm = eval(&probe)?.0.item();
            n.push((fp - fm) / (2.0 * step));
        }
    }
    Ok(relative_error(&a, &n))
}

struct Suite {
    rng: ChaCha8Rng,
    report: GradcheckReport,
}

impl Suite {
    fn rand(&mut self, shape: &[usize]) -> Tensor {
        uniform_sample(shape, -1.0, 1.0, &mut self.rng)
    }

    /// Uniform values with magnitude in `[0.05, 1]`, away from kinks.
    fn rand_off_kink(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let m = self.rng.random_range(0.05..1.0);
                if self.rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::new(data, shape.to_vec()).unwrap()
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor {
        uniform_sample(shape, 0.5, 2.0, &mut self.rng)
    }

    fn run<F>(&mut self, op: &str, point: String, tol: f64, inputs: &[Tensor], f: F)
    where
        F: Fn(&[Tensor]) -> tensor::Result<Tensor>,
    {
        let rel_err = match check_gradient(f, inputs, FD_STEP) {
            Ok(e) => e,
            Err(e) => {
                log::error!("{op} at {point}: {e}");
                f64::INFINITY
            }
        };
        self.report.results.push(CheckResult { op: op.to_string(), point, rel_err, tol, passed: rel_err <= tol });
    }

    /// First-order check of `Σ r ⊙ op(x)` for a fixed random projection `r`.
    fn unary<F>(&mut self, op: &str, point: String, x: Tensor, f: F)
    where
        F: Fn(&Tensor) -> tensor::Result<Tensor> + Copy,
    {
        let out_shape = f(&x).expect("op evaluates").shape().to_vec();
        let r = self.rand(&out_shape);
        self.run(op, point, OP_TOL, &[x], move |v| f(&v[0])?.mul(&r)?.sum());
    }

    fn binary<F>(&mut self, op: &str, point: String, x: Tensor, y: Tensor, f: F)
    where
        F: Fn(&Tensor, &Tensor) -> tensor::Result<Tensor> + Copy,
    {
        let out_shape = f(&x, &y).expect("op evaluates").shape().to_vec();
        let r = self.rand(&out_shape);
        self.run(op, point, OP_TOL, &[x, y], move |v| f(&v[0], &v[1])?.mul(&r)?.sum());
    }

    /// Second-order check: differentiates `Σ r2 ⊙ ∇_x Σ r ⊙ op(x, params)`
    /// with respect to every input.
    fn second_order<F>(&mut self, op: &str, point: String, inputs: Vec<Tensor>, f: F)
    where
        F: Fn(&[Tensor]) -> tensor::Result<Tensor> + Copy,
    {
        let out_shape = f(&inputs).expect("op evaluates").shape().to_vec();
        let r = self.rand(&out_shape);
        let r2 = self.rand(inputs[0].shape());
        self.run(op, point, COMPOSITE_TOL, &inputs, move |v| {
            let inner = f(v)?.mul(&r)?.sum()?;
            let gx = grad(&inner, &[&v[0]], true)?.remove(0);
            gx.mul(&r2)?.sum()
        });
    }
}

/// Penalty `λ·mean_b (‖∇_x C(x)_b‖₂ − 1)²` for a two-layer critic
/// `C(x) = mean_c dense(lrelu(conv(x)))`. Inputs: `[x, w1, b1, w2, b2]`.
pub fn two_layer_penalty(v: &[Tensor], lambda: f64) -> tensor::Result<Tensor> {
    let (x, w1, b1, w2, b2) = (&v[0], &v[1], &v[2], &v[3], &v[4]);
    let h = x.conv1d(w1, b1)?.leaky_relu(0.2)?;
    let s = h.dense(w2, b2)?; // [B, C, 1]
    let b = x.shape()[0];
    let c = s.shape()[1];
    let scores = s.sum_keep(1, c)?.scale(1.0 / c as f64)?; // [B]
    let gx = grad(&scores.sum()?, &[x], true)?.remove(0);
    let per = x.numel() / b;
    let norm = gx.square()?.sum_keep(1, per)?.sqrt()?;
    norm.shift(-1.0)?.square()?.mean()?.scale(lambda)
}

/// Runs every check with `configs` random configurations per op.
pub fn run_suite(seed: u64, configs: usize) -> GradcheckReport {
    let mut s = Suite { rng: ChaCha8Rng::seed_from_u64(seed), report: GradcheckReport::default() };
    for cfg in 0..configs {
        let b = s.rng.random_range(1..3usize);
        let c = s.rng.random_range(1..4usize);
        let l = s.rng.random_range(4..9usize);
        let pt = |extra: &str| format!("cfg {cfg}: B={b} C={c} L={l}{extra}");
        let sh = [b, c, l];

        let (x, y) = (s.rand(&sh), s.rand(&sh));
        s.binary("add", pt(""), x.clone(), y.clone(), |a, b| a.add(b));
        s.binary("sub", pt(""), x.clone(), y.clone(), |a, b| a.sub(b));
        s.binary("mul", pt(""), x.clone(), y, |a, b| a.mul(b));
        s.unary("scale+shift", pt(""), x.clone(), |a| a.scale(-1.7)?.shift(0.3));
        let p = s.positive(&sh);
        s.unary("powf", pt(" p=-0.5"), p.clone(), |a| a.powf(-0.5));
        s.unary("sqrt", pt(""), p.clone(), |a| a.sqrt());
        s.unary("recip_safe", pt(""), p, |a| a.recip_safe());
        s.unary("exp", pt(""), x.clone(), |a| a.exp());
        let xk = s.rand_off_kink(&sh);
        s.unary("leaky_relu", pt(""), xk.clone(), |a| a.leaky_relu(0.2));
        s.unary("sum_keep", pt(""), x.clone(), move |a| a.sum_keep(b, l));
        let m = s.rand(&[c]);
        s.unary("expand", pt(""), m, move |a| a.expand(&[b, c, l], b, l));

        let k = s.rng.random_range(1..4usize).min(l);
        let cout = s.rng.random_range(1..4usize);
        let w = s.rand(&[cout, c, k]);
        let bias = s.rand(&[cout]);
        let cpt = pt(&format!(" Cout={cout} k={k}"));
        let r = s.rand(&[b, cout, l + 1 - k]);
        s.run("conv1d", cpt.clone(), OP_TOL, &[x.clone(), w.clone(), bias], |v| {
            v[0].conv1d(&v[1], &v[2])?.mul(&r)?.sum()
        });
        let g = s.rand(&[b, cout, l + 1 - k]);
        s.binary("conv_transpose1d", cpt.clone(), g.clone(), w.clone(), |a, b| a.conv_transpose1d(b));
        s.binary("conv1d_weight_grad", cpt.clone(), x.clone(), g, |a, b| a.conv1d_weight_grad(b));

        let lout = s.rng.random_range(1..5usize);
        let dw = s.rand(&[lout, l]);
        let db = s.rand(&[lout]);
        let r = s.rand(&[b, c, lout]);
        s.run("dense", pt(&format!(" Lout={lout}")), OP_TOL, &[x.clone(), dw.clone(), db], |v| {
            v[0].dense(&v[1], &v[2])?.mul(&r)?.sum()
        });
        let x2 = s.rand(&[c, l]);
        s.binary("matmul", pt(""), x2, dw.transpose2d().unwrap(), |a, b| a.matmul(b));

        let target = l + s.rng.random_range(0..6usize);
        s.unary("upsample_linear", pt(&format!(" M={target}")), x.clone(), move |a| a.upsample_linear(target));
        s.unary("avg_pool1d", pt(""), x.clone(), |a| a.avg_pool1d());

        let bx = s.rand(&[b + 1, c, l]);
        let gamma = s.positive(&[c]);
        let beta = s.rand(&[c]);
        let r = s.rand(&[b + 1, c, l]);
        s.run("batch_norm1d", pt(" (train)"), OP_TOL, &[bx.clone(), gamma.clone(), beta.clone()], |v| {
            let mut st = BatchNormStats::new(v[1].numel());
            v[0].batch_norm1d(&v[1], &v[2], &mut st, Mode::Train)?.mul(&r)?.sum()
        });

        let logits = s.rand(&[b + 1, 3]);
        s.unary("log_softmax", pt(""), logits.clone(), |a| a.log_softmax());
        let labels: Vec<usize> = (0..b + 1).map(|i| (i + cfg) % 3).collect();
        s.run("cross_entropy", pt(""), OP_TOL, &[logits], move |v| v[0].cross_entropy(&labels));

        // Second-order paths.
        s.second_order("conv1d (2nd order)", cpt, vec![xk.clone(), w, s_bias(cout)], |v| {
            v[0].conv1d(&v[1], &v[2])?.leaky_relu(0.2)?.square()
        });
        s.second_order("dense (2nd order)", pt(""), vec![x.clone(), dw], |v| {
            v[0].dense(&v[1], &Tensor::zeros(&[v[1].shape()[0]]))?.square()
        });
        s.second_order("upsample+pool (2nd order)", pt(""), vec![x.clone()], move |v| {
            v[0].upsample_linear(target)?.avg_pool1d()?.square()
        });
        s.second_order("batch_norm1d (2nd order)", pt(""), vec![bx, gamma, beta], |v| {
            let mut st = BatchNormStats::new(v[1].numel());
            v[0].batch_norm1d(&v[1], &v[2], &mut st, Mode::Train)?.square()
        });
        s.second_order("sqrt/exp (2nd order)", pt(""), vec![x.clone()], |v| v[0].exp()?.sqrt()?.powf(3.0));
    }

    for cfg in 0..configs {
        let b = s.rng.random_range(1..4usize);
        let c = s.rng.random_range(1..4usize);
        let l = s.rng.random_range(5..9usize);
        let hidden = s.rng.random_range(2..5usize);
        let x = s.rand(&[b, c, l]);
        let w1 = s.rand(&[hidden, c, 3]);
        let b1 = s.rand(&[hidden]);
        let w2 = s.rand(&[1, l - 2]);
        let b2 = s.rand(&[1]);
        let point = format!("cfg {cfg}: B={b} C={c} L={l} hidden={hidden}");
        // Penalty gradient w.r.t. the critic parameters (x held fixed).
        let x_fixed = x.clone();
        s.run("gradient_penalty composite", point, COMPOSITE_TOL, &[w1, b1, w2, b2], move |v| {
            let x = v[0].tape().expect("attached").var(&x_fixed);
            two_layer_penalty(&[x, v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()], 10.0)
        });
    }
    s.report
}

fn s_bias(n: usize) -> Tensor {
    Tensor::full(&[n], 0.1)
}
