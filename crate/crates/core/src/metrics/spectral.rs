use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Signals;

pub const DELTA_BAND: (f64, f64) = (0.5, 4.0);
pub const THETA_BAND: (f64, f64) = (4.0, 8.0);
pub const ALPHA_BAND: (f64, f64) = (8.0, 13.0);
pub const BETA_BAND: (f64, f64) = (13.0, 30.0);
pub const GAMMA_BAND: (f64, f64) = (30.0, 80.0);

/// Named frequency bands reported by the band-power tools.
pub const BANDS: [(&str, (f64, f64)); 5] =
    [("delta", DELTA_BAND), ("theta", THETA_BAND), ("alpha", ALPHA_BAND), ("beta", BETA_BAND), ("gamma", GAMMA_BAND)];

/// Symmetric Hann window, `w[k] = 0.5(1 − cos(2πk/(n−1)))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("window length {n} < 2")));
    }
    let d = (n - 1) as f64;
    Ok((0..n).map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / d).cos())).collect())
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!("fft length {n} is not a power of two")));
    }
    Ok(())
}

/// Forward DFT, `X[k] = Σ x[n] e^{−2πikn/N}`, for power-of-two lengths.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(x.len())?;
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    Ok(buf)
}

/// Inverse of [`fft`], including the `1/N` factor.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(x.len())?;
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(x.len()).process(&mut buf);
    let s = 1.0 / x.len() as f64;
    buf.iter_mut().for_each(|v| *v *= s);
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub fs: f64,
    pub nperseg: usize,
    /// Fraction of a segment shared with the next one.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig { fs: 160.0, nperseg: 256, overlap: 0.5 }
    }
}

impl WelchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate {} must be positive", self.fs)));
        }
        if self.nperseg < 2 || !self.nperseg.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("nperseg {} must be even and >= 2", self.nperseg)));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidInput(format!("overlap {} must lie in [0, 1)", self.overlap)));
        }
        Ok(())
    }

    fn hop(&self) -> usize {
        ((self.nperseg as f64 * (1.0 - self.overlap)).floor() as usize).max(1)
    }

    pub fn freqs(&self) -> Vec<f64> {
        let df = self.fs / self.nperseg as f64;
        (0..=self.nperseg / 2).map(|k| k as f64 * df).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    /// One-sided spectral density, units²/Hz.
    pub power: Vec<f64>,
    pub nfft: usize,
    pub fs: f64,
    pub segments: usize,
}

impl PsdEstimate {
    /// Index of the largest power value.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.power.iter().enumerate() {
            if p > self.power[best] {
                best = i;
            }
        }
        best
    }

    /// `freq_hz,power` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,power\n");
        for (f, p) in self.freqs.iter().zip(&self.power) {
            s.push_str(&format!("{f},{p:e}\n"));
        }
        s
    }
}

struct Welch {
    cfg: WelchConfig,
    window: Vec<f64>,
    scale: f64,
    plan: Arc<dyn Fft<f64>>,
}

impl Welch {
    fn new(cfg: WelchConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hann_window(cfg.nperseg)?;
        let scale = 1.0 / (cfg.fs * window.iter().map(|w| w * w).sum::<f64>());
        let plan = FftPlanner::new().plan_fft_forward(cfg.nperseg);
        Ok(Welch { cfg, window, scale, plan })
    }

    fn segments(&self, len: usize) -> usize {
        if len < self.cfg.nperseg {
            0
        } else {
            (len - self.cfg.nperseg) / self.cfg.hop() + 1
        }
    }

    fn estimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.cfg.nperseg;
        let segs = self.segments(x.len());
        if segs == 0 {
            return Err(Error::InvalidInput(format!("signal of length {} is shorter than one segment ({n})", x.len())));
        }
        let half = n / 2;
        let mut acc = vec![0.0; half + 1];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..segs {
            let seg = &x[s * self.cfg.hop()..s * self.cfg.hop() + n];
            // Constant detrend per segment.
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new((v - mean) * w, 0.0);
            }
            self.plan.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                let double = if k == 0 || k == half { 1.0 } else { 2.0 };
                *a += double * buf[k].norm_sqr() * self.scale;
            }
        }
        acc.iter_mut().for_each(|a| *a /= segs as f64);
        Ok(acc)
    }

    fn wrap(&self, power: Vec<f64>, len: usize) -> PsdEstimate {
        PsdEstimate {
            freqs: self.cfg.freqs(),
            power,
            nfft: self.cfg.nperseg,
            fs: self.cfg.fs,
            segments: self.segments(len),
        }
    }
}

/// Welch's averaged periodogram with a Hann window, density scaling and
/// constant detrending per segment. Trailing samples that do not fill a
/// segment are ignored.
pub fn welch_psd(x: &[f64], cfg: &WelchConfig) -> Result<PsdEstimate> {
    let w = Welch::new(*cfg)?;
    let p = w.estimate(x)?;
    Ok(w.wrap(p, x.len()))
}

/// Mean of the Welch estimates of every channel of every sample.
pub fn dataset_psd(signals: &Signals, cfg: &WelchConfig) -> Result<PsdEstimate> {
    let per = channel_psd(signals, cfg)?;
    let mut out = per[0].clone();
    for (k, v) in out.power.iter_mut().enumerate() {
        *v = per.iter().map(|e| e.power[k]).sum::<f64>() / per.len() as f64;
    }
    Ok(out)
}

/// Per-channel Welch estimates averaged over samples.
pub fn channel_psd(signals: &Signals, cfg: &WelchConfig) -> Result<Vec<PsdEstimate>> {
    if signals.n == 0 || signals.channels == 0 {
        return Err(Error::InvalidInput("no signals to estimate".into()));
    }
    let w = Welch::new(*cfg)?;
    let per: Vec<Vec<Vec<f64>>> = (0..signals.n)
        .into_par_iter()
        .map(|i| (0..signals.channels).map(|c| w.estimate(signals.channel(i, c))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let bins = cfg.nperseg / 2 + 1;
    let out = (0..signals.channels)
        .map(|c| {
            let mut p = vec![0.0; bins];
            // Summation in sample order keeps the result thread-count independent.
            for sample in &per {
                p.iter_mut().zip(&sample[c]).for_each(|(a, b)| *a += b);
            }
            p.iter_mut().for_each(|a| *a /= signals.n as f64);
            w.wrap(p, signals.len)
        })
        .collect();
    Ok(out)
}

/// Trapezoidal integral of the density over `[lo, hi]`, with the power at
/// the band edges linearly interpolated between bins.
pub fn band_power(psd: &PsdEstimate, lo: f64, hi: f64) -> Result<f64> {
    let top = *psd.freqs.last().unwrap_or(&0.0);
    if !(lo >= 0.0 && lo < hi && hi <= top) {
        return Err(Error::InvalidInput(format!("band [{lo}, {hi}] must satisfy 0 <= lo < hi <= {top}")));
    }
    let f = &psd.freqs;
    let p = &psd.power;
    let at = |x: f64| -> f64 {
        let i = f.partition_point(|&v| v <= x).clamp(1, f.len() - 1);
        let t = (x - f[i - 1]) / (f[i] - f[i - 1]);
        p[i - 1] + t * (p[i] - p[i - 1])
    };
    let mut pts = vec![(lo, at(lo))];
    pts.extend(f.iter().zip(p).filter(|(&x, _)| x > lo && x < hi).map(|(&x, &y)| (x, y)));
    pts.push((hi, at(hi)));
    Ok(pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum())
}
