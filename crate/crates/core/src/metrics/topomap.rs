use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::montage::electrode_xy;
use super::spectral::{band_power, channel_psd, WelchConfig};
use crate::error::{Error, Result};
use crate::signals::Signals;

pub const IDW_POWER: f64 = 2.0;
pub const IDW_NEIGHBORS: usize = 4;

/// Scalar mapped to each electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopoMetric {
    BandPower { lo: f64, hi: f64, welch: WelchConfig },
    Rms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopomapGrid {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// Raw per-channel values, before normalization.
    pub values: Vec<f64>,
    /// `(min, max)` of `values`, used for normalization.
    pub bounds: (f64, f64),
    pub size: usize,
    /// Row-major `size × size` grid from `y = +1` (nose) down to `y = −1`;
    /// `None` outside the head.
    pub grid: Vec<Option<f64>>,
}

impl TopomapGrid {
    /// Center of cell `(row, col)` in head coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        cell_center(self.size, row, col)
    }

    /// Cell containing point `p`.
    pub fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let g = self.size as f64;
        let idx = |v: f64| (((v + 1.0) / 2.0 * g).floor() as usize).min(self.size - 1);
        (self.size - 1 - idx(p[1]), idx(p[0]))
    }

    pub fn at(&self, row: usize, col: usize) -> Option<f64> {
        self.grid[row * self.size + col]
    }

    /// Flat heatmap with a head outline and electrode markers.
    pub fn to_svg(&self) -> String {
        let px = 400.0;
        let cell = px / self.size as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{px}" height="{px}" viewBox="0 0 {px} {px}">"#
        );
        for row in 0..self.size {
            for col in 0..self.size {
                if let Some(v) = self.at(row, col) {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                        col as f64 * cell,
                        row as f64 * cell,
                        cell + 0.05,
                        cell + 0.05,
                        colormap(v)
                    );
                }
            }
        }
        let to_px = |p: [f64; 2]| ((p[0] + 1.0) / 2.0 * px, (1.0 - p[1]) / 2.0 * px);
        let _ = writeln!(s, r#"<circle cx="{h}" cy="{h}" r="{h}" fill="none" stroke="black"/>"#, h = px / 2.0);
        for (l, &p) in self.labels.iter().zip(&self.coords) {
            let (x, y) = to_px(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="black"><title>{l}</title></circle>"#);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn cell_center(size: usize, row: usize, col: usize) -> [f64; 2] {
    let g = size as f64;
    [(col as f64 + 0.5) / g * 2.0 - 1.0, 1.0 - (row as f64 + 0.5) / g * 2.0]
}

/// Blue → white → red for values in `[0, 1]`.
fn colormap(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 0.5 {
        let t = v * 2.0;
        (t, t, 1.0)
    } else {
        let t = (1.0 - v) * 2.0;
        (1.0, t, t)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8)
}

/// Per-channel metric averaged over all samples.
pub fn channel_values(signals: &Signals, metric: &TopoMetric) -> Result<Vec<f64>> {
    if signals.n == 0 {
        return Err(Error::InvalidInput("no signals for topomap".into()));
    }
    match metric {
        TopoMetric::BandPower { lo, hi, welch } => {
            channel_psd(signals, welch)?.iter().map(|p| band_power(p, *lo, *hi)).collect()
        }
        TopoMetric::Rms => Ok((0..signals.channels)
            .map(|c| {
                let per: f64 = (0..signals.n)
                    .map(|i| {
                        let x = signals.channel(i, c);
                        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
                    })
                    .sum();
                per / signals.n as f64
            })
            .collect()),
    }
}

/// Inverse-distance interpolation of per-electrode `values` onto a
/// `size × size` grid masked to the unit disk, min-max normalized. A
/// constant map keeps its value.
pub fn interpolate_topomap(labels: &[String], values: &[f64], size: usize) -> Result<TopomapGrid> {
    if labels.len() != values.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} values", labels.len(), values.len())));
    }
    if size == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    let coords = labels
        .iter()
        .map(|l| electrode_xy(l).ok_or_else(|| Error::InvalidInput(format!("unknown channel label {l:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = if hi > lo { values.iter().map(|v| (v - lo) / (hi - lo)).collect() } else { values.to_vec() };

    let mut grid = Vec::with_capacity(size * size);
    let mut near: Vec<(f64, usize)> = Vec::with_capacity(coords.len());
    for row in 0..size {
        for col in 0..size {
            let p = cell_center(size, row, col);
            if p[0].hypot(p[1]) > 1.0 {
                grid.push(None);
                continue;
            }
            near.clear();
            near.extend(coords.iter().enumerate().map(|(i, c)| ((p[0] - c[0]).hypot(p[1] - c[1]), i)));
            // Ties broken by channel label so the result does not depend on
            // channel order.
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| labels[a.1].cmp(&labels[b.1])));
            let k = IDW_NEIGHBORS.min(near.len());
            let v = if hi == lo {
                lo
            } else if near[0].0 == 0.0 {
                norm[near[0].1]
            } else {
                let (mut num, mut den) = (0.0, 0.0);
                for &(d, i) in &near[..k] {
                    let w = d.powf(-IDW_POWER);
                    num += w * norm[i];
                    den += w;
                }
                num / den
            };
            grid.push(Some(v));
        }
    }
    Ok(TopomapGrid { labels: labels.to_vec(), coords, values: values.to_vec(), bounds: (lo, hi), size, grid })
}

pub fn topomap(signals: &Signals, labels: &[String], metric: &TopoMetric, size: usize) -> Result<TopomapGrid> {
    if labels.len() != signals.channels {
        return Err(Error::ShapeMismatch(format!("{} labels for {} channels", labels.len(), signals.channels)));
    }
    interpolate_topomap(labels, &channel_values(signals, metric)?, size)
}
