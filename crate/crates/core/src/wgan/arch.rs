use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One row of a per-layer shape trace (batch axis omitted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub layer: String,
    pub shape: Vec<usize>,
}

impl TraceRow {
    pub(crate) fn new(layer: &str, shape: &[usize]) -> Self {
        TraceRow { layer: layer.to_string(), shape: shape.to_vec() }
    }
}

/// Upsample target used after every generator stage: `M = 2L + 2`.
pub fn upsample_target(len: usize) -> usize {
    2 * len + 2
}

/// Generator layout: dense from the latent vector, reshape to
/// `hidden × init_len`, a kernel-3 conv block, `stages` upsample stages
/// (two conv blocks each except the last, which has one), a kernel-1 conv to
/// `out_channels`, and a dense map over time to `out_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub latent_dim: usize,
    pub hidden_channels: usize,
    pub out_channels: usize,
    pub out_len: usize,
    pub init_len: usize,
    pub stages: usize,
    pub kernel: usize,
    pub leaky_alpha: f64,
}

impl GeneratorArch {
    pub fn paper() -> Self {
        GeneratorArch {
            latent_dim: 500,
            hidden_channels: 150,
            out_channels: 64,
            out_len: 3152,
            init_len: 54,
            stages: 6,
            kernel: 3,
            leaky_alpha: 0.2,
        }
    }

    /// Reduced generator for `channels × len` signals with `hidden` channels
    /// and `stages` upsample stages; `init_len` is the smallest start length
    /// whose final conv output covers `len`.
    pub fn reduced(latent_dim: usize, channels: usize, len: usize, hidden: usize, stages: usize) -> Self {
        let mut arch = GeneratorArch {
            latent_dim,
            hidden_channels: hidden,
            out_channels: channels,
            out_len: len,
            init_len: 3,
            stages,
            kernel: 3,
            leaky_alpha: 0.2,
        };
        if [latent_dim, channels, len, hidden, stages].contains(&0) {
            // invalid; left for `validate` to reject
            return arch;
        }
        while arch.final_conv_len().is_none_or(|l| l < len) {
            arch.init_len += 1;
        }
        arch
    }

    /// Number of kernel-`k` conv blocks (each with batch norm).
    pub fn conv_blocks(&self) -> usize {
        2 * self.stages
    }

    fn final_conv_len(&self) -> Option<usize> {
        self.shape_trace().ok().map(|t| t[t.len() - 2].shape[1])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.latent_dim,
            self.hidden_channels,
            self.out_channels,
            self.out_len,
            self.init_len,
            self.stages,
            self.kernel,
        ];
        if positive.contains(&0) {
            return Err(Error::InvalidInput(format!("generator sizes must be positive: {self:?}")));
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return Err(Error::InvalidInput("leaky_alpha must lie in (0, 1)".into()));
        }
        if self.init_len < self.kernel + 1 {
            return Err(Error::InvalidInput(format!(
                "init_len {} too short for kernel {}",
                self.init_len, self.kernel
            )));
        }
        Ok(())
    }

    /// Expected per-layer shapes, computed from the layout alone.
    pub fn shape_trace(&self) -> Result<Vec<TraceRow>> {
        self.validate()?;
        let h = self.hidden_channels;
        let k1 = self.kernel - 1;
        let mut rows = vec![TraceRow::new("Input (z), Dense", &[h * self.init_len])];
        let mut len = self.init_len - k1;
        rows.push(TraceRow::new("Conv, BatchNorm, LRELU", &[h, len]));
        for stage in 1..=self.stages {
            len = upsample_target(len);
            rows.push(TraceRow::new("Upsample", &[h, len]));
            let convs = if stage < self.stages { 2 } else { 1 };
            for _ in 0..convs {
                len = len
                    .checked_sub(k1)
                    .filter(|&l| l > 0)
                    .ok_or_else(|| Error::InvalidInput("generator length collapsed".into()))?;
                rows.push(TraceRow::new("Conv, BatchNorm, LRELU", &[h, len]));
            }
        }
        rows.push(TraceRow::new("Conv", &[self.out_channels, len]));
        rows.push(TraceRow::new("Dense", &[self.out_channels, self.out_len]));
        Ok(rows)
    }
}

/// Critic layout: `blocks` × (two kernel-3 conv + LeakyReLU, average pool),
/// a kernel-1 conv back to `in_channels`, a dense map over time to 1, and a
/// mean over channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticArch {
    pub in_channels: usize,
    pub in_len: usize,
    pub hidden_channels: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub leaky_alpha: f64,
}

impl CriticArch {
    pub fn paper() -> Self {
        CriticArch { in_channels: 64, in_len: 3152, hidden_channels: 150, blocks: 6, kernel: 3, leaky_alpha: 0.2 }
    }

    pub fn reduced(channels: usize, len: usize, hidden: usize, blocks: usize) -> Self {
        CriticArch { in_channels: channels, in_len: len, hidden_channels: hidden, blocks, kernel: 3, leaky_alpha: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.in_channels, self.in_len, self.hidden_channels, self.blocks, self.kernel].contains(&0) {
            return Err(Error::InvalidInput(format!("critic sizes must be positive: {self:?}")));
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return Err(Error::InvalidInput("leaky_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Length after the last pooling layer.
    pub fn final_len(&self) -> Result<usize> {
        let t = self.shape_trace()?;
        Ok(t[t.len() - 2].shape[1])
    }

    /// Expected per-layer shapes under the floor pooling rule.
    pub fn shape_trace(&self) -> Result<Vec<TraceRow>> {
        self.validate()?;
        let h = self.hidden_channels;
        let k1 = self.kernel - 1;
        let mut rows = vec![TraceRow::new("Input", &[self.in_channels, self.in_len])];
        let mut len = self.in_len;
        let collapsed = || Error::InvalidInput(format!("critic input length {} too short", self.in_len));
        for _ in 0..self.blocks {
            for _ in 0..2 {
                len = len.checked_sub(k1).filter(|&l| l > 0).ok_or_else(collapsed)?;
                rows.push(TraceRow::new("Conv, LRELU", &[h, len]));
            }
            if len < 2 {
                return Err(collapsed());
            }
            len /= 2;
            rows.push(TraceRow::new("Downsample", &[h, len]));
        }
        rows.push(TraceRow::new("Conv", &[self.in_channels, len]));
        rows.push(TraceRow::new("Dense", &[self.in_channels, 1]));
        Ok(rows)
    }
}

/// Hex SHA-256 of the canonical JSON of both architectures.
pub fn arch_hash(gen: &GeneratorArch, critic: &CriticArch) -> String {
    let json = serde_json::to_vec(&(gen, critic)).expect("architectures serialize");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Expected full-scale generator shapes, one row per layer.
    const FULL_SCALE_GENERATOR: [&[usize]; 21] = [
        &[8100],
        &[150, 52],
        &[150, 106],
        &[150, 104],
        &[150, 102],
        &[150, 206],
        &[150, 204],
        &[150, 202],
        &[150, 406],
        &[150, 404],
        &[150, 402],
        &[150, 806],
        &[150, 804],
        &[150, 802],
        &[150, 1606],
        &[150, 1604],
        &[150, 1602],
        &[150, 3206],
        &[150, 3204],
        &[64, 3204],
        &[64, 3152],
    ];

    #[test]
    fn full_scale_generator_trace_matches_expected_shapes() {
        let trace = GeneratorArch::paper().shape_trace().unwrap();
        assert_eq!(trace.len(), 21);
        for (row, expect) in trace.iter().zip(FULL_SCALE_GENERATOR) {
            assert_eq!(row.shape, expect, "{}", row.layer);
        }
    }

    #[test]
    fn full_scale_critic_trace_floor_pooling() {
        let trace = CriticArch::paper().shape_trace().unwrap();
        let lens: Vec<usize> = trace.iter().map(|r| r.shape[1]).collect();
        assert_eq!(
            lens,
            vec![
                3152, 3150, 3148, 1574, 1572, 1570, 785, 783, 781, 390, 388, 386, 193, 191, 189, 94, 92, 90, 45, 45, 1
            ]
        );
        let n = trace.len();
        assert_eq!(trace[n - 3].shape, vec![150, 45]);
        assert_eq!(trace[n - 2].shape, vec![64, 45]);
        assert_eq!(trace[n - 1].shape, vec![64, 1]);
    }

    #[test]
    fn upsample_rule_reproduces_every_full_scale_upsample() {
        for (from, to) in [(52, 106), (102, 206), (202, 406), (402, 806), (802, 1606), (1602, 3206)] {
            assert_eq!(upsample_target(from), to);
        }
    }

    #[test]
    fn reduced_generator_covers_length() {
        let g = GeneratorArch::reduced(16, 2, 128, 16, 2);
        let t = g.shape_trace().unwrap();
        assert!(t[t.len() - 2].shape[1] >= 128);
        assert_eq!(t.last().unwrap().shape, vec![2, 128]);
        // init_len is minimal
        let mut smaller = g.clone();
        smaller.init_len -= 1;
        let ts = smaller.shape_trace().unwrap();
        assert!(ts[ts.len() - 2].shape[1] < 128);
    }

    #[test]
    fn reduced_with_zero_sizes_returns_invalid_arch() {
        assert!(GeneratorArch::reduced(16, 0, 128, 16, 2).validate().is_err());
        assert!(GeneratorArch::reduced(16, 2, 128, 16, 0).validate().is_err());
    }

    #[test]
    fn critic_too_short_is_rejected() {
        assert!(CriticArch::reduced(2, 8, 4, 3).shape_trace().is_err());
    }

    #[test]
    fn hash_depends_on_arch() {
        let (g, c) = (GeneratorArch::paper(), CriticArch::paper());
        let mut g2 = g.clone();
        g2.hidden_channels = 151;
        assert_eq!(arch_hash(&g, &c), arch_hash(&g, &c));
        assert_ne!(arch_hash(&g, &c), arch_hash(&g2, &c));
    }
}
