use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[n, channels, len]` block of signals in row-major order.
///
/// Unlike [`Tensor`] this is plain data and can cross threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub n: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Signals {
    pub fn new(data: Vec<f64>, n: usize, channels: usize, len: usize) -> Result<Self> {
        if data.len() != n * channels * len {
            return Err(Error::ShapeMismatch(format!("{} values for [{n}, {channels}, {len}]", data.len())));
        }
        Ok(Signals { n, channels, len, data })
    }

    pub fn empty(channels: usize, len: usize) -> Self {
        Signals { n: 0, channels, len, data: Vec::new() }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n, self.channels, self.len]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.channels * self.len;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn channel(&self, i: usize, c: usize) -> &[f64] {
        let off = (i * self.channels + c) * self.len;
        &self.data[off..off + self.len]
    }

    pub fn select(&self, indices: &[usize]) -> Signals {
        let mut data = Vec::with_capacity(indices.len() * self.channels * self.len);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Signals { n: indices.len(), channels: self.channels, len: self.len, data }
    }

    /// Appends the samples of `other`, which must share channel count and length.
    pub fn extend(&mut self, other: &Signals) -> Result<()> {
        if other.channels != self.channels || other.len != self.len {
            return Err(Error::ShapeMismatch(format!(
                "cannot append [{}, {}] samples to [{}, {}]",
                other.channels, other.len, self.channels, self.len
            )));
        }
        self.data.extend_from_slice(&other.data);
        self.n += other.n;
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data, &[self.n, self.channels, self.len]).expect("consistent shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [n, c, l] => Signals::new(t.to_vec(), n, c, l),
            _ => Err(Error::ShapeMismatch(format!("expected [N, C, L], got {:?}", t.shape()))),
        }
    }
}
