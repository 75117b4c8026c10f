//! Spectral estimates, band power, Fréchet distance and scalp maps.

mod fid;
pub mod montage;
mod spectral;
mod topomap;

pub use fid::{fid, Features, FidReport};
pub use spectral::{
    band_power, channel_psd, dataset_psd, fft, hann_window, ifft, welch_psd, PsdEstimate, WelchConfig, ALPHA_BAND,
    BANDS, BETA_BAND, DELTA_BAND, GAMMA_BAND, THETA_BAND,
};
pub use topomap::{channel_values, interpolate_topomap, topomap, TopoMetric, TopomapGrid, IDW_NEIGHBORS, IDW_POWER};

pub use crate::classify::extract_features;
