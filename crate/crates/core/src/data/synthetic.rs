//! Layered impedance models and 1-D convolutional forward modeling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::grid::SectionGrid;
use crate::error::{Error, Result};
use crate::seed::mix_seed;

/// Controls for one synthetic survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub depth_samples: usize,
    pub n_traces: usize,
    /// Depth step in meters (metadata only).
    pub dz: f64,
    pub n_layers: usize,
    pub impedance_min: f64,
    pub impedance_max: f64,
    /// Signed fraction of the impedance range following a linear depth trend.
    pub trend: f64,
    /// Fraction of the impedance range used for random layer-to-layer jitter.
    pub contrast: f64,
    /// Interface shift in samples per trace.
    pub dip: f64,
    /// Vertical throw in samples across the fault.
    pub fault_offset: f64,
    /// Fault location as a fraction of the section width.
    pub fault_position: f64,
    /// Amplitude in samples of the lateral interface undulation.
    pub smoothness: f64,
    /// Undulation wavelength in traces.
    pub undulation_wavelength: f64,
    /// Ricker peak frequency in Hz.
    pub wavelet_freq: f64,
    /// Sample interval in seconds.
    pub dt: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            depth_samples: 64,
            n_traces: 200,
            dz: 10.0,
            n_layers: 14,
            impedance_min: 4000.0,
            impedance_max: 9000.0,
            trend: 0.6,
            contrast: 0.35,
            dip: 0.05,
            fault_offset: 4.0,
            fault_position: 0.6,
            smoothness: 3.0,
            undulation_wavelength: 120.0,
            wavelet_freq: 30.0,
            dt: 0.002,
            noise_std: 0.01,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg.to_string())) };
        check(self.depth_samples >= 2, "depth_samples must be >= 2")?;
        check(self.n_traces >= 1, "n_traces must be >= 1")?;
        check(self.n_layers >= 1, "n_layers must be >= 1")?;
        check(
            self.impedance_min > 0.0 && self.impedance_max >= self.impedance_min,
            "impedance range must be positive and ordered",
        )?;
        check((-1.0..=1.0).contains(&self.trend), "trend must lie in [-1, 1]")?;
        check(self.contrast >= 0.0, "contrast must be >= 0")?;
        check((0.0..=1.0).contains(&self.fault_position), "fault_position must lie in [0, 1]")?;
        check(self.undulation_wavelength > 0.0, "undulation_wavelength must be > 0")?;
        check(self.wavelet_freq > 0.0, "wavelet_freq must be > 0")?;
        check(self.dt > 0.0, "dt must be > 0")?;
        check(self.noise_std >= 0.0, "noise_std must be >= 0")?;
        check(
            [self.dz, self.dip, self.fault_offset, self.smoothness].iter().all(|v| v.is_finite()),
            "geometry controls must be finite",
        )
    }

    /// Copies the rock and wavelet statistics of `other`, keeping this
    /// survey's geometry, noise and seed.
    pub fn with_statistics_of(&self, other: &SyntheticSpec) -> SyntheticSpec {
        SyntheticSpec {
            n_layers: other.n_layers,
            impedance_min: other.impedance_min,
            impedance_max: other.impedance_max,
            trend: other.trend,
            contrast: other.contrast,
            wavelet_freq: other.wavelet_freq,
            ..self.clone()
        }
    }

    pub fn wavelet_half_len(&self) -> usize {
        (1.2 / (self.wavelet_freq * self.dt)).ceil() as usize
    }
}

/// Ricker wavelet sampled at `t = k·dt` for `k` in `[-half_len, half_len]`.
pub fn ricker(freq: f64, dt: f64, half_len: usize) -> Result<Vec<f64>> {
    if !(freq > 0.0 && dt > 0.0) {
        return Err(Error::invalid("ricker: frequency and dt must be > 0"));
    }
    let h = half_len as i64;
    Ok((-h..=h)
        .map(|k| {
            let a = (PI * freq * k as f64 * dt).powi(2);
            (1.0 - 2.0 * a) * (-a).exp()
        })
        .collect())
}

/// Normal-incidence reflectivity `(I[t+1] - I[t]) / (I[t+1] + I[t])`.
pub fn impedance_to_reflectivity(trace: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = trace.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::invalid(format!("impedance must be positive, found {v}")));
    }
    Ok(trace.windows(2).map(|w| (w[1] - w[0]) / (w[1] + w[0])).collect())
}

/// Centered ("same" length) convolution with zero padding outside `signal`.
pub fn convolve_same(signal: &[f64], wavelet: &[f64]) -> Vec<f64> {
    let half = (wavelet.len() / 2) as isize;
    let n = signal.len() as isize;
    (0..n)
        .map(|i| {
            wavelet
                .iter()
                .enumerate()
                .filter_map(|(k, w)| {
                    let j = i + half - k as isize;
                    (0..n).contains(&j).then(|| signal[j as usize] * w)
                })
                .sum()
        })
        .collect()
}

/// Reflectivity convolved with a Ricker wavelet, plus seeded white noise.
/// The output keeps the impedance depth by appending one zero sample.
pub fn forward_model(impedance: &SectionGrid, spec: &SyntheticSpec) -> Result<SectionGrid> {
    spec.validate()?;
    let wavelet = ricker(spec.wavelet_freq, spec.dt, spec.wavelet_half_len())?;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut traces = Vec::with_capacity(impedance.n_traces());
    for (i, trace) in impedance.traces().enumerate() {
        let r = impedance_to_reflectivity(trace)?;
        let mut s = convolve_same(&r, &wavelet);
        s.push(0.0);
        if spec.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed ^ 0x5e15, i as u64));
            for v in &mut s {
                *v += noise.sample(&mut rng);
            }
        }
        traces.push(s);
    }
    SectionGrid::from_traces(impedance.dz(), &traces)
}

/// Blocky layered impedance section with dip, a fault and undulating interfaces.
pub fn impedance_model(spec: &SyntheticSpec) -> Result<SectionGrid> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.depth_samples as f64;
    let n_if = spec.n_layers - 1;

    // Reference interface depths from random thicknesses.
    let thick: Vec<f64> = (0..spec.n_layers).map(|_| 0.4 + rng.random::<f64>()).collect();
    let total: f64 = thick.iter().sum();
    let mut depths = Vec::with_capacity(n_if);
    let mut acc = 0.0;
    for t in &thick[..n_if] {
        acc += t;
        depths.push(acc / total * d);
    }
    let phases: Vec<f64> = (0..n_if).map(|_| 2.0 * PI * rng.random::<f64>()).collect();

    let range = spec.impedance_max - spec.impedance_min;
    let mid = spec.impedance_min + 0.5 * range;
    let values: Vec<f64> = (0..spec.n_layers)
        .map(|k| {
            let u = if spec.n_layers == 1 {
                0.5
            } else {
                k as f64 / (spec.n_layers - 1) as f64
            };
            let jitter = spec.contrast * range * (rng.random::<f64>() - 0.5);
            (mid + spec.trend * (u - 0.5) * range + jitter).clamp(spec.impedance_min, spec.impedance_max)
        })
        .collect();

    let center = (spec.n_traces as f64 - 1.0) / 2.0;
    let fault_at = spec.fault_position * spec.n_traces as f64;
    let mut out = Vec::with_capacity(spec.n_traces * spec.depth_samples);
    let mut shifted = vec![0.0; n_if];
    for x in 0..spec.n_traces {
        let xf = x as f64;
        let throw = if xf >= fault_at { spec.fault_offset } else { 0.0 };
        for (k, s) in shifted.iter_mut().enumerate() {
            *s = depths[k]
                + spec.dip * (xf - center)
                + spec.smoothness * (2.0 * PI * xf / spec.undulation_wavelength + phases[k]).sin()
                + throw;
        }
        for z in 0..spec.depth_samples {
            let zc = z as f64 + 0.5;
            let layer = shifted.iter().filter(|&&s| s <= zc).count();
            out.push(values[layer]);
        }
    }
    SectionGrid::new(spec.depth_samples, spec.n_traces, spec.dz, out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Survey {
    pub impedance: SectionGrid,
    pub seismic: SectionGrid,
}

impl Survey {
    pub fn generate(spec: &SyntheticSpec) -> Result<Self> {
        let impedance = impedance_model(spec)?;
        let seismic = forward_model(&impedance, spec)?;
        Ok(Self { impedance, seismic })
    }
}

/// Two synthetic surveys. When `related`, the second survey is drawn with the
/// rock and wavelet statistics of the first; otherwise each uses its own.
pub fn make_scenario(spec_1: &SyntheticSpec, spec_2: &SyntheticSpec, related: bool) -> Result<(Survey, Survey)> {
    let spec_2 = if related {
        spec_2.with_statistics_of(spec_1)
    } else {
        spec_2.clone()
    };
    Ok((Survey::generate(spec_1)?, Survey::generate(&spec_2)?))
}

/// 1-D Wasserstein distance between the empirical distributions of two samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // Integrate |F_a - F_b| over the merged support.
    let mut points: Vec<f64> = a.iter().chain(&b).copied().collect();
    points.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.partition_point(|&v| v <= x) as f64 / s.len() as f64;
    points
        .windows(2)
        .map(|w| (cdf(&a, w[0]) - cdf(&b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}
