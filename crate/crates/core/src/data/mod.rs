//! Synthetic surveys, well sampling, patch extraction and normalization.

pub mod grid;
pub mod synthetic;

pub use grid::SectionGrid;
pub use synthetic::{
    forward_model, impedance_model, impedance_to_reflectivity, make_scenario, ricker, wasserstein_1d, Survey,
    SyntheticSpec,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine standardizer `(x - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    /// Population mean and standard deviation of `values`.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Degenerate("cannot fit a scaler to no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self::new(mean, var.sqrt())
    }

    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 1e-12) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::Degenerate(format!(
                "scaler std {std} is not usable (data nearly constant?)"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn invert_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.invert(v)).collect()
    }
}

/// Evenly spaced well positions `round(k (n_traces - 1) / (n - 1))`; a single
/// well sits at the middle trace.
pub fn sample_wells(n_traces: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > n_traces {
        return Err(Error::invalid(format!(
            "cannot place {n} wells in {n_traces} traces"
        )));
    }
    if n == 1 {
        return Ok(vec![n_traces / 2]);
    }
    Ok((0..n)
        .map(|k| (k as f64 * (n_traces - 1) as f64 / (n - 1) as f64).round() as usize)
        .collect())
}

/// `[1, d, m]` patch centered on `well`; columns past the section edge repeat
/// the edge trace.
pub fn extract_patch(seismic: &SectionGrid, well: usize, m: usize) -> Result<Tensor> {
    if m.is_multiple_of(2) {
        return Err(Error::invalid(format!("patch width must be odd, got {m}")));
    }
    if well >= seismic.n_traces() {
        return Err(Error::invalid(format!(
            "well {well} outside section of {} traces",
            seismic.n_traces()
        )));
    }
    let d = seismic.depth();
    let half = (m / 2) as isize;
    let last = seismic.n_traces() as isize - 1;
    let cols: Vec<&[f64]> = (-half..=half)
        .map(|o| seismic.trace((well as isize + o).clamp(0, last) as usize))
        .collect();
    let mut data = Vec::with_capacity(d * m);
    for z in 0..d {
        data.extend(cols.iter().map(|c| c[z]));
    }
    Tensor::new(vec![1, d, m], data)
}

/// Paired standardized patches and property traces for one survey.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[N, 1, d, m]`
    pub x: Tensor,
    /// `[N, 1, d]`
    pub y: Tensor,
    pub well_indices: Vec<usize>,
    pub scaler_x: Scaler,
    pub scaler_y: Scaler,
}

impl Dataset {
    /// Builds a training set at `wells`. The seismic scaler is fit on the
    /// whole seismic section; the property scaler on the well traces only.
    pub fn from_grids(seismic: &SectionGrid, property: &SectionGrid, wells: &[usize], m: usize) -> Result<Self> {
        if !seismic.same_dims(property) {
            return Err(Error::ShapeMismatch {
                op: "dataset grids",
                expected: vec![seismic.depth(), seismic.n_traces()],
                got: vec![property.depth(), property.n_traces()],
            });
        }
        if wells.is_empty() {
            return Err(Error::invalid("dataset needs at least one well"));
        }
        let scaler_x = Scaler::fit(seismic.values())?;
        let well_values: Vec<f64> = wells.iter().flat_map(|&w| property.trace(w).iter().copied()).collect();
        let scaler_y = Scaler::fit(&well_values)?;
        Self::with_scalers(seismic, property, wells, m, scaler_x, scaler_y)
    }

    pub fn with_scalers(
        seismic: &SectionGrid,
        property: &SectionGrid,
        wells: &[usize],
        m: usize,
        scaler_x: Scaler,
        scaler_y: Scaler,
    ) -> Result<Self> {
        let d = seismic.depth();
        let n = wells.len();
        let mut xs = Vec::with_capacity(n * d * m);
        let mut ys = Vec::with_capacity(n * d);
        for &w in wells {
            let patch = extract_patch(seismic, w, m)?;
            xs.extend(patch.data().iter().map(|&v| scaler_x.apply(v)));
            ys.extend(property.trace(w).iter().map(|&v| scaler_y.apply(v)));
        }
        Ok(Self {
            x: Tensor::new(vec![n, 1, d, m], xs)?,
            y: Tensor::new(vec![n, 1, d], ys)?,
            well_indices: wells.to_vec(),
            scaler_x,
            scaler_y,
        })
    }

    pub fn len(&self) -> usize {
        self.well_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.well_indices.is_empty()
    }

    /// Rows `indices` (in the given order) as `(x, y)` batch tensors.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let xs = self.x.numel() / self.len();
        let ys = self.y.numel() / self.len();
        let mut bx = Vec::with_capacity(indices.len() * xs);
        let mut by = Vec::with_capacity(indices.len() * ys);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("batch index {i} out of range")));
            }
            bx.extend_from_slice(&self.x.data()[i * xs..(i + 1) * xs]);
            by.extend_from_slice(&self.y.data()[i * ys..(i + 1) * ys]);
        }
        let mut xshape = self.x.shape().to_vec();
        xshape[0] = indices.len();
        let mut yshape = self.y.shape().to_vec();
        yshape[0] = indices.len();
        Ok((Tensor::new(xshape, bx)?, Tensor::new(yshape, by)?))
    }
}
