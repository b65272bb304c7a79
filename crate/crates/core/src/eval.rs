//! Section prediction and goodness-of-fit reporting.

use log::warn;

use crate::data::{extract_patch, Scaler, SectionGrid};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::tensor::Tensor;

/// Traces per inference batch.
const CHUNK: usize = 32;

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::ShapeMismatch {
            op: "r2",
            expected: vec![y.len()],
            got: vec![y_hat.len()],
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("r2 needs at least two samples"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("r2 undefined for a constant target".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Predicts the property at the given trace positions, in physical units.
pub fn predict_traces(
    net: &Network,
    seismic: &SectionGrid,
    traces: &[usize],
    scaler_x: &Scaler,
    scaler_y: &Scaler,
) -> Result<Vec<Vec<f64>>> {
    let m = net.config().patch_width;
    let d = seismic.depth();
    let mut out = Vec::with_capacity(traces.len());
    for chunk in traces.chunks(CHUNK) {
        let mut xs = Vec::with_capacity(chunk.len() * d * m);
        for &t in chunk {
            let patch = extract_patch(seismic, t, m)?;
            xs.extend(patch.data().iter().map(|&v| scaler_x.apply(v)));
        }
        let x = Tensor::new(vec![chunk.len(), 1, d, m], xs)?;
        let (y, _) = net.predict(&x)?;
        out.extend(y.data().chunks_exact(d).map(|row| scaler_y.invert_all(row)));
    }
    Ok(out)
}

/// Runs the network at every trace and assembles a property section.
pub fn predict_section(net: &Network, seismic: &SectionGrid, scaler_x: &Scaler, scaler_y: &Scaler) -> Result<SectionGrid> {
    let all: Vec<usize> = (0..seismic.n_traces()).collect();
    let traces = predict_traces(net, seismic, &all, scaler_x, scaler_y)?;
    SectionGrid::from_traces(seismic.dz(), &traces)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub trace: usize,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// r² per trace; `None` where the true trace is constant.
    pub per_trace: Vec<Option<f64>>,
    /// Mean of the scored per-trace values.
    pub average: f64,
    /// r² of the whole section flattened into one vector.
    pub flattened: f64,
    pub prediction: SectionGrid,
    pub overlays: Vec<Overlay>,
}

impl EvaluationReport {
    pub fn skipped(&self) -> Vec<usize> {
        (0..self.per_trace.len()).filter(|&i| self.per_trace[i].is_none()).collect()
    }

    /// Average r² over scored traces not listed in `exclude` (e.g. wells).
    pub fn average_excluding(&self, exclude: &[usize]) -> Option<f64> {
        let scores: Vec<f64> = self
            .per_trace
            .iter()
            .enumerate()
            .filter(|(i, _)| !exclude.contains(i))
            .filter_map(|(_, v)| *v)
            .collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    /// `trace,r2` rows; unscored traces have an empty value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trace,r2\n");
        for (i, v) in self.per_trace.iter().enumerate() {
            match v {
                Some(v) => s.push_str(&format!("{i},{v}\n")),
                None => s.push_str(&format!("{i},\n")),
            }
        }
        s
    }
}

/// Scores a predicted section against the truth trace by trace.
pub fn evaluate(pred: &SectionGrid, truth: &SectionGrid, trace_picks: &[usize]) -> Result<EvaluationReport> {
    if !pred.same_dims(truth) {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            expected: vec![truth.depth(), truth.n_traces()],
            got: vec![pred.depth(), pred.n_traces()],
        });
    }
    if let Some(&bad) = trace_picks.iter().find(|&&t| t >= truth.n_traces()) {
        return Err(Error::invalid(format!("trace pick {bad} out of range")));
    }
    let mut per_trace = Vec::with_capacity(truth.n_traces());
    for (i, (t, p)) in truth.traces().zip(pred.traces()).enumerate() {
        match r2(t, p) {
            Ok(v) => per_trace.push(Some(v)),
            Err(Error::Degenerate(_)) => {
                warn!("trace {i}: constant ground truth, not scored");
                per_trace.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let scored: Vec<f64> = per_trace.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::Degenerate("no trace with a non-constant ground truth".into()));
    }
    let average = scored.iter().sum::<f64>() / scored.len() as f64;
    let flattened = r2(truth.values(), pred.values())?;
    let overlays = trace_picks
        .iter()
        .map(|&t| Overlay {
            trace: t,
            predicted: pred.trace(t).to_vec(),
            truth: truth.trace(t).to_vec(),
        })
        .collect();
    Ok(EvaluationReport {
        per_trace,
        average,
        flattened,
        prediction: pred.clone(),
        overlays,
    })
}
