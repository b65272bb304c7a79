//! End-to-end runs: scenario generation, joint training, held-out scoring
//! and alpha sweeps.

use crate::config::RunConfig;
use crate::data::{make_scenario, sample_wells, Dataset, Survey};
use crate::error::Result;
use crate::eval::{predict_traces, r2};
use crate::model::{build_network, ModelConfig, Network};
use crate::trainer::{relative_weight_distance, train_joint, train_single, Monitor, TrainConfig, TrainHistory};

/// Two surveys with their training sets.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub survey_1: Survey,
    pub survey_2: Survey,
    pub data_1: Dataset,
    pub data_2: Dataset,
}

impl Scenario {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let (s1, s2) = make_scenario(&cfg.survey_1, &cfg.survey_2, cfg.related)?;
        Self::from_surveys(cfg, s1, s2)
    }

    pub fn from_surveys(cfg: &RunConfig, survey_1: Survey, survey_2: Survey) -> Result<Self> {
        let m = cfg.model.patch_width;
        let w1 = sample_wells(survey_1.seismic.n_traces(), cfg.wells_1)?;
        let w2 = sample_wells(survey_2.seismic.n_traces(), cfg.wells_2)?;
        let data_1 = Dataset::from_grids(&survey_1.seismic, &survey_1.impedance, &w1, m)?;
        let data_2 = Dataset::from_grids(&survey_2.seismic, &survey_2.impedance, &w2, m)?;
        Ok(Self {
            survey_1,
            survey_2,
            data_1,
            data_2,
        })
    }

    fn monitor(survey: &Survey, data: &Dataset) -> Monitor {
        Monitor {
            seismic: survey.seismic.clone(),
            truth: survey.impedance.clone(),
            traces: heldout_traces(survey, data),
        }
    }
}

/// Traces of `survey` that are not training wells.
pub fn heldout_traces(survey: &Survey, data: &Dataset) -> Vec<usize> {
    (0..survey.seismic.n_traces())
        .filter(|t| !data.well_indices.contains(t))
        .collect()
}

/// Mean per-trace r² over the traces that are not training wells.
pub fn heldout_r2(net: &Network, survey: &Survey, data: &Dataset) -> Result<f64> {
    Scenario::monitor(survey, data).score(net, data)
}

/// Initial networks F and G. Both start from the same weights, so the two
/// only drift apart as far as the mismatch penalty allows.
pub fn init_networks(model: &ModelConfig, seed: u64) -> Result<(Network, Network)> {
    let net = build_network(model, seed)?;
    Ok((net.clone(), net))
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub net_f: Network,
    pub net_g: Network,
    pub history: TrainHistory,
    /// Held-out r² on survey 1 and survey 2.
    pub heldout: [f64; 2],
    /// Relative distance between the two networks' weights.
    pub relative_distance: f64,
}

/// Joint training of F on survey 1 and G on survey 2 with `train`.
pub fn run_joint(model: &ModelConfig, train: &TrainConfig, sc: &Scenario) -> Result<Outcome> {
    let (mut net_f, mut net_g) = init_networks(model, train.seed)?;
    let monitors = if train.validate_every > 0 {
        [
            Some(Scenario::monitor(&sc.survey_1, &sc.data_1)),
            Some(Scenario::monitor(&sc.survey_2, &sc.data_2)),
        ]
    } else {
        [None, None]
    };
    let history = train_joint(&mut net_f, &mut net_g, &sc.data_1, &sc.data_2, train, monitors)?;
    Ok(Outcome {
        heldout: [
            heldout_r2(&net_f, &sc.survey_1, &sc.data_1)?,
            heldout_r2(&net_g, &sc.survey_2, &sc.data_2)?,
        ],
        relative_distance: relative_weight_distance(&net_f, &net_g)?,
        net_f,
        net_g,
        history,
    })
}

/// Trains G alone on survey 2; identical to G of a joint run with `alpha = 0`.
pub fn run_isolated_g(model: &ModelConfig, train: &TrainConfig, sc: &Scenario) -> Result<(Network, f64)> {
    let (_, mut net_g) = init_networks(model, train.seed)?;
    train_single(&mut net_g, &sc.data_2, train, 1, None)?;
    let score = heldout_r2(&net_g, &sc.survey_2, &sc.data_2)?;
    Ok((net_g, score))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub heldout_1: f64,
    pub heldout_2: f64,
    pub final_wml: f64,
    pub final_total: f64,
    pub relative_distance: f64,
}

pub const SWEEP_HEADER: &str = "alpha,r2_heldout_d1,r2_heldout_d2,final_l_wml,final_total,relative_distance";

/// One joint run per alpha in `cfg.alphas`.
pub fn sweep_alpha(cfg: &RunConfig, sc: &Scenario) -> Result<Vec<SweepRow>> {
    cfg.alphas
        .iter()
        .map(|&alpha| {
            let train = TrainConfig {
                alpha,
                ..cfg.train.clone()
            };
            let out = run_joint(&cfg.model, &train, sc)?;
            let last = out.history.records.last();
            log::info!("alpha {alpha}: held-out r2 {:.4} / {:.4}", out.heldout[0], out.heldout[1]);
            Ok(SweepRow {
                alpha,
                heldout_1: out.heldout[0],
                heldout_2: out.heldout[1],
                final_wml: last.map_or(0.0, |r| r.l_wml),
                final_total: last.map_or(0.0, |r| r.total),
                relative_distance: out.relative_distance,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.alpha, r.heldout_1, r.heldout_2, r.final_wml, r.final_total, r.relative_distance
        ));
    }
    s
}

/// r² of each held-out trace individually, for diagnostics.
pub fn heldout_per_trace(net: &Network, survey: &Survey, data: &Dataset) -> Result<Vec<(usize, Option<f64>)>> {
    let traces = heldout_traces(survey, data);
    let preds = predict_traces(net, &survey.seismic, &traces, &data.scaler_x, &data.scaler_y)?;
    Ok(traces
        .iter()
        .zip(&preds)
        .map(|(&t, p)| (t, r2(survey.impedance.trace(t), p).ok()))
        .collect())
}
