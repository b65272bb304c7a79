//! Command-line subcommands. Results go to files under `--out`; messages go
//! to standard error through `log`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{make_scenario, sample_wells, SectionGrid, Survey};
use crate::error::{Error, Result};
use crate::eval::{evaluate, predict_section, EvaluationReport};
use crate::experiment::{heldout_traces, run_joint, sweep_alpha, sweep_csv, Scenario};
use crate::plot::{loss_svg, overlay_svg, section_svg};
use crate::trainer::TrainHistory;

pub const SURVEY_FILES: [&str; 4] = [
    "survey1_impedance.sgrd",
    "survey1_seismic.sgrd",
    "survey2_impedance.sgrd",
    "survey2_seismic.sgrd",
];
pub const CHECKPOINT_FILES: [&str; 2] = ["net_f.jlck", "net_g.jlck"];
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTION_FILES: [&str; 2] = ["prediction_survey1.sgrd", "prediction_survey2.sgrd"];
pub const SWEEP_FILE: &str = "alpha_sweep.csv";
pub const SUMMARY_FILE: &str = "eval_summary.csv";

#[derive(Debug, Parser)]
#[command(name = "jointinv", version, about = "Joint TCN seismic impedance inversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (must exist).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the two synthetic surveys.
    GenData(Common),
    /// Train F and G jointly; writes checkpoints and the loss history.
    Train(Common),
    /// Predict impedance sections for both surveys from the checkpoints.
    Predict(Common),
    /// Score predictions against the true impedance.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Predicted grid to score instead of running the checkpoints.
        #[arg(long, requires = "truth")]
        pred: Option<PathBuf>,
        /// Ground-truth grid for `--pred`.
        #[arg(long, requires = "pred")]
        truth: Option<PathBuf>,
    },
    /// Train once per configured alpha and tabulate held-out r².
    SweepAlpha(Common),
    /// Render SVG figures.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Grid to draw as a section heatmap.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Loss history CSV to draw.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Predicted grid for trace overlays (with `--truth`).
        #[arg(long, requires = "truth")]
        pred: Option<PathBuf>,
        /// Ground-truth grid for `--pred`.
        #[arg(long, requires = "pred")]
        truth: Option<PathBuf>,
    },
}

/// Loads and validates the configuration, applying the seed override.
pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ))
    }
}

/// Files written so far by one command; removed again unless committed.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            written: Vec::new(),
            committed: false,
        }
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }

    fn text(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        let path = self.track(path);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn data_dir<'a>(cfg: &'a RunConfig, out: &'a Path) -> &'a Path {
    cfg.data_dir.as_deref().unwrap_or(out)
}

fn checkpoint_dir<'a>(cfg: &'a RunConfig, out: &'a Path) -> &'a Path {
    cfg.checkpoint_dir.as_deref().unwrap_or(out)
}

fn load_surveys(dir: &Path) -> Result<(Survey, Survey)> {
    let g = |i: usize| SectionGrid::load(dir.join(SURVEY_FILES[i]));
    let s1 = Survey {
        impedance: g(0)?,
        seismic: g(1)?,
    };
    let s2 = Survey {
        impedance: g(2)?,
        seismic: g(3)?,
    };
    for s in [&s1, &s2] {
        if !s.impedance.same_dims(&s.seismic) {
            return Err(Error::format("SGRD1", "impedance and seismic grids differ in size"));
        }
    }
    Ok((s1, s2))
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    require_dir(out)?;
    let (s1, s2) = make_scenario(&cfg.survey_1, &cfg.survey_2, cfg.related)?;
    let grids = [&s1.impedance, &s1.seismic, &s2.impedance, &s2.seismic];
    let mut outputs = Outputs::new();
    for (name, grid) in SURVEY_FILES.iter().zip(grids) {
        let path = outputs.track(out.join(name));
        grid.save(&path)?;
    }
    outputs.commit();
    info!("wrote {} survey grids to {}", SURVEY_FILES.len(), out.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    require_dir(out)?;
    let (s1, s2) = load_surveys(data_dir(cfg, out))?;
    let sc = Scenario::from_surveys(cfg, s1, s2)?;
    info!(
        "training for {} epochs, alpha {}, {} + {} wells",
        cfg.train.epochs,
        cfg.train.alpha,
        sc.data_1.len(),
        sc.data_2.len()
    );
    let result = run_joint(&cfg.model, &cfg.train, &sc)?;
    let mut outputs = Outputs::new();
    for (name, net, data) in [
        (CHECKPOINT_FILES[0], &result.net_f, &sc.data_1),
        (CHECKPOINT_FILES[1], &result.net_g, &sc.data_2),
    ] {
        let ck = Checkpoint {
            network: net.clone(),
            scaler_x: data.scaler_x,
            scaler_y: data.scaler_y,
        };
        ck.save(outputs.track(out.join(name)))?;
    }
    outputs.text(out.join(HISTORY_FILE), &result.history.to_csv())?;
    outputs.commit();
    info!(
        "held-out r2: survey 1 {:.4}, survey 2 {:.4}",
        result.heldout[0], result.heldout[1]
    );
    Ok(())
}

fn predictions(cfg: &RunConfig, out: &Path) -> Result<[(Survey, SectionGrid); 2]> {
    let (s1, s2) = load_surveys(data_dir(cfg, out))?;
    let ckdir = checkpoint_dir(cfg, out);
    let run = |survey: Survey, file: &str| -> Result<(Survey, SectionGrid)> {
        let ck = Checkpoint::load(ckdir.join(file))?;
        let pred = predict_section(&ck.network, &survey.seismic, &ck.scaler_x, &ck.scaler_y)?;
        Ok((survey, pred))
    };
    Ok([run(s1, CHECKPOINT_FILES[0])?, run(s2, CHECKPOINT_FILES[1])?])
}

pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<()> {
    require_dir(out)?;
    let preds = predictions(cfg, out)?;
    let mut outputs = Outputs::new();
    for (name, (_, pred)) in PREDICTION_FILES.iter().zip(&preds) {
        pred.save(outputs.track(out.join(name)))?;
    }
    outputs.commit();
    Ok(())
}

fn summary_row(label: &str, rep: &EvaluationReport, heldout: Option<f64>) -> String {
    format!(
        "{label},{},{},{},{}\n",
        rep.average,
        heldout.map(|v| v.to_string()).unwrap_or_default(),
        rep.flattened,
        rep.skipped().len()
    )
}

const SUMMARY_HEADER: &str = "survey,average_r2,heldout_r2,flattened_r2,skipped_traces\n";

pub fn cmd_eval(cfg: &RunConfig, out: &Path, given: Option<(&Path, &Path)>) -> Result<()> {
    require_dir(out)?;
    let mut outputs = Outputs::new();
    let mut summary = String::from(SUMMARY_HEADER);
    if let Some((pred, truth)) = given {
        let (pred, truth) = (SectionGrid::load(pred)?, SectionGrid::load(truth)?);
        let picks: Vec<usize> = cfg.picks().into_iter().filter(|&p| p < truth.n_traces()).collect();
        let rep = evaluate(&pred, &truth, &picks)?;
        outputs.text(out.join("r2_per_trace.csv"), &rep.to_csv())?;
        summary.push_str(&summary_row("given", &rep, None));
        info!("average r2 {:.4}", rep.average);
    } else {
        for (k, (survey, pred)) in predictions(cfg, out)?.into_iter().enumerate() {
            let picks: Vec<usize> = cfg.picks().into_iter().filter(|&p| p < survey.impedance.n_traces()).collect();
            let rep = evaluate(&pred, &survey.impedance, &picks)?;
            let wells = sample_wells(
                survey.impedance.n_traces(),
                if k == 0 { cfg.wells_1 } else { cfg.wells_2 },
            )?;
            let heldout = rep.average_excluding(&wells);
            outputs.text(out.join(format!("r2_per_trace_survey{}.csv", k + 1)), &rep.to_csv())?;
            summary.push_str(&summary_row(&format!("survey{}", k + 1), &rep, heldout));
            info!("survey {}: average r2 {:.4}, held-out {:?}", k + 1, rep.average, heldout);
        }
    }
    outputs.text(out.join(SUMMARY_FILE), &summary)?;
    outputs.commit();
    Ok(())
}

pub fn cmd_sweep_alpha(cfg: &RunConfig, out: &Path) -> Result<()> {
    require_dir(out)?;
    let (s1, s2) = load_surveys(data_dir(cfg, out))?;
    let sc = Scenario::from_surveys(cfg, s1, s2)?;
    info!(
        "sweeping {} alphas, {} held-out traces on survey 2",
        cfg.alphas.len(),
        heldout_traces(&sc.survey_2, &sc.data_2).len()
    );
    let rows = sweep_alpha(cfg, &sc)?;
    let mut outputs = Outputs::new();
    outputs.text(out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    outputs.commit();
    Ok(())
}

pub struct PlotInputs<'a> {
    pub grid: Option<&'a Path>,
    pub history: Option<&'a Path>,
    pub overlay: Option<(&'a Path, &'a Path)>,
}

pub fn cmd_plot(cfg: &RunConfig, out: &Path, inputs: PlotInputs<'_>) -> Result<()> {
    require_dir(out)?;
    if inputs.grid.is_none() && inputs.history.is_none() && inputs.overlay.is_none() {
        return Err(Error::Config("plot needs --grid, --history or --pred/--truth".into()));
    }
    let mut outputs = Outputs::new();
    if let Some(p) = inputs.grid {
        let grid = SectionGrid::load(p)?;
        let title = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        outputs.text(out.join("section.svg"), &section_svg(&grid, &title))?;
    }
    if let Some(p) = inputs.history {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let history = TrainHistory::from_csv(&text)?;
        outputs.text(out.join("loss.svg"), &loss_svg(&history)?)?;
    }
    if let Some((pred, truth)) = inputs.overlay {
        let (pred, truth) = (SectionGrid::load(pred)?, SectionGrid::load(truth)?);
        let picks: Vec<usize> = cfg.picks().into_iter().filter(|&p| p < truth.n_traces()).collect();
        let rep = evaluate(&pred, &truth, &picks)?;
        outputs.text(out.join("overlay.svg"), &overlay_svg(&rep.overlays)?)?;
    }
    outputs.commit();
    Ok(())
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(c) => cmd_gen_data(&load_config(c)?, &c.out),
        Command::Train(c) => cmd_train(&load_config(c)?, &c.out),
        Command::Predict(c) => cmd_predict(&load_config(c)?, &c.out),
        Command::Eval { common, pred, truth } => {
            let given = pred.as_deref().zip(truth.as_deref());
            cmd_eval(&load_config(common)?, &common.out, given)
        }
        Command::SweepAlpha(c) => cmd_sweep_alpha(&load_config(c)?, &c.out),
        Command::Plot {
            common,
            grid,
            history,
            pred,
            truth,
        } => cmd_plot(
            &load_config(common)?,
            &common.out,
            PlotInputs {
                grid: grid.as_deref(),
                history: history.as_deref(),
                overlay: pred.as_deref().zip(truth.as_deref()),
            },
        ),
    }
}
