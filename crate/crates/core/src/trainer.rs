//! Joint training of identical networks on separate datasets.
//!
//! Each epoch every network sees a batch from its own dataset; the summed
//! regression and reconstruction losses plus `alpha` times the weight
//! mismatch between networks form one scalar, which is backpropagated once.
//! Each network then takes an ADAM step with its own optimizer state.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SectionGrid};
use crate::error::{Error, Result};
use crate::eval::{predict_traces, r2};
use crate::model::{check_same_architecture, BoundParams, Network, Param, ParamKind};
use crate::seed::mix_seed;
use crate::tensor::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the mismatch term in the total loss.
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps_adam: f64,
    /// Coupled L2 decay on kernels.
    pub weight_decay: f64,
    /// Batch size for dataset 1; `None` means the full dataset.
    pub batch_1: Option<usize>,
    pub batch_2: Option<usize>,
    pub seed: u64,
    /// Validation r² is recorded every this many epochs (0 disables it).
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epochs: 900,
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps_adam: 1e-8,
            weight_decay: 1e-3,
            batch_1: None,
            batch_2: None,
            seed: 0,
            validate_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::invalid("ADAM betas must lie in [0, 1)"));
        }
        if !(self.eps_adam > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("eps_adam must be > 0 and weight_decay >= 0"));
        }
        if self.batch_1 == Some(0) || self.batch_2 == Some(0) {
            return Err(Error::invalid("batch sizes must be >= 1"));
        }
        Ok(())
    }

    fn batch_size(&self, dataset: usize) -> Option<usize> {
        match dataset {
            0 => self.batch_1,
            1 => self.batch_2,
            _ => None,
        }
    }
}

/// Per-parameter ADAM moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update. Weight decay is added to kernel gradients
/// as `λθ`; biases are not decayed. Parameters without a gradient are
/// treated as having a zero gradient.
pub fn adam_step(params: &mut [Param], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::ArchitectureMismatch("optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let decay = match p.kind {
            ParamKind::Kernel => cfg.weight_decay,
            ParamKind::Bias => 0.0,
        };
        let grad = p.tensor.grad().map(<[f64]>::to_vec);
        for (i, theta) in p.tensor.data_mut().iter_mut().enumerate() {
            let g = grad.as_ref().map_or(0.0, |g| g[i]) + decay * *theta;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
    }
    Ok(())
}

/// `Σ_l ||θ_F^l − θ_G^l||²` over every kernel and bias, as a graph node.
pub fn weight_mismatch_loss(
    g: &mut Graph,
    (net_f, bound_f): (&Network, &BoundParams),
    (net_g, bound_g): (&Network, &BoundParams),
) -> Result<Var> {
    check_same_architecture(net_f, net_g)?;
    let mut total: Option<Var> = None;
    for (&a, &b) in bound_f.vars().iter().zip(bound_g.vars()) {
        let term = g.sse(a, b)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::ArchitectureMismatch("networks have no parameters".into()))
}

/// Plain-value version of the mismatch loss.
pub fn weight_distance_sq(a: &Network, b: &Network) -> Result<f64> {
    check_same_architecture(a, b)?;
    Ok(a.weights()
        .iter()
        .zip(b.weights())
        .map(|(pa, pb)| {
            pa.tensor
                .data()
                .iter()
                .zip(pb.tensor.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .sum())
}

/// `||θ_F − θ_G|| / ||θ_F||` over all parameters.
pub fn relative_weight_distance(a: &Network, b: &Network) -> Result<f64> {
    let num = weight_distance_sq(a, b)?.sqrt();
    let den: f64 = a
        .weights()
        .iter()
        .flat_map(|p| p.tensor.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// `Σ_k (1/N_k) Σ_i ||pred_k^i − target_k^i||²` with `N_k` the leading
/// (batch) extent of each pair.
pub fn batch_loss(g: &mut Graph, pairs: &[(Var, Var)]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(pred, target) in pairs {
        let n = g.shape(pred)[0] as f64;
        let sse = g.sse(pred, target)?;
        let term = g.scale(sse, 1.0 / n);
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::invalid("loss over an empty set of batches"))
}

/// Regression loss over `(y_hat, y)` pairs, one per dataset.
pub fn regression_loss(g: &mut Graph, pairs: &[(Var, Var)]) -> Result<Var> {
    batch_loss(g, pairs)
}

/// Reconstruction loss over `(x_hat, x)` pairs, one per dataset.
pub fn reconstruction_loss(g: &mut Graph, pairs: &[(Var, Var)]) -> Result<Var> {
    batch_loss(g, pairs)
}

/// `l_reg + l_recon + alpha * l_wml`; without a mismatch term the sum of the
/// first two.
pub fn total_loss(g: &mut Graph, l_reg: Var, l_recon: Var, l_wml: Option<Var>, alpha: f64) -> Result<Var> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let base = g.add(l_reg, l_recon)?;
    match l_wml {
        Some(w) => {
            let weighted = g.scale(w, alpha);
            g.add(base, weighted)
        }
        None => Ok(base),
    }
}

/// Held-out traces scored during training.
#[derive(Clone, Debug)]
pub struct Monitor {
    pub seismic: SectionGrid,
    pub truth: SectionGrid,
    pub traces: Vec<usize>,
}

impl Monitor {
    /// Mean per-trace r² (constant traces skipped), using the dataset's scalers.
    pub fn score(&self, net: &Network, data: &Dataset) -> Result<f64> {
        let preds = predict_traces(net, &self.seismic, &self.traces, &data.scaler_x, &data.scaler_y)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (&t, p) in self.traces.iter().zip(&preds) {
            match r2(self.truth.trace(t), p) {
                Ok(v) => {
                    sum += v;
                    n += 1;
                }
                Err(Error::Degenerate(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if n == 0 {
            return Err(Error::Degenerate("monitor has no scorable trace".into()));
        }
        Ok(sum / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_reg: f64,
    pub l_recon: f64,
    pub l_wml: f64,
    pub total: f64,
    /// Validation r² per dataset, when measured this epoch.
    pub r2: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,l_reg,l_recon,l_wml,total,r2_d1,r2_d2";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let fmt = |v: Option<&Option<f64>>| v.copied().flatten().map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch,
                r.l_reg,
                r.l_recon,
                r.l_wml,
                r.total,
                fmt(r.r2.first()),
                fmt(r.r2.get(1)),
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("history CSV", msg);
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == Self::CSV_HEADER => {}
            _ => return Err(bad("missing or unexpected header".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("line {}: expected 7 fields", i + 2)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
            let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
            records.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|e| bad(format!("line {}: {e}", i + 2)))?,
                l_reg: num(f[1])?,
                l_recon: num(f[2])?,
                l_wml: num(f[3])?,
                total: num(f[4])?,
                r2: vec![opt(f[5])?, opt(f[6])?],
            });
        }
        if records.is_empty() {
            return Err(Error::Degenerate("history has no epochs".into()));
        }
        Ok(Self { records })
    }
}

/// Trains any number of architecture-identical networks jointly; network `k`
/// sees `datasets[k]` and draws batches from random stream `k`. With one
/// network there is no mismatch term.
pub fn train_networks(
    nets: &mut [Network],
    datasets: &[Dataset],
    cfg: &TrainConfig,
    monitors: &[Option<Monitor>],
) -> Result<TrainHistory> {
    let streams: Vec<u64> = (0..nets.len() as u64).collect();
    train_with_streams(nets, datasets, cfg, monitors, &streams)
}

/// Trains a single network on batch stream `stream`, reproducing network
/// `stream` of a joint run with `alpha = 0` bit for bit.
pub fn train_single(net: &mut Network, data: &Dataset, cfg: &TrainConfig, stream: u64, monitor: Option<Monitor>) -> Result<TrainHistory> {
    train_with_streams(
        std::slice::from_mut(net),
        std::slice::from_ref(data),
        cfg,
        &[monitor],
        &[stream],
    )
}

/// The two-network case: `net_f` on `d1`, `net_g` on `d2`.
pub fn train_joint(
    net_f: &mut Network,
    net_g: &mut Network,
    d1: &Dataset,
    d2: &Dataset,
    cfg: &TrainConfig,
    monitors: [Option<Monitor>; 2],
) -> Result<TrainHistory> {
    let mut nets = [net_f.clone(), net_g.clone()];
    let history = train_networks(&mut nets, &[d1.clone(), d2.clone()], cfg, &monitors)?;
    let [f, g] = nets;
    *net_f = f;
    *net_g = g;
    Ok(history)
}

fn train_with_streams(
    nets: &mut [Network],
    datasets: &[Dataset],
    cfg: &TrainConfig,
    monitors: &[Option<Monitor>],
    streams: &[u64],
) -> Result<TrainHistory> {
    cfg.validate()?;
    if nets.is_empty() || nets.len() != datasets.len() {
        return Err(Error::invalid("need one dataset per network"));
    }
    if datasets.iter().any(Dataset::is_empty) {
        return Err(Error::invalid("datasets must be non-empty"));
    }
    for n in &nets[1..] {
        check_same_architecture(&nets[0], n)?;
    }
    let mut states: Vec<AdamState> = nets.iter().map(|n| AdamState::new(n.weights())).collect();
    let mut rngs: Vec<ChaCha8Rng> = streams
        .iter()
        .map(|&s| ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, s)))
        .collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let mut g = Graph::new();
        let bounds: Vec<BoundParams> = nets.iter().map(|n| n.bind(&mut g)).collect();
        let mut reg_pairs = Vec::with_capacity(nets.len());
        let mut recon_pairs = Vec::with_capacity(nets.len());
        for (k, (net, data)) in nets.iter().zip(datasets).enumerate() {
            let (bx, by) = match cfg.batch_size(streams[k] as usize) {
                Some(b) if b < data.len() => {
                    let mut idx = index::sample(&mut rngs[k], data.len(), b).into_vec();
                    idx.sort_unstable();
                    data.batch(&idx)?
                }
                _ => (data.x.clone(), data.y.clone()),
            };
            let xv = g.leaf(&bx);
            let yv = g.leaf(&by);
            let out = net.forward(&mut g, &bounds[k], xv)?;
            reg_pairs.push((out.y_hat, yv));
            recon_pairs.push((out.x_hat, xv));
        }
        let l_reg = regression_loss(&mut g, &reg_pairs)?;
        let l_recon = reconstruction_loss(&mut g, &recon_pairs)?;
        let mut l_wml = None;
        for i in 0..nets.len() {
            for j in i + 1..nets.len() {
                let term = weight_mismatch_loss(&mut g, (&nets[i], &bounds[i]), (&nets[j], &bounds[j]))?;
                l_wml = Some(match l_wml {
                    Some(t) => g.add(t, term)?,
                    None => term,
                });
            }
        }
        let total = total_loss(&mut g, l_reg, l_recon, l_wml, cfg.alpha)?;
        g.backward(total)?;
        for ((net, bound), state) in nets.iter_mut().zip(&bounds).zip(&mut states) {
            net.zero_grads();
            net.collect_grads(&g, bound)?;
            adam_step(net.weights_mut(), state, cfg)?;
        }

        let validate = cfg.validate_every > 0 && (epoch % cfg.validate_every == 0 || epoch == cfg.epochs);
        let r2 = nets
            .iter()
            .zip(datasets)
            .enumerate()
            .map(|(k, (net, data))| match monitors.get(k) {
                Some(Some(m)) if validate => m.score(net, data).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        history.records.push(EpochRecord {
            epoch,
            l_reg: g.scalar(l_reg),
            l_recon: g.scalar(l_recon),
            l_wml: l_wml.map_or(0.0, |w| g.scalar(w)),
            total: g.scalar(total),
            r2,
        });
    }
    Ok(history)
}
