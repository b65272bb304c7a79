//! Shared oracles for the integration tests.
#![allow(dead_code)]

use jointinv::model::{build_network, ModelConfig, Network, Param, ParamKind};
use jointinv::tensor::{Graph, Tensor};
use jointinv::trainer::{reconstruction_loss, regression_loss, total_loss, weight_mismatch_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()).unwrap()
}

/// Straight seven-loop "same" cross-correlation over `[N,C,H,W]` input and
/// `[Cout,Cin,kH,kW]` kernel, reading zero outside the input.
pub fn naive_conv2d(x: &[f64], xs: [usize; 4], k: &[f64], ks: [usize; 4], b: &[f64], dil: (usize, usize)) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let [co, ci, kh, kw] = ks;
    assert_eq!(c, ci);
    let (dh, dw) = dil;
    let top = (dh * (kh - 1) / 2) as isize;
    let left = (dw * (kw - 1) / 2) as isize;
    let mut out = vec![0.0; n * co * h * w];
    for s in 0..n {
        for o in 0..co {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = b[o];
                    for q in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let y = i as isize + (u * dh) as isize - top;
                                let z = j as isize + (v * dw) as isize - left;
                                if y < 0 || z < 0 || y >= h as isize || z >= w as isize {
                                    continue;
                                }
                                acc += k[((o * c + q) * kh + u) * kw + v]
                                    * x[((s * c + q) * h + y as usize) * w + z as usize];
                            }
                        }
                    }
                    out[((s * co + o) * h + i) * w + j] = acc;
                }
            }
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// One joint problem: inputs and targets for both networks.
pub struct JointBatch {
    pub x1: Tensor,
    pub y1: Tensor,
    pub x2: Tensor,
    pub y2: Tensor,
    pub alpha: f64,
}

/// Total joint loss and, when `grads`, the parameter gradients of F and G.
pub fn joint_loss(f: &Network, g: &Network, b: &JointBatch, grads: bool) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut gr = Graph::new();
    let bf = f.bind(&mut gr);
    let bg = g.bind(&mut gr);
    let x1 = gr.leaf(&b.x1);
    let y1 = gr.leaf(&b.y1);
    let x2 = gr.leaf(&b.x2);
    let y2 = gr.leaf(&b.y2);
    let of = f.forward(&mut gr, &bf, x1).unwrap();
    let og = g.forward(&mut gr, &bg, x2).unwrap();
    let reg = regression_loss(&mut gr, &[(of.y_hat, y1), (og.y_hat, y2)]).unwrap();
    let rec = reconstruction_loss(&mut gr, &[(of.x_hat, x1), (og.x_hat, x2)]).unwrap();
    let wml = weight_mismatch_loss(&mut gr, (f, &bf), (g, &bg)).unwrap();
    let total = total_loss(&mut gr, reg, rec, Some(wml), b.alpha).unwrap();
    let value = gr.scalar(total);
    if !grads {
        return (value, Vec::new(), Vec::new());
    }
    gr.backward(total).unwrap();
    let collect = |bound: &jointinv::model::BoundParams| {
        bound
            .vars()
            .iter()
            .map(|&v| gr.grad(v).map(<[f64]>::to_vec).unwrap())
            .collect::<Vec<_>>()
    };
    (value, collect(&bf), collect(&bg))
}

pub fn flat(params: &[Param]) -> Vec<f64> {
    params.iter().flat_map(|p| p.tensor.data().iter().copied()).collect()
}

/// Random small architecture, data and alpha from `seed`.
pub fn random_problem(seed: u64) -> (Network, Network, JointBatch) {
    let mut r = rng(seed);
    let n_blocks = r.random_range(1..=3);
    let mut dilations: Vec<usize> = rand::seq::index::sample(&mut r, 5, n_blocks).into_iter().map(|i| 1 << i).collect();
    dilations.sort_unstable();
    let cfg = ModelConfig {
        n_blocks,
        channels: r.random_range(1..=3),
        kernel: ([3, 5][r.random_range(0..2)], [1, 3][r.random_range(0..2)]),
        dilations,
        patch_width: [1, 3, 5][r.random_range(0..3)],
    };
    let d = r.random_range(5..=10);
    let m = cfg.patch_width;
    // Zero initial biases put dead-unit pre-activations exactly on the relu
    // kink, where the derivative does not exist; check at a generic point.
    let mut f = build_network(&cfg, seed ^ 1).unwrap();
    let mut g = build_network(&cfg, seed ^ 2).unwrap();
    for net in [&mut f, &mut g] {
        for p in net.weights_mut().iter_mut().filter(|p| p.kind == ParamKind::Bias) {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
        }
    }
    let n1 = r.random_range(1..=3);
    let n2 = r.random_range(1..=2);
    let batch = JointBatch {
        x1: random_tensor(&mut r, &[n1, 1, d, m], 1.0),
        y1: random_tensor(&mut r, &[n1, 1, d], 1.0),
        x2: random_tensor(&mut r, &[n2, 1, d, m], 1.0),
        y2: random_tensor(&mut r, &[n2, 1, d], 1.0),
        alpha: r.random_range(0.01..2.0),
    };
    (f, g, batch)
}

/// Outcome of checking every parameter of both networks.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub worst: f64,
    pub checked: usize,
    /// Entries that needed a smaller step to stay on one side of a relu kink.
    pub refined: usize,
}

/// Compares autograd against central differences for every parameter of F
/// and G. A difference quotient that straddles a relu kink does not estimate
/// the derivative, so a disagreeing entry is retried with steps 1e-6 and 1e-7.
pub fn check_gradients(seed: u64, tol: f64) -> GradCheck {
    let (f, g, b) = random_problem(seed);
    let (_, gf, gg) = joint_loss(&f, &g, &b, true);
    let mut out = GradCheck::default();
    for which in 0..2 {
        let analytic = if which == 0 { &gf } else { &gg };
        let base = if which == 0 { &f } else { &g };
        for (li, grads) in analytic.iter().enumerate() {
            for (i, &a) in grads.iter().enumerate() {
                let mut probe = base.clone();
                let orig = probe.weights()[li].tensor.data()[i];
                let mut eval = |v: f64| {
                    probe.weights_mut()[li].tensor.data_mut()[i] = v;
                    if which == 0 {
                        joint_loss(&probe, &g, &b, false).0
                    } else {
                        joint_loss(&f, &probe, &b, false).0
                    }
                };
                let mut err = f64::INFINITY;
                for (k, eps) in [1e-5, 1e-6, 1e-7].into_iter().enumerate() {
                    let fd = (eval(orig + eps) - eval(orig - eps)) / (2.0 * eps);
                    err = rel_err(a, fd);
                    if err < tol {
                        out.refined += usize::from(k > 0);
                        break;
                    }
                }
                out.worst = out.worst.max(err);
                out.checked += 1;
            }
        }
    }
    out
}
