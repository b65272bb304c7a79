//! 2-D temporal convolutional network with a regression head and a
//! reconstruction head sharing one feature extractor.
//!
//! Every trainable tensor lives in a single ordered list (the layer index).
//! Blocks and heads refer to it by position, so two networks built from the
//! same [`ModelConfig`] line up tensor-for-tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub channels: usize,
    /// Kernel extent as (depth, width).
    pub kernel: (usize, usize),
    /// Depth dilation per block; width dilation is always 1.
    pub dilations: Vec<usize>,
    pub patch_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_blocks: 5,
            channels: 16,
            kernel: (5, 3),
            dilations: vec![1, 2, 4, 8, 16],
            patch_width: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.channels == 0 {
            return Err(Error::invalid("model needs at least one block and one channel"));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::invalid("kernel extents must be >= 1"));
        }
        if self.dilations.len() != self.n_blocks {
            return Err(Error::invalid(format!(
                "{} dilations given for {} blocks",
                self.dilations.len(),
                self.n_blocks
            )));
        }
        if self.dilations.iter().any(|d| !d.is_power_of_two()) {
            return Err(Error::invalid("dilations must be powers of two"));
        }
        if self.dilations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("dilations must be strictly increasing"));
        }
        if self.patch_width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch width must be odd, got {}",
                self.patch_width
            )));
        }
        Ok(())
    }

    /// Depth samples influencing one output sample.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations
            .iter()
            .map(|d| 2 * d * (self.kernel.0 - 1))
            .sum::<usize>()
    }

    pub fn center_column(&self) -> usize {
        (self.patch_width - 1) / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Kernel,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Positions of a convolution's kernel and bias in the layer index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvRef {
    pub kernel: usize,
    pub bias: usize,
    pub dilation: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalBlock2D {
    pub conv1: ConvRef,
    pub conv2: ConvRef,
    /// 1×1 projection on the skip path when channel counts differ.
    pub residual_proj: Option<ConvRef>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: ModelConfig,
    blocks: Vec<TemporalBlock2D>,
    regression_head: ConvRef,
    reconstruction_head: ConvRef,
    params: Vec<Param>,
}

/// Graph handles for a network's parameters, in layer-index order.
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// Property estimate, `[N,1,d]` (or `[1,d]` for an unbatched input).
    pub y_hat: Var,
    /// Reconstructed input, same shape as the input.
    pub x_hat: Var,
}

struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Param>,
}

impl Builder {
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: (usize, usize), dilation: (usize, usize)) -> ConvRef {
        let fan_in = (c_in * k.0 * k.1) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let n = c_out * c_in * k.0 * k.1;
        let data = (0..n)
            .map(|_| bound * (2.0 * self.rng.random::<f64>() - 1.0))
            .collect();
        let kernel = self.push(name, ParamKind::Kernel, vec![c_out, c_in, k.0, k.1], data);
        let bias = self.push(name, ParamKind::Bias, vec![c_out], vec![0.0; c_out]);
        ConvRef {
            kernel,
            bias,
            dilation,
        }
    }

    fn push(&mut self, name: &str, kind: ParamKind, shape: Vec<usize>, data: Vec<f64>) -> usize {
        let suffix = match kind {
            ParamKind::Kernel => "weight",
            ParamKind::Bias => "bias",
        };
        let tensor = Tensor::new(shape, data)
            .expect("parameter shapes are constructed non-empty")
            .with_requires_grad(true);
        self.params.push(Param {
            name: format!("{name}.{suffix}"),
            kind,
            tensor,
        });
        self.params.len() - 1
    }
}

/// Builds a freshly initialized network. Kernels are drawn uniformly from
/// `[-b, b]` with `b = sqrt(6 / fan_in)`; biases start at zero.
pub fn build_network(cfg: &ModelConfig, rng_seed: u64) -> Result<Network> {
    cfg.validate()?;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        params: Vec::new(),
    };
    let c = cfg.channels;
    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    let mut c_in = 1;
    for (i, &dil) in cfg.dilations.iter().enumerate() {
        let dilation = (dil, 1);
        let conv1 = b.conv(&format!("block{i}.conv1"), c, c_in, cfg.kernel, dilation);
        let conv2 = b.conv(&format!("block{i}.conv2"), c, c, cfg.kernel, dilation);
        let residual_proj = (c_in != c).then(|| b.conv(&format!("block{i}.proj"), c, c_in, (1, 1), (1, 1)));
        blocks.push(TemporalBlock2D {
            conv1,
            conv2,
            residual_proj,
        });
        c_in = c;
    }
    let regression_head = b.conv("regression", 1, c, (1, 1), (1, 1));
    let reconstruction_head = b.conv("reconstruction", 1, c, (1, 1), (1, 1));
    Ok(Network {
        config: cfg.clone(),
        blocks,
        regression_head,
        reconstruction_head,
        params: b.params,
    })
}

impl Network {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[TemporalBlock2D] {
        &self.blocks
    }

    /// The ordered layer index: every trainable tensor exactly once.
    pub fn weights(&self) -> &[Param] {
        &self.params
    }

    pub fn weights_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Registers parameters as graph leaves (trainable).
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams(self.params.iter().map(|p| g.leaf(&p.tensor)).collect())
    }

    /// Registers parameters as constants, for inference.
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        BoundParams(
            self.params
                .iter()
                .map(|p| g.leaf(&p.tensor.clone().with_requires_grad(false)))
                .collect(),
        )
    }

    /// Adds graph gradients of the bound leaves into each parameter's grad.
    pub fn collect_grads(&mut self, g: &Graph, bound: &BoundParams) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&bound.0) {
            g.accumulate_into(v, &mut p.tensor)?;
        }
        Ok(())
    }

    fn conv(&self, g: &mut Graph, bound: &BoundParams, c: &ConvRef, x: Var) -> Result<Var> {
        g.conv2d(x, bound.0[c.kernel], bound.0[c.bias], c.dilation)
    }

    /// Runs the extractor and both heads on `x` (`[1,d,m]` or `[N,1,d,m]`).
    pub fn forward(&self, g: &mut Graph, bound: &BoundParams, x: Var) -> Result<ForwardOutput> {
        if bound.0.len() != self.params.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} bound tensors for a network of {}",
                bound.0.len(),
                self.params.len()
            )));
        }
        let shape = g.shape(x);
        let width = shape.last().copied().unwrap_or(0);
        if width != self.config.patch_width {
            return Err(Error::ShapeMismatch {
                op: "forward (patch width)",
                expected: vec![self.config.patch_width],
                got: vec![width],
            });
        }
        let mut h = x;
        for block in &self.blocks {
            let a = self.conv(g, bound, &block.conv1, h)?;
            let a = g.relu(a);
            let a = self.conv(g, bound, &block.conv2, a)?;
            let a = g.relu(a);
            let skip = match &block.residual_proj {
                Some(p) => self.conv(g, bound, p, h)?,
                None => h,
            };
            h = g.add(a, skip)?;
        }
        let reg = self.conv(g, bound, &self.regression_head, h)?;
        let y_hat = g.column(reg, self.config.center_column())?;
        let x_hat = self.conv(g, bound, &self.reconstruction_head, h)?;
        Ok(ForwardOutput { y_hat, x_hat })
    }

    /// Inference on a batch `[N,1,d,m]`, returning `(y_hat [N,1,d], x_hat)`.
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let bound = self.bind_frozen(&mut g);
        let xv = g.leaf(&x.clone().with_requires_grad(false));
        let out = self.forward(&mut g, &bound, xv)?;
        Ok((
            Tensor::new(g.shape(out.y_hat).to_vec(), g.value(out.y_hat).to_vec())?,
            Tensor::new(g.shape(out.x_hat).to_vec(), g.value(out.x_hat).to_vec())?,
        ))
    }
}

/// Checks that two networks have position-wise identical layer shapes.
pub fn check_same_architecture(a: &Network, b: &Network) -> Result<()> {
    if a.params.len() != b.params.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "layer counts differ: {} vs {}",
            a.params.len(),
            b.params.len()
        )));
    }
    for (pa, pb) in a.params.iter().zip(&b.params) {
        if pa.tensor.shape() != pb.tensor.shape() {
            return Err(Error::ArchitectureMismatch(format!(
                "{}: {:?} vs {:?}",
                pa.name,
                pa.tensor.shape(),
                pb.tensor.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            n_blocks: 2,
            channels: 3,
            kernel: (3, 3),
            dilations: vec![1, 2],
            patch_width: 5,
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = small();
        c.patch_width = 6;
        assert!(build_network(&c, 0).is_err());
        let mut c = small();
        c.dilations = vec![2, 1];
        assert!(c.validate().is_err());
        let mut c = small();
        c.dilations = vec![1, 3];
        assert!(c.validate().is_err());
        let mut c = small();
        c.dilations = vec![1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_receptive_field() {
        // Two taps of reach dil*(kH-1) per block.
        assert_eq!(ModelConfig::default().receptive_field(), 1 + 2 * 4 * 31);
    }

    #[test]
    fn deterministic_build() {
        let a = build_network(&ModelConfig::default(), 7).unwrap();
        let b = build_network(&ModelConfig::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = build_network(&ModelConfig::default(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layer_index_structure() {
        let net = build_network(&ModelConfig::default(), 1).unwrap();
        // 5 blocks x 2 convs x (w, b), one projection (1 -> 16), 2 heads x (w, b).
        assert_eq!(net.weights().len(), 5 * 2 * 2 + 2 + 2 * 2);
        let first = &net.weights()[0];
        assert_eq!(first.tensor.shape(), &[16, 1, 5, 3]);
        let bound = (6.0f64 / 15.0).sqrt();
        assert!(first.tensor.data().iter().all(|v| v.abs() <= bound));
        assert!(first.tensor.data().iter().any(|v| v.abs() > 0.5 * bound));
        for p in net.weights() {
            if p.kind == ParamKind::Bias {
                assert!(p.tensor.data().iter().all(|&v| v == 0.0));
            }
        }
        let other = build_network(&ModelConfig::default(), 2).unwrap();
        check_same_architecture(&net, &other).unwrap();
        let mismatched = build_network(&small(), 1).unwrap();
        assert!(check_same_architecture(&net, &mismatched).is_err());
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut net = build_network(&small(), 3).unwrap();
        for p in net.weights_mut() {
            p.tensor.data_mut().fill(0.0);
        }
        let x = Tensor::new(vec![1, 10, 5], (0..50).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (y, xh) = net.predict(&x).unwrap();
        assert_eq!(y.shape(), &[1, 10]);
        assert_eq!(xh.shape(), &[1, 10, 5]);
        assert!(y.data().iter().chain(xh.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_contract_and_width_check() {
        let net = build_network(&ModelConfig::default(), 0).unwrap();
        let x = Tensor::new(vec![2, 1, 64, 7], vec![0.1; 2 * 64 * 7]).unwrap();
        let (y, xh) = net.predict(&x).unwrap();
        assert_eq!(y.shape(), &[2, 1, 64]);
        assert_eq!(xh.shape(), &[2, 1, 64, 7]);
        let bad = Tensor::new(vec![1, 64, 5], vec![0.0; 64 * 5]).unwrap();
        assert!(net.predict(&bad).is_err());
    }

    #[test]
    fn weight_mutation_is_visible_in_forward() {
        let mut net = build_network(&small(), 5).unwrap();
        let x = Tensor::new(vec![1, 8, 5], (0..40).map(|i| (i as f64).sin()).collect()).unwrap();
        let (y0, _) = net.predict(&x).unwrap();
        let last = net.weights().len() - 3; // regression head bias
        assert_eq!(net.weights()[last].name, "regression.bias");
        net.weights_mut()[last].tensor.data_mut()[0] += 1.0;
        let (y1, _) = net.predict(&x).unwrap();
        for (a, b) in y0.data().iter().zip(y1.data()) {
            assert!((b - a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_wiring_passes_input_through() {
        // One block with matching channels has an identity skip path.
        let cfg = ModelConfig {
            n_blocks: 1,
            channels: 1,
            kernel: (3, 3),
            dilations: vec![1],
            patch_width: 3,
        };
        let mut net = build_network(&cfg, 0).unwrap();
        assert!(net.blocks()[0].residual_proj.is_none());
        let conv_tensors = 4;
        for p in &mut net.weights_mut()[..conv_tensors] {
            p.tensor.data_mut().fill(0.0);
        }
        // Reconstruction head as identity.
        let n = net.weights().len();
        net.weights_mut()[n - 2].tensor.data_mut()[0] = 1.0;
        net.weights_mut()[n - 1].tensor.data_mut()[0] = 0.0;
        let x = Tensor::new(vec![1, 6, 3], (0..18).map(|i| i as f64 - 9.0).collect()).unwrap();
        let (_, xh) = net.predict(&x).unwrap();
        assert_eq!(xh.data(), x.data());
    }
}
