//! Model configuration, parameters and the layer-program interpreter that
//! runs every architecture forwards and backwards.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::arch::architectures;
use super::ops;
use super::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Prelu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Prelu => "prelu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "prelu" => Ok(Activation::Prelu),
            _ => Err(Error::config("activation", format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Registered architecture name, e.g. `srcnn_t` or `resnet_t`.
    pub architecture: String,
    pub alpha: usize,
    pub srcnn_kernels: [usize; 3],
    pub srcnn_widths: [usize; 2],
    pub resnet_blocks: usize,
    pub resnet_width: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: "resnet_t".into(),
            alpha: 4,
            srcnn_kernels: [9, 1, 5],
            srcnn_widths: [64, 32],
            resnet_blocks: 4,
            resnet_width: 32,
            activation: Activation::Prelu,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn srcnn() -> Self {
        Self {
            architecture: "srcnn_t".into(),
            activation: Activation::Relu,
            ..Self::default()
        }
    }

    pub fn resnet() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.alpha, 2 | 4) {
            return Err(Error::config("alpha", format!("must be 2 or 4, got {}", self.alpha)));
        }
        if let Some(k) = self.srcnn_kernels.iter().find(|k| *k % 2 == 0) {
            return Err(Error::config("srcnn_kernels", format!("kernel size {k} is not odd")));
        }
        if self.srcnn_widths.contains(&0) {
            return Err(Error::config("srcnn_widths", "widths must be at least 1"));
        }
        if self.resnet_width == 0 {
            return Err(Error::config("resnet_width", "width must be at least 1"));
        }
        let reg = architectures();
        reg.get(&self.architecture)?;
        Ok(())
    }

    /// Flat `key=value` form used by checkpoints and config files.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("architecture".into(), self.architecture.clone()),
            ("alpha".into(), self.alpha.to_string()),
            ("srcnn_kernels".into(), join(&self.srcnn_kernels)),
            ("srcnn_widths".into(), join(&self.srcnn_widths)),
            ("resnet_blocks".into(), self.resnet_blocks.to_string()),
            ("resnet_width".into(), self.resnet_width.to_string()),
            ("activation".into(), self.activation.to_string()),
            ("init_seed".into(), self.init_seed.to_string()),
        ]
    }

    /// Overrides fields present in `pairs`; unknown keys are ignored.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::config(key, format!("`{v}` is not a valid number")))
        }
        fn list<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
            let items: Vec<usize> = v.split(',').map(|x| num(key, x)).collect::<Result<_>>()?;
            items
                .try_into()
                .map_err(|_| Error::config(key, format!("expected {N} comma-separated values")))
        }
        for (k, v) in pairs {
            match k.as_str() {
                "architecture" => self.architecture = v.trim().to_string(),
                "alpha" => self.alpha = num(k, v)?,
                "srcnn_kernels" => self.srcnn_kernels = list(k, v)?,
                "srcnn_widths" => self.srcnn_widths = list(k, v)?,
                "resnet_blocks" => self.resnet_blocks = num(k, v)?,
                "resnet_width" => self.resnet_width = num(k, v)?,
                "activation" => self.activation = v.trim().parse()?,
                "init_seed" => self.init_seed = num(k, v)?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean normal with std `gain · sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize, gain: f64 },
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: [usize; 4],
    pub init: Init,
}

/// One step of a layer program. The program threads a "current" tensor
/// through the ops; `Save`/`AddSaved` implement skip connections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Replace the current tensor with the bicubic enlargement of the
    /// network input.
    UpsampleInput { factor: usize },
    Conv { weight: usize, bias: usize, pad: usize },
    Relu,
    Prelu { slope: usize },
    PixelShuffle { r: usize },
    Save { slot: usize },
    AddSaved { slot: usize },
    /// Add the bicubic enlargement of the network input.
    AddUpsampledInput { factor: usize },
}

/// What an architecture compiles to.
#[derive(Debug, Clone, Default)]
pub struct Blueprint {
    pub ops: Vec<Op>,
    pub params: Vec<ParamSpec>,
    slots: usize,
}

impl Blueprint {
    fn param(&mut self, name: String, dims: [usize; 4], init: Init) -> usize {
        self.params.push(ParamSpec { name, dims, init });
        self.params.len() - 1
    }

    /// Same-padded `k`×`k` convolution. `gain` scales the initial weights.
    pub fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, k: usize, gain: f64) {
        let fan_in = in_ch * k * k;
        let weight = self.param(format!("{name}.weight"), [out_ch, in_ch, k, k], Init::HeNormal { fan_in, gain });
        let bias = self.param(format!("{name}.bias"), [out_ch, 1, 1, 1], Init::Constant(0.0));
        self.ops.push(Op::Conv {
            weight,
            bias,
            pad: (k - 1) / 2,
        });
    }

    pub fn activation(&mut self, name: &str, kind: Activation, channels: usize) {
        match kind {
            Activation::Relu => self.ops.push(Op::Relu),
            Activation::Prelu => {
                let slope = self.param(format!("{name}.slope"), [channels, 1, 1, 1], Init::Constant(0.25));
                self.ops.push(Op::Prelu { slope });
            }
        }
    }

    pub fn push(&mut self, op: Op) {
        self.ops.push(op);
    }

    pub fn new_slot(&mut self) -> usize {
        self.slots += 1;
        self.slots - 1
    }
}

/// A named learnable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor4,
    pub grad: Tensor4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activations saved by a training forward pass.
#[derive(Debug)]
pub struct Trace {
    inputs: Vec<Option<Tensor4>>,
    output_dims: [usize; 4],
}

/// A network instance: configuration, compiled program and parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    ops: Vec<Op>,
    slots: usize,
    params: Vec<Param>,
    mode: Mode,
}

impl Model {
    /// Builds and initialises a model from its configuration.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let reg = architectures();
        let arch = (reg.get(&config.architecture)?)();
        let bp = arch.build(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let params = bp
            .params
            .iter()
            .map(|spec| {
                let n: usize = spec.dims.iter().product();
                let data = match spec.init {
                    Init::HeNormal { fan_in, gain } => {
                        let std = gain * (2.0 / fan_in as f64).sqrt();
                        (0..n)
                            .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                            .collect()
                    }
                    Init::Constant(c) => vec![c; n],
                };
                Param {
                    name: spec.name.clone(),
                    value: Tensor4::new(spec.dims, data).expect("dims from spec"),
                    grad: Tensor4::zeros(spec.dims),
                }
            })
            .collect();
        Ok(Self {
            config,
            ops: bp.ops,
            slots: bp.slots,
            params,
            mode: Mode::Eval,
        })
    }

    /// Rebuilds a model and overwrites its parameters by name, e.g. from a
    /// checkpoint. Every parameter must be supplied with matching dims.
    pub fn with_parameters(config: ModelConfig, values: Vec<(String, Tensor4)>) -> Result<Self> {
        let mut model = Self::new(config)?;
        if values.len() != model.params.len() {
            return Err(Error::Shape(format!(
                "{} tensors supplied for {} parameters",
                values.len(),
                model.params.len()
            )));
        }
        let mut by_name: BTreeMap<String, Tensor4> = values.into_iter().collect();
        for p in &mut model.params {
            let v = by_name
                .remove(&p.name)
                .ok_or_else(|| Error::Shape(format!("missing parameter `{}`", p.name)))?;
            if v.dims() != p.value.dims() {
                return Err(Error::Shape(format!(
                    "parameter `{}` has dims {:?}, expected {:?}",
                    p.name,
                    v.dims(),
                    p.value.dims()
                )));
            }
            p.value = v;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn alpha(&self) -> usize {
        self.config.alpha
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    fn check_input(&self, input: &Tensor4) -> Result<()> {
        if input.channels() != 1 {
            return Err(Error::Shape(format!(
                "models take single-channel input, got {} channels",
                input.channels()
            )));
        }
        Ok(())
    }

    fn run(&self, input: &Tensor4, keep: bool) -> Result<(Tensor4, Vec<Option<Tensor4>>)> {
        self.check_input(input)?;
        let mut cur = input.clone();
        let mut saved: Vec<Option<Tensor4>> = vec![None; self.slots];
        let mut trace = Vec::with_capacity(if keep { self.ops.len() } else { 0 });
        for op in &self.ops {
            let next = match *op {
                Op::UpsampleInput { factor } => ops::bicubic_upsample(input, factor)?,
                Op::Conv { weight, bias, pad } => ops::conv2d_forward(
                    &cur,
                    &self.params[weight].value,
                    self.params[bias].value.data(),
                    pad,
                )?,
                Op::Relu => ops::relu_forward(&cur),
                Op::Prelu { slope } => ops::prelu_forward(&cur, self.params[slope].value.data())?,
                Op::PixelShuffle { r } => ops::pixel_shuffle(&cur, r)?,
                Op::Save { slot } => {
                    saved[slot] = Some(cur.clone());
                    cur.clone()
                }
                Op::AddSaved { slot } => {
                    let mut out = cur.clone();
                    let skip = saved[slot]
                        .take()
                        .ok_or_else(|| Error::State(format!("skip slot {slot} read before write")))?;
                    out.add_assign(&skip)?;
                    out
                }
                Op::AddUpsampledInput { factor } => {
                    let mut out = cur.clone();
                    out.add_assign(&ops::bicubic_upsample(input, factor)?)?;
                    out
                }
            };
            if keep {
                let needs_input = matches!(op, Op::Conv { .. } | Op::Relu | Op::Prelu { .. });
                trace.push(needs_input.then(|| cur.clone()));
            }
            cur = next;
        }
        let [b, _, h, w] = input.dims();
        let want = [b, 1, h * self.config.alpha, w * self.config.alpha];
        if cur.dims() != want {
            return Err(Error::Shape(format!(
                "network produced {:?}, expected {:?}",
                cur.dims(),
                want
            )));
        }
        Ok((cur, trace))
    }

    /// Inference: `(B, 1, h, w)` → `(B, 1, αh, αw)`.
    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        Ok(self.run(input, false)?.0)
    }

    /// Forward pass that keeps what [`Model::backward`] needs.
    pub fn forward_train(&self, input: &Tensor4) -> Result<(Tensor4, Trace)> {
        let (out, inputs) = self.run(input, true)?;
        let output_dims = out.dims();
        Ok((out, Trace { inputs, output_dims }))
    }

    /// Accumulates parameter gradients for the traced pass given the
    /// gradient of the loss with respect to its output.
    pub fn backward(&mut self, trace: &Trace, grad_out: &Tensor4) -> Result<()> {
        if grad_out.dims() != trace.output_dims {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.dims(),
                trace.output_dims
            )));
        }
        // The gradient w.r.t. the network input is never needed, so it is
        // not propagated past the first parameterised op.
        let first_param_op = self
            .ops
            .iter()
            .position(|op| matches!(op, Op::Conv { .. } | Op::Prelu { .. }))
            .unwrap_or(self.ops.len());
        let mut g = grad_out.clone();
        let mut skip: Vec<Option<Tensor4>> = vec![None; self.slots];
        for i in (first_param_op..self.ops.len()).rev() {
            let input = || {
                trace.inputs[i]
                    .as_ref()
                    .ok_or_else(|| Error::State("trace is missing an activation".into()))
            };
            match self.ops[i] {
                Op::UpsampleInput { .. } => break,
                Op::AddUpsampledInput { .. } => {}
                Op::AddSaved { slot } => skip[slot] = Some(g.clone()),
                Op::Save { slot } => {
                    if let Some(s) = skip[slot].take() {
                        g.add_assign(&s)?;
                    }
                }
                Op::PixelShuffle { r } => g = ops::pixel_unshuffle(&g, r)?,
                Op::Relu => g = ops::relu_backward(input()?, &g)?,
                Op::Prelu { slope } => {
                    let (gx, ga) = ops::prelu_backward(input()?, self.params[slope].value.data(), &g)?;
                    for (acc, v) in self.params[slope].grad.data_mut().iter_mut().zip(ga) {
                        *acc += v;
                    }
                    g = gx;
                }
                Op::Conv { weight, bias, pad } => {
                    let want_input = i > first_param_op;
                    let (gi, gw, gb) = ops::conv2d_backward_impl(
                        &g,
                        input()?,
                        &self.params[weight].value,
                        pad,
                        want_input,
                    )?;
                    self.params[weight].grad.add_assign(&gw)?;
                    for (acc, v) in self.params[bias].grad.data_mut().iter_mut().zip(gb) {
                        *acc += v;
                    }
                    match gi {
                        Some(gi) => g = gi,
                        None => break,
                    }
                }
            }
        }
        Ok(())
    }
}
