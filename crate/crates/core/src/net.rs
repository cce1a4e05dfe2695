//! Dense networks over the tape: specs, parameter storage and the forward
//! pass from observations to head outputs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::graph::{Gradients, Tape, Var};
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self { width, activation }
    }
}

/// What the network reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// A flat state vector.
    Flat { len: usize },
    /// A `channels × height × width` image plus `extra` state entries. The
    /// image enters as per-channel spatial-softmax coordinates and, when
    /// `pool > 0`, a `pool × pool` average-pooled copy.
    Image { channels: usize, height: usize, width: usize, extra: usize, pool: usize, temperature: f64 },
}

impl InputSpec {
    pub fn feature_len(&self) -> usize {
        match *self {
            InputSpec::Flat { len } => len,
            InputSpec::Image { channels, height, width, extra, pool, .. } => {
                let pooled = if pool == 0 { 0 } else { channels * (height / pool) * (width / pool) };
                2 * channels + pooled + extra
            }
        }
    }
}

/// What the final (linear) layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    /// DMP weights (`dims × basis`) followed by goal offsets (`dims`).
    Dmp { dims: usize, basis: usize },
    /// A full `steps × dims` trajectory.
    Direct { steps: usize, dims: usize },
    /// Plain regression output.
    Linear { width: usize },
}

impl HeadSpec {
    pub fn width(&self) -> usize {
        match *self {
            HeadSpec::Dmp { dims, basis } => dims * (basis + 1),
            HeadSpec::Direct { steps, dims } => steps * dims,
            HeadSpec::Linear { width } => width,
        }
    }

    /// Initial scale of the output layer: trajectory heads start near the
    /// unforced attractor.
    pub fn init_scale(&self) -> f64 {
        match self {
            HeadSpec::Linear { .. } => 1.0,
            _ => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input: InputSpec,
    pub hidden: Vec<LayerSpec>,
    pub head: HeadSpec,
}

impl NetSpec {
    pub fn new(input: InputSpec, hidden: Vec<LayerSpec>, head: HeadSpec) -> Result<Self> {
        let spec = Self { input, hidden, head };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.feature_len() == 0 {
            return Err(invalid_config!("network input is empty"));
        }
        if self.hidden.iter().any(|l| l.width == 0) || self.head.width() == 0 {
            return Err(invalid_config!("layer widths must be positive"));
        }
        if let InputSpec::Image { channels, height, width, pool, temperature, .. } = self.input {
            if channels == 0 || height == 0 || width == 0 {
                return Err(invalid_config!("image input must be non-empty"));
            }
            if pool > height.min(width) {
                return Err(invalid_config!("pool {pool} larger than image"));
            }
            if !(temperature > 0.0) {
                return Err(invalid_config!("spatial softmax temperature must be positive"));
            }
        }
        Ok(())
    }

    /// `(rows, cols)` of every dense layer including the head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input.feature_len();
        for layer in &self.hidden {
            shapes.push((layer.width, fan_in));
            fan_in = layer.width;
        }
        shapes.push((self.head.width(), fan_in));
        shapes
    }

    pub fn output_len(&self) -> usize {
        self.head.width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors; shapes are fixed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(invalid_input!("tensor {} shape {:?} holds {} values", t.name, t.shape, t.data.len()));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(invalid_input!("tensor {} has non-finite entries", t.name));
            }
        }
        Ok(Self { tensors })
    }

    /// Uniform `±1/√fan_in` initialization for every dense layer; the head
    /// layer is further scaled by [`HeadSpec::init_scale`].
    pub fn init(spec: &NetSpec, rng: &mut Rng) -> Self {
        let shapes = spec.layer_shapes();
        let last = shapes.len() - 1;
        let mut tensors = Vec::with_capacity(2 * shapes.len());
        for (i, (rows, cols)) in shapes.into_iter().enumerate() {
            let bound = 1.0 / libm::sqrt(cols as f64);
            let scale = if i == last { spec.head.init_scale() } else { 1.0 };
            let w = (0..rows * cols).map(|_| rng.random_range(-bound..bound) * scale).collect();
            let b = (0..rows).map(|_| rng.random_range(-bound..bound) * scale).collect();
            tensors.push(Tensor { name: format!("layer{i}.weight"), shape: vec![rows, cols], data: w });
            tensors.push(Tensor { name: format!("layer{i}.bias"), shape: vec![rows], data: b });
        }
        Self { tensors }
    }

    /// A single free vector, e.g. a log standard deviation.
    pub fn vector(name: &str, data: Vec<f64>) -> Self {
        Self { tensors: vec![Tensor { name: name.into(), shape: vec![data.len()], data }] }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn data_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.tensors[i].data
    }

    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    /// Places every tensor on `tape` as a leaf.
    pub fn load(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.data.clone())).collect()
    }

    /// Head layer scaled in place (used to restart heads near zero).
    pub fn scale_head(&mut self, factor: f64) {
        let n = self.tensors.len();
        for t in &mut self.tensors[n.saturating_sub(2)..] {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// All tensors except the head layer, i.e. the feature trunk.
    pub fn trunk_len(&self) -> usize {
        self.tensors.len().saturating_sub(2)
    }

    pub fn shapes_match(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }
}

/// Gradient collected for each tensor of a store.
pub fn collect_grads(grads: &Gradients, vars: &[Var]) -> Vec<Vec<f64>> {
    vars.iter().map(|v| grads.wrt(*v)).collect()
}

/// Adds `src` into `dst` tensor by tensor.
pub fn add_grads(dst: &mut [Vec<f64>], src: &[Vec<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
}

/// What a network sees: image pixels (channel-major) and a state vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub pixels: Vec<f64>,
    pub state: Vec<f64>,
}

impl Observation {
    pub fn state(state: Vec<f64>) -> Self {
        Self { pixels: Vec::new(), state }
    }

    pub fn image(pixels: Vec<f64>, state: Vec<f64>) -> Self {
        Self { pixels, state }
    }
}

/// Leaves created for one observation.
#[derive(Debug, Clone, Copy)]
pub struct InputVars {
    pub pixels: Option<Var>,
    pub state: Option<Var>,
}

/// Records the network on an existing tape given parameter leaves.
pub fn forward_on(
    tape: &mut Tape,
    spec: &NetSpec,
    params: &[Var],
    obs: &Observation,
) -> Result<(Var, InputVars)> {
    if params.len() != 2 * (spec.hidden.len() + 1) {
        return Err(invalid_input!("parameter store does not match the network spec"));
    }
    let (features, inputs) = match spec.input {
        InputSpec::Flat { len } => {
            if obs.state.len() != len {
                return Err(invalid_input!("expected a state of {len} entries, got {}", obs.state.len()));
            }
            let s = tape.leaf(obs.state.clone());
            (s, InputVars { pixels: None, state: Some(s) })
        }
        InputSpec::Image { channels, height, width, extra, pool, temperature } => {
            if obs.pixels.len() != channels * height * width || obs.state.len() != extra {
                return Err(invalid_input!(
                    "expected {channels}x{height}x{width} pixels and {extra} state entries, got {} and {}",
                    obs.pixels.len(),
                    obs.state.len()
                ));
            }
            let px = tape.leaf(obs.pixels.clone());
            let mut parts = vec![tape.spatial_softmax(px, channels, height, width, temperature)?];
            if pool > 0 {
                parts.push(tape.avg_pool(px, channels, height, width, pool)?);
            }
            let state = if extra > 0 {
                let s = tape.leaf(obs.state.clone());
                parts.push(s);
                Some(s)
            } else {
                None
            };
            (tape.concat(&parts), InputVars { pixels: Some(px), state })
        }
    };
    let mut h = features;
    let shapes = spec.layer_shapes();
    for (i, (rows, cols)) in shapes.iter().enumerate() {
        h = tape.linear(params[2 * i], params[2 * i + 1], h, *rows, *cols)?;
        if let Some(layer) = spec.hidden.get(i) {
            h = match layer.activation {
                Activation::Tanh => tape.tanh(h),
                Activation::Relu => tape.relu(h),
                Activation::Identity => h,
            };
        }
    }
    Ok((h, inputs))
}

/// A recorded network evaluation ready for one backward pass.
#[derive(Debug, Clone)]
pub struct NetTape {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub inputs: InputVars,
    pub output: Var,
}

/// Gradients of a network evaluation.
#[derive(Debug, Clone)]
pub struct NetGradients {
    pub params: Vec<Vec<f64>>,
    pub pixels: Vec<f64>,
    pub state: Vec<f64>,
}

impl NetTape {
    pub fn backward(&mut self, output_grad: &[f64]) -> Result<NetGradients> {
        let grads = self.tape.backward(self.output, output_grad)?;
        Ok(NetGradients {
            params: collect_grads(&grads, &self.params),
            pixels: self.inputs.pixels.map(|v| grads.wrt(v)).unwrap_or_default(),
            state: self.inputs.state.map(|v| grads.wrt(v)).unwrap_or_default(),
        })
    }
}

/// Evaluates the network on a fresh tape.
pub fn forward(spec: &NetSpec, params: &ParamStore, obs: &Observation) -> Result<(Vec<f64>, NetTape)> {
    let mut tape = Tape::new();
    let vars = params.load(&mut tape);
    let (output, inputs) = forward_on(&mut tape, spec, &vars, obs)?;
    let value = tape.value(output).to_vec();
    Ok((value, NetTape { tape, params: vars, inputs, output }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetSpec {
        NetSpec::new(InputSpec::Flat { len: 1 }, vec![], HeadSpec::Linear { width: 1 }).unwrap()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetSpec::new(
            InputSpec::Flat { len: 3 },
            vec![LayerSpec::new(4, Activation::Identity)],
            HeadSpec::Linear { width: 2 },
        )
        .unwrap();
        let mut params = ParamStore::init(&spec, &mut crate::rng_from_seed(0));
        for i in 0..params.len() {
            params.data_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
        let (out, _) = forward(&spec, &params, &Observation::state(vec![1.0, -2.0, 3.0])).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_unit() {
        let spec = tiny_spec();
        let params = ParamStore::from_tensors(vec![
            Tensor { name: "layer0.weight".into(), shape: vec![1, 1], data: vec![2.0] },
            Tensor { name: "layer0.bias".into(), shape: vec![1], data: vec![1.0] },
        ])
        .unwrap();
        let (out, mut t) = forward(&spec, &params, &Observation::state(vec![3.0])).unwrap();
        assert_eq!(out, vec![7.0]);
        let g = t.backward(&[1.0]).unwrap();
        assert_eq!(g.params, vec![vec![3.0], vec![1.0]]);
        assert_eq!(g.state, vec![2.0]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = NetSpec::new(
            InputSpec::Image { channels: 1, height: 8, width: 8, extra: 2, pool: 2, temperature: 1.0 },
            vec![LayerSpec::new(16, Activation::Relu), LayerSpec::new(16, Activation::Tanh)],
            HeadSpec::Dmp { dims: 2, basis: 5 },
        )
        .unwrap();
        let obs = Observation::image((0..64).map(|i| (i as f64 * 0.37).sin()).collect(), vec![0.1, 0.2]);
        let run = || {
            let params = ParamStore::init(&spec, &mut crate::rng_from_seed(42));
            forward(&spec, &params, &obs).unwrap().0
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 12);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn input_shape_is_checked() {
        let spec = tiny_spec();
        let params = ParamStore::init(&spec, &mut crate::rng_from_seed(0));
        assert!(forward(&spec, &params, &Observation::state(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn dmp_head_width() {
        assert_eq!(HeadSpec::Dmp { dims: 2, basis: 30 }.width(), 62);
        let spec = NetSpec::new(InputSpec::Flat { len: 2 }, vec![], HeadSpec::Dmp { dims: 2, basis: 6 }).unwrap();
        assert_eq!(spec.output_len(), 14);
    }

    #[test]
    fn zero_width_layers_rejected() {
        assert!(NetSpec::new(InputSpec::Flat { len: 2 }, vec![LayerSpec::new(0, Activation::Tanh)], HeadSpec::Linear { width: 1 }).is_err());
    }

    #[test]
    fn image_net_matches_finite_differences() {
        let spec = NetSpec::new(
            InputSpec::Image { channels: 1, height: 6, width: 6, extra: 2, pool: 2, temperature: 0.5 },
            vec![LayerSpec::new(5, Activation::Tanh)],
            HeadSpec::Linear { width: 3 },
        )
        .unwrap();
        let params = ParamStore::init(&spec, &mut crate::rng_from_seed(4));
        let obs = Observation::image((0..36).map(|i| ((i * 7) % 11) as f64 / 11.0).collect(), vec![0.3, -0.4]);
        let probe = [0.3, -0.7, 0.5];
        let (_, mut t) = forward(&spec, &params, &obs).unwrap();
        let g = t.backward(&probe).unwrap();
        let objective = |p: &ParamStore, o: &Observation| {
            forward(&spec, p, o).unwrap().0.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        let eps = 1e-5;
        for ti in 0..params.len() {
            for i in 0..params.tensor(ti).data.len() {
                let (mut up, mut dn) = (params.clone(), params.clone());
                up.data_mut(ti)[i] += eps;
                dn.data_mut(ti)[i] -= eps;
                let fd = (objective(&up, &obs) - objective(&dn, &obs)) / (2.0 * eps);
                assert!((fd - g.params[ti][i]).abs() < 1e-7 * fd.abs().max(1.0));
            }
        }
        for i in 0..36 {
            let (mut up, mut dn) = (obs.clone(), obs.clone());
            up.pixels[i] += eps;
            dn.pixels[i] -= eps;
            let fd = (objective(&params, &up) - objective(&params, &dn)) / (2.0 * eps);
            assert!((fd - g.pixels[i]).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }
}
