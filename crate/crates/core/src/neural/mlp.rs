//! Fully connected network with analytic backpropagation.
//!
//! Parameters live in one flat buffer, layer by layer: `W_l` (`out×in`,
//! column-major) followed by `b_l`. Batches are matrices whose columns are
//! samples.

use rand::Rng as _;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Tanh approximation of the Gaussian error linear unit.
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            _ => Err(Error::invalid(format!("unknown activation {s:?}"))),
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    /// ReLU uses the subgradient 0 at 0.
    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let th = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
            }
        }
    }
}

/// Output nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputMap {
    Identity,
    /// `scale · tanh(z)`, for bounded actions.
    Tanh(f64),
}

impl OutputMap {
    fn apply(&self, z: f64) -> f64 {
        match self {
            OutputMap::Identity => z,
            OutputMap::Tanh(s) => s * z.tanh(),
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            OutputMap::Identity => 1.0,
            OutputMap::Tanh(s) => {
                let t = z.tanh();
                s * (1.0 - t * t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    output: OutputMap,
    params: Vec<f64>,
}

/// Pre-activations and layer outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    pub inputs: Vec<Matrix>,
    pub pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.inputs.last().expect("at least the input is cached")
    }
}

impl Mlp {
    /// Zero-initialized network; see [`Mlp::init_uniform`].
    pub fn zeros(widths: &[usize], activation: Activation, output: OutputMap) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid("an MLP needs at least input and output widths, all > 0"));
        }
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            output,
            params: vec![0.0; count],
        })
    }

    /// Weights and biases uniform in `±1/√fan_in`, drawn layer by layer.
    pub fn new(widths: &[usize], activation: Activation, output: OutputMap, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(widths, activation, output)?;
        net.init_uniform(rng);
        Ok(net)
    }

    pub fn init_uniform(&mut self, rng: &mut Rng) {
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut self.params[off..off + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_map(&self) -> OutputMap {
        self.output
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("network parameters", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        let w_len = self.widths[layer] * self.widths[layer + 1];
        (off, off + w_len)
    }

    pub fn weight(&self, layer: usize) -> Matrix {
        let (w, _) = self.offsets(layer);
        let (rows, cols) = (self.widths[layer + 1], self.widths[layer]);
        Matrix::from_column_slice(rows, cols, &self.params[w..w + rows * cols])
    }

    pub fn bias(&self, layer: usize) -> Vector {
        let (_, b) = self.offsets(layer);
        Vector::from_column_slice(&self.params[b..b + self.widths[layer + 1]])
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.inputs.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        check_dim("network input", self.input_dim(), x.nrows())?;
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let mut z = self.weight(l) * inputs.last().unwrap();
            let b = self.bias(l);
            for mut col in z.column_iter_mut() {
                col += &b;
            }
            let last = l + 1 == self.n_layers();
            let h = if last {
                z.map(|v| self.output.apply(v))
            } else {
                z.map(|v| self.activation.apply(v))
            };
            pre.push(z);
            inputs.push(h);
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Given `∂L/∂y` (same shape as the output), returns the flat gradient
    /// summed over the batch and `∂L/∂x`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::invalid("upstream gradient shape differs from the network output"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut g = upstream.clone();
        for l in (0..self.n_layers()).rev() {
            let z = &cache.pre[l];
            let last = l + 1 == self.n_layers();
            let gz = if last {
                g.zip_map(z, |gv, zv| gv * self.output.derivative(zv))
            } else {
                g.zip_map(z, |gv, zv| gv * self.activation.derivative(zv))
            };
            let dw = &gz * cache.inputs[l].transpose();
            let db = gz.column_sum();
            let (w_off, b_off) = self.offsets(l);
            grad[w_off..w_off + dw.len()].copy_from_slice(dw.as_slice());
            grad[b_off..b_off + db.len()].copy_from_slice(db.as_slice());
            g = self.weight(l).transpose() * gz;
        }
        Ok((grad, g))
    }

    /// `self ← self + β (online − self)`.
    pub fn polyak_from(&mut self, online: &Mlp, beta: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::invalid(format!("averaging weight must lie in [0, 1], got {beta}")));
        }
        if self.widths != online.widths {
            return Err(Error::invalid("target and online networks have different shapes"));
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t += beta * (o - *t);
        }
        Ok(())
    }

    /// One line: widths, activation, output map.
    pub fn manifest(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        let out = match self.output {
            OutputMap::Identity => "identity".to_string(),
            OutputMap::Tanh(s) => format!("tanh:{s}"),
        };
        format!("{} {} {}", widths.join("-"), self.activation.name(), out)
    }

    pub fn from_manifest(line: &str) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("bad layer manifest {line:?}"));
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let widths: Vec<usize> = parts[0]
            .split('-')
            .map(|w| w.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let activation = Activation::parse(parts[1]).map_err(|_| bad())?;
        let output = match parts[2] {
            "identity" => OutputMap::Identity,
            s => match s.strip_prefix("tanh:") {
                Some(v) => OutputMap::Tanh(v.parse().map_err(|_| bad())?),
                None => return Err(bad()),
            },
        };
        Mlp::zeros(&widths, activation, output)
    }
}
