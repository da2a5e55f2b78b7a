use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;

/// Hidden-layer nonlinearity. Output layers are always affine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Float>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output<T: Float>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Shape of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

/// Where one affine layer lives inside a flat parameter vector.
///
/// Weights are stored row-major as `fan_out x fan_in`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSlice {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = NetSpec { input_dim, hidden, output_dim, activation: Activation::Relu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("network dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn layout(&self) -> Vec<LayerSlice> {
        let mut offset = 0;
        self.widths()
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let weight = offset..offset + fan_in * fan_out;
                let bias = weight.end..weight.end + fan_out;
                offset = bias.end;
                LayerSlice { fan_in, fan_out, weight, bias }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Width of the penultimate activations (the input itself for a
    /// network without hidden layers).
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }
}

/// Flat parameter storage paired with its layer layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    layout: Vec<LayerSlice>,
}

impl<T: Float> ParamVector<T> {
    pub fn zeros(spec: &NetSpec) -> Self {
        ParamVector { values: vec![T::zero(); spec.param_count()], layout: spec.layout() }
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for layer in &p.layout {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for i in layer.weight.start..layer.bias.end {
                p.values[i] = T::of(rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn from_values(spec: &NetSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Usage(format!(
                "parameter vector has {} entries, network needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        Ok(ParamVector { values, layout: spec.layout() })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layout(&self) -> &[LayerSlice] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self <- tau * other + (1 - tau) * self`
    pub fn soft_update_from(&mut self, other: &ParamVector<T>, tau: T) {
        debug_assert_eq!(self.layout, other.layout);
        // written as t + tau (s - t) so equal entries stay bit-identical
        for (t, &s) in self.values.iter_mut().zip(&other.values) {
            *t = *t + tau * (s - *t);
        }
    }
}

/// Activations recorded by a batched forward pass, consumed by [`backward_batch`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    batch: usize,
    input: Vec<T>,
    hidden: Vec<Vec<T>>,
    output: Vec<T>,
    feature_dim: usize,
    output_dim: usize,
}

impl<T: Float> Tape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-major `batch x output_dim`.
    pub fn output(&self) -> &[T] {
        &self.output
    }

    pub fn output_row(&self, i: usize) -> &[T] {
        &self.output[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Penultimate activations, row-major `batch x feature_dim`.
    pub fn features(&self) -> &[T] {
        self.hidden.last().unwrap_or(&self.input)
    }

    pub fn feature_row(&self, i: usize) -> &[T] {
        &self.features()[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

fn check_params<T: Float>(spec: &NetSpec, params: &ParamVector<T>) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Usage(format!(
            "parameter vector has {} entries, network needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

/// Batched forward pass over `inputs` (row-major `batch x input_dim`).
pub fn forward_batch<T: Float>(
    spec: &NetSpec,
    params: &ParamVector<T>,
    inputs: &[T],
    batch: usize,
) -> Result<Tape<T>> {
    check_params(spec, params)?;
    if inputs.len() != batch * spec.input_dim {
        return Err(Error::Usage(format!(
            "input has {} values, expected {} x {}",
            inputs.len(),
            batch,
            spec.input_dim
        )));
    }
    let w = params.values();
    let layers = params.layout();
    let mut hidden: Vec<Vec<T>> = Vec::with_capacity(layers.len() - 1);
    let mut output = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let x: &[T] = if li == 0 { inputs } else { &hidden[li - 1] };
        let bias = &w[layer.bias.clone()];
        let mut y = Vec::with_capacity(batch * layer.fan_out);
        for _ in 0..batch {
            y.extend_from_slice(bias);
        }
        T::gemm(
            batch,
            layer.fan_in,
            layer.fan_out,
            T::one(),
            x,
            (layer.fan_in, 1),
            &w[layer.weight.clone()],
            (1, layer.fan_in),
            T::one(),
            &mut y,
            (layer.fan_out, 1),
        );
        if li + 1 < layers.len() {
            for v in y.iter_mut() {
                *v = spec.activation.apply(*v);
            }
            hidden.push(y);
        } else {
            output = y;
        }
    }
    Ok(Tape {
        batch,
        input: inputs.to_vec(),
        hidden,
        output,
        feature_dim: spec.feature_dim(),
        output_dim: spec.output_dim,
    })
}

/// Gradients of `sum_ij upstream[i, j] * output[i, j]` with respect to the
/// parameters and to the inputs of the recorded batch.
pub fn backward_batch<T: Float>(
    spec: &NetSpec,
    params: &ParamVector<T>,
    tape: &Tape<T>,
    upstream: &[T],
) -> Result<(ParamVector<T>, Vec<T>)> {
    check_params(spec, params)?;
    let batch = tape.batch;
    if upstream.len() != batch * spec.output_dim {
        return Err(Error::Usage(format!(
            "upstream gradient has {} values, expected {} x {}",
            upstream.len(),
            batch,
            spec.output_dim
        )));
    }
    let w = params.values();
    let layers = params.layout();
    let mut grad = ParamVector::zeros(spec);
    let mut delta = upstream.to_vec();
    for (li, layer) in layers.iter().enumerate().rev() {
        if li + 1 < layers.len() {
            let y = &tape.hidden[li];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d = *d * spec.activation.slope_from_output(yv);
            }
        }
        let x: &[T] = if li == 0 { &tape.input } else { &tape.hidden[li - 1] };
        let g = grad.values_mut();
        // dW = delta^T x
        T::gemm(
            layer.fan_out,
            batch,
            layer.fan_in,
            T::one(),
            &delta,
            (1, layer.fan_out),
            x,
            (layer.fan_in, 1),
            T::zero(),
            &mut g[layer.weight.clone()],
            (layer.fan_in, 1),
        );
        let gb = &mut g[layer.bias.clone()];
        for row in delta.chunks_exact(layer.fan_out) {
            for (b, &d) in gb.iter_mut().zip(row) {
                *b = *b + d;
            }
        }
        // dX = delta W
        let mut dx = vec![T::zero(); batch * layer.fan_in];
        T::gemm(
            batch,
            layer.fan_out,
            layer.fan_in,
            T::one(),
            &delta,
            (layer.fan_out, 1),
            &w[layer.weight.clone()],
            (layer.fan_in, 1),
            T::zero(),
            &mut dx,
            (layer.fan_in, 1),
        );
        delta = dx;
    }
    Ok((grad, delta))
}

pub fn forward<T: Float>(spec: &NetSpec, params: &ParamVector<T>, input: &[T]) -> Result<Vec<T>> {
    if input.len() != spec.input_dim {
        return Err(Error::Usage(format!(
            "input has {} values, network expects {}",
            input.len(),
            spec.input_dim
        )));
    }
    Ok(forward_batch(spec, params, input, 1)?.output)
}

/// Single-sample gradients of `<upstream, forward(input)>`.
pub fn backward<T: Float>(
    spec: &NetSpec,
    params: &ParamVector<T>,
    input: &[T],
    upstream: &[T],
) -> Result<(ParamVector<T>, Vec<T>)> {
    if input.len() != spec.input_dim {
        return Err(Error::Usage(format!(
            "input has {} values, network expects {}",
            input.len(),
            spec.input_dim
        )));
    }
    let tape = forward_batch(spec, params, input, 1)?;
    backward_batch(spec, params, &tape, upstream)
}

/// A network shape together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: NetSpec,
    pub params: ParamVector<T>,
}

impl<T: Float> Network<T> {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Self {
        let params = ParamVector::init(&spec, rng);
        Network { spec, params }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        forward(&self.spec, &self.params, input)
    }

    pub fn forward_batch(&self, inputs: &[T], batch: usize) -> Result<Tape<T>> {
        forward_batch(&self.spec, &self.params, inputs, batch)
    }

    pub fn backward_batch(&self, tape: &Tape<T>, upstream: &[T]) -> Result<(ParamVector<T>, Vec<T>)> {
        backward_batch(&self.spec, &self.params, tape, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_covers_vector_once() {
        let spec = NetSpec::new(3, vec![4, 5], 2).unwrap();
        let layout = spec.layout();
        let mut covered = vec![0u8; spec.param_count()];
        for l in &layout {
            for i in l.weight.start..l.bias.end {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(spec.param_count(), 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(NetSpec::new(0, vec![4], 1).is_err());
        assert!(NetSpec::new(2, vec![0], 1).is_err());
        assert!(NetSpec::new(2, vec![], 0).is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetSpec::new(3, vec![8, 8], 2).unwrap();
        let p = ParamVector::<f64>::zeros(&spec);
        assert_eq!(forward(&spec, &p, &[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let spec = NetSpec::new(3, vec![], 3).unwrap();
        let mut p = ParamVector::<f64>::zeros(&spec);
        let wr = p.layout()[0].weight.clone();
        for i in 0..3 {
            p.values_mut()[wr.start + i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 7.0];
        assert_eq!(forward(&spec, &p, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = NetSpec::new(4, vec![16, 16], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::<f32>::new(spec, &mut rng);
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let spec = NetSpec::new(4, vec![3], 2).unwrap();
        let p = ParamVector::<f64>::zeros(&spec);
        assert!(matches!(forward(&spec, &p, &[1.0, 2.0]), Err(Error::Usage(_))));
        assert!(matches!(backward(&spec, &p, &[1.0; 4], &[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = NetSpec::new(3, vec![5], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ParamVector::<f64>::init(&spec, &mut rng);
        let (g, gx) = backward(&spec, &p, &[0.2, 0.4, -0.1], &[0.0, 0.0]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let spec = NetSpec::new(3, vec![], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ParamVector::<f64>::init(&spec, &mut rng);
        let x = [1.0, -2.0, 0.5];
        let g = [0.3, -0.7];
        let (grad, gx) = backward(&spec, &p, &x, &g).unwrap();
        let l = &p.layout()[0];
        for o in 0..2 {
            for i in 0..3 {
                assert!((grad.values()[l.weight.start + o * 3 + i] - g[o] * x[i]).abs() < 1e-15);
            }
            assert!((grad.values()[l.bias.start + o] - g[o]).abs() < 1e-15);
        }
        // dx = W^T g
        for i in 0..3 {
            let expect: f64 = (0..2).map(|o| p.values()[l.weight.start + o * 3 + i] * g[o]).sum();
            assert!((gx[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn batched_rows_match_single_calls() {
        let spec = NetSpec::new(2, vec![6, 6], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::<f64>::new(spec, &mut rng);
        let xs = [0.1, 0.9, -0.4, 0.3, 2.0, -1.0];
        let tape = net.forward_batch(&xs, 3).unwrap();
        for i in 0..3 {
            let single = net.forward(&xs[2 * i..2 * i + 2]).unwrap();
            for (a, b) in tape.output_row(i).iter().zip(&single) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert_eq!(tape.feature_row(1).len(), 6);
    }

    #[test]
    fn soft_update_converges_to_source() {
        let spec = NetSpec::new(2, vec![3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = ParamVector::<f64>::init(&spec, &mut rng);
        let mut dst = src.clone();
        dst.soft_update_from(&src, 0.005);
        assert_eq!(dst, src);
        let mut other = ParamVector::<f64>::zeros(&spec);
        other.soft_update_from(&src, 1.0);
        assert_eq!(other, src);
    }
}
