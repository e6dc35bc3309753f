//! Small dense networks with hand-written reverse-mode gradients.
//!
//! An [`Mlp`] is a stack of affine layers with ReLU between them and a linear
//! output. Batches are row-major `(batch, features)` matrices. Training code
//! calls [`Mlp::trace`] to run a forward pass that keeps the per-layer inputs,
//! then [`Mlp::backward`] with the upstream gradient to get parameter
//! gradients and the gradient with respect to the network input (needed to
//! push a critic's action-gradient into an actor).
//!
//! Weights are stored `(in, out)` so a layer is `y = x · W + b`.

use std::fmt::{Debug, Display};
use std::io::{Read, Write};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::Rng;

use crate::error::{Error, Result};

/// Floating-point element type for networks and losses.
///
/// Agents train in `f32`; gradient checks instantiate the same code in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Converts an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in the target float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// One affine layer. Also used as the gradient container for that layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Multilayer perceptron: ReLU hidden layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

/// Cached forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }

    pub fn input(&self) -> &Array2<T> {
        &self.inputs[0]
    }
}

/// Parameter gradients shaped like the network they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub grads: Gradients<T>,
    /// Gradient with respect to the network input, `(batch, input_dim)`.
    pub input_grad: Array2<T>,
}

impl<T: Real> Mlp<T> {
    /// Random network with uniform fan-in initialisation: every weight and
    /// bias of a layer with `n` inputs is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = T::lit(rng.gen_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("a network needs at least input and output dims"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("layer dims must be positive"));
        }
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} emits {} values but layer {} takes {}",
                    pair[0].outputs(),
                    l + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::ShapeMismatch(format!("layer {l} bias length")));
            }
        }
        Ok(Self { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Largest absolute coordinate difference to another net of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(&other.dims())?;
        let mut worst = T::zero();
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weight.iter().chain(a.bias.iter()).zip(b.weight.iter().chain(b.bias.iter())) {
                worst = worst.max((*x - *y).abs());
            }
        }
        Ok(worst)
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                bias: l.bias.mapv(|v| U::lit(v.as_f64())),
            })
            .collect();
        Mlp { layers }
    }

    /// All parameter tensors in checkpoint order (per layer: weight, bias).
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn check_same_shape(&self, dims: &[usize]) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims(), dims)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let batch = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut h = affine(&self.layers[0], x);
        for layer in &self.layers[1..] {
            relu_in_place(&mut h);
            h = affine(layer, h.view());
        }
        Ok(h)
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn trace(&self, x: ArrayView2<T>) -> Result<Trace<T>> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut h = affine(&self.layers[0], x);
        for layer in &self.layers[1..] {
            relu_in_place(&mut h);
            let next = affine(layer, h.view());
            inputs.push(h);
            h = next;
        }
        Ok(Trace { inputs, output: h })
    }

    pub fn backward(&self, trace: &Trace<T>, d_out: ArrayView2<T>) -> Result<Backward<T>> {
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch("trace was recorded on a different network".into()));
        }
        if d_out.dim() != trace.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?} vs output {:?}",
                d_out.dim(),
                trace.output.dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[l];
            grads.push(Dense {
                weight: x.t().dot(&delta).as_standard_layout().into_owned(),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut dx = delta.dot(&layer.weight.t());
            if l > 0 {
                Zip::from(&mut dx).and(x).for_each(|g, &h| {
                    if h <= T::zero() {
                        *g = T::zero();
                    }
                });
            }
            delta = dx;
        }
        grads.reverse();
        Ok(Backward {
            grads: Gradients { layers: grads },
            input_grad: delta,
        })
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }
}

fn affine<T: Real>(layer: &Dense<T>, x: ArrayView2<T>) -> Array2<T> {
    let mut y = x.dot(&layer.weight);
    y += &layer.bias;
    y
}

fn relu_in_place<T: Real>(h: &mut Array2<T>) {
    h.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs()];
        dims.extend(self.layers.iter().map(Dense::outputs));
        dims
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    /// Index of the first layer holding a NaN or infinite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| !l.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Flattened in checkpoint order.
    pub fn to_vec(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        net.check_same_shape(&grads.dims())?;
        if let Some(layer) = grads.first_non_finite_layer() {
            return Err(Error::NonFiniteGradient { layer });
        }
        self.apply(net.tensors_mut(), grads.tensors());
        Ok(())
    }

    /// Update a single scalar parameter (the log-temperature uses this).
    pub fn step_scalar(&mut self, param: &mut T, grad: T) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient { layer: 0 });
        }
        let g = [grad];
        self.apply(vec![std::slice::from_mut(param)], vec![&g[..]]);
        Ok(())
    }

    fn apply(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let one = T::one();
        let correction1 = one - self.beta1.powi(t);
        let correction2 = one - self.beta2.powi(t);
        for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (one - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (one - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Polyak averaging toward `source`: `target ← η·source + (1 − η)·target`.
///
/// Computed as `target + η·(source − target)`, which leaves a target that
/// already equals its source bit-for-bit unchanged.
pub fn soft_update<T: Real>(target: &mut Mlp<T>, source: &Mlp<T>, eta: T) -> Result<()> {
    target.check_same_shape(&source.dims())?;
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(Error::invalid(format!("soft-update rate {eta} outside (0, 1]")));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weight).and(&s.weight).for_each(|t, &s| *t += eta * (s - *t));
        Zip::from(&mut t.bias).and(&s.bias).for_each(|t, &s| *t += eta * (s - *t));
    }
    Ok(())
}

/// Writes `u32 count`, `count` layer dims as `u32`, then all parameters as
/// `f32`, everything little-endian. Parameters follow [`Mlp::tensors`] order.
pub fn write_checkpoint<T: Real, W: Write>(net: &Mlp<T>, mut out: W) -> Result<()> {
    let dims = net.dims();
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in &dims {
        out.write_all(&(*d as u32).to_le_bytes())?;
    }
    for tensor in net.tensors() {
        for v in tensor {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Real, R: Read>(mut input: R) -> Result<Mlp<T>> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word) as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Checkpoint(format!("implausible layer count {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut word)?;
        dims.push(u32::from_le_bytes(word) as usize);
    }
    let mut net = Mlp::<T>::zeros(&dims)?;
    for tensor in net.tensors_mut() {
        for v in tensor.iter_mut() {
            input.read_exact(&mut word)?;
            *v = T::lit(f32::from_le_bytes(word) as f64);
        }
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(net)
}

/// `[a | b]` column concatenation of two batches with equal row counts.
pub fn concat_columns<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    assert_eq!(a.nrows(), b.nrows(), "row counts agree");
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(ndarray::s![.., ..a.ncols()]).assign(&a);
    out.slice_mut(ndarray::s![.., a.ncols()..]).assign(&b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(dims: &[usize], seed: u64) -> Mlp<f64> {
        Mlp::new(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 7.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_copies_input() {
        let layer = Dense {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = random_net(&[4, 16, 16, 3], 3);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = random_net(&[4, 8, 1], 0);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let a = random_net(&[2, 4, 1], 0);
        let b = random_net(&[2, 4, 4, 1], 0);
        let trace = a.trace(array![[1.0, 2.0]].view()).unwrap();
        assert!(b.backward(&trace, array![[1.0]].view()).is_err());
        assert!(a.backward(&trace, array![[1.0, 1.0]].view()).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let net = random_net(&[3, 8, 2], 1);
        let x = array![[0.3, -0.1, 0.9], [1.0, 0.0, -1.0]];
        let trace = net.trace(x.view()).unwrap();
        let back = net.backward(&trace, Array2::zeros((2, 2)).view()).unwrap();
        assert_eq!(back.grads.max_abs(), 0.0);
        assert!(back.input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let net = random_net(&[3, 8, 2], 2);
        let x = array![[0.3, -0.1, 0.9], [1.0, 0.5, -1.0]];
        let trace = net.trace(x.view()).unwrap();
        let d = array![[0.2, -1.0], [0.7, 0.1]];
        let base = net.backward(&trace, d.view()).unwrap().grads.to_vec();
        let scaled = net.backward(&trace, (&d * 3.0).view()).unwrap().grads.to_vec();
        for (b, s) in base.iter().zip(&scaled) {
            assert!((3.0 * b - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn adam_first_step_matches_formula() {
        let layer = Dense {
            weight: array![[0.0f64]],
            bias: array![0.0],
        };
        let mut net = Mlp::from_layers(vec![layer]).unwrap();
        let grads = Gradients {
            layers: vec![Dense {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        };
        let mut opt = Adam::new(1e-3);
        opt.step(&mut net, &grads).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((net.layers()[0].weight[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(net.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut net = random_net(&[2, 3, 1], 4);
        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        let mut opt = Adam::new(1e-2);
        for _ in 0..100 {
            opt.step(&mut net, &zero).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_with_layer_id() {
        let mut net = random_net(&[2, 3, 3, 1], 4);
        let mut g = Gradients::zeros_like(&net);
        g.layers[2].bias[0] = f64::NAN;
        let mut opt = Adam::new(1e-3);
        assert!(matches!(opt.step(&mut net, &g), Err(Error::NonFiniteGradient { layer: 2 })));
    }

    #[test]
    fn identical_streams_stay_identical() {
        let mut a = random_net(&[3, 6, 2], 9);
        let mut b = a.clone();
        let (mut oa, mut ob) = (Adam::new(1e-3), Adam::new(1e-3));
        let x = array![[0.2, 0.4, -0.6]];
        for _ in 0..20 {
            let ga = a.backward(&a.trace(x.view()).unwrap(), array![[1.0, -1.0]].view()).unwrap();
            let gb = b.backward(&b.trace(x.view()).unwrap(), array![[1.0, -1.0]].view()).unwrap();
            oa.step(&mut a, &ga.grads).unwrap();
            ob.step(&mut b, &gb.grads).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn soft_update_single_step() {
        let mut target = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        let mut source = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        source.layers_mut()[0].weight.fill(1.0);
        source.layers_mut()[0].bias.fill(1.0);
        soft_update(&mut target, &source, 0.005).unwrap();
        assert!(target.layers()[0].weight.iter().all(|&w| w == 0.005));
    }

    #[test]
    fn soft_update_gap_shrinks_geometrically() {
        let mut target = Mlp::<f64>::zeros(&[1, 1]).unwrap();
        let mut source = target.clone();
        source.layers_mut()[0].weight[[0, 0]] = 2.0;
        let eta = 0.05;
        for n in 1..=200 {
            soft_update(&mut target, &source, eta).unwrap();
            let gap = 2.0 - target.layers()[0].weight[[0, 0]];
            let expected = 2.0 * (1.0 - eta).powi(n);
            assert!((gap - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_update_fixed_point() {
        let source = random_net(&[3, 5, 2], 11);
        let mut target = source.clone();
        for eta in [0.005, 0.3, 1.0] {
            soft_update(&mut target, &source, eta).unwrap();
            assert_eq!(target, source);
        }
    }

    #[test]
    fn soft_update_rejects_shape_mismatch() {
        let mut a = Mlp::<f64>::zeros(&[2, 3, 1]).unwrap();
        let b = Mlp::<f64>::zeros(&[2, 4, 1]).unwrap();
        assert!(matches!(soft_update(&mut a, &b, 0.1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn checkpoint_layout() {
        let net = random_net(&[2, 3, 1], 5).cast::<f32>();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 + 3 * 4 + net.num_params() * 4);
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        let first = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
        assert_eq!(first, net.layers()[0].weight[[0, 0]]);
        let back: Mlp<f32> = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, net);
        assert!(read_checkpoint::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
    }
}
