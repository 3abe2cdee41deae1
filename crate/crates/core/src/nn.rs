//! Dense feed-forward network with hand-derived reverse-mode gradients.
//!
//! Parameters live in one flat buffer. For each layer `l` with shape
//! `(out, in)` the buffer holds the row-major weight matrix followed by the
//! bias vector, so an optimizer can treat the network as a single vector.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Layer sizes of the reference network.
pub const REFERENCE_SIZES: [usize; 4] = [8, 128, 128, 1];
pub const REFERENCE_PARAM_COUNT: usize = 17_793;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
            Activation::Silu => z / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// dσ/dz given both the pre-activation and the activation.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Silu => {
                let s = T::one() / (T::one() + (-z).exp());
                s * (T::one() + z * (T::one() - s))
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Total weights plus biases for a layer-size list.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<T>,
}

/// Gradient buffer congruent with an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(m: &Mlp<T>) -> Self {
        Self { values: vec![T::zero(); m.param_count()] }
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Per-layer pre-activations and activations from the latest forward pass.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(m: &Mlp<T>) -> Self {
        let widest = m.sizes.iter().copied().max().unwrap_or(1);
        Self {
            pre: m.sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            post: m.sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            delta: vec![T::zero(); widest],
            delta_prev: vec![T::zero(); widest],
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Xavier-uniform weights and zero biases, fully determined by `seed`.
    pub fn init(seed: u64, sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            params.extend((0..fan_in * fan_out).map(|_| T::of(dist.sample(&mut rng))));
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        let m = Self { sizes: sizes.to_vec(), activation, params };
        if sizes == REFERENCE_SIZES {
            assert_eq!(m.param_count(), REFERENCE_PARAM_COUNT);
        }
        Ok(m)
    }

    /// Reference 8→128→128→1 tanh network.
    pub fn reference(seed: u64) -> Self {
        Self::init(seed, &REFERENCE_SIZES, Activation::Tanh).expect("reference sizes are valid")
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<T>) -> Result<Self> {
        validate_sizes(sizes)?;
        if params.len() != param_count(sizes) {
            return Err(Error::Shape(format!(
                "{} parameters supplied for sizes {sizes:?} (expected {})",
                params.len(),
                param_count(sizes)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("non-finite parameter"));
        }
        Ok(Self { sizes: sizes.to_vec(), activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            activation: self.activation,
            params: self.params.iter().map(|p| U::of(p.widen())).collect(),
        }
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Runs the network, keeping intermediates in `ws` for a later backward pass.
    pub fn forward_cached(&self, x: &[T], ws: &mut Workspace<T>) -> T {
        assert_eq!(x.len(), self.input_dim(), "input width");
        ws.post[0].copy_from_slice(x);
        let n_layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (head, tail) = ws.post.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let pre = &mut ws.pre[l + 1];
            let hidden = l + 1 < n_layers;
            for (o, row) in weights.chunks_exact(n_in).enumerate() {
                let mut acc = biases[o];
                for (w, a) in row.iter().zip(input.iter()) {
                    acc += *w * *a;
                }
                pre[o] = acc;
                out[o] = if hidden { self.activation.apply(acc) } else { acc };
            }
        }
        ws.post[n_layers][0]
    }

    /// Scalar network output for one input row.
    pub fn forward(&self, x: &[T]) -> T {
        let mut ws = Workspace::new(self);
        self.forward_cached(x, &mut ws)
    }

    /// Row-wise forward over a batch.
    pub fn batch_forward(&self, rows: &[Vec<T>]) -> Vec<T> {
        let mut ws = Workspace::new(self);
        rows.iter().map(|r| self.forward_cached(r, &mut ws)).collect()
    }

    /// Adds `upstream · ∂ŷ/∂θ` for the pass cached in `ws` into `grads`.
    pub fn backward_accumulate(&self, ws: &mut Workspace<T>, upstream: T, grads: &mut Gradients<T>) {
        let n_layers = self.sizes.len() - 1;
        let Workspace { pre, post, delta, delta_prev } = ws;
        delta[0] = upstream;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let input = &post[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.values[b_off + o] += d;
                let g_row = &mut grads.values[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, a) in g_row.iter_mut().zip(input.iter()) {
                    *g += d * *a;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[w_off..b_off];
            for j in 0..n_in {
                delta_prev[j] = T::zero();
            }
            for o in 0..n_out {
                let d = delta[o];
                let row = &weights[o * n_in..(o + 1) * n_in];
                for (dp, w) in delta_prev[..n_in].iter_mut().zip(row.iter()) {
                    *dp += d * *w;
                }
            }
            for j in 0..n_in {
                delta_prev[j] *= self.activation.derivative(pre[l][j], post[l][j]);
            }
            std::mem::swap(delta, delta_prev);
        }
    }

    /// Exact gradient of `upstream · ŷ(x)` with respect to every parameter.
    pub fn backward(&self, x: &[T], upstream: T) -> Gradients<T> {
        let mut ws = Workspace::new(self);
        self.forward_cached(x, &mut ws);
        let mut g = Gradients::zeros_like(self);
        self.backward_accumulate(&mut ws, upstream, &mut g);
        g
    }

    /// Zeroes the first-layer weights reading input feature `j`.
    pub fn zero_input_column(&mut self, j: usize) {
        let n_in = self.sizes[0];
        for o in 0..self.sizes[1] {
            self.params[o * n_in + j] = T::zero();
        }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Shape(format!("layer sizes {sizes:?} need ≥ 2 entries, all ≥ 1")));
    }
    if sizes.last() != Some(&1) {
        return Err(Error::Shape(format!("scalar regression needs an output width of 1, got {sizes:?}")));
    }
    Ok(())
}
