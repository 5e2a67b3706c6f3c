//! Fully connected tanh network Φ(x; θ) with exact input derivatives up to
//! second order, parameter gradients, truncated-Xavier initialization, and
//! the ADAM optimizer.

pub(crate) mod engine;

use engine::{Layout, Workspace, CH};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Input (t, ξ), five hidden layers of 20 tanh neurons, scalar linear output.
pub const DEFAULT_LAYER_SIZES: [usize; 7] = [2, 20, 20, 20, 20, 20, 1];

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("gradient has {got} entries, expected {expect}")]
    GradientLength { got: usize, expect: usize },
    #[error("non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },
}

/// Flat parameter vector θ plus the layer shapes that give it meaning.
/// Layer l stores its weight matrix row-major, then its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    pub theta: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let layout = Layout::new(layer_sizes);
        NetworkParams {
            layer_sizes: layer_sizes.to_vec(),
            theta: vec![0.0; layout.n_params],
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.layer_sizes)
    }
}

/// Number of parameters for a layer-size vector
/// (Σ fan_in·fan_out + fan_out; 1761 for the default architecture).
pub fn param_count(layer_sizes: &[usize]) -> usize {
    Layout::new(layer_sizes).n_params
}

/// Truncated Xavier initialization: weights ~ N(0, 2/(fan_in + fan_out))
/// redrawn until within ±2 standard deviations, biases zero. Fully
/// determined by the seed.
pub fn init(seed: u64) -> NetworkParams {
    init_with_sizes(seed, &DEFAULT_LAYER_SIZES)
}

pub fn init_with_sizes(seed: u64, layer_sizes: &[usize]) -> NetworkParams {
    let layout = Layout::new(layer_sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; layout.n_params];
    for l in 1..layer_sizes.len() {
        let fan_in = layer_sizes[l - 1];
        let fan_out = layer_sizes[l];
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        let w = &mut theta[layout.weight_off[l - 1]..layout.weight_off[l - 1] + fan_out * fan_in];
        for slot in w.iter_mut() {
            *slot = loop {
                let x: f64 = dist.sample(&mut rng);
                if x.abs() <= 2.0 * std {
                    break x;
                }
            };
        }
        // biases stay zero
    }
    NetworkParams {
        layer_sizes: layer_sizes.to_vec(),
        theta,
    }
}

/// θ-gradients of each of the five output scalars.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub value: Vec<f64>,
    pub d_t: Vec<f64>,
    pub d_xi: Vec<f64>,
    pub d_tt: Vec<f64>,
    pub d_xixi: Vec<f64>,
}

impl ParamGrads {
    pub fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.value,
            1 => &self.d_t,
            2 => &self.d_xi,
            3 => &self.d_tt,
            _ => &self.d_xixi,
        }
    }
}

/// Network output with its exact input derivatives (no finite differencing)
/// and, if requested, the parameter gradients of all five scalars.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub value: f64,
    pub d_t: f64,
    pub d_xi: f64,
    pub d_tt: f64,
    pub d_xixi: f64,
    pub param_grads: Option<ParamGrads>,
}

/// Evaluate Φ and its derivatives at `x = (t, ξ)`.
pub fn evaluate(params: &NetworkParams, x: (f64, f64), need_param_grads: bool) -> EvalResult {
    let layout = params.layout();
    let mut ws = Workspace::new(&layout);
    eval_with(params, &layout, &mut ws, x, need_param_grads)
}

fn eval_with(
    params: &NetworkParams,
    layout: &Layout,
    ws: &mut Workspace,
    x: (f64, f64),
    need_param_grads: bool,
) -> EvalResult {
    let jet = engine::forward(&params.theta, layout, ws, x.0, x.1, CH);
    let param_grads = need_param_grads.then(|| {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(CH);
        for c in 0..CH {
            let mut g = vec![0.0; layout.n_params];
            let mut seed = [0.0; CH];
            seed[c] = 1.0;
            engine::backward(&params.theta, layout, ws, &seed, CH, &mut g);
            grads.push(g);
        }
        let d_xixi = grads.pop().unwrap();
        let d_tt = grads.pop().unwrap();
        let d_xi = grads.pop().unwrap();
        let d_t = grads.pop().unwrap();
        let value = grads.pop().unwrap();
        ParamGrads {
            value,
            d_t,
            d_xi,
            d_tt,
            d_xixi,
        }
    });
    EvalResult {
        value: jet.value,
        d_t: jet.d_t,
        d_xi: jet.d_xi,
        d_tt: jet.d_tt,
        d_xixi: jet.d_xixi,
        param_grads,
    }
}

/// Evaluate a batch of points; equal to mapping [`evaluate`].
pub fn evaluate_batch(
    params: &NetworkParams,
    points: &[(f64, f64)],
    need_param_grads: bool,
) -> Vec<EvalResult> {
    let layout = params.layout();
    let mut ws = Workspace::new(&layout);
    points
        .iter()
        .map(|&x| eval_with(params, &layout, &mut ws, x, need_param_grads))
        .collect()
}

/// Accumulated θ-gradient of `Σ_points Σ_c seed_c · out_c`, summed in the
/// given point order. The trainer's loss terms run through this path.
pub fn batch_param_grad(params: &NetworkParams, seeded: &[((f64, f64), [f64; 5])]) -> Vec<f64> {
    let layout = params.layout();
    let mut ws = Workspace::new(&layout);
    let mut grad = vec![0.0; layout.n_params];
    for &((t, xi), seed) in seeded {
        engine::forward(&params.theta, &layout, &mut ws, t, xi, CH);
        engine::backward(&params.theta, &layout, &mut ws, &seed, CH, &mut grad);
    }
    grad
}

/// ADAM optimizer state with the paper's defaults: β₁ = 0.9, β₂ = 0.999,
/// ε = 1e-8, α = 1e-3.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate: 1e-3,
        }
    }

    pub fn with_learning_rate(n_params: usize, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            ..Self::new(n_params)
        }
    }
}

/// One ADAM update with bias correction.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grad: &[f64],
) -> Result<(), NetworkError> {
    let n = params.theta.len();
    if grad.len() != n {
        return Err(NetworkError::GradientLength {
            got: grad.len(),
            expect: n,
        });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(NetworkError::NonFiniteGradient { index });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.theta[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
