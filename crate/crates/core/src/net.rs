//! Tiny ReLU multilayer perceptrons with analytic parameter gradients, Adam
//! ascent, Polyak target tracking and the clipped saving policy built on top.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::Prices;
use crate::error::{Error, Result};

/// Fully connected network `2 -> hidden... -> 1`, ReLU on hidden layers and an
/// affine output.
///
/// Parameters live in one flat vector. Layer `l` stores its weight matrix
/// row-major (`[out][in]`) followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn count_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with the given hidden layer widths.
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        let sizes = layer_sizes(hidden)?;
        let n = count_params(&sizes);
        Ok(Mlp {
            sizes,
            params: vec![0.0; n],
        })
    }

    /// Every weight and bias of a layer drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(hidden)?;
        let mut offset = 0;
        for w in net.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Rebuilds a network from its layer sizes (including input 2 and output 1)
    /// and flat parameter vector.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes[0] != 2 || sizes[sizes.len() - 1] != 1 || sizes.contains(&0) {
            return Err(Error::domain(format!("layer sizes must read 2, ..., 1 with no zero widths, got {sizes:?}")));
        }
        if params.len() != count_params(&sizes) {
            return Err(Error::domain(format!(
                "expected {} parameters for sizes {sizes:?}, got {}",
                count_params(&sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(Mlp { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Offset of layer `l`'s weights and of its biases in the flat vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (start, start + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.sizes)
    }

    /// Raw network output `phi(a, z)`.
    pub fn forward(&self, a: f64, z: f64) -> Result<f64> {
        let out = self.forward_with(&mut self.workspace(), a, z);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite(format!("network output at (a = {a}, z = {z})")))
        }
    }

    /// Forward pass reusing `ws`; keeps activations for a following backward pass.
    pub fn forward_with(&self, ws: &mut Workspace, a: f64, z: f64) -> f64 {
        let n_layers = self.sizes.len() - 1;
        ws.acts[0] = a;
        ws.acts[1] = z;
        let mut p = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (src, dst) = (ws.offsets[l], ws.offsets[l + 1]);
            let biases = p + n_in * n_out;
            for j in 0..n_out {
                let row = &self.params[p + j * n_in..p + (j + 1) * n_in];
                let mut s = self.params[biases + j];
                for (w, x) in row.iter().zip(&ws.acts[src..src + n_in]) {
                    s += w * x;
                }
                // ReLU on hidden layers only
                ws.acts[dst + j] = if l + 1 < n_layers { s.max(0.0) } else { s };
            }
            p = biases + n_out;
        }
        ws.acts[ws.offsets[n_layers]]
    }

    /// `grad += scale * d phi / d theta` at `(a, z)`; returns `phi`.
    ///
    /// The ReLU derivative is taken as 0 at exactly 0.
    pub fn accumulate_grad(&self, ws: &mut Workspace, a: f64, z: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let out = self.forward_with(ws, a, z);
        self.backward(ws, scale, grad);
        out
    }

    /// Backward pass for the inputs of the last `forward_with` on `ws`:
    /// `grad += scale * d phi / d theta`.
    pub fn backward(&self, ws: &mut Workspace, scale: f64, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        ws.deltas[ws.offsets[n_layers]] = scale;
        let mut p_end = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (src, dst) = (ws.offsets[l], ws.offsets[l + 1]);
            let biases = p_end - n_out;
            let p = biases - n_in * n_out;
            for j in 0..n_out {
                let d = ws.deltas[dst + j];
                grad[biases + j] += d;
                if d != 0.0 {
                    for i in 0..n_in {
                        grad[p + j * n_in + i] += d * ws.acts[src + i];
                    }
                }
            }
            if l > 0 {
                for i in 0..n_in {
                    let mut s = 0.0;
                    if ws.acts[src + i] > 0.0 {
                        for j in 0..n_out {
                            s += self.params[p + j * n_in + i] * ws.deltas[dst + j];
                        }
                    }
                    ws.deltas[src + i] = s;
                }
            }
            p_end = p;
        }
    }

    /// Gradient of `phi` with respect to every parameter.
    pub fn grad(&self, a: f64, z: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad(&mut self.workspace(), a, z, 1.0, &mut g);
        g
    }

    /// JSON snapshot: shape header plus flat parameters.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Mlp = serde_json::from_str(text).map_err(|e| Error::domain(format!("bad network snapshot: {e}")))?;
        Mlp::from_parts(raw.sizes, raw.params)
    }
}

fn layer_sizes(hidden: &[usize]) -> Result<Vec<usize>> {
    if hidden.contains(&0) {
        return Err(Error::domain(format!("hidden layer widths must be positive, got {hidden:?}")));
    }
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(2);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Ok(sizes)
}

/// Scratch buffers for forward and backward passes of one network shape.
#[derive(Debug, Clone)]
pub struct Workspace {
    offsets: Vec<usize>,
    acts: Vec<f64>,
    deltas: Vec<f64>,
}

impl Workspace {
    fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in sizes {
            offsets.push(total);
            total += s;
        }
        Workspace {
            offsets,
            acts: vec![0.0; total],
            deltas: vec![0.0; total],
        }
    }
}

/// Adam moments for gradient ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    /// beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(n_params: usize, alpha: f64) -> Self {
        Adam {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Moves `params` along `+grad` (maximization). A non-finite gradient is
    /// rejected and leaves everything untouched.
    pub fn ascent_step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::domain(format!(
                "Adam holds {} moments but got {} parameters and {} gradient entries",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("policy gradient".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += self.alpha * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// `target <- (1 - lambda) target + lambda source`.
pub fn polyak_update(target: &mut Mlp, source: &Mlp, lambda: f64) -> Result<()> {
    if target.sizes != source.sizes {
        return Err(Error::domain(format!(
            "target shape {:?} differs from source shape {:?}",
            target.sizes, source.sizes
        )));
    }
    for (t, s) in target.params.iter_mut().zip(&source.params) {
        *t = (1.0 - lambda) * *t + lambda * s;
    }
    Ok(())
}

/// Which bound, if any, replaced the raw action `a + mu phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Clip {
    None,
    /// Liquidity constraint.
    Floor,
    /// Savings cap.
    Cap,
    /// Minimum consumption.
    Consumption,
}

impl Clip {
    pub fn fired(self) -> bool {
        self != Clip::None
    }

    pub fn code(self) -> u8 {
        match self {
            Clip::None => 0,
            Clip::Floor => 1,
            Clip::Cap => 2,
            Clip::Consumption => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Clip::None),
            1 => Some(Clip::Floor),
            2 => Some(Clip::Cap),
            3 => Some(Clip::Consumption),
            _ => None,
        }
    }
}

/// Bounds applied to every network-generated saving choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub mu: f64,
    pub a_floor: f64,
    pub a_cap: f64,
    pub c_min: f64,
}

impl ActionBounds {
    pub fn new(mu: f64, a_floor: f64, a_cap: f64, c_min: f64) -> Result<Self> {
        if !(mu > 0.0) || !(a_floor < a_cap) || !(c_min > 0.0) {
            return Err(Error::domain(format!(
                "need mu > 0, a_floor < a_cap and c_min > 0, got mu = {mu}, bounds [{a_floor}, {a_cap}], c_min = {c_min}"
            )));
        }
        Ok(ActionBounds {
            mu,
            a_floor,
            a_cap,
            c_min,
        })
    }

    /// Applies the floor, the cap and the consumption floor, in that order, to
    /// the raw output `phi`.
    #[inline]
    pub fn clip(&self, phi: f64, a: f64, z: f64, prices: Prices) -> (f64, Clip) {
        let mut x = a + self.mu * phi;
        let mut clip = Clip::None;
        if x < self.a_floor {
            x = self.a_floor;
            clip = Clip::Floor;
        }
        if x > self.a_cap {
            x = self.a_cap;
            clip = Clip::Cap;
        }
        let cash = prices.cash_on_hand(a, z);
        if cash - x < self.c_min {
            x = cash - self.c_min;
            clip = Clip::Consumption;
        }
        (x, clip)
    }
}

/// Saving rule `pi(a, z | theta)` with its slowly tracking target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub network: Mlp,
    pub target: Mlp,
    pub bounds: ActionBounds,
    pub polyak_lambda: f64,
}

impl Policy {
    /// Network and target start identical.
    pub fn new(network: Mlp, bounds: ActionBounds, polyak_lambda: f64) -> Result<Self> {
        if !(polyak_lambda > 0.0 && polyak_lambda <= 1.0) {
            return Err(Error::domain(format!("polyak rate must lie in (0, 1], got {polyak_lambda}")));
        }
        Ok(Policy {
            target: network.clone(),
            network,
            bounds,
            polyak_lambda,
        })
    }

    /// Clipped action and the clip that fired.
    pub fn action(&self, a: f64, z: f64, prices: Prices) -> Result<(f64, Clip)> {
        let phi = self.network.forward(a, z)?;
        Ok(self.bounds.clip(phi, a, z, prices))
    }

    pub fn target_action(&self, a: f64, z: f64, prices: Prices) -> Result<(f64, Clip)> {
        let phi = self.target.forward(a, z)?;
        Ok(self.bounds.clip(phi, a, z, prices))
    }

    pub fn track_target(&mut self) -> Result<()> {
        polyak_update(&mut self.target, &self.network, self.polyak_lambda)
    }
}
