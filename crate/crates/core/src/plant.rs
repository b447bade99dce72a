//! Closed-loop simulation of the unknown plant, one segment at a time.
//!
//! The learner never reads the noise specification; only the simulator does.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_space::{apply_weights, BasisSet, ControllerWeights, StateBox};
use crate::poly::Polynomial;
use crate::seed;

/// States are clamped to this many box diameters around the box center.
pub const DIVERGENCE_GUARD: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// `x' = a x (1 - x) + u + v`.
    Logistic { a: f64 },
    /// Euler-discretized damped pendulum, state `[angle, rate]`, torque input.
    Pendulum { dt: f64, gravity_over_length: f64, damping: f64, input_gain: f64 },
    /// Euler-discretized forced Van der Pol oscillator.
    Vanderpol { mu: f64, dt: f64, input_gain: f64 },
    /// `x' = A x + B u + v`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// One polynomial per next-state coordinate, in the variables
    /// `[x_1..x_n, u_1..u_m]`; noise is added afterwards.
    Polynomial { state_dim: usize, input_dim: usize, equations: Vec<Polynomial> },
}

impl Dynamics {
    fn dims(&self) -> Result<(usize, usize)> {
        Ok(match self {
            Dynamics::Logistic { .. } => (1, 1),
            Dynamics::Pendulum { dt, .. } | Dynamics::Vanderpol { dt, .. } => {
                if !(*dt > 0.0) {
                    return Err(Error::invalid("time step must be positive"));
                }
                (2, 1)
            }
            Dynamics::Linear { a, b } => {
                let n = a.len();
                let m = b.first().map_or(0, Vec::len);
                if n == 0 || a.iter().any(|r| r.len() != n) || b.len() != n || m == 0 || b.iter().any(|r| r.len() != m)
                {
                    return Err(Error::invalid("linear plant needs square A (n x n) and B (n x m)"));
                }
                (n, m)
            }
            Dynamics::Polynomial { state_dim, input_dim, equations } => {
                if equations.len() != *state_dim || *state_dim == 0 {
                    return Err(Error::invalid("polynomial plant needs one equation per state"));
                }
                for eq in equations {
                    eq.validate(state_dim + input_dim)?;
                }
                (*state_dim, *input_dim)
            }
        })
    }

    fn apply(&self, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::Logistic { a } => vec![a * x[0] * (1.0 - x[0]) + u[0] + v[0]],
            Dynamics::Pendulum { dt, gravity_over_length, damping, input_gain } => {
                let (th, om) = (x[0], x[1]);
                let acc = -gravity_over_length * th.sin() - damping * om + input_gain * u[0];
                vec![th + dt * om + v[0], om + dt * acc + v[1]]
            }
            Dynamics::Vanderpol { mu, dt, input_gain } => {
                let (p, q) = (x[0], x[1]);
                let acc = mu * (1.0 - p * p) * q - p + input_gain * u[0];
                vec![p + dt * q + v[0], q + dt * acc + v[1]]
            }
            Dynamics::Linear { a, b } => a
                .iter()
                .zip(b)
                .zip(v)
                .map(|((ar, br), vi)| {
                    ar.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>()
                        + br.iter().zip(u).map(|(c, ui)| c * ui).sum::<f64>()
                        + vi
                })
                .collect(),
            Dynamics::Polynomial { equations, .. } => {
                let vars: Vec<f64> = x.iter().chain(u).copied().collect();
                equations.iter().zip(v).map(|(eq, vi)| eq.eval(&vars) + vi).collect()
            }
        }
    }
}

/// Additive truncated Gaussian disturbance, per state coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    /// Truncation radius in units of `sigma`.
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    3.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma: 0.0, truncation: default_truncation() }
    }
}

impl NoiseSpec {
    pub fn bound(&self) -> f64 {
        self.sigma * self.truncation
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= self.truncation {
                return self.sigma * z;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dynamics: Dynamics,
    pub x0: Vec<f64>,
    pub state_box: StateBox,
    #[serde(default)]
    pub noise: NoiseSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    name: String,
    dynamics: Dynamics,
    n: usize,
    m: usize,
    noise: NoiseSpec,
    state_box: StateBox,
    x0: Vec<f64>,
}

/// One simulated transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub noise: Vec<f64>,
    pub saturated: bool,
}

/// The dynamics returned a non-finite state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFiniteState;

impl PlantModel {
    pub fn from_spec(spec: &PlantSpec) -> Result<Self> {
        let (n, m) = spec.dynamics.dims()?;
        if spec.x0.len() != n || spec.state_box.dim() != n {
            return Err(Error::invalid(format!("x0 and state box must have dimension {n}")));
        }
        if spec.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0 must be finite"));
        }
        if !(spec.noise.sigma >= 0.0) || !(spec.noise.truncation > 0.0) {
            return Err(Error::invalid("noise needs sigma >= 0 and a positive truncation"));
        }
        let name = spec.name.clone().unwrap_or_else(|| {
            match spec.dynamics {
                Dynamics::Logistic { .. } => "logistic",
                Dynamics::Pendulum { .. } => "pendulum",
                Dynamics::Vanderpol { .. } => "vanderpol",
                Dynamics::Linear { .. } => "linear",
                Dynamics::Polynomial { .. } => "polynomial",
            }
            .to_string()
        });
        Ok(PlantModel {
            name,
            dynamics: spec.dynamics.clone(),
            n,
            m,
            noise: spec.noise,
            state_box: spec.state_box.clone(),
            x0: spec.x0.clone(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn with_noise(&self, noise: NoiseSpec) -> Self {
        PlantModel { noise, ..self.clone() }
    }

    /// Advances one step with a fresh disturbance drawn from `rng`.
    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], u: &[f64], rng: &mut R) -> Result<Step, NonFiniteState> {
        let noise: Vec<f64> = (0..self.n).map(|_| self.noise.draw(rng)).collect();
        let mut state = self.dynamics.apply(x, u, &noise);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(NonFiniteState);
        }
        let reach = DIVERGENCE_GUARD * if self.state_box.diameter() > 0.0 { self.state_box.diameter() } else { 1.0 };
        let mut saturated = false;
        for (s, c) in state.iter_mut().zip(self.state_box.center()) {
            let clamped = s.clamp(c - reach, c + reach);
            if clamped != *s {
                saturated = true;
                *s = clamped;
            }
        }
        Ok(Step { state, noise, saturated })
    }
}

/// One closed-loop rollout of `K` steps under a fixed controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    /// `K + 1` states starting at the plant's initial state.
    pub states: Vec<Vec<f64>>,
    /// `K` inputs.
    pub inputs: Vec<Vec<f64>>,
    /// `K` disturbance draws.
    pub noise: Vec<Vec<f64>>,
    pub saturated: bool,
    pub cost: Option<f64>,
}

impl Segment {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Rolls out segment `index` from the plant's initial state. The noise
/// substream is derived from `(noise_seed, index)` alone, so segments are
/// reproducible regardless of execution order.
pub fn rollout_segment(
    plant: &PlantModel,
    basis: &BasisSet,
    weights: &ControllerWeights,
    horizon: usize,
    index: usize,
    noise_seed: u64,
) -> Result<Segment> {
    if horizon == 0 {
        return Err(Error::invalid("segment horizon must be at least 1"));
    }
    if basis.state_dim() != plant.state_dim() || basis.input_dim() != plant.input_dim() {
        return Err(Error::invalid("basis dimensions do not match the plant"));
    }
    if weights.input_dim() != basis.input_dim() || weights.basis_count() != basis.basis_count() {
        return Err(Error::invalid("weights do not match the basis"));
    }
    let mut rng = seed::stream(noise_seed, seed::labels::NOISE, index as u64);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut noise = Vec::with_capacity(horizon);
    let mut saturated = false;
    let mut x = plant.x0().to_vec();
    for k in 0..horizon {
        let u = apply_weights(basis.gamma(), weights, &basis.values_unchecked(&x));
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::PlantBlowup { segment: index, step: k });
        }
        let step = plant.step(&x, &u, &mut rng).map_err(|_| Error::PlantBlowup { segment: index, step: k })?;
        saturated |= step.saturated;
        states.push(std::mem::replace(&mut x, step.state));
        inputs.push(u);
        noise.push(step.noise);
    }
    states.push(x);
    Ok(Segment { index, states, inputs, noise, saturated, cost: None })
}
