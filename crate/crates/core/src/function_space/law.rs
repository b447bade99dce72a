use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// A known baseline control law `x -> u`, the seed of the basis construction.
pub trait InitialLaw: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
}

/// `u = gain * x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedback {
    gain: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl LinearFeedback {
    pub fn new(gain: Vec<Vec<f64>>, offset: Option<Vec<f64>>) -> Result<Self> {
        let m = gain.len();
        let n = gain.first().map_or(0, Vec::len);
        if m == 0 || gain.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("gain matrix must be a non-empty rectangle"));
        }
        let offset = offset.unwrap_or_else(|| vec![0.0; m]);
        if offset.len() != m {
            return Err(Error::invalid("offset length must equal the number of gain rows"));
        }
        Ok(LinearFeedback { gain, offset })
    }
}

impl InitialLaw for LinearFeedback {
    fn state_dim(&self) -> usize {
        self.gain[0].len()
    }
    fn input_dim(&self) -> usize {
        self.gain.len()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.gain
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| row.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + b)
            .collect()
    }
}

/// `u_i = scale_i * tanh((gain * x)_i)`: linear feedback with actuator saturation.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturatedFeedback {
    inner: LinearFeedback,
    scale: Vec<f64>,
}

impl SaturatedFeedback {
    pub fn new(gain: Vec<Vec<f64>>, scale: Vec<f64>) -> Result<Self> {
        let inner = LinearFeedback::new(gain, None)?;
        if scale.len() != inner.input_dim() || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("saturation scales must be positive, one per input"));
        }
        Ok(SaturatedFeedback { inner, scale })
    }
}

impl InitialLaw for SaturatedFeedback {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.inner.eval(x).iter().zip(&self.scale).map(|(v, s)| s * v.tanh()).collect()
    }
}

/// One polynomial per input channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialLaw {
    n: usize,
    channels: Vec<Polynomial>,
}

impl PolynomialLaw {
    pub fn new(n: usize, channels: Vec<Polynomial>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("polynomial law needs at least one channel"));
        }
        for p in &channels {
            p.validate(n)?;
        }
        Ok(PolynomialLaw { n, channels })
    }
}

impl InitialLaw for PolynomialLaw {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.channels.len()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.channels.iter().map(|p| p.eval(x)).collect()
    }
}

/// Wraps an arbitrary closure.
pub struct FnLaw<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnLaw<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        FnLaw { n, m, f }
    }
}

impl<F> fmt::Debug for FnLaw<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLaw").field("n", &self.n).field("m", &self.m).finish_non_exhaustive()
    }
}

impl<F> InitialLaw for FnLaw<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// Named initial laws selectable from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    LinearFeedback {
        gain: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
    SaturatedFeedback {
        gain: Vec<Vec<f64>>,
        scale: Vec<f64>,
    },
    Polynomial {
        state_dim: usize,
        channels: Vec<Polynomial>,
    },
}

impl LawSpec {
    pub fn build(&self) -> Result<Arc<dyn InitialLaw>> {
        Ok(match self {
            LawSpec::LinearFeedback { gain, offset } => Arc::new(LinearFeedback::new(gain.clone(), offset.clone())?),
            LawSpec::SaturatedFeedback { gain, scale } => {
                Arc::new(SaturatedFeedback::new(gain.clone(), scale.clone())?)
            }
            LawSpec::Polynomial { state_dim, channels } => Arc::new(PolynomialLaw::new(*state_dim, channels.clone())?),
        })
    }
}
