//! Sparse multivariate polynomials given as coefficient tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `coef * prod_j vars[j]^powers[j]`. Missing trailing powers are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Polynomial { terms }
    }

    /// Checks that no term refers to more than `vars` variables.
    pub fn validate(&self, vars: usize) -> Result<()> {
        for t in &self.terms {
            if !t.coef.is_finite() {
                return Err(Error::invalid("polynomial coefficient is not finite"));
            }
            if t.powers.len() > vars {
                return Err(Error::invalid(format!(
                    "monomial has {} powers but only {vars} variables exist",
                    t.powers.len()
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.powers.iter().zip(vars).fold(t.coef, |acc, (&p, &v)| acc * v.powi(p as i32))).sum()
    }
}
