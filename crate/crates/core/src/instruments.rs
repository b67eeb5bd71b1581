//! Payoff and proportional cost primitives.

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};

/// Short position in `theta` European calls, cash settled at maturity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallContract {
    pub strike: f64,
    pub theta: f64,
}

impl CallContract {
    pub fn new(strike: f64, theta: f64) -> Result<Self> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(HedgeError::InvalidParameter("strike must be positive".into()));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(HedgeError::InvalidParameter("theta must be positive".into()));
        }
        Ok(Self { strike, theta })
    }

    /// One short call.
    pub fn single(strike: f64) -> Self {
        Self { strike, theta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub beta: f64,
    pub liquidation_beta: f64,
}

impl CostModel {
    pub const FRICTIONLESS: CostModel = CostModel {
        beta: 0.0,
        liquidation_beta: 0.0,
    };

    /// Proportional costs with the liquidation rate equal to the trading rate.
    pub fn proportional(beta: f64) -> Result<Self> {
        Self::new(beta, beta)
    }

    pub fn new(beta: f64, liquidation_beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0 && liquidation_beta.is_finite() && liquidation_beta >= 0.0)
        {
            return Err(HedgeError::InvalidParameter(
                "cost rates must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            beta,
            liquidation_beta,
        })
    }

    pub fn is_frictionless(&self) -> bool {
        self.beta == 0.0 && self.liquidation_beta == 0.0
    }
}

pub fn call_payoff(s_t: f64, strike: f64) -> f64 {
    (s_t - strike).max(0.0)
}

/// Cost of trading `delta_n` shares at price `s`; never positive.
pub fn transaction_cost(delta_n: i64, s: f64, model: &CostModel) -> f64 {
    -model.beta * delta_n.unsigned_abs() as f64 * s
}

/// Cost of closing the terminal stock position; never positive.
pub fn liquidation_cost(n_t: i64, s_t: f64, model: &CostModel) -> f64 {
    -model.liquidation_beta * n_t.unsigned_abs() as f64 * s_t
}
