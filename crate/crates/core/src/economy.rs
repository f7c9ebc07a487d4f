//! Preferences, technology and factor prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MarkovChain;

/// CRRA preferences with discount factor `beta` and risk aversion `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub beta: f64,
    pub gamma: f64,
}

impl Preferences {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("beta must lie in (0, 1), got {beta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
        }
        // log utility is not special-cased
        if gamma == 1.0 {
            return Err(Error::domain("gamma = 1 (log utility) is not supported"));
        }
        Ok(Preferences { beta, gamma })
    }

    /// beta = 0.96, gamma = 2.
    pub fn baseline() -> Self {
        Preferences {
            beta: 0.96,
            gamma: 2.0,
        }
    }

    /// `c^(1-gamma) / (1-gamma)`.
    pub fn utility(&self, c: f64) -> Result<f64> {
        check_consumption(c)?;
        Ok(self.utility_unchecked(c))
    }

    /// `c^(-gamma)`.
    pub fn marginal_utility(&self, c: f64) -> Result<f64> {
        check_consumption(c)?;
        Ok(self.marginal_utility_unchecked(c))
    }

    #[inline]
    pub(crate) fn utility_unchecked(&self, c: f64) -> f64 {
        if self.gamma == 2.0 {
            -1.0 / c
        } else {
            c.powf(1.0 - self.gamma) / (1.0 - self.gamma)
        }
    }

    #[inline]
    pub(crate) fn marginal_utility_unchecked(&self, c: f64) -> f64 {
        if self.gamma == 2.0 {
            1.0 / (c * c)
        } else {
            c.powf(-self.gamma)
        }
    }
}

fn check_consumption(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("consumption must be positive, got {c}")))
    }
}

/// Cobb-Douglas technology `Y = K^alpha L^(1-alpha)` with depreciation `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub alpha: f64,
    pub delta: f64,
}

impl Technology {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!("delta must lie in (0, 1], got {delta}")));
        }
        Ok(Technology { alpha, delta })
    }

    /// alpha = 0.33, delta = 0.1.
    pub fn baseline() -> Self {
        Technology {
            alpha: 0.33,
            delta: 0.1,
        }
    }

    pub fn output(&self, capital: f64, labor: f64) -> f64 {
        capital.powf(self.alpha) * labor.powf(1.0 - self.alpha)
    }

    /// Competitive factor prices at aggregate capital `K` and labor `L`.
    pub fn prices_from_capital(&self, capital: f64, labor: f64) -> Result<Prices> {
        if !(capital > 0.0 && capital.is_finite()) || !(labor > 0.0 && labor.is_finite()) {
            return Err(Error::domain(format!(
                "capital and labor must be positive, got K = {capital}, L = {labor}"
            )));
        }
        let ratio = capital / labor;
        Ok(Prices {
            r: self.alpha * ratio.powf(self.alpha - 1.0) - self.delta,
            w: (1.0 - self.alpha) * ratio.powf(self.alpha),
        })
    }

    /// Capital demanded by firms at interest rate `r`, inverting the rental-rate condition.
    pub fn capital_demand(&self, r: f64, labor: f64) -> Result<f64> {
        if !(r + self.delta > 0.0) || !(labor > 0.0) {
            return Err(Error::domain(format!(
                "capital demand needs r > -delta and L > 0, got r = {r}, L = {labor}"
            )));
        }
        Ok(labor * (self.alpha / (r + self.delta)).powf(1.0 / (1.0 - self.alpha)))
    }

    /// Prices consistent with interest rate `r`: the wage that goes with the
    /// capital-labor ratio firms choose at `r`.
    pub fn prices_from_rate(&self, r: f64, labor: f64) -> Result<Prices> {
        let capital = self.capital_demand(r, labor)?;
        let prices = self.prices_from_capital(capital, labor)?;
        Ok(Prices { r, w: prices.w })
    }
}

/// Interest rate and wage per efficiency unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub r: f64,
    pub w: f64,
}

impl Prices {
    pub fn new(r: f64, w: f64) -> Result<Self> {
        if !(r > -1.0) || !(w > 0.0) || !r.is_finite() || !w.is_finite() {
            return Err(Error::domain(format!("need r > -1 and w > 0, got r = {r}, w = {w}")));
        }
        Ok(Prices { r, w })
    }

    /// Resources available for consumption and saving: `(1 + r) a + w z`.
    #[inline]
    pub fn cash_on_hand(&self, a: f64, z: f64) -> f64 {
        (1.0 + self.r) * a + self.w * z
    }

    /// Non-labor plus labor income `r a + w z`.
    #[inline]
    pub fn income(&self, a: f64, z: f64) -> f64 {
        self.r * a + self.w * z
    }
}

/// Aggregate efficiency units `sum_i p_i z_i` under the stationary distribution.
pub fn labor_supply(chain: &MarkovChain) -> Result<f64> {
    let p = chain.stationary_distribution()?;
    Ok(chain.mean_z(&p))
}
