//! Leaky integrate-and-fire dynamics.
//!
//! ```text
//! U(t) = (1 − τ)·H(t−1) + τ·I(t)
//! O(t) = Θ(U(t) − V̄)            Θ(0) = 1
//! H(t) = U(t)·(1 − O(t)) + V_r·O(t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, EccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateMode {
    /// Binary spikes forward, rectangular surrogate derivative backward,
    /// no gradient through the reset factor.
    Hard,
    /// Sigmoid spikes forward and their exact derivative backward.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifConfig {
    pub tau: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub surrogate_width: f64,
    pub time_steps: usize,
    pub surrogate_mode: SurrogateMode,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            v_threshold: 1.0,
            v_reset: 0.0,
            surrogate_width: 1.0,
            time_steps: 4,
            surrogate_mode: SurrogateMode::Hard,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return arg_err(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.v_reset.is_finite() && self.v_threshold.is_finite()) || self.v_reset >= self.v_threshold {
            return arg_err("reset potential must be finite and below the threshold");
        }
        if !(self.surrogate_width > 0.0 && self.surrogate_width.is_finite()) {
            return arg_err("surrogate width must be positive");
        }
        if self.time_steps < 1 {
            return arg_err("at least one time step is required");
        }
        Ok(())
    }

    /// Forward spike for a pre-firing membrane potential.
    #[inline]
    pub fn spike(&self, u: f64) -> f64 {
        match self.surrogate_mode {
            SurrogateMode::Hard => {
                if u >= self.v_threshold {
                    1.0
                } else {
                    0.0
                }
            }
            SurrogateMode::Soft => 1.0 / (1.0 + (-(u - self.v_threshold) / self.surrogate_width).exp()),
        }
    }

    /// dO/dU used by backpropagation.
    #[inline]
    pub fn spike_grad(&self, u: f64) -> f64 {
        let a = self.surrogate_width;
        match self.surrogate_mode {
            SurrogateMode::Hard => {
                if (u - self.v_threshold).abs() < a / 2.0 {
                    1.0 / a
                } else {
                    0.0
                }
            }
            SurrogateMode::Soft => {
                let s = self.spike(u);
                s * (1.0 - s) / a
            }
        }
    }

    #[inline]
    pub fn charge(&self, h_prev: f64, current: f64) -> f64 {
        (1.0 - self.tau) * h_prev + self.tau * current
    }

    #[inline]
    pub fn reset(&self, u: f64, o: f64) -> f64 {
        u * (1.0 - o) + self.v_reset * o
    }
}

/// Membrane state of one neuron population.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    /// Potential before firing.
    pub u: Vec<f64>,
    /// Potential after firing.
    pub h: Vec<f64>,
    pub o: Vec<f64>,
}

impl LifState {
    pub fn resting(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            h: vec![0.0; n],
            o: vec![0.0; n],
        }
    }
}

/// Advances a population by one time step; returns the emitted spikes and the new state.
pub fn lif_step(state: &LifState, current: &[f64], cfg: &LifConfig) -> Result<(Vec<f64>, LifState)> {
    if current.len() != state.h.len() {
        return arg_err(format!(
            "current has {} entries for {} neurons",
            current.len(),
            state.h.len()
        ));
    }
    if current.iter().any(|c| !c.is_finite()) {
        return Err(EccError::Numeric("non-finite input current".into()));
    }
    if state.h.iter().any(|h| !h.is_finite()) {
        return Err(EccError::Numeric("non-finite membrane state".into()));
    }
    let u: Vec<f64> = state.h.iter().zip(current).map(|(&h, &i)| cfg.charge(h, i)).collect();
    let o: Vec<f64> = u.iter().map(|&u| cfg.spike(u)).collect();
    let h = u.iter().zip(&o).map(|(&u, &o)| cfg.reset(u, o)).collect();
    Ok((o.clone(), LifState { u, h, o }))
}
