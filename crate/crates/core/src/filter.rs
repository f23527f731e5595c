//! Normalized-entropy routing between the edge and the cloud.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::nn::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    Edge,
    Cloud,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Edge => "edge",
            Route::Cloud => "cloud",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    delta: f64,
}

impl FilterConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return arg_err(format!("threshold must lie in [0, 1], got {delta}"));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingDecision {
    pub score: f64,
    pub route: Route,
}

/// `−Σ p_k ln p_k / ln K` over the softmax of `logits`, in `[0, 1]`.
pub fn normalized_entropy(logits: &[f64], k: usize) -> Result<f64> {
    if k < 2 {
        return arg_err("normalized entropy needs at least two classes");
    }
    if logits.len() != k {
        return arg_err(format!("{} logits for {k} classes", logits.len()));
    }
    let p = softmax(logits)?;
    // H = ln Σ e^(z−m) − Σ p·(z−m); exact ln K for uniform logits, 0·ln 0 terms vanish
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let mean_shifted: f64 = p.iter().zip(logits).map(|(&pk, &z)| pk * (z - max)).sum();
    let h = sum.ln() - mean_shifted;
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Keeps the sample on the edge when its score is at most δ.
pub fn route(logits: &[f64], cfg: &FilterConfig) -> Result<RoutingDecision> {
    let score = normalized_entropy(logits, logits.len())?;
    let route = if score <= cfg.delta {
        Route::Edge
    } else {
        Route::Cloud
    };
    Ok(RoutingDecision { score, route })
}
