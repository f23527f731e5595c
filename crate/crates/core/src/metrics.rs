//! Accuracy matrix, average incremental accuracy, cloud upload rate and AccI.

use crate::error::{arg_err, EccError, Result};

/// Lower-triangular matrix of `a[n][m]`: accuracy on task `m` after learning task `n`
/// (both 1-based).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn set(&mut self, n: usize, m: usize, value: f64) -> Result<()> {
        if n == 0 || m == 0 || m > n {
            return arg_err(format!("entry ({n}, {m}) is outside the lower triangle"));
        }
        if !(0.0..=1.0).contains(&value) {
            return arg_err(format!("accuracy {value} outside [0, 1]"));
        }
        while self.rows.len() < n {
            let len = self.rows.len() + 1;
            self.rows.push(vec![None; len]);
        }
        self.rows[n - 1][m - 1] = Some(value);
        Ok(())
    }

    pub fn get(&self, n: usize, m: usize) -> Option<f64> {
        self.rows.get(n.checked_sub(1)?)?.get(m.checked_sub(1)?).copied().flatten()
    }

    /// Row `n` when fully populated.
    pub fn row(&self, n: usize) -> Result<Vec<f64>> {
        let row = n
            .checked_sub(1)
            .and_then(|i| self.rows.get(i))
            .ok_or_else(|| EccError::State(format!("row {n} has not been recorded")))?;
        row.iter()
            .enumerate()
            .map(|(m, v)| v.ok_or_else(|| EccError::State(format!("entry ({n}, {}) is missing", m + 1))))
            .collect()
    }
}

/// Mean accuracy over the tasks seen after learning task `n`.
pub fn avg_accuracy(matrix: &AccuracyMatrix, n: usize) -> Result<f64> {
    let row = matrix.row(n)?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Fraction of scores strictly above δ.
pub fn cur(scores: &[f64], delta: f64) -> Result<f64> {
    if scores.is_empty() {
        return arg_err("upload rate of an empty score set");
    }
    let uploaded = scores.iter().filter(|&&s| s > delta).count();
    Ok(uploaded as f64 / scores.len() as f64)
}

/// Relative accuracy improvement over the edge model, normalized by the
/// cloud-edge gap. Not clamped.
pub fn acci(a_ecc: f64, a_edge: f64, a_cloud: f64) -> Result<f64> {
    let gap = a_cloud - a_edge;
    if gap == 0.0 {
        return Err(EccError::UndefinedMetric("cloud and edge accuracy are equal".into()));
    }
    Ok((a_ecc - a_edge) / gap)
}
