use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `K x K` matrix of block-to-block propensities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Propensity {
    k: usize,
    data: Vec<f64>,
}

impl Propensity {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParams(
                "propensity matrix must be square and non-empty".into(),
            ));
        }
        let p = Self {
            k,
            data: rows.into_iter().flatten().collect(),
        };
        p.validate()?;
        Ok(p)
    }

    /// `diag` on the diagonal, the rest of each row split evenly.
    pub fn with_diagonal(k: usize, diag: f64) -> Result<Self> {
        if k == 1 {
            return Self::from_rows(vec![vec![1.0]]);
        }
        let off = (1.0 - diag) / (k - 1) as f64;
        Self::from_rows(
            (0..k)
                .map(|b| (0..k).map(|c| if b == c { diag } else { off }).collect())
                .collect(),
        )
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            k,
            data: vec![1.0 / k as f64; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize) -> f64 {
        self.data[b * self.k + c]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, v: f64) {
        self.data[b * self.k + c] = v;
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.data[b * self.k..(b + 1) * self.k]
    }

    pub fn row_mut(&mut self, b: usize) -> &mut [f64] {
        &mut self.data[b * self.k..(b + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|b| self.row(b).to_vec()).collect()
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.k).map(|b| self.get(b, b)).sum::<f64>() / self.k as f64
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.k).all(|b| (0..b).all(|c| self.get(b, c) == self.get(c, b)))
    }

    pub fn validate(&self) -> Result<()> {
        for b in 0..self.k {
            let row = self.row(b);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
                return Err(Error::InvalidParams(format!(
                    "propensity row {} has entries outside [0,1]",
                    b + 1
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParams(format!(
                    "propensity row {} sums to {s}, not 1",
                    b + 1
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the block vertex components model.
///
/// `pi` and `prop` are the asymptotic initiation frequencies and propensity
/// matrix. When present for forward simulation they replace the block-level
/// urns (the conditional form given the Dirichlet draws).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub zeta: f64,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prop: Option<Propensity>,
}

impl ModelParams {
    pub fn new(omega: f64, zeta: f64, alpha: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let p = Self {
            omega,
            zeta,
            alpha,
            theta,
            pi: None,
            prop: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        self.pi = Some(pi);
        self.validate()?;
        Ok(self)
    }

    pub fn with_prop(mut self, prop: Propensity) -> Result<Self> {
        self.prop = Some(prop);
        self.validate()?;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !(self.zeta > 0.0) {
            return Err(Error::InvalidParams(
                "omega and zeta must be positive".into(),
            ));
        }
        let k = self.alpha.len();
        if k == 0 {
            return Err(Error::InvalidParams("need at least one block".into()));
        }
        if self.theta.len() != k {
            return Err(Error::InvalidParams(format!(
                "alpha has {k} entries but theta has {}",
                self.theta.len()
            )));
        }
        validate_block_params(&self.alpha, &self.theta)?;
        if let Some(pi) = &self.pi {
            if pi.len() != k {
                return Err(Error::InvalidParams(format!(
                    "pi has {} entries, K = {k}",
                    pi.len()
                )));
            }
            if pi.iter().any(|&x| !(x >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParams("pi must lie on the simplex".into()));
            }
        }
        if let Some(prop) = &self.prop {
            if prop.k() != k {
                return Err(Error::InvalidParams(format!(
                    "propensity matrix is {0}x{0}, K = {k}",
                    prop.k()
                )));
            }
            prop.validate()?;
        }
        Ok(())
    }
}

/// `0 < alpha_b < 1` and `theta_b > -alpha_b` for every block.
pub fn validate_block_params(alpha: &[f64], theta: &[f64]) -> Result<()> {
    if alpha.len() != theta.len() {
        return Err(Error::InvalidParams(
            "alpha and theta differ in length".into(),
        ));
    }
    for (b, (&a, &t)) in alpha.iter().zip(theta).enumerate() {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha_{} = {a} not in (0,1)",
                b + 1
            )));
        }
        if !(t > -a) {
            return Err(Error::InvalidParams(format!(
                "theta_{} = {t} must exceed -alpha = {}",
                b + 1,
                -a
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_propensity_rows_sum_to_one() {
        let p = Propensity::with_diagonal(3, 0.9).unwrap();
        assert!((p.get(0, 1) - 0.05).abs() < 1e-15);
        assert!(p.is_symmetric());
    }

    #[test]
    fn parameter_domain() {
        assert!(ModelParams::new(1.0, 1.0, vec![0.5], vec![-0.4]).is_ok());
        assert!(ModelParams::new(1.0, 1.0, vec![0.5], vec![-0.5]).is_err());
        assert!(ModelParams::new(1.0, 1.0, vec![1.0], vec![1.0]).is_err());
        assert!(ModelParams::new(0.0, 1.0, vec![0.5], vec![1.0]).is_err());
        assert!(ModelParams::new(1.0, 1.0, vec![0.5, 0.5], vec![1.0]).is_err());
        let p = ModelParams::new(1.0, 1.0, vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        assert!(p.clone().with_pi(vec![0.5, 0.6]).is_err());
        assert!(p.with_prop(Propensity::uniform(3)).is_err());
    }
}
