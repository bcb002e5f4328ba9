//! Cluster-selection priors.
//!
//! The powered Chinese restaurant process weights an occupied table by
//! `N_c^r` and a new table by `α0`; the powered Dirichlet-Hawkes prior
//! replaces the integer counts with Hawkes intensities and `α0` with the base
//! rate `λ0`. `r = 1` recovers the Dirichlet (resp. Dirichlet-Hawkes) prior,
//! `r = 0` the uniform process.

use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub r: f64,
    pub lambda0: f64,
    pub alpha0: f64,
}

impl PriorParams {
    pub fn new(r: f64, lambda0: f64, alpha0: f64) -> Result<Self> {
        let p = PriorParams { r, lambda0, alpha0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(PdhpError::input(format!("exponent r must be finite and >= 0 (got {})", self.r)));
        }
        if !(self.lambda0 > 0.0) || !self.lambda0.is_finite() {
            return Err(PdhpError::input("lambda0 must be positive"));
        }
        if !(self.alpha0 > 0.0) || !self.alpha0.is_finite() {
            return Err(PdhpError::input("alpha0 must be positive"));
        }
        Ok(())
    }
}

/// `x^r` with `x^1 = x` and `x^0 = 1` taken literally, so the `r = 1` and
/// `r = 0` forms are reproduced bit for bit.
#[inline]
pub fn powered(x: f64, r: f64) -> f64 {
    if r == 1.0 {
        x
    } else if r == 0.0 {
        1.0
    } else if x == 0.0 {
        0.0
    } else {
        (r * x.ln()).exp()
    }
}

/// `ln(x^r)`, `-inf` for a dead (`x = 0`) entry when `r > 0`.
#[inline]
pub fn log_powered(x: f64, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if x == 0.0 {
        f64::NEG_INFINITY
    } else if r == 1.0 {
        x.ln()
    } else {
        r * x.ln()
    }
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    for x in &mut w {
        *x /= z;
    }
    w
}

/// Powered CRP over occupied-table counts; the last entry is the new table.
pub fn pcrp_weights(counts: &[f64], params: &PriorParams) -> Result<Vec<f64>> {
    params.validate()?;
    if counts.iter().any(|&n| !(n >= 1.0) || !n.is_finite()) {
        return Err(PdhpError::input("occupied tables need counts >= 1"));
    }
    let mut w: Vec<f64> = counts.iter().map(|&n| powered(n, params.r)).collect();
    w.push(params.alpha0);
    Ok(normalized(w))
}

/// Powered Dirichlet-Hawkes prior over the intensities of live clusters; the
/// last entry opens a new cluster.
pub fn pdhp_weights(lambdas: &[f64], params: &PriorParams) -> Result<Vec<f64>> {
    params.validate()?;
    check_intensities(lambdas)?;
    let mut w: Vec<f64> = lambdas.iter().map(|&l| powered(l, params.r)).collect();
    w.push(params.lambda0);
    Ok(normalized(w))
}

/// Log form of [`pdhp_weights`], normalized.
pub fn pdhp_log_weights(lambdas: &[f64], r: f64, lambda0: f64) -> Result<Vec<f64>> {
    check_intensities(lambdas)?;
    let mut lw: Vec<f64> = lambdas.iter().map(|&l| log_powered(l, r)).collect();
    lw.push(lambda0.ln());
    let z = crate::math::log_sum_exp(&lw);
    for x in &mut lw {
        *x -= z;
    }
    Ok(lw)
}

fn check_intensities(lambdas: &[f64]) -> Result<()> {
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(PdhpError::input(format!("intensity must be finite and >= 0 (got {bad})")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn pcrp_examples() {
        let w = pcrp_weights(&[3.0, 1.0], &PriorParams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(close(&w, &[0.6, 0.2, 0.2], 1e-15));
        let w = pcrp_weights(&[3.0, 1.0], &PriorParams::new(0.0, 1.0, 2.0).unwrap()).unwrap();
        assert!(close(&w, &[0.25, 0.25, 0.5], 1e-15));
        let w = pcrp_weights(&[3.0, 1.0], &PriorParams::new(50.0, 1.0, 1e-4).unwrap()).unwrap();
        assert!(w[0] > 0.999);
        let w = pcrp_weights(&[], &PriorParams::new(2.0, 1.0, 0.3).unwrap()).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn pdhp_examples() {
        let w = pdhp_weights(&[2.0, 8.0], &PriorParams::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(close(&w, &[1.0 / 3.0; 3], 1e-15));
        let w = pdhp_weights(&[2.0, 8.0], &PriorParams::new(1.0, 1e-300, 1.0).unwrap()).unwrap();
        assert!(close(&w, &[0.2, 0.8, 0.0], 1e-15));
        let w = pdhp_weights(&[2.0, 8.0], &PriorParams::new(2.0, 4.0, 1.0).unwrap()).unwrap();
        assert!(close(&w, &[4.0 / 72.0, 64.0 / 72.0, 4.0 / 72.0], 1e-15));
    }

    #[test]
    fn pdhp_rejects_negative_intensity() {
        let p = PriorParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(pdhp_weights(&[1.0, -0.1], &p).is_err());
        assert!(pdhp_weights(&[f64::NAN], &p).is_err());
        assert!(PriorParams::new(-1.0, 1.0, 1.0).is_err());
        assert!(PriorParams::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn log_form_matches_linear_form() {
        let l = [0.0, 0.3, 2.5, 1e-6];
        for r in [0.0, 0.5, 1.0, 1.7, 3.0] {
            let p = PriorParams::new(r, 0.2, 1.0).unwrap();
            let lin = pdhp_weights(&l, &p).unwrap();
            let lg: Vec<f64> = pdhp_log_weights(&l, r, 0.2).unwrap().iter().map(|x| x.exp()).collect();
            assert!(close(&lin, &lg, 1e-14), "r={r}: {lin:?} vs {lg:?}");
        }
    }

    #[test]
    fn zero_intensity_is_dead_unless_uniform() {
        let w = pdhp_weights(&[0.0, 1.0], &PriorParams::new(0.5, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(w[0], 0.0);
        let w = pdhp_weights(&[0.0, 1.0], &PriorParams::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(close(&w, &[1.0 / 3.0; 3], 1e-15));
    }
}
