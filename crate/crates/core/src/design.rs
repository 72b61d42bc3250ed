//! G-optimal experimental design over a finite set of feature vectors.
//!
//! The solver maximizes `log det Σ_a π_a φ_a φ_aᵀ` with Frank–Wolfe toward-steps and away-steps
//! using exact line search. By the Kiefer–Wolfowitz equivalence theorem the optimum's largest
//! leverage `φ_aᵀ Σ⁻¹ φ_a` equals the dimension `d` of the span; the solver stops once the
//! largest leverage is within `d (1 + δ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Ridge added to the design covariance when it is numerically singular.
pub const RIDGE: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDist {
    pub probs: Vec<f64>,
    pub max_leverage: f64,
    /// Dimension of the span of the features.
    pub dim: usize,
    pub iterations: usize,
    pub converged: bool,
}

pub fn g_optimal_design(features: &[Vec<f64>]) -> Result<DesignDist> {
    g_optimal_design_with(features, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
}

pub fn g_optimal_design_with(features: &[Vec<f64>], tolerance: f64, max_iters: usize) -> Result<DesignDist> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidArgument("design over an empty feature list".into()));
    }
    let p = features[0].len();
    if p == 0 || features.iter().any(|f| f.len() != p) {
        return Err(Error::DimensionMismatch("features must share a positive dimension".into()));
    }
    if features.iter().any(|f| f.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidArgument("non-finite feature entry".into()));
    }
    if features.iter().all(|f| f.iter().all(|x| *x == 0.0)) {
        return Err(Error::InvalidArgument("all features are zero".into()));
    }

    let z = reduce_to_span(features, p);
    let d = z[0].len();
    let mut w = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    loop {
        let lev = leverages(&z, &w, d)?;
        let (top, g_max) = argmax(&lev);
        if g_max <= d as f64 * (1.0 + tolerance) || iterations >= max_iters {
            return Ok(DesignDist {
                probs: w,
                max_leverage: g_max,
                dim: d,
                iterations,
                converged: g_max <= d as f64 * (1.0 + tolerance),
            });
        }
        let df = d as f64;
        // Away candidate: support point with the smallest leverage.
        let away = (0..n)
            .filter(|&a| w[a] > 0.0)
            .min_by(|&a, &b| lev[a].total_cmp(&lev[b]));
        let toward_gap = g_max - df;
        match away {
            Some(a) if df - lev[a] > toward_gap && w[a] < 1.0 => {
                let g = lev[a];
                let max_step = w[a] / (1.0 - w[a]);
                let step = if g <= 1.0 {
                    max_step
                } else {
                    ((df - g) / (df * (g - 1.0))).min(max_step)
                };
                for x in w.iter_mut() {
                    *x *= 1.0 + step;
                }
                w[a] -= step;
                if step == max_step {
                    w[a] = 0.0;
                }
            }
            _ => {
                let step = (g_max / df - 1.0) / (g_max - 1.0);
                for x in w.iter_mut() {
                    *x *= 1.0 - step;
                }
                w[top] += step;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x = (*x / total).max(0.0));
        iterations += 1;
    }
}

/// Coordinates of each feature in an orthonormal basis of their span.
fn reduce_to_span(features: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    let n = features.len();
    let f = DMatrix::from_fn(n, p, |i, j| features[i][j]);
    let svd = f.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s_max = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOL * s_max)
        .collect();
    features
        .iter()
        .map(|phi| {
            keep.iter()
                .map(|&i| (0..p).map(|j| v_t[(i, j)] * phi[j]).sum())
                .collect()
        })
        .collect()
}

fn leverages(z: &[Vec<f64>], w: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (zi, wi) in z.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        let v = DVector::from_column_slice(zi);
        m += *wi * &v * v.transpose();
    }
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => (m + DMatrix::identity(d, d) * RIDGE)
            .cholesky()
            .ok_or_else(|| Error::Numerical("design covariance not positive definite".into()))?,
    };
    Ok(z
        .iter()
        .map(|zi| {
            let v = DVector::from_column_slice(zi);
            let s = chol.solve(&v);
            v.dot(&s)
        })
        .collect())
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if *x > best.1 { (i, *x) } else { best })
}

/// Largest leverage of `features` under `probs` (brute-force evaluation on the original
/// coordinates with the ridge).
pub fn max_leverage(features: &[Vec<f64>], probs: &[f64]) -> Result<f64> {
    let p = features[0].len();
    let z = reduce_to_span(features, p);
    let lev = leverages(&z, probs, z[0].len())?;
    Ok(argmax(&lev).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_is_uniform() {
        let k = 4;
        let basis: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let d = g_optimal_design(&basis).unwrap();
        assert!(d.probs.iter().all(|p| (p - 0.25).abs() < 1e-12));
        assert!((d.max_leverage - 4.0).abs() < 1e-9);
        assert_eq!(d.dim, 4);
    }

    #[test]
    fn single_action_point_mass() {
        let d = g_optimal_design(&[vec![0.3, -1.2]]).unwrap();
        assert_eq!(d.probs, vec![1.0]);
        assert_eq!(d.dim, 1);
        assert!((d.max_leverage - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(g_optimal_design(&[]).is_err());
        assert!(g_optimal_design(&[vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(g_optimal_design(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn three_points_in_plane() {
        let f = vec![vec![1.0, 0.2], vec![-0.4, 0.9], vec![0.5, 0.5]];
        let d = g_optimal_design(&f).unwrap();
        assert!(d.converged);
        assert!(d.max_leverage <= 2.0 * (1.0 + 1e-3));
        assert!((max_leverage(&f, &d.probs).unwrap() - d.max_leverage).abs() < 1e-9);
    }

    #[test]
    fn collinear_features_use_rank() {
        let f = vec![vec![1.0, 2.0], vec![-0.5, -1.0], vec![2.0, 4.0]];
        let d = g_optimal_design(&f).unwrap();
        assert_eq!(d.dim, 1);
        assert!(d.max_leverage <= 1.0 + 1e-3);
    }
}
