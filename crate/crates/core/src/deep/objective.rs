//! Total correlation of two batches and its gradient.
//!
//! With centered batches `H1 [n × p]`, `H2 [n × q]`, `m = n − 1` and
//! `T = Σ11^{-1/2} Σ12 Σ22^{-1/2} = U S Vᵀ`, the objective is `Σ_{i<r} s_i`.
//! Its gradient is
//!
//! ```text
//! ∂/∂H1 = (2·H1·∇11 + H2·∇12ᵀ) / m
//! ∂/∂H2 = (2·H2·∇22 + H1·∇12) / m
//! ∇12 = Σ11^{-1/2} U_r V_rᵀ Σ22^{-1/2}
//! ∇11 = −½ Σ11^{-1/2} U_r S_r U_rᵀ Σ11^{-1/2}
//! ```
//!
//! Columns of `H` have zero mean, so the gradients already sum to zero over
//! rows and equal the gradients with respect to the uncentered batches.

use nalgebra::{DMatrix, DVector};

use crate::cca::{whiten, Ridge};
use crate::error::{Error, Result};
use crate::linalg::{center, column_means};

struct Parts {
    hx: DMatrix<f64>,
    hy: DMatrix<f64>,
    kx: DMatrix<f64>,
    ky: DMatrix<f64>,
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

fn decompose(fx: &DMatrix<f64>, fy: &DMatrix<f64>, r: usize, reg: f64) -> Result<Parts> {
    let n = fx.nrows();
    if fy.nrows() != n {
        return Err(Error::Argument(format!("batches have {n} and {} rows", fy.nrows())));
    }
    if n < 2 {
        return Err(Error::Argument("total correlation needs at least two rows".into()));
    }
    if r == 0 || r > fx.ncols().min(fy.ncols()) {
        return Err(Error::Argument(format!(
            "r = {r} must be in 1..={}",
            fx.ncols().min(fy.ncols())
        )));
    }
    if !(reg >= 0.0) {
        return Err(Error::Argument(format!("reg must be non-negative, got {reg}")));
    }
    let hx = center(fx, &column_means(fx));
    let hy = center(fy, &column_means(fy));
    let m = (n - 1) as f64;
    let sxx = hx.transpose() * &hx / m;
    let syy = hy.transpose() * &hy / m;
    let sxy = hx.transpose() * &hy / m;
    let w = whiten(&sxx, &syy, &sxy, Ridge::Absolute(reg))?;
    Ok(Parts {
        hx,
        hy,
        kx: w.kx,
        ky: w.ky,
        u: w.u,
        s: w.s,
        v: w.v,
    })
}

/// Sum of the top-`r` canonical correlations of the two batches, each clipped to `[0, 1]`.
pub fn total_correlation(fx: &DMatrix<f64>, fy: &DMatrix<f64>, r: usize, reg: f64) -> Result<f64> {
    let p = decompose(fx, fy, r, reg)?;
    Ok(p.s.iter().take(r).map(|s| s.clamp(0.0, 1.0)).sum())
}

/// Gradient of [`total_correlation`] with respect to every entry of both batches.
pub fn corr_gradient(fx: &DMatrix<f64>, fy: &DMatrix<f64>, r: usize, reg: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(objective_and_gradient(fx, fy, r, reg)?.1)
}

pub(crate) type Gradients = (DMatrix<f64>, DMatrix<f64>);

pub(crate) fn objective_and_gradient(fx: &DMatrix<f64>, fy: &DMatrix<f64>, r: usize, reg: f64) -> Result<(f64, Gradients)> {
    let p = decompose(fx, fy, r, reg)?;
    let m = (fx.nrows() - 1) as f64;
    let ur = p.u.columns(0, r);
    let vr = p.v.columns(0, r);
    let sr = p.s.rows(0, r);
    let value = sr.iter().map(|s| s.clamp(0.0, 1.0)).sum();

    let kx_u = &p.kx * ur;
    let ky_v = &p.ky * vr;
    let d12 = &kx_u * ky_v.transpose();
    let d11 = -0.5 * scaled(&kx_u, &sr.into_owned()) * kx_u.transpose();
    let d22 = -0.5 * scaled(&ky_v, &sr.into_owned()) * ky_v.transpose();

    let gx = (2.0 * &p.hx * d11 + &p.hy * d12.transpose()) / m;
    let gy = (2.0 * &p.hy * d22 + &p.hx * d12) / m;
    Ok((value, (gx, gy)))
}

fn scaled(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identical_batches_reach_full_rank() {
        let f = gaussian(50, 4, 1);
        let v = total_correlation(&f, &f, 4, 0.0).unwrap();
        assert!((v - 4.0).abs() < 1e-9);
    }

    #[test]
    fn equal_inputs_give_equal_gradients() {
        let f = gaussian(30, 3, 2);
        let (gx, gy) = corr_gradient(&f, &f, 2, 1e-3).unwrap();
        assert!((&gx - &gy).amax() < 1e-12);
    }

    #[test]
    fn constant_shift_leaves_gradient_unchanged() {
        let fx = gaussian(30, 3, 3);
        let fy = gaussian(30, 2, 4);
        let mut shifted = fx.clone();
        shifted.add_scalar_mut(5.0);
        let a = corr_gradient(&fx, &fy, 2, 1e-3).unwrap();
        let b = corr_gradient(&shifted, &fy, 2, 1e-3).unwrap();
        assert!((&a.0 - &b.0).amax() < 1e-10);
        assert!((&a.1 - &b.1).amax() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fx = gaussian(20, 4, 5);
        let fy = &fx.columns(0, 3) * 0.5 + gaussian(20, 3, 6);
        let (gx, gy) = corr_gradient(&fx, &fy, 2, 1e-3).unwrap();
        let h = 1e-5;
        for (which, g) in [(0, &gx), (1, &gy)] {
            for idx in 0..g.len() {
                let (mut a, mut b) = (fx.clone(), fy.clone());
                let target = if which == 0 { &mut a } else { &mut b };
                target[idx] += h;
                let up = total_correlation(&a, &b, 2, 1e-3).unwrap();
                let target = if which == 0 { &mut a } else { &mut b };
                target[idx] -= 2.0 * h;
                let down = total_correlation(&a, &b, 2, 1e-3).unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-6);
                assert!(rel < 1e-4, "view {which} entry {idx}: {fd} vs {}", g[idx]);
            }
        }
    }

    #[test]
    fn degenerate_without_ridge_is_singular() {
        let mut fx = gaussian(10, 3, 7);
        fx.column_mut(1).fill(2.0);
        let fy = gaussian(10, 3, 8);
        assert!(matches!(total_correlation(&fx, &fy, 1, 0.0), Err(Error::Singularity(_))));
        assert!(total_correlation(&fx, &fy, 1, 1e-3).is_ok());
    }
}
