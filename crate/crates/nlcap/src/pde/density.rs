//! Regularized energy densities for the solver.
//!
//! The degeneracy of `f` at vanishing gradients is lifted by replacing the
//! homogeneous factor with its epsilon-regularized form; the continuation
//! drives epsilon to the configured floor. For the quadratic family
//! `f = p^{-1} Q(g)^{p/2}` the regularization is `p^{-1} (eps^2 + Q)^{p/2}`,
//! which is smooth and uniformly convex for p > 1.

use crate::structure::{Family, StructureFunction};

pub enum Density {
    Quadratic { weights: Vec<f64>, p: f64 },
    Custom(CustomDensity),
}

pub struct CustomDensity {
    pub p: f64,
}

impl Density {
    pub fn of(s: &StructureFunction) -> Density {
        match &s.family {
            Family::Quadratic { weights } => Density::Quadratic {
                weights: weights.clone(),
                p: s.exponent(),
            },
            Family::Custom { .. } => Density::Custom(CustomDensity { p: s.exponent() }),
        }
    }
}

/// Value, gradient, and Hessian-apply of the regularized density at a fixed
/// gradient, for up to 3 components (unused ones zero).
pub trait DensityEval {
    fn value(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64;
    fn grad(&self, g: &[f64; 3], dim: usize, eps: f64) -> [f64; 3];
    fn hess_apply(&self, g: &[f64; 3], v: &[f64; 3], dim: usize, eps: f64) -> [f64; 3];
    /// Isotropic scale of the Hessian, used by the multigrid surrogate.
    fn scalar_coefficient(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64;
    /// Raw (unregularized) density, for capacity integrals.
    fn raw_value(&self, g: &[f64; 3], dim: usize) -> f64;
}

pub struct QuadraticEval<'a> {
    pub weights: &'a [f64],
    pub p: f64,
}

impl QuadraticEval<'_> {
    #[inline]
    fn q(&self, g: &[f64; 3], dim: usize) -> f64 {
        let mut q = 0.0;
        for d in 0..dim {
            q += self.weights[d] * g[d] * g[d];
        }
        q
    }
}

impl DensityEval for QuadraticEval<'_> {
    #[inline]
    fn value(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64 {
        let s = eps * eps + self.q(g, dim);
        s.powf(self.p / 2.0) / self.p
    }

    #[inline]
    fn grad(&self, g: &[f64; 3], dim: usize, eps: f64) -> [f64; 3] {
        let s = eps * eps + self.q(g, dim);
        let c = s.powf((self.p - 2.0) / 2.0);
        let mut out = [0.0; 3];
        for d in 0..dim {
            out[d] = c * self.weights[d] * g[d];
        }
        out
    }

    #[inline]
    fn hess_apply(&self, g: &[f64; 3], v: &[f64; 3], dim: usize, eps: f64) -> [f64; 3] {
        let s = eps * eps + self.q(g, dim);
        let c1 = s.powf((self.p - 2.0) / 2.0);
        let c2 = (self.p - 2.0) * s.powf((self.p - 4.0) / 2.0);
        let mut wg = [0.0; 3];
        let mut dotv = 0.0;
        for d in 0..dim {
            wg[d] = self.weights[d] * g[d];
            dotv += wg[d] * v[d];
        }
        let mut out = [0.0; 3];
        for d in 0..dim {
            out[d] = c1 * self.weights[d] * v[d] + c2 * wg[d] * dotv;
        }
        out
    }

    #[inline]
    fn scalar_coefficient(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64 {
        let s = eps * eps + self.q(g, dim);
        s.powf((self.p - 2.0) / 2.0)
    }

    #[inline]
    fn raw_value(&self, g: &[f64; 3], dim: usize) -> f64 {
        self.q(g, dim).powf(self.p / 2.0) / self.p
    }
}

/// Fallback for user-supplied densities: regularize the radial factor of the
/// homogeneity decomposition `f(g) = |g|^p f(g/|g|)`.
pub struct CustomEval<'a> {
    pub s: &'a StructureFunction,
}

impl CustomEval<'_> {
    fn split(&self, g: &[f64; 3], dim: usize) -> (f64, Vec<f64>) {
        let mut r2 = 0.0;
        for d in 0..dim {
            r2 += g[d] * g[d];
        }
        let r = r2.sqrt();
        if r < 1e-150 {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            (1e-150, e)
        } else {
            (r, g[..dim].iter().map(|v| v / r).collect())
        }
    }
}

impl DensityEval for CustomEval<'_> {
    fn value(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64 {
        let (r, dir) = self.split(g, dim);
        let m = (eps * eps + r * r).sqrt();
        m.powf(self.s.exponent()) * self.s.f(&dir)
    }

    fn grad(&self, g: &[f64; 3], dim: usize, eps: f64) -> [f64; 3] {
        // grad f_eps = (m/r)^p [grad f(g) - p f(g) g eps^2/(m^2 r^2)]
        let p = self.s.exponent();
        let (r, dir) = self.split(g, dim);
        let scaled: Vec<f64> = dir.iter().map(|v| v * r).collect();
        let m2 = eps * eps + r * r;
        let ratio = (m2.sqrt() / r).powf(p);
        let gf = self.s.grad_f(&scaled);
        let fv = self.s.f(&scaled);
        let corr = p * fv * eps * eps / (m2 * r * r);
        let mut out = [0.0; 3];
        for d in 0..dim {
            out[d] = ratio * (gf[d] - corr * scaled[d]);
        }
        out
    }

    fn hess_apply(&self, g: &[f64; 3], v: &[f64; 3], dim: usize, eps: f64) -> [f64; 3] {
        // Finite difference of the regularized gradient; the custom path is
        // correctness-oriented, not speed-oriented.
        let (r, _) = self.split(g, dim);
        let step = 1e-6 * r.max(eps);
        let mut out = [0.0; 3];
        let mut gp = *g;
        let mut gm = *g;
        for d in 0..dim {
            gp[d] = g[d] + step * v[d];
            gm[d] = g[d] - step * v[d];
        }
        let a = self.grad(&gp, dim, eps);
        let b = self.grad(&gm, dim, eps);
        for d in 0..dim {
            out[d] = (a[d] - b[d]) / (2.0 * step);
        }
        out
    }

    fn scalar_coefficient(&self, g: &[f64; 3], dim: usize, eps: f64) -> f64 {
        let p = self.s.exponent();
        let (r, _) = self.split(g, dim);
        (eps * eps + r * r).powf((p - 2.0) / 2.0)
    }

    fn raw_value(&self, g: &[f64; 3], dim: usize) -> f64 {
        let (r, dir) = self.split(g, dim);
        let scaled: Vec<f64> = dir.iter().map(|v| v * r).collect();
        self.s.f(&scaled)
    }
}
