//! The nonlinear structure `A = ∇f`.
//!
//! A structure is a p-homogeneous energy density `f` on R^n \ {0} together
//! with its gradient (the operator `A`) and Hessian. Admissible structures
//! are degenerate elliptic of p-Laplace type: the Hessian of f is comparable
//! to |η|^{p-2} from both sides, uniformly in the direction of η.
//!
//! Two closed-form families are built in: the isotropic density
//! `f(η) = p^{-1} |η|^p` and the anisotropic quadratic family
//! `f(η) = p^{-1} (Σ a_i η_i^2)^{p/2}`. Arbitrary densities can be supplied
//! as callbacks; their Hessians default to central finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geom;
use crate::Result;

type DensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessianFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closed-form evaluation paths.
pub(crate) enum Family {
    /// `f(η) = p^{-1} (Σ a_i η_i^2)^{p/2}`, isotropic when all `a_i = 1`.
    Quadratic { weights: Vec<f64> },
    /// User-supplied density; gradient and Hessian optional.
    Custom {
        f: Box<DensityFn>,
        grad: Option<Box<GradientFn>>,
        hess: Option<Box<HessianFn>>,
    },
}

/// The triple `(n, p, f)` with evaluators for `f`, `A = ∇f` and `Hess f`.
pub struct StructureFunction {
    dim: usize,
    exponent: f64,
    pub(crate) family: Family,
    alpha_estimate: f64,
    lambda_estimate: Option<f64>,
}

/// Serialized form of the built-in families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructureSpec {
    pub kind: String,
    pub n: usize,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn check_range(n: usize, p: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {n}")));
    }
    if !(p > 1.0 && p < n as f64) {
        return Err(Error::Domain(format!(
            "exponent must satisfy 1 < p < n, got p = {p}, n = {n}"
        )));
    }
    Ok(())
}

/// `f(η) = p^{-1} |η|^p`, the p-Laplace density.
pub fn build_isotropic(n: usize, p: f64) -> Result<StructureFunction> {
    build_anisotropic_quadratic(n, p, &vec![1.0; n])
}

/// `f(η) = p^{-1} (Σ a_i η_i^2)^{p/2}` with positive weights `a_i`.
pub fn build_anisotropic_quadratic(n: usize, p: f64, weights: &[f64]) -> Result<StructureFunction> {
    check_range(n, p)?;
    if weights.len() != n {
        return Err(Error::Domain(format!(
            "expected {n} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::Domain("weights must be positive and finite".into()));
    }
    let a_min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = weights.iter().cloned().fold(0.0, f64::max);
    let a_sum: f64 = weights.iter().sum();
    // Conservative closed-form ellipticity ratio: the Hessian eigenvalues of
    // Q^{p/2}/p lie between min(1, p-1) a_min Q^{(p-2)/2} and
    // (1 + |p-2|) a_max Q^{(p-2)/2}, and Q/|η|^2 is between a_min and a_max.
    let q_lo = if p >= 2.0 {
        a_min.powf((p - 2.0) / 2.0)
    } else {
        a_max.powf((p - 2.0) / 2.0)
    };
    let q_hi = if p >= 2.0 {
        a_max.powf((p - 2.0) / 2.0)
    } else {
        a_min.powf((p - 2.0) / 2.0)
    };
    let lower = (1.0_f64.min(p - 1.0)) * a_min * q_lo;
    let upper = (a_sum + (p - 2.0).abs() * a_max * n as f64) * q_hi;
    let alpha = (1.0 / lower).max(upper).max(1.0);
    Ok(StructureFunction {
        dim: n,
        exponent: p,
        family: Family::Quadratic {
            weights: weights.to_vec(),
        },
        alpha_estimate: alpha,
        lambda_estimate: Some(alpha * (1.0 + (p - 2.0).abs())),
    })
}

/// Wraps user-supplied evaluators. Missing gradient/Hessian callbacks fall
/// back to central differences with step `1e-5 |η|`.
pub fn build_custom(
    n: usize,
    p: f64,
    f: Box<DensityFn>,
    grad: Option<Box<GradientFn>>,
    hess: Option<Box<HessianFn>>,
) -> Result<StructureFunction> {
    check_range(n, p)?;
    Ok(StructureFunction {
        dim: n,
        exponent: p,
        family: Family::Custom { f, grad, hess },
        alpha_estimate: f64::NAN,
        lambda_estimate: None,
    })
}

pub fn from_spec(spec: &StructureSpec) -> Result<StructureFunction> {
    match spec.kind.as_str() {
        "isotropic" => build_isotropic(spec.n, spec.p),
        "aniso_quadratic" => {
            let w = spec
                .weights
                .as_ref()
                .ok_or_else(|| Error::Schema("aniso_quadratic requires weights".into()))?;
            build_anisotropic_quadratic(spec.n, spec.p, w)
        }
        other => Err(Error::Schema(format!("unknown structure kind {other:?}"))),
    }
}

impl StructureFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn alpha_estimate(&self) -> f64 {
        self.alpha_estimate
    }

    pub fn lambda_estimate(&self) -> Option<f64> {
        self.lambda_estimate
    }

    /// Serialized description, when the structure is one of the built-ins.
    pub fn spec(&self) -> Option<StructureSpec> {
        match &self.family {
            Family::Quadratic { weights } => {
                let iso = weights.iter().all(|&a| (a - 1.0).abs() < 1e-14);
                Some(StructureSpec {
                    kind: if iso { "isotropic" } else { "aniso_quadratic" }.into(),
                    n: self.dim,
                    p: self.exponent,
                    weights: if iso { None } else { Some(weights.clone()) },
                })
            }
            Family::Custom { .. } => None,
        }
    }

    /// The energy density `f(η)`. Requires `η != 0`.
    pub fn f(&self, eta: &[f64]) -> f64 {
        debug_assert_eq!(eta.len(), self.dim);
        match &self.family {
            Family::Quadratic { weights } => {
                let q: f64 = weights.iter().zip(eta).map(|(a, e)| a * e * e).sum();
                q.powf(self.exponent / 2.0) / self.exponent
            }
            Family::Custom { f, .. } => f(eta),
        }
    }

    /// `A(η) = ∇f(η)`. Requires `η != 0`.
    pub fn grad_f(&self, eta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(eta.len(), self.dim);
        match &self.family {
            Family::Quadratic { weights } => {
                let q: f64 = weights.iter().zip(eta).map(|(a, e)| a * e * e).sum();
                let s = q.powf((self.exponent - 2.0) / 2.0);
                weights.iter().zip(eta).map(|(a, e)| s * a * e).collect()
            }
            Family::Custom { grad: Some(g), .. } => g(eta),
            Family::Custom { f, .. } => {
                let h = 1e-5 * geom::norm(eta);
                let mut out = vec![0.0; self.dim];
                let mut e = eta.to_vec();
                for i in 0..self.dim {
                    e[i] = eta[i] + h;
                    let fp = f(&e);
                    e[i] = eta[i] - h;
                    let fm = f(&e);
                    e[i] = eta[i];
                    out[i] = (fp - fm) / (2.0 * h);
                }
                out
            }
        }
    }

    /// `Hess f(η)` flattened row-major. Requires `η != 0`.
    pub fn hess_f(&self, eta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(eta.len(), self.dim);
        let n = self.dim;
        match &self.family {
            Family::Quadratic { weights } => {
                let p = self.exponent;
                let q: f64 = weights.iter().zip(eta).map(|(a, e)| a * e * e).sum();
                let s1 = q.powf((p - 2.0) / 2.0);
                let s2 = (p - 2.0) * q.powf((p - 4.0) / 2.0);
                let w: Vec<f64> = weights.iter().zip(eta).map(|(a, e)| a * e).collect();
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let mut v = s2 * w[i] * w[j];
                        if i == j {
                            v += s1 * weights[i];
                        }
                        out[i * n + j] = v;
                    }
                }
                out
            }
            Family::Custom { hess: Some(h), .. } => h(eta),
            Family::Custom { .. } => {
                let h = 1e-5 * geom::norm(eta);
                let mut out = vec![0.0; n * n];
                let mut e = eta.to_vec();
                for j in 0..n {
                    e[j] = eta[j] + h;
                    let gp = self.grad_f(&e);
                    e[j] = eta[j] - h;
                    let gm = self.grad_f(&e);
                    e[j] = eta[j];
                    for i in 0..n {
                        out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
                    }
                }
                // Symmetrize.
                for i in 0..n {
                    for j in (i + 1)..n {
                        let m = 0.5 * (out[i * n + j] + out[j * n + i]);
                        out[i * n + j] = m;
                        out[j * n + i] = m;
                    }
                }
                out
            }
        }
    }
}

/// Outcome of sampling-based membership checks for the structure class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sample_count: usize,
    pub seed: u64,
    /// Worst relative error of `f(tη) = t^p f(η)` over samples.
    pub homogeneity_err: f64,
    /// Worst relative error of `<∇f(η), η> = p f(η)` over samples.
    pub euler_err: f64,
    /// Empirical max of `|η|^{p-2} / λ_min(Hess f)` (lower ellipticity ratio).
    pub alpha_from_min_eig: f64,
    /// Empirical max of `Σ |∂A_i/∂η_j| / |η|^{p-2}` (upper ellipticity ratio).
    pub alpha_from_abs_sum: f64,
    /// Empirical min of the monotonicity ratio
    /// `<A(η)-A(η'), η-η'> / ((|η|+|η'|)^{p-2} |η-η'|^2)`.
    pub monotonicity_c_inv: f64,
    pub homogeneity_tol: f64,
    pub euler_tol: f64,
    pub passed: bool,
}

/// Samples the structure-class conditions at `sample_count` deterministic
/// pseudo-random points. Failures are reported, not raised.
///
/// Magnitudes are confined to `[1e-3, 1e3]`; nearer the origin the operator
/// is merely continuous and floating point degrades.
pub fn validate_structure(
    s: &StructureFunction,
    sample_count: usize,
    seed: u64,
) -> ValidationReport {
    let n = s.dim;
    let p = s.exponent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homogeneity_tol = 1e-8;
    let euler_tol = 1e-8;

    let mut homogeneity_err: f64 = 0.0;
    let mut euler_err: f64 = 0.0;
    let mut alpha_min_eig: f64 = 0.0;
    let mut alpha_abs_sum: f64 = 0.0;
    let mut mono_c: f64 = f64::INFINITY;

    for _ in 0..sample_count {
        let eta = sample_point(&mut rng, n);
        let fe = s.f(&eta);
        // Homogeneity f(t eta) = t^p f(eta).
        let t = 10f64.powf(rng.gen_range(-1.0..1.0));
        let scaled = geom::scale(&eta, t);
        let err = (s.f(&scaled) - t.powf(p) * fe).abs() / fe.abs().max(1e-300);
        homogeneity_err = homogeneity_err.max(err / t.powf(p).max(1.0));
        // Euler identity <grad f, eta> = p f.
        let g = s.grad_f(&eta);
        let err = (geom::dot(&g, &eta) - p * fe).abs() / (p * fe).abs().max(1e-300);
        euler_err = euler_err.max(err);
        // Ellipticity from the Hessian.
        let hess = s.hess_f(&eta);
        let scale = geom::norm(&eta).powf(p - 2.0);
        let min_eig = sym_min_eig(&hess, n);
        if min_eig > 0.0 {
            alpha_min_eig = alpha_min_eig.max(scale / min_eig);
        } else {
            alpha_min_eig = f64::INFINITY;
        }
        let abs_sum: f64 = hess.iter().map(|v| v.abs()).sum();
        alpha_abs_sum = alpha_abs_sum.max(abs_sum / scale);
        // Monotonicity of eqn-type structure bounds on a sampled pair.
        let eta2 = sample_point(&mut rng, n);
        let g2 = s.grad_f(&eta2);
        let de = geom::sub(&eta, &eta2);
        let dn = geom::norm(&de);
        if dn > 1e-12 * (geom::norm(&eta) + geom::norm(&eta2)) {
            let lhs = geom::dot(&geom::sub(&g, &g2), &de);
            let w = (geom::norm(&eta) + geom::norm(&eta2)).powf(p - 2.0) * dn * dn;
            mono_c = mono_c.min(lhs / w);
        }
    }

    let passed = homogeneity_err < homogeneity_tol
        && euler_err < euler_tol
        && alpha_min_eig.is_finite()
        && mono_c > 0.0;
    ValidationReport {
        sample_count,
        seed,
        homogeneity_err,
        euler_err,
        alpha_from_min_eig: alpha_min_eig,
        alpha_from_abs_sum: alpha_abs_sum,
        monotonicity_c_inv: mono_c,
        homogeneity_tol,
        euler_tol,
        passed,
    }
}

/// Direction uniform on the sphere (Box-Muller normals), magnitude
/// log-uniform in [1e-3, 1e3].
fn sample_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; n];
        for i in 0..n {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            v[i] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        if let Some(d) = geom::unit(&v) {
            let r = 10f64.powf(rng.gen_range(-3.0..3.0));
            return geom::scale(&d, r);
        }
    }
}

/// Smallest eigenvalue of a small symmetric matrix.
fn sym_min_eig(m: &[f64], n: usize) -> f64 {
    let a = nalgebra::DMatrix::from_row_slice(n, n, m);
    let eig = a.symmetric_eigenvalues();
    eig.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(s: &StructureFunction, eta: &[f64]) -> Vec<f64> {
        let h = 1e-6 * geom::norm(eta);
        let mut out = vec![0.0; eta.len()];
        let mut e = eta.to_vec();
        for i in 0..eta.len() {
            e[i] = eta[i] + h;
            let fp = s.f(&e);
            e[i] = eta[i] - h;
            let fm = s.f(&e);
            e[i] = eta[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    #[test]
    fn isotropic_values_p2() {
        let s = build_isotropic(3, 2.0).unwrap();
        assert!((s.f(&[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let g = s.grad_f(&[1.0, 0.0, 0.0]);
        assert!(geom::dist(&g, &[1.0, 0.0, 0.0]) < 1e-15);
        // Quadratic case: grad f = eta.
        assert!((s.f(&[3.0, 4.0, 0.0]) - 12.5).abs() < 1e-12);
        let g = s.grad_f(&[3.0, 4.0, 0.0]);
        assert!(geom::dist(&g, &[3.0, 4.0, 0.0]) < 1e-12);
    }

    #[test]
    fn isotropic_values_p25() {
        // f = |eta|^p / p at eta = (0,0,2): 2^2.5 / 2.5, grad = (0,0,2^{1.5});
        // cross-checked against the finite-difference gradient oracle.
        let s = build_isotropic(3, 2.5).unwrap();
        let eta = [0.0, 0.0, 2.0];
        assert!((s.f(&eta) - 2f64.powf(2.5) / 2.5).abs() < 1e-12);
        let g = s.grad_f(&eta);
        assert!(geom::dist(&g, &[0.0, 0.0, 2f64.powf(1.5)]) < 1e-12);
        let fd = fd_grad(&s, &eta);
        assert!(geom::dist(&g, &fd) / geom::norm(&g) < 1e-8);
    }

    #[test]
    fn anisotropic_matches_isotropic_with_unit_weights() {
        let iso = build_isotropic(3, 1.7).unwrap();
        let a = build_anisotropic_quadratic(3, 1.7, &[1.0, 1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let eta = sample_point(&mut rng, 3);
            assert!((iso.f(&eta) - a.f(&eta)).abs() <= 1e-12 * iso.f(&eta).abs());
            assert!(geom::dist(&iso.grad_f(&eta), &a.grad_f(&eta)) < 1e-10 * geom::norm(&eta).powf(0.7));
        }
    }

    #[test]
    fn anisotropic_values() {
        let s = build_anisotropic_quadratic(3, 2.0, &[2.0, 1.0, 1.0]).unwrap();
        assert!((s.f(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        let g = s.grad_f(&[1.0, 0.0, 0.0]);
        assert!(geom::dist(&g, &[2.0, 0.0, 0.0]) < 1e-15);
    }

    #[test]
    fn anisotropic_gradient_matches_fd_oracle() {
        let s = build_anisotropic_quadratic(3, 1.5, &[4.0, 1.0, 1.0]).unwrap();
        let eta = [1.0, 1.0, 0.0];
        let g = s.grad_f(&eta);
        let fd = fd_grad(&s, &eta);
        assert!(geom::dist(&g, &fd) / geom::norm(&g) < 1e-6);
    }

    #[test]
    fn hessian_matches_fd_of_gradient() {
        let s = build_anisotropic_quadratic(3, 1.5, &[4.0, 1.0, 2.0]).unwrap();
        let eta = [0.3, -1.1, 0.7];
        let hess = s.hess_f(&eta);
        let h = 1e-6;
        for j in 0..3 {
            let mut ep = eta;
            let mut em = eta;
            ep[j] += h;
            em[j] -= h;
            let gp = s.grad_f(&ep);
            let gm = s.grad_f(&em);
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!(
                    (hess[i * 3 + j] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "H[{i}{j}]"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_isotropic(3, 3.0).is_err());
        assert!(build_isotropic(3, 1.0).is_err());
        assert!(build_anisotropic_quadratic(3, 2.0, &[1.0, -1.0, 1.0]).is_err());
        assert!(build_anisotropic_quadratic(3, 2.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn validation_passes_for_builtins() {
        let s = build_isotropic(3, 2.0).unwrap();
        let r = validate_structure(&s, 200, 42);
        assert!(r.passed, "{r:?}");
        assert!(r.homogeneity_err < 1e-10);
        assert!(r.euler_err < 1e-10);

        let s = build_anisotropic_quadratic(3, 1.2, &[9.0, 1.0, 1.0]).unwrap();
        let r = validate_structure(&s, 200, 42);
        assert!(r.passed, "{r:?}");
        assert!(r.alpha_from_min_eig.is_finite());
        assert!(r.monotonicity_c_inv > 0.0);
    }

    #[test]
    fn validation_flags_broken_density() {
        // f + 1 breaks homogeneity (and Euler).
        let s = build_custom(
            3,
            2.0,
            Box::new(|e: &[f64]| 0.5 * geom::dot(e, e) + 1.0),
            None,
            None,
        )
        .unwrap();
        let r = validate_structure(&s, 100, 1);
        assert!(!r.passed);
        assert!(r.homogeneity_err > 1e-4);
    }

    #[test]
    fn custom_fd_fallbacks_agree_with_closed_form() {
        let reference = build_anisotropic_quadratic(2, 1.5, &[3.0, 1.0]).unwrap();
        let s = build_custom(
            2,
            1.5,
            Box::new(|e: &[f64]| (3.0 * e[0] * e[0] + e[1] * e[1]).powf(0.75) / 1.5),
            None,
            None,
        )
        .unwrap();
        let eta = [0.8, -0.5];
        assert!(geom::dist(&s.grad_f(&eta), &reference.grad_f(&eta)) < 1e-7);
        let (ha, hb) = (s.hess_f(&eta), reference.hess_f(&eta));
        for (a, b) in ha.iter().zip(&hb) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn spec_roundtrip() {
        let s = build_anisotropic_quadratic(3, 1.5, &[2.0, 1.0, 1.0]).unwrap();
        let spec = s.spec().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: StructureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let s2 = from_spec(&back).unwrap();
        assert_eq!(s2.dim(), 3);
        assert!((s2.exponent() - 1.5).abs() < 1e-15);
    }
}
