//! Exterior capacitary problem on truncated Cartesian grids.
//!
//! `solve_capacitary` produces the discrete capacitary function of a convex
//! body for a structure `A = ∇f`, with capacity estimated two ways: a level
//! band average of the energy (the coarea identity makes any band between
//! the outer boundary values and 1 yield the capacity) and the same average
//! over a different band, reported as the flux estimate. Checks for level-set
//! convexity, radial monotonicity, far-field decay, and the discrete maximum
//! principle accompany the solution.

mod assemble;
mod density;
mod grid;
mod mg;
mod solver;

pub use grid::{ExteriorGrid, NodeClass};
pub use solver::{
    radial_ball_capacity, solve_capacitary, solve_capacitary_with_init, InitStrategy,
    SolverConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geom;
use crate::quadrature::DirectionGrid;
use crate::structure::StructureFunction;
use crate::Result;

/// Discrete exterior solution with capacity estimates and error indicators.
pub struct CapacitarySolution {
    pub grid: ExteriorGrid,
    /// Nodal values in [0, 1]; 1 on body nodes.
    pub u: Vec<f64>,
    /// Level-band energy estimate of `∫ <A(∇u), ∇u>`.
    pub capacity_energy: f64,
    /// Flux-identity estimate at the default level.
    pub capacity_flux: f64,
    /// Final relative nonlinear residual.
    pub residual_norm: f64,
    /// Final continuation epsilon.
    pub regularization_eps: f64,
    /// |energy - flux| indicator.
    pub discrepancy: f64,
    /// |Cap(h) - Cap(2h)| when error bars were requested.
    pub richardson_gap: Option<f64>,
    /// Per-round drift of the far-field matching.
    pub matching_drift: Vec<f64>,
    pub newton_iterations: usize,
    /// Largest Dirichlet value on the outer skin.
    pub max_outer_u: f64,
    /// Capacity estimate used for the final far-field datum.
    pub cap_matched: f64,
    pub(crate) exponent: f64,
}

impl CapacitarySolution {
    /// Combined error bar: estimator discrepancy plus the grid-refinement
    /// gap (doubled discrepancy when no refinement solve was run).
    pub fn error_bar(&self) -> f64 {
        self.discrepancy + self.richardson_gap.unwrap_or(self.discrepancy)
    }

    /// Multilinear interpolation of u at a physical point.
    pub fn eval_u(&self, x: &[f64]) -> Option<f64> {
        let mut p = [0.0; 3];
        p[..self.grid.dim].copy_from_slice(&x[..self.grid.dim]);
        solver::interp(&self.grid, &self.u, &p)
    }

    /// Gradient of the multilinear interpolant at a physical point.
    pub fn eval_grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let g = &self.grid;
        let gc = g.to_grid(&x[..g.dim]);
        let mut i0 = [0usize; 3];
        let mut fr = [0.0f64; 3];
        for d in 0..g.dim {
            if gc[d] < 0.0 || gc[d] > (g.dims[d] - 1) as f64 {
                return None;
            }
            let f = gc[d].floor().min((g.dims[d] - 2) as f64).max(0.0);
            i0[d] = f as usize;
            fr[d] = (gc[d] - f).clamp(0.0, 1.0);
        }
        let val = |dx: usize, dy: usize, dz: usize| -> f64 {
            self.u[g.index(i0[0] + dx, i0[1] + dy, i0[2] + dz)]
        };
        let mut out = vec![0.0; g.dim];
        if g.dim == 2 {
            let (fx, fy) = (fr[0], fr[1]);
            out[0] = ((val(1, 0, 0) - val(0, 0, 0)) * (1.0 - fy)
                + (val(1, 1, 0) - val(0, 1, 0)) * fy)
                / g.h;
            out[1] = ((val(0, 1, 0) - val(0, 0, 0)) * (1.0 - fx)
                + (val(1, 1, 0) - val(1, 0, 0)) * fx)
                / g.h;
        } else {
            let (fx, fy, fz) = (fr[0], fr[1], fr[2]);
            out[0] = (((val(1, 0, 0) - val(0, 0, 0)) * (1.0 - fy)
                + (val(1, 1, 0) - val(0, 1, 0)) * fy)
                * (1.0 - fz)
                + ((val(1, 0, 1) - val(0, 0, 1)) * (1.0 - fy)
                    + (val(1, 1, 1) - val(0, 1, 1)) * fy)
                    * fz)
                / g.h;
            out[1] = (((val(0, 1, 0) - val(0, 0, 0)) * (1.0 - fx)
                + (val(1, 1, 0) - val(1, 0, 0)) * fx)
                * (1.0 - fz)
                + ((val(0, 1, 1) - val(0, 0, 1)) * (1.0 - fx)
                    + (val(1, 1, 1) - val(1, 0, 1)) * fx)
                    * fz)
                / g.h;
            out[2] = (((val(0, 0, 1) - val(0, 0, 0)) * (1.0 - fx)
                + (val(1, 0, 1) - val(1, 0, 0)) * fx)
                * (1.0 - fy)
                + ((val(0, 1, 1) - val(0, 1, 0)) * (1.0 - fx)
                    + (val(1, 1, 1) - val(1, 1, 0)) * fx)
                    * fy)
                / g.h;
        }
        Some(out)
    }

    /// Writes the nodal array as flat little-endian f64 binary plus a JSON
    /// header `<path>.json` with dims, spacing, and origin.
    pub fn export_binary(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        for v in &self.u {
            f.write_all(&v.to_le_bytes())?;
        }
        let origin: Vec<f64> = (0..self.grid.dim)
            .map(|d| self.grid.center[d] - self.grid.halfwidth)
            .collect();
        let header = serde_json::json!({
            "dims": self.grid.dims[..self.grid.dim],
            "spacing": self.grid.h,
            "origin": origin,
        });
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&header).expect("header json"),
        )?;
        Ok(())
    }

    /// CSV slice `x,y(,z),u` along the plane `axis = index`, for plotting.
    pub fn export_csv_slice(&self, path: &std::path::Path, axis: usize, index: usize) -> Result<()> {
        use std::io::Write;
        let g = &self.grid;
        let mut f = std::fs::File::create(path)?;
        if g.dim == 2 {
            writeln!(f, "x,y,u")?;
        } else {
            writeln!(f, "x,y,z,u")?;
        }
        let mut write_node = |i: usize, j: usize, k: usize| -> Result<()> {
            let x = g.coords(i, j, k);
            let u = self.u[g.index(i, j, k)];
            if g.dim == 2 {
                writeln!(f, "{},{},{}", x[0], x[1], u)?;
            } else {
                writeln!(f, "{},{},{},{}", x[0], x[1], x[2], u)?;
            }
            Ok(())
        };
        match (g.dim, axis) {
            (2, _) => {
                for j in 0..g.dims[1] {
                    for i in 0..g.dims[0] {
                        write_node(i, j, 0)?;
                    }
                }
            }
            (3, 0) => {
                for k in 0..g.dims[2] {
                    for j in 0..g.dims[1] {
                        write_node(index, j, k)?;
                    }
                }
            }
            (3, 1) => {
                for k in 0..g.dims[2] {
                    for i in 0..g.dims[0] {
                        write_node(i, index, k)?;
                    }
                }
            }
            _ => {
                for j in 0..g.dims[1] {
                    for i in 0..g.dims[0] {
                        write_node(i, j, index)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Count of free nodes that are strict local extrema against their axis
    /// neighbors beyond `tol` (the discrete maximum principle forbids them).
    pub fn max_principle_violations(&self, tol: f64) -> usize {
        let g = &self.grid;
        let mut count = 0;
        let zr = if g.dim == 3 { 1..g.dims[2] - 1 } else { 0..1 };
        for k in zr {
            for j in 1..g.dims[1] - 1 {
                for i in 1..g.dims[0] - 1 {
                    let idx = g.index(i, j, k);
                    if g.class[idx] != NodeClass::Free {
                        continue;
                    }
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    let mut nbs = vec![
                        g.index(i - 1, j, k),
                        g.index(i + 1, j, k),
                        g.index(i, j - 1, k),
                        g.index(i, j + 1, k),
                    ];
                    if g.dim == 3 {
                        nbs.push(g.index(i, j, k - 1));
                        nbs.push(g.index(i, j, k + 1));
                    }
                    for nb in nbs {
                        lo = lo.min(self.u[nb]);
                        hi = hi.max(self.u[nb]);
                    }
                    let v = self.u[idx];
                    if v > hi + tol || v < lo - tol {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// Capacity from the flux identity at level `t`: a level-band energy average
/// over `(t, t2]` equals the capacity for any admissible band, so the value
/// is t-independent up to discretization error.
pub fn capacity_by_flux(
    sol: &CapacitarySolution,
    s: &StructureFunction,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain("flux level must lie in (0, 1)".into()));
    }
    if t <= sol.max_outer_u * 1.1 {
        return Err(Error::LevelSetOutsideGrid(format!(
            "level {t} reaches the outer boundary (max boundary value {:.3e})",
            sol.max_outer_u
        )));
    }
    if t >= 0.95 {
        return Err(Error::LevelSetOutsideGrid(
            "level too close to the body for a stable band".into(),
        ));
    }
    let t2 = 0.95f64.max(t + 0.02);
    let asm = assemble::Assembler::new(&sol.grid, sol.regularization_eps);
    let density = density::Density::of(s);
    Ok(solver::with_density(&density, s, |d| {
        asm.band_capacity(d, &sol.u, s.exponent(), t, t2)
    }))
}

/// Level-set convexity report for one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityLevel {
    pub level: f64,
    /// Nodes strictly inside the support hull of the superlevel node set but
    /// not in the set.
    pub violations: usize,
    /// Deepest such node's distance to the hull boundary (grid units of h).
    pub max_penetration_cells: f64,
}

/// Convex-hull penetration of superlevel node sets, via support functions of
/// the node cloud on a direction grid.
pub fn check_level_convexity(
    sol: &CapacitarySolution,
    levels: &[f64],
) -> Vec<ConvexityLevel> {
    let g = &sol.grid;
    let dirs = match g.dim {
        2 => DirectionGrid::circle(256),
        _ => DirectionGrid::icosphere(2),
    };
    let mut out = Vec::new();
    for &t in levels {
        // Support of the superlevel node set over the direction grid.
        let mut support = vec![f64::NEG_INFINITY; dirs.len()];
        let mut member = vec![false; g.node_count()];
        for k in 0..g.dims[2] {
            for j in 0..g.dims[1] {
                for i in 0..g.dims[0] {
                    let idx = g.index(i, j, k);
                    let inside = sol.u[idx] >= t || g.class[idx] == NodeClass::Body;
                    member[idx] = inside;
                    if inside {
                        let x = g.coords(i, j, k);
                        for (di, d) in dirs.iter().enumerate() {
                            let v = geom::dot(d, &x[..g.dim]);
                            if v > support[di] {
                                support[di] = v;
                            }
                        }
                    }
                }
            }
        }
        let mut violations = 0usize;
        let mut deepest: f64 = 0.0;
        for k in 0..g.dims[2] {
            for j in 0..g.dims[1] {
                for i in 0..g.dims[0] {
                    let idx = g.index(i, j, k);
                    if member[idx] {
                        continue;
                    }
                    let x = g.coords(i, j, k);
                    let mut depth = f64::INFINITY;
                    for (di, d) in dirs.iter().enumerate() {
                        depth = depth.min(support[di] - geom::dot(d, &x[..g.dim]));
                        if depth < 0.0 {
                            break;
                        }
                    }
                    if depth > 1e-9 {
                        violations += 1;
                        deepest = deepest.max(depth);
                    }
                }
            }
        }
        out.push(ConvexityLevel {
            level: t,
            violations,
            max_penetration_cells: deepest / g.h,
        });
    }
    out
}

/// Radial monotonicity and far-field decay diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// min over sampled exterior nodes of
    /// `<∇u, (z-x)/|z-x|> |x-z| / u(x)` (positive when u decays along rays).
    pub min_monotonicity_ratio: f64,
    /// Mean fitted exponent of u along rays in the far shell.
    pub u_decay_exponent: f64,
    /// Mean fitted exponent of |∇u| along rays in the far shell.
    pub grad_decay_exponent: f64,
    /// Shell used for the fits, in multiples of the body outer radius.
    pub shell: (f64, f64),
    /// Empirical constant of the two-sided decay bound
    /// `u^{p-1} / (Cap |x|^{p-n})` over the shell (max/min reported).
    pub decay_bound_ratio: (f64, f64),
}

/// Fits far-field decay exponents and checks the radial monotonicity bound
/// with respect to `center` (must lie well inside the body).
pub fn check_radial_monotonicity(
    sol: &CapacitarySolution,
    center: &[f64],
) -> MonotonicityReport {
    let g = &sol.grid;
    let n = g.dim;
    let p = sol.exponent;
    // Monotonicity ratio over exterior nodes with mid-range values.
    let mut min_ratio = f64::INFINITY;
    for k in 0..g.dims[2] {
        for j in 0..g.dims[1] {
            for i in 0..g.dims[0] {
                let idx = g.index(i, j, k);
                if g.class[idx] != NodeClass::Free {
                    continue;
                }
                let u = sol.u[idx];
                if !(0.05..=0.9).contains(&u) {
                    continue;
                }
                let x = g.coords(i, j, k);
                if let Some(grad) = sol.eval_grad(&x[..n]) {
                    let to_center = geom::sub(center, &x[..n]);
                    let dist = geom::norm(&to_center);
                    if dist < 2.0 * g.h {
                        continue;
                    }
                    let ratio = geom::dot(&grad, &to_center) / dist * dist / u;
                    min_ratio = min_ratio.min(ratio);
                }
            }
        }
    }
    // Decay fits along rays in the shell [3 r_out, R/2] (or scaled down when
    // the box is tighter).
    let r_lo = (3.0 * g.body_r_out).min(0.7 * (0.5 * g.halfwidth));
    let r_hi = 0.5 * g.halfwidth;
    let dirs = match n {
        2 => DirectionGrid::circle(64),
        _ => DirectionGrid::icosphere(1),
    };
    let samples = 8usize.max(((r_hi - r_lo) / g.h) as usize).min(24);
    let mut u_slopes = Vec::new();
    let mut g_slopes = Vec::new();
    let mut bound_lo = f64::INFINITY;
    let mut bound_hi: f64 = 0.0;
    let cap = sol.capacity_energy;
    for d in dirs.iter() {
        let mut lr = Vec::new();
        let mut lu = Vec::new();
        let mut lg = Vec::new();
        for si in 0..samples {
            let r = r_lo * ((r_hi / r_lo).powf(si as f64 / (samples - 1) as f64));
            let mut x = vec![0.0; n];
            for dd in 0..n {
                x[dd] = g.center[dd] + r * d[dd];
            }
            let (u, grad) = match (sol.eval_u(&x), sol.eval_grad(&x)) {
                (Some(u), Some(gr)) if u > 1e-14 => (u, gr),
                _ => continue,
            };
            let gn = geom::norm(&grad);
            if gn < 1e-300 {
                continue;
            }
            lr.push(r.ln());
            lu.push(u.ln());
            lg.push(gn.ln());
            let bound = u.powf(p - 1.0) / (cap * r.powf(p - n as f64));
            bound_lo = bound_lo.min(bound);
            bound_hi = bound_hi.max(bound);
        }
        if lr.len() >= 4 {
            u_slopes.push(geom::ls_slope(&lr, &lu));
            g_slopes.push(geom::ls_slope(&lr, &lg));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    MonotonicityReport {
        min_monotonicity_ratio: min_ratio,
        u_decay_exponent: mean(&u_slopes),
        grad_decay_exponent: mean(&g_slopes),
        shell: (r_lo / g.body_r_out, r_hi / g.body_r_out),
        decay_bound_ratio: (bound_lo, bound_hi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{ConvexBody, Polytope};
    use crate::structure::build_isotropic;

    fn quick_cfg(h: f64) -> SolverConfig {
        SolverConfig {
            h,
            r_out_factor: 8.0,
            tolerance: 1e-8,
            grid_levels: 2,
            ..Default::default()
        }
    }

    #[test]
    fn ball_capacity_2d_matches_radial_oracle() {
        // n = 2, p = 1.5: Cap(B(0,R)) = 2*pi*((n-p)/(p-1))^{p-1} R^{n-p}.
        let s = build_isotropic(2, 1.5).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let sol = solve_capacitary(&s, &ball, &quick_cfg(1.0 / 16.0)).unwrap();
        let exact = radial_ball_capacity(2, 1.5, 1.0);
        let rel = (sol.capacity_energy - exact).abs() / exact;
        assert!(rel < 0.03, "cap {} vs {exact} (rel {rel:.4})", sol.capacity_energy);
        // Flux and energy agree.
        assert!(sol.discrepancy / exact < 0.03, "discrepancy {}", sol.discrepancy);
    }

    #[test]
    fn ball_capacity_3d_coarse() {
        let s = build_isotropic(3, 2.0).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap();
        let sol = solve_capacitary(&s, &ball, &quick_cfg(0.25)).unwrap();
        let exact = 4.0 * std::f64::consts::PI;
        let rel = (sol.capacity_energy - exact).abs() / exact;
        assert!(rel < 0.06, "cap {} vs {exact} (rel {rel:.4})", sol.capacity_energy);
    }

    #[test]
    fn translation_invariance() {
        let s = build_isotropic(2, 1.5).unwrap();
        let cfg = quick_cfg(1.0 / 12.0);
        let b0 = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let b1 = ConvexBody::ball(vec![0.37, -0.81], 1.0).unwrap();
        let c0 = solve_capacitary(&s, &b0, &cfg).unwrap().capacity_energy;
        let c1 = solve_capacitary(&s, &b1, &cfg).unwrap().capacity_energy;
        assert!((c0 - c1).abs() / c0 < 0.02, "{c0} vs {c1}");
    }

    #[test]
    fn scaling_law_2d() {
        // Cap(2E) = 2^{n-p} Cap(E); solve the two bodies at unrelated
        // resolutions so the test is not vacuous.
        let s = build_isotropic(2, 1.5).unwrap();
        let sq = ConvexBody::polytope(Polytope::cube(2, 1.0).unwrap());
        let sq2 = sq.dilate(2.0);
        let c1 = solve_capacitary(&s, &sq, &quick_cfg(1.0 / 14.0))
            .unwrap()
            .capacity_energy;
        let c2 = solve_capacitary(&s, &sq2, &quick_cfg(1.0 / 9.0))
            .unwrap()
            .capacity_energy;
        let ratio = c2 / c1;
        let expect = 2f64.powf(0.5);
        assert!(
            (ratio - expect).abs() / expect < 0.03,
            "ratio {ratio} vs {expect}"
        );
    }

    #[test]
    fn flux_levels_agree() {
        let s = build_isotropic(2, 1.5).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let sol = solve_capacitary(&s, &ball, &quick_cfg(1.0 / 16.0)).unwrap();
        let f25 = capacity_by_flux(&sol, &s, 0.25).unwrap();
        let f50 = capacity_by_flux(&sol, &s, 0.5).unwrap();
        assert!((f25 - f50).abs() / f50 < 0.02, "{f25} vs {f50}");
        // t in the boundary layer is rejected.
        assert!(capacity_by_flux(&sol, &s, sol.max_outer_u * 0.5).is_err());
        // t -> 1 stays finite and lands near the energy value.
        let f90 = capacity_by_flux(&sol, &s, 0.9).unwrap();
        assert!(f90.is_finite());
        assert!((f90 - sol.capacity_energy).abs() / sol.capacity_energy < 0.1);
    }

    #[test]
    fn level_sets_convex_and_corruption_detected() {
        let s = build_isotropic(2, 1.5).unwrap();
        let sq = ConvexBody::polytope(Polytope::cube(2, 1.0).unwrap());
        let mut sol = solve_capacitary(&s, &sq, &quick_cfg(1.0 / 12.0)).unwrap();
        let report = check_level_convexity(&sol, &[0.2, 0.5, 0.8]);
        for lvl in &report {
            assert!(
                lvl.max_penetration_cells <= 1.0 + 1e-9,
                "level {} penetration {}",
                lvl.level,
                lvl.max_penetration_cells
            );
        }
        assert_eq!(sol.max_principle_violations(1e-7), 0);
        // Spike one far node: the superlevel set grows a detached island.
        let g = &sol.grid;
        let spike = g.index(g.dims[0] - 8, g.dims[1] / 2, 0);
        sol.u[spike] = 0.95;
        let report = check_level_convexity(&sol, &[0.5]);
        assert!(report[0].violations > 0);
        assert!(report[0].max_penetration_cells > 1.0);
        assert!(sol.max_principle_violations(1e-7) > 0);
    }

    #[test]
    fn radial_decay_and_monotonicity() {
        let s = build_isotropic(2, 1.5).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let sol = solve_capacitary(&s, &ball, &quick_cfg(1.0 / 16.0)).unwrap();
        let rep = check_radial_monotonicity(&sol, &[0.0, 0.0]);
        // (p-n)/(p-1) = -1 and (1-n)/(p-1) = -2 for n = 2, p = 1.5.
        assert!((rep.u_decay_exponent + 1.0).abs() < 0.1, "{rep:?}");
        assert!((rep.grad_decay_exponent + 2.0).abs() < 0.1, "{rep:?}");
        assert!(rep.min_monotonicity_ratio > 0.0, "{rep:?}");
        assert!(rep.decay_bound_ratio.0 > 0.0);
    }

    #[test]
    fn uniqueness_under_different_inits() {
        let s = build_isotropic(2, 1.5).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap();
        let cfg = quick_cfg(1.0 / 10.0);
        let a = solve_capacitary_with_init(&s, &ball, &cfg, &InitStrategy::FarField, None)
            .unwrap();
        let b = solve_capacitary_with_init(
            &s,
            &ball,
            &cfg,
            &InitStrategy::PerturbedFarField {
                seed: 7,
                amplitude: 0.5,
            },
            None,
        )
        .unwrap();
        let worst = a
            .u
            .iter()
            .zip(&b.u)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-5, "solutions differ by {worst}");
    }

    #[test]
    fn degenerate_body_rejected() {
        let s = build_isotropic(2, 1.5).unwrap();
        // A segment: zero inscribed radius.
        let flat = Polytope::new(
            vec![
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![1.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        let r = solve_capacitary(&s, &ConvexBody::polytope(flat), &quick_cfg(0.1));
        assert!(matches!(r, Err(Error::DegenerateBody(_)) | Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn grid_too_coarse_rejected() {
        let s = build_isotropic(2, 1.5).unwrap();
        let ball = ConvexBody::ball(vec![0.0, 0.0], 0.05).unwrap();
        let r = solve_capacitary(&s, &ball, &quick_cfg(0.25));
        assert!(matches!(r, Err(Error::GridTooCoarse(_))));
    }
}
