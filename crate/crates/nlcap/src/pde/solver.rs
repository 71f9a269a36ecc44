//! Damped Newton with epsilon continuation, far-field matching rounds, and
//! coarse-to-fine grid sequencing.

use serde::{Deserialize, Serialize};

use super::assemble::{cell_dims, Assembler};
use super::density::{CustomEval, Density, DensityEval, QuadraticEval};
use super::grid::{ExteriorGrid, NodeClass};
use super::mg::{pcg, Hierarchy};
use super::CapacitarySolution;
use crate::convex::ConvexBody;
use crate::error::Error;
use crate::fundsol::{dual_support, FundamentalSolution};
use crate::quadrature::{sphere_area, DirectionGrid};
use crate::structure::StructureFunction;
use crate::Result;

/// Solver parameters; serde mirrors the published JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Finest grid spacing.
    pub h: f64,
    /// Box half-width as a multiple of the body's outer radius (>= 4).
    pub r_out_factor: f64,
    /// Relative nonlinear residual target.
    pub tolerance: f64,
    /// Regularization continuation; run coarsest-first.
    pub eps_schedule: Vec<f64>,
    /// Far-field matching rounds per grid level.
    pub matching_rounds: usize,
    pub max_newton_iters: usize,
    /// Minimum body width in cells before GridTooCoarse.
    pub min_nodes_across: usize,
    /// Body mask offset in cells (staircase debias).
    pub mask_offset_cells: f64,
    /// Grid-sequencing levels (1 = solve only on the finest grid).
    pub grid_levels: usize,
    /// Also solve at 2h and report the capacity gap as an error indicator.
    pub error_bars: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            h: 0.125,
            r_out_factor: 8.0,
            tolerance: 1e-8,
            eps_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            matching_rounds: 3,
            max_newton_iters: 40,
            min_nodes_across: 6,
            mask_offset_cells: 0.5,
            grid_levels: 3,
            error_bars: false,
        }
    }
}

/// Initial iterate for the nonlinear solve.
#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Far-field profile from the matched fundamental solution.
    FarField,
    /// Constant value on the free region.
    Constant(f64),
    /// Far-field profile with seeded multiplicative noise.
    PerturbedFarField { seed: u64, amplitude: f64 },
}

/// Isotropic radial capacity of a ball: `ω_{n-1} ((n-p)/(p-1))^{p-1} R^{n-p}`.
pub fn radial_ball_capacity(n: usize, p: f64, radius: f64) -> f64 {
    sphere_area(n) * ((n as f64 - p) / (p - 1.0)).powf(p - 1.0) * radius.powf(n as f64 - p)
}

pub(super) struct SolveOutcome {
    pub u: Vec<f64>,
    pub grid: ExteriorGrid,
    pub capacity_energy: f64,
    pub capacity_flux: f64,
    pub residual_norm: f64,
    pub eps_final: f64,
    pub matching_drift: Vec<f64>,
    pub newton_iterations: usize,
    pub max_outer_u: f64,
    pub cap_matched: f64,
}

pub fn solve_capacitary(
    s: &StructureFunction,
    body: &ConvexBody,
    cfg: &SolverConfig,
) -> Result<CapacitarySolution> {
    solve_capacitary_with_init(s, body, cfg, &InitStrategy::FarField, None)
}

/// Full-control entry point: custom initial iterate and optional warm start
/// from a previous solution (interpolated onto the new grid).
pub fn solve_capacitary_with_init(
    s: &StructureFunction,
    body: &ConvexBody,
    cfg: &SolverConfig,
    init: &InitStrategy,
    warm: Option<&CapacitarySolution>,
) -> Result<CapacitarySolution> {
    if body.dim() != s.dim() {
        return Err(Error::Domain(
            "body and structure dimensions differ".into(),
        ));
    }
    let fs = dual_support(s, &DirectionGrid::standard(s.dim()))?;
    let density = Density::of(s);

    let richardson_gap = if cfg.error_bars {
        let mut coarse_cfg = cfg.clone();
        coarse_cfg.h = 2.0 * cfg.h;
        coarse_cfg.error_bars = false;
        coarse_cfg.grid_levels = cfg.grid_levels.saturating_sub(1).max(1);
        match run_multilevel(s, &fs, &density, body, &coarse_cfg, init, warm) {
            Ok(out) => Some(out.capacity_energy),
            Err(_) => None,
        }
    } else {
        None
    };

    let out = run_multilevel(s, &fs, &density, body, cfg, init, warm)?;
    let discrepancy = (out.capacity_energy - out.capacity_flux).abs();
    Ok(CapacitarySolution {
        grid: out.grid,
        u: out.u,
        capacity_energy: out.capacity_energy,
        capacity_flux: out.capacity_flux,
        residual_norm: out.residual_norm,
        regularization_eps: out.eps_final,
        discrepancy,
        richardson_gap: richardson_gap.map(|c| (c - out.capacity_energy).abs()),
        matching_drift: out.matching_drift,
        newton_iterations: out.newton_iterations,
        max_outer_u: out.max_outer_u,
        cap_matched: out.cap_matched,
        exponent: s.exponent(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_multilevel(
    s: &StructureFunction,
    fs: &FundamentalSolution,
    density: &Density,
    body: &ConvexBody,
    cfg: &SolverConfig,
    init: &InitStrategy,
    warm: Option<&CapacitarySolution>,
) -> Result<SolveOutcome> {
    let n = s.dim();
    let p = s.exponent();
    // Level spacings, coarse to fine; drop levels too coarse for the body.
    let mut spacings = Vec::new();
    for lev in (0..cfg.grid_levels.max(1)).rev() {
        let h = cfg.h * (1 << lev) as f64;
        let (r_in, _) = body.inner_outer_radius();
        if 2.0 * r_in >= cfg.min_nodes_across as f64 * h || lev == 0 {
            spacings.push(h);
        }
    }

    let mut prev: Option<(ExteriorGrid, Vec<f64>)> = None;
    let mut cap_est = f64::NAN;
    let mut outcome: Option<SolveOutcome> = None;
    for (li, &h) in spacings.iter().enumerate() {
        let grid = ExteriorGrid::build(
            body,
            h,
            cfg.r_out_factor,
            cfg.mask_offset_cells,
            cfg.min_nodes_across,
        )?;
        if cap_est.is_nan() {
            // Ball-law seed for the far-field datum.
            let r_eff = 0.5 * (grid.body_r_in + grid.body_r_out);
            cap_est = radial_ball_capacity(n, p, r_eff);
        }
        let mut u = vec![0.0; grid.node_count()];
        initialize(&grid, fs, cap_est, init, &mut u);
        match (&prev, warm) {
            (Some((pg, pu)), _) => inject_previous(pg, pu, &grid, &mut u),
            (None, Some(w)) if w.grid.dim == grid.dim => {
                inject_previous(&w.grid, &w.u, &grid, &mut u)
            }
            _ => {}
        }

        let coarsest = li == 0;
        let schedule: Vec<f64> = if coarsest {
            cfg.eps_schedule.clone()
        } else {
            vec![*cfg.eps_schedule.last().unwrap_or(&1e-6)]
        };
        let rounds = if li + 1 == spacings.len() {
            cfg.matching_rounds.max(1)
        } else {
            cfg.matching_rounds.clamp(1, 2)
        };

        let mut drift = Vec::new();
        let mut newton_total = 0;
        let mut residual_norm = f64::NAN;
        // The residual target for this level is set by the residual of the
        // level's initial iterate; later stages and rounds keep that scale.
        let mut level_target: Option<f64> = None;
        for _round in 0..rounds {
            set_outer_boundary(&grid, fs, cap_est, &mut u);
            for &eps in &schedule {
                let (its, rn) = newton_stage(&grid, density, s, eps, cfg, &mut level_target, &mut u)
                    .map_err(|e| match e {
                        Error::NonConvergence(msg) => Error::NonConvergence(format!(
                            "h = {h}, eps = {eps}: {msg}"
                        )),
                        other => other,
                    })?;
                newton_total += its;
                residual_norm = rn;
            }
            let asm = Assembler::new(&grid, *schedule.last().unwrap());
            let (t1, t2) = capacity_band(&grid, fs, cap_est);
            let new_cap = with_density(density, s, |d| asm.band_capacity(d, &u, p, t1, t2));
            drift.push((new_cap - cap_est).abs() / new_cap.abs().max(1e-300));
            cap_est = new_cap;
            if *drift.last().unwrap() < 1e-3 && drift.len() >= 2 {
                break;
            }
        }

        let eps_final = *schedule.last().unwrap();
        let asm = Assembler::new(&grid, eps_final);
        let (t1, t2) = capacity_band(&grid, fs, cap_est);
        let capacity_energy = with_density(density, s, |d| asm.band_capacity(d, &u, p, t1, t2));
        let tf = 0.5f64.max(t1 + 0.05);
        let capacity_flux =
            with_density(density, s, |d| asm.band_capacity(d, &u, p, tf, 0.92_f64.max(tf + 0.02)));
        let max_outer_u = grid
            .class
            .iter()
            .zip(&u)
            .filter(|(c, _)| **c == NodeClass::Outer)
            .map(|(_, v)| *v)
            .fold(0.0f64, f64::max);
        prev = Some((grid.clone(), u.clone()));
        outcome = Some(SolveOutcome {
            grid,
            u,
            capacity_energy,
            capacity_flux,
            residual_norm,
            eps_final,
            matching_drift: drift,
            newton_iterations: newton_total,
            max_outer_u,
            cap_matched: cap_est,
        });
    }
    Ok(outcome.expect("at least one grid level"))
}

/// Band `(t1, t2)` for the capacity estimator: clear of the outer boundary
/// values and of the cut cells at the body.
fn capacity_band(grid: &ExteriorGrid, fs: &FundamentalSolution, cap_est: f64) -> (f64, f64) {
    // Largest far-field value on the outer skin (attained at face centers).
    let mut boundary_max: f64 = 0.0;
    let r = grid.halfwidth;
    for axis in 0..grid.dim {
        let mut x = [0.0; 3];
        x[..grid.dim].copy_from_slice(&grid.center[..grid.dim]);
        for sign in [-1.0, 1.0] {
            x[axis] = grid.center[axis] + sign * r;
            let v = fs
                .capacitary_far_field(cap_est.max(1e-12), &x[..grid.dim])
                .unwrap_or(0.0);
            boundary_max = boundary_max.max(v);
            x[axis] = grid.center[axis];
        }
    }
    let t1 = (1.5 * boundary_max).clamp(0.15, 0.45);
    (t1, 0.9)
}

pub(super) fn with_density<R>(
    density: &Density,
    s: &StructureFunction,
    f: impl FnOnce(&dyn DensityEval) -> R,
) -> R {
    match density {
        Density::Quadratic { weights, p } => f(&QuadraticEval { weights, p: *p }),
        Density::Custom(_) => f(&CustomEval { s }),
    }
}

fn initialize(
    grid: &ExteriorGrid,
    fs: &FundamentalSolution,
    cap_est: f64,
    init: &InitStrategy,
    u: &mut [f64],
) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = match init {
        InitStrategy::PerturbedFarField { seed, .. } => {
            Some(rand_chacha::ChaCha8Rng::seed_from_u64(*seed))
        }
        _ => None,
    };
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let idx = grid.index(i, j, k);
                match grid.class[idx] {
                    NodeClass::Body => u[idx] = 1.0,
                    _ => {
                        let x = grid.coords(i, j, k);
                        let mut dx = [0.0; 3];
                        for d in 0..grid.dim {
                            dx[d] = x[d] - grid.center[d];
                        }
                        let base = match init {
                            InitStrategy::Constant(c) => *c,
                            _ => {
                                let r = (dx[..grid.dim])
                                    .iter()
                                    .map(|v| v * v)
                                    .sum::<f64>()
                                    .sqrt();
                                if r < grid.h {
                                    1.0
                                } else {
                                    fs.capacitary_far_field(cap_est, &dx[..grid.dim])
                                        .unwrap_or(0.0)
                                        .clamp(0.0, 1.0)
                                }
                            }
                        };
                        let noise = match (&mut rng, init) {
                            (Some(r), InitStrategy::PerturbedFarField { amplitude, .. }) => {
                                1.0 + amplitude * (r.gen::<f64>() - 0.5)
                            }
                            _ => 1.0,
                        };
                        u[idx] = (base * noise).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
}

fn set_outer_boundary(
    grid: &ExteriorGrid,
    fs: &FundamentalSolution,
    cap_est: f64,
    u: &mut [f64],
) {
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let idx = grid.index(i, j, k);
                if grid.class[idx] != NodeClass::Outer {
                    continue;
                }
                let x = grid.coords(i, j, k);
                let mut dx = [0.0; 3];
                for d in 0..grid.dim {
                    dx[d] = x[d] - grid.center[d];
                }
                u[idx] = fs
                    .capacitary_far_field(cap_est, &dx[..grid.dim])
                    .unwrap_or(0.0)
                    .clamp(0.0, 0.6);
            }
        }
    }
}

/// Interpolates a previous solution onto a new grid (free nodes only).
fn inject_previous(pg: &ExteriorGrid, pu: &[f64], grid: &ExteriorGrid, u: &mut [f64]) {
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let idx = grid.index(i, j, k);
                if grid.class[idx] != NodeClass::Free {
                    continue;
                }
                let x = grid.coords(i, j, k);
                if let Some(v) = interp(pg, pu, &x) {
                    u[idx] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Multilinear interpolation of nodal values at a physical point.
pub(super) fn interp(grid: &ExteriorGrid, u: &[f64], x: &[f64; 3]) -> Option<f64> {
    let g = grid.to_grid(&x[..grid.dim]);
    let mut i0 = [0usize; 3];
    let mut fr = [0.0f64; 3];
    for d in 0..grid.dim {
        if g[d] < 0.0 || g[d] > (grid.dims[d] - 1) as f64 {
            return None;
        }
        let f = g[d].floor().min((grid.dims[d] - 2) as f64).max(0.0);
        i0[d] = f as usize;
        fr[d] = (g[d] - f).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    let zspan = if grid.dim == 3 { 2 } else { 1 };
    for dz in 0..zspan {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { fr[0] } else { 1.0 - fr[0] })
                    * (if dy == 1 { fr[1] } else { 1.0 - fr[1] })
                    * if grid.dim == 3 {
                        if dz == 1 {
                            fr[2]
                        } else {
                            1.0 - fr[2]
                        }
                    } else {
                        1.0
                    };
                acc += w * u[grid.index(i0[0] + dx, i0[1] + dy, i0[2] + dz)];
            }
        }
    }
    Some(acc)
}

/// Newton iteration at fixed regularization; returns (iterations, final
/// residual relative to the level scale).
fn newton_stage(
    grid: &ExteriorGrid,
    density: &Density,
    s: &StructureFunction,
    eps: f64,
    cfg: &SolverConfig,
    level_target: &mut Option<f64>,
    u: &mut [f64],
) -> Result<(usize, f64)> {
    let asm = Assembler::new(grid, eps);
    let free: Vec<bool> = grid
        .class
        .iter()
        .map(|c| *c == NodeClass::Free)
        .collect();
    let n = u.len();
    let axis_weights = match density {
        Density::Quadratic { weights, .. } => {
            let mut w = [1.0; 3];
            w[..weights.len()].copy_from_slice(weights);
            w
        }
        Density::Custom(_) => [1.0; 3],
    };

    let mut r = vec![0.0; n];
    with_density(density, s, |d| asm.residual(d, u, &mut r));
    let r0 = norm(&r);
    if r0 < 1e-300 {
        return Ok((0, 0.0));
    }
    let target = *level_target.get_or_insert(cfg.tolerance * r0);
    let scale = target / cfg.tolerance;
    let mut rn = r0;
    let mut consecutive_fails = 0usize;
    for it in 0..cfg.max_newton_iters {
        if rn <= target {
            return Ok((it, rn / scale));
        }
        // Frozen-coefficient hierarchy for preconditioning (and the Picard
        // fallback operator).
        let cells = with_density(density, s, |d| asm.cell_coefficients(d, u));
        let hier = Hierarchy::build(grid, &cells, cell_dims(grid), axis_weights);

        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = if free[i] { -r[i] } else { 0.0 };
        }
        let mut dvec = vec![0.0; n];
        let rtol = 1e-2f64.min((0.3 * target / rn).max(1e-6));
        let (_, _) = with_density(density, s, |dens| {
            let mut apply = |x: &[f64], out: &mut [f64]| asm.jacobian_apply(dens, u, x, out);
            pcg(&hier, &free, &mut apply, &rhs, &mut dvec, rtol, 400)
        });

        let e0 = with_density(density, s, |d| asm.energy(d, u));
        let slope = dot(&r, &dvec);
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = u.to_vec();
        for _ in 0..30 {
            for i in 0..n {
                if free[i] {
                    trial[i] = u[i] + t * dvec[i];
                }
            }
            let e1 = with_density(density, s, |d| asm.energy(d, &trial));
            if e1 <= e0 + 1e-4 * t * slope || (slope >= 0.0 && e1 < e0) {
                u.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            consecutive_fails += 1;
            if consecutive_fails > 5 {
                return Err(Error::NonConvergence(format!(
                    "line search stalled at relative residual {:.3e}",
                    rn / r0
                )));
            }
            // Picard fallback: descend along the frozen-coefficient solve.
            let mut pic = vec![0.0; n];
            let hl = &hier.levels[0];
            let mut apply_s = |x: &[f64], out: &mut [f64]| hl.apply(x, out);
            pcg(&hier, &free, &mut apply_s, &rhs, &mut pic, 1e-2, 200);
            let mut t = 1.0;
            for _ in 0..30 {
                for i in 0..n {
                    if free[i] {
                        trial[i] = u[i] + t * pic[i];
                    }
                }
                let e1 = with_density(density, s, |d| asm.energy(d, &trial));
                if e1 < e0 {
                    u.copy_from_slice(&trial);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence(
                    "Picard fallback failed to reduce the energy".into(),
                ));
            }
        } else {
            consecutive_fails = 0;
        }
        with_density(density, s, |d| asm.residual(d, u, &mut r));
        rn = norm(&r);
    }
    if rn <= target * 10.0 {
        // Within an order of the target: accept with the achieved residual.
        return Ok((cfg.max_newton_iters, rn / scale));
    }
    Err(Error::NonConvergence(format!(
        "Newton budget exhausted at relative residual {:.3e}",
        rn / scale
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
