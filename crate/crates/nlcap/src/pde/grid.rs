//! Truncated Cartesian grids for the exterior problem.
//!
//! The grid is a cube `center + [-R, R]^n` of node spacing `h` with nodes
//! classified as body (Dirichlet u = 1), outer boundary (Dirichlet far-field
//! datum), or free. The box is centered at the body's Chebyshev center so
//! that translated bodies see the same geometry.

use crate::convex::ConvexBody;
use crate::error::Error;
use crate::quadrature::DirectionGrid;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    Body = 0,
    Free = 1,
    Outer = 2,
}

/// Node-centered grid over `center + [-R, R]^n`.
#[derive(Clone)]
pub struct ExteriorGrid {
    pub dim: usize,
    pub h: f64,
    pub halfwidth: f64,
    /// Nodes per side; `dims[2] = 1` in two dimensions.
    pub dims: [usize; 3],
    pub center: [f64; 3],
    pub class: Vec<NodeClass>,
    /// Largest |x - center| over the body.
    pub body_r_out: f64,
    /// Chebyshev radius of the body.
    pub body_r_in: f64,
    /// Body classification offset in units of h (staircase debias).
    pub mask_offset_cells: f64,
}

impl ExteriorGrid {
    /// Builds mask and geometry for `body`. `r_out_factor` fixes the box as
    /// `R = r_out_factor * max |x - center|`; `min_nodes_across` guards
    /// against unresolvably small bodies.
    pub fn build(
        body: &ConvexBody,
        h: f64,
        r_out_factor: f64,
        mask_offset_cells: f64,
        min_nodes_across: usize,
    ) -> Result<ExteriorGrid> {
        let dim = body.dim();
        if !(dim == 2 || dim == 3) {
            return Err(Error::Domain("grids exist for n in {2, 3}".into()));
        }
        if !(h > 0.0) || !(r_out_factor >= 4.0) {
            return Err(Error::Domain(
                "need h > 0 and r_out_factor >= 4 (far-field regime)".into(),
            ));
        }
        // Realize combos once; polytopes and balls test membership directly.
        let realized;
        let mask_body: &ConvexBody = match body {
            ConvexBody::Combo { .. } => {
                realized = ConvexBody::Polytope(
                    body.realize_polytope(&DirectionGrid::standard(dim))?,
                );
                &realized
            }
            other => other,
        };
        let (r_in, _) = mask_body.inner_outer_radius();
        if r_in < 1e-12 {
            return Err(Error::DegenerateBody(
                "body has empty interior (zero inscribed radius)".into(),
            ));
        }
        if 2.0 * r_in < min_nodes_across as f64 * h {
            return Err(Error::GridTooCoarse(format!(
                "body width {:.3e} spans fewer than {min_nodes_across} cells of h = {h:.3e}",
                2.0 * r_in
            )));
        }
        let center_v = match mask_body {
            ConvexBody::Polytope(p) => p.chebyshev_center().0,
            ConvexBody::Ball { center, .. } => center.clone(),
            ConvexBody::Combo { .. } => unreachable!(),
        };
        let mut center = [0.0; 3];
        center[..dim].copy_from_slice(&center_v);
        // Snap the center onto the grid lattice so reruns are reproducible.
        for c in center.iter_mut().take(dim) {
            *c = (*c / h).round() * h;
        }
        let grid_dir = DirectionGrid::standard(dim);
        let r_out = grid_dir
            .iter()
            .map(|d| {
                let shift: f64 = d
                    .iter()
                    .zip(center.iter())
                    .map(|(di, ci)| di * ci)
                    .sum();
                mask_body.support(d) - shift
            })
            .fold(0.0f64, f64::max);
        // Round the box up to a multiple of 16 cells per half-side so the
        // multigrid hierarchy nests; the extra margin only improves the
        // far-field truncation.
        let mut half_cells = ((r_out_factor * r_out) / h).ceil() as usize;
        half_cells = half_cells.div_ceil(16) * 16;
        let halfwidth = half_cells as f64 * h;
        let side = 2 * half_cells + 1;
        let mut dims = [1usize; 3];
        dims[..dim].copy_from_slice(&vec![side; dim]);

        let total = dims[0] * dims[1] * dims[2];
        let mut class = vec![NodeClass::Free; total];
        let offset = mask_offset_cells * h;
        let mut xyz = [0.0f64; 3];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = i + dims[0] * (j + dims[1] * k);
                    xyz[0] = center[0] + (i as f64 * h - halfwidth);
                    xyz[1] = center[1] + (j as f64 * h - halfwidth);
                    xyz[2] = center[2] + (k as f64 * h - halfwidth);
                    let on_skin = i == 0
                        || i + 1 == dims[0]
                        || j == 0
                        || j + 1 == dims[1]
                        || (dim == 3 && (k == 0 || k + 1 == dims[2]));
                    if on_skin {
                        class[idx] = NodeClass::Outer;
                    } else if mask_body.contains(&xyz[..dim], offset) {
                        class[idx] = NodeClass::Body;
                    }
                }
            }
        }
        if !class.contains(&NodeClass::Body) {
            return Err(Error::GridTooCoarse(
                "no grid node fell inside the body".into(),
            ));
        }
        Ok(ExteriorGrid {
            dim,
            h,
            halfwidth,
            dims,
            center,
            class,
            body_r_out: r_out,
            body_r_in: r_in,
            mask_offset_cells,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Physical coordinates of node `(i, j, k)`.
    pub fn coords(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.center[0] + (i as f64 * self.h - self.halfwidth),
            self.center[1] + (j as f64 * self.h - self.halfwidth),
            self.center[2] + if self.dim == 3 {
                k as f64 * self.h - self.halfwidth
            } else {
                0.0
            },
        ]
    }

    /// Fractional grid coordinates of a physical point.
    pub fn to_grid(&self, x: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for d in 0..self.dim {
            g[d] = (x[d] - self.center[d] + self.halfwidth) / self.h;
        }
        g
    }
}
