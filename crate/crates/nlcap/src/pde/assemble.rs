//! Element assembly on the Kuhn (Freudenthal) simplex decomposition.
//!
//! Each grid cell splits into d! simplices whose edges follow axis paths from
//! the low corner to the high corner; piecewise-linear gradients are then
//! successive axis differences along the path. For constant coefficients the
//! assembled operator coincides with the standard 5/7-point stencil.

use super::density::DensityEval;
use super::grid::{ExteriorGrid, NodeClass};

pub const PERMS3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];
pub const PERMS2: [[usize; 2]; 2] = [[0, 1], [1, 0]];

pub struct Assembler<'a> {
    pub grid: &'a ExteriorGrid,
    pub eps: f64,
}

impl<'a> Assembler<'a> {
    pub fn new(grid: &'a ExteriorGrid, eps: f64) -> Self {
        Assembler { grid, eps }
    }

    #[inline]
    fn strides(&self) -> [usize; 3] {
        let d = self.grid.dims;
        [1, d[0], d[0] * d[1]]
    }

    /// Σ_T |T| W_eps(∇u_T) over all simplices with at least one non-body node.
    pub fn energy<D: DensityEval + ?Sized>(&self, dens: &D, u: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_cell(u, |tets| {
            for t in tets {
                total += t.vol * dens.value(&t.g, t.dim, self.eps);
            }
        });
        total
    }

    /// Residual of the discrete energy at free nodes (zero elsewhere).
    pub fn residual<D: DensityEval + ?Sized>(&self, dens: &D, u: &[f64], r: &mut [f64]) {
        r.fill(0.0);
        let class = &self.grid.class;
        let h = self.grid.h;
        self.for_each_cell(u, |tets| {
            for t in tets {
                let gw = dens.grad(&t.g, t.dim, self.eps);
                for j in 0..t.dim {
                    let delta = t.vol * gw[t.perm[j]] / h;
                    let (a, b) = (t.nodes[j], t.nodes[j + 1]);
                    if class[a] == NodeClass::Free {
                        r[a] -= delta;
                    }
                    if class[b] == NodeClass::Free {
                        r[b] += delta;
                    }
                }
            }
        });
    }

    /// Jacobian-vector product at the current state `u` (free nodes only).
    pub fn jacobian_apply<D: DensityEval + ?Sized>(
        &self,
        dens: &D,
        u: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let class = &self.grid.class;
        let h = self.grid.h;
        self.for_each_cell_pair(u, v, |tets| {
            for t in tets {
                let w = dens.hess_apply(&t.g, &t.gv, t.dim, self.eps);
                for j in 0..t.dim {
                    let delta = t.vol * w[t.perm[j]] / h;
                    let (a, b) = (t.nodes[j], t.nodes[j + 1]);
                    if class[a] == NodeClass::Free {
                        out[a] -= delta;
                    }
                    if class[b] == NodeClass::Free {
                        out[b] += delta;
                    }
                }
            }
        });
    }

    /// Per-cell isotropic Hessian scale for the multigrid surrogate.
    pub fn cell_coefficients<D: DensityEval + ?Sized>(&self, dens: &D, u: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let cdims = cell_dims(g);
        let mut out = vec![0.0; cdims[0] * cdims[1] * cdims[2]];
        let mut cell_idx = 0;
        self.for_each_cell(u, |tets| {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for t in tets {
                acc += dens.scalar_coefficient(&t.g, t.dim, self.eps);
                cnt += 1.0;
            }
            // Skipped (all-body) cells keep coefficient 0 and are defaulted
            // by the caller.
            out[cell_idx] = if cnt > 0.0 { acc / cnt } else { 0.0 };
            cell_idx += 1;
        });
        out
    }

    /// Capacity band estimator: `p/(t2-t1) * Σ f(∇u_T) |T|` over simplices
    /// whose mean nodal value lies in `(t1, t2]`, with the raw density f.
    pub fn band_capacity<D: DensityEval + ?Sized>(
        &self,
        dens: &D,
        u: &[f64],
        p: f64,
        t1: f64,
        t2: f64,
    ) -> f64 {
        let mut total = 0.0;
        self.for_each_cell(u, |tets| {
            for t in tets {
                if t.umean > t1 && t.umean <= t2 {
                    total += t.vol * dens.raw_value(&t.g, t.dim);
                }
            }
        });
        p * total / (t2 - t1)
    }

    /// Weighted boundary-shell integral: `(1/δ) Σ w(x_T) vol_T` over
    /// simplices whose centroid lies in the shell `0 < φ(x) <= δ` for the
    /// caller-supplied classifier (used by the surface-functional path).
    pub fn shell_integral(
        &self,
        u: &[f64],
        mut weight: impl FnMut(&[f64; 3], &[f64; 3]) -> Option<f64>,
    ) -> f64 {
        let mut total = 0.0;
        self.for_each_cell_with_pos(u, |tets| {
            for t in tets {
                if let Some(w) = weight(&t.centroid, &t.g) {
                    total += w * t.vol;
                }
            }
        });
        total
    }

    // -- iteration plumbing ------------------------------------------------

    #[inline]
    fn for_each_cell(&self, u: &[f64], mut visit: impl FnMut(&[Tet])) {
        let g = self.grid;
        let st = self.strides();
        let h = g.h;
        let cdims = cell_dims(g);
        let mut tets = [Tet::default(); 6];
        for ck in 0..cdims[2] {
            for cj in 0..cdims[1] {
                for ci in 0..cdims[0] {
                    let base = g.index(ci, cj, ck);
                    let count = fill_tets(g, u, base, &st, h, &mut tets);
                    visit(&tets[..count]);
                }
            }
        }
    }

    #[inline]
    fn for_each_cell_pair(&self, u: &[f64], v: &[f64], mut visit: impl FnMut(&[TetPair])) {
        let g = self.grid;
        let st = self.strides();
        let h = g.h;
        let cdims = cell_dims(g);
        let mut tets = [TetPair::default(); 6];
        for ck in 0..cdims[2] {
            for cj in 0..cdims[1] {
                for ci in 0..cdims[0] {
                    let base = g.index(ci, cj, ck);
                    let count = fill_tet_pairs(g, u, v, base, &st, h, &mut tets);
                    visit(&tets[..count]);
                }
            }
        }
    }

    #[inline]
    fn for_each_cell_with_pos(&self, u: &[f64], mut visit: impl FnMut(&[TetPos])) {
        let g = self.grid;
        let st = self.strides();
        let h = g.h;
        let cdims = cell_dims(g);
        let mut tets = [TetPos::default(); 6];
        for ck in 0..cdims[2] {
            for cj in 0..cdims[1] {
                for ci in 0..cdims[0] {
                    let base = g.index(ci, cj, ck);
                    let tmp = [Tet::default(); 6];
                    let mut plain = tmp;
                    let count = fill_tets(g, u, base, &st, h, &mut plain);
                    let corner = g.coords(ci, cj, ck);
                    for (t, dst) in plain[..count].iter().zip(tets.iter_mut()) {
                        let mut c = corner;
                        // Path centroid: corner + h * mean of node offsets.
                        let mut off = [0.0f64; 3];
                        let mut acc = [0.0f64; 3];
                        for j in 0..t.dim {
                            off[t.perm[j]] += 1.0;
                            for d in 0..3 {
                                acc[d] += off[d];
                            }
                        }
                        let nn = (t.dim + 1) as f64;
                        for d in 0..g.dim {
                            c[d] += h * acc[d] / nn;
                        }
                        *dst = TetPos {
                            centroid: c,
                            g: t.g,
                            vol: t.vol,
                        };
                    }
                    visit(&tets[..count]);
                }
            }
        }
    }
}

pub fn cell_dims(g: &ExteriorGrid) -> [usize; 3] {
    [
        g.dims[0] - 1,
        g.dims[1] - 1,
        if g.dim == 3 { g.dims[2] - 1 } else { 1 },
    ]
}

#[derive(Clone, Copy)]
pub struct Tet {
    pub nodes: [usize; 4],
    pub perm: [usize; 3],
    pub g: [f64; 3],
    pub vol: f64,
    pub umean: f64,
    pub dim: usize,
}

impl Default for Tet {
    fn default() -> Self {
        Tet {
            nodes: [0; 4],
            perm: [0; 3],
            g: [0.0; 3],
            vol: 0.0,
            umean: 0.0,
            dim: 0,
        }
    }
}

#[derive(Clone, Copy, Default)]
pub struct TetPair {
    pub nodes: [usize; 4],
    pub perm: [usize; 3],
    pub g: [f64; 3],
    pub gv: [f64; 3],
    pub vol: f64,
    pub dim: usize,
}

#[derive(Clone, Copy, Default)]
pub struct TetPos {
    pub centroid: [f64; 3],
    pub g: [f64; 3],
    pub vol: f64,
}

#[inline]
fn fill_tets(
    g: &ExteriorGrid,
    u: &[f64],
    base: usize,
    st: &[usize; 3],
    h: f64,
    out: &mut [Tet; 6],
) -> usize {
    let class = &g.class;
    if g.dim == 3 {
        // Skip cells entirely inside the body.
        let mut all_body = true;
        for dz in [0, st[2]] {
            for dy in [0, st[1]] {
                for dx in [0, st[0]] {
                    if class[base + dx + dy + dz] != NodeClass::Body {
                        all_body = false;
                    }
                }
            }
        }
        if all_body {
            return 0;
        }
        let vol = h * h * h / 6.0;
        for (ti, perm) in PERMS3.iter().enumerate() {
            let n0 = base;
            let n1 = n0 + st[perm[0]];
            let n2 = n1 + st[perm[1]];
            let n3 = n2 + st[perm[2]];
            let (u0, u1, u2, u3) = (u[n0], u[n1], u[n2], u[n3]);
            let mut grad = [0.0; 3];
            grad[perm[0]] = (u1 - u0) / h;
            grad[perm[1]] = (u2 - u1) / h;
            grad[perm[2]] = (u3 - u2) / h;
            out[ti] = Tet {
                nodes: [n0, n1, n2, n3],
                perm: *perm,
                g: grad,
                vol,
                umean: 0.25 * (u0 + u1 + u2 + u3),
                dim: 3,
            };
        }
        6
    } else {
        let mut all_body = true;
        for dy in [0, st[1]] {
            for dx in [0, st[0]] {
                if class[base + dx + dy] != NodeClass::Body {
                    all_body = false;
                }
            }
        }
        if all_body {
            return 0;
        }
        let vol = h * h / 2.0;
        for (ti, perm) in PERMS2.iter().enumerate() {
            let n0 = base;
            let n1 = n0 + st[perm[0]];
            let n2 = n1 + st[perm[1]];
            let (u0, u1, u2) = (u[n0], u[n1], u[n2]);
            let mut grad = [0.0; 3];
            grad[perm[0]] = (u1 - u0) / h;
            grad[perm[1]] = (u2 - u1) / h;
            out[ti] = Tet {
                nodes: [n0, n1, n2, n2],
                perm: [perm[0], perm[1], 0],
                g: grad,
                vol,
                umean: (u0 + u1 + u2) / 3.0,
                dim: 2,
            };
        }
        2
    }
}

#[inline]
fn fill_tet_pairs(
    g: &ExteriorGrid,
    u: &[f64],
    v: &[f64],
    base: usize,
    st: &[usize; 3],
    h: f64,
    out: &mut [TetPair; 6],
) -> usize {
    let mut tets = [Tet::default(); 6];
    let count = fill_tets(g, u, base, st, h, &mut tets);
    for (ti, t) in tets[..count].iter().enumerate() {
        let mut gv = [0.0; 3];
        for j in 0..t.dim {
            gv[t.perm[j]] = (v[t.nodes[j + 1]] - v[t.nodes[j]]) / h;
        }
        out[ti] = TetPair {
            nodes: t.nodes,
            perm: t.perm,
            g: t.g,
            gv,
            vol: t.vol,
            dim: t.dim,
        };
    }
    count
}
