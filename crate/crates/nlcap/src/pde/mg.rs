//! Geometric multigrid on a 5/7-point surrogate operator, used as the
//! preconditioner for conjugate gradients on the true Jacobian.
//!
//! The surrogate freezes the Hessian of the density to its isotropic scale
//! per cell (times the per-axis quadratic weights), which assembles to the
//! classical weighted stencil. Smoothing is symmetric Gauss-Seidel, so one
//! V-cycle is a symmetric positive definite preconditioner.

use super::grid::{ExteriorGrid, NodeClass};

pub struct Level {
    pub dim: usize,
    pub dims: [usize; 3],
    pub h: f64,
    pub free: Vec<bool>,
    /// Face coefficients per axis; `face[a]` has one entry per node pair
    /// `(i, i + e_a)`, already scaled by `h^{dim-2}`.
    pub face: [Vec<f64>; 3],
    pub diag: Vec<f64>,
}

pub struct Hierarchy {
    pub levels: Vec<Level>,
}

fn face_len(dims: [usize; 3], dim: usize, axis: usize) -> usize {
    let mut d = dims;
    d[axis] -= 1;
    if dim == 2 {
        d[2] = 1;
    }
    d[0] * d[1] * d[2]
}

impl Level {
    fn build(
        dim: usize,
        dims: [usize; 3],
        h: f64,
        free: Vec<bool>,
        cells: &[f64],
        cdims: [usize; 3],
        axis_weights: &[f64; 3],
    ) -> Level {
        let scale = h.powi(dim as i32 - 2);
        let mut face = [Vec::new(), Vec::new(), Vec::new()];
        for (axis, fvec) in face.iter_mut().enumerate().take(dim) {
            let mut fd = dims;
            fd[axis] -= 1;
            let mut v = vec![0.0; face_len(dims, dim, axis)];
            let others: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
            for k in 0..if dim == 3 { fd[2] } else { 1 } {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        // Average the coefficients of the cells sharing this
                        // edge; out-of-range or body cells contribute zero.
                        let mut acc = 0.0;
                        let mut cnt = 0.0;
                        let idx = [i, j, k];
                        let combos = 1usize << others.len();
                        for bits in 0..combos {
                            let mut c = [0isize; 3];
                            c[axis] = idx[axis] as isize;
                            let mut ok = true;
                            for (oi, &oa) in others.iter().enumerate() {
                                let shift = ((bits >> oi) & 1) as isize;
                                let v = idx[oa] as isize - shift;
                                if v < 0 || v as usize >= cdims[oa] {
                                    ok = false;
                                    break;
                                }
                                c[oa] = v;
                            }
                            if ok {
                                let ci = c[0] as usize
                                    + cdims[0] * (c[1] as usize + cdims[1] * c[2] as usize);
                                acc += cells[ci];
                                cnt += 1.0;
                            }
                        }
                        let w = if cnt > 0.0 { acc / cnt } else { 0.0 };
                        v[i + fd[0] * (j + fd[1] * k)] = scale * axis_weights[axis] * w;
                    }
                }
            }
            *fvec = v;
        }
        let mut lvl = Level {
            dim,
            dims,
            h,
            free,
            face,
            diag: Vec::new(),
        };
        lvl.diag = lvl.compute_diag();
        lvl
    }

    fn compute_diag(&self) -> Vec<f64> {
        let n = self.dims[0] * self.dims[1] * self.dims[2];
        let mut diag = vec![1.0; n];
        for idx in 0..n {
            if !self.free[idx] {
                continue;
            }
            let (i, j, k) = self.unpack(idx);
            let mut d = 0.0;
            for axis in 0..self.dim {
                let coords = [i, j, k];
                if coords[axis] + 1 < self.dims[axis] {
                    d += self.face_at(axis, i, j, k);
                }
                if coords[axis] > 0 {
                    let mut c = coords;
                    c[axis] -= 1;
                    d += self.face_at(axis, c[0], c[1], c[2]);
                }
            }
            diag[idx] = if d > 0.0 { d } else { 1.0 };
        }
        diag
    }

    #[inline]
    fn unpack(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        (i, j, k)
    }

    #[inline]
    fn face_at(&self, axis: usize, i: usize, j: usize, k: usize) -> f64 {
        let mut fd = self.dims;
        fd[axis] -= 1;
        self.face[axis][i + fd[0] * (j + fd[1] * k)]
    }

    /// `out = A x` on free nodes (x must vanish on non-free nodes).
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let dims = self.dims;
        let zmax = if self.dim == 3 { dims[2] } else { 1 };
        for k in 0..zmax {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = i + dims[0] * (j + dims[1] * k);
                    if !self.free[idx] {
                        continue;
                    }
                    let mut acc = self.diag[idx] * x[idx];
                    for axis in 0..self.dim {
                        let coords = [i, j, k];
                        if coords[axis] + 1 < dims[axis] {
                            let w = self.face_at(axis, i, j, k);
                            let nb = idx + self.stride(axis);
                            acc -= w * x[nb];
                        }
                        if coords[axis] > 0 {
                            let mut c = coords;
                            c[axis] -= 1;
                            let w = self.face_at(axis, c[0], c[1], c[2]);
                            let nb = idx - self.stride(axis);
                            acc -= w * x[nb];
                        }
                    }
                    out[idx] = acc;
                }
            }
        }
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// One Gauss-Seidel sweep solving `A u = b`, forward or backward order.
    pub fn gs_sweep(&self, u: &mut [f64], b: &[f64], forward: bool) {
        let n = u.len();
        let indices: Box<dyn Iterator<Item = usize>> = if forward {
            Box::new(0..n)
        } else {
            Box::new((0..n).rev())
        };
        for idx in indices {
            if !self.free[idx] {
                continue;
            }
            let (i, j, k) = self.unpack(idx);
            let mut rhs = b[idx];
            for axis in 0..self.dim {
                let coords = [i, j, k];
                if coords[axis] + 1 < self.dims[axis] {
                    let w = self.face_at(axis, i, j, k);
                    rhs += w * u[idx + self.stride(axis)];
                }
                if coords[axis] > 0 {
                    let mut c = coords;
                    c[axis] -= 1;
                    let w = self.face_at(axis, c[0], c[1], c[2]);
                    rhs += w * u[idx - self.stride(axis)];
                }
            }
            u[idx] = rhs / self.diag[idx];
        }
    }
}

impl Hierarchy {
    /// Builds levels from the fine grid classification plus per-cell
    /// coefficients of the frozen operator.
    pub fn build(
        grid: &ExteriorGrid,
        cells_fine: &[f64],
        cdims_fine: [usize; 3],
        axis_weights: [f64; 3],
    ) -> Hierarchy {
        let dim = grid.dim;
        let mut levels = Vec::new();
        let mut free: Vec<bool> = grid
            .class
            .iter()
            .map(|c| *c == NodeClass::Free)
            .collect();
        let mut dims = grid.dims;
        let mut h = grid.h;
        let mut cells = cells_fine.to_vec();
        let mut cdims = cdims_fine;
        loop {
            levels.push(Level::build(dim, dims, h, free.clone(), &cells, cdims, &axis_weights));
            let coarsenable = (dims[0] - 1) % 2 == 0
                && dims[0] >= 17
                && (dims[1] - 1) % 2 == 0
                && (dim == 2 || ((dims[2] - 1) % 2 == 0 && dims[2] >= 17));
            if !coarsenable {
                break;
            }
            let ndims = [
                (dims[0] - 1) / 2 + 1,
                (dims[1] - 1) / 2 + 1,
                if dim == 3 { (dims[2] - 1) / 2 + 1 } else { 1 },
            ];
            // Coarse node free iff the coincident fine node is free.
            let mut nfree = vec![false; ndims[0] * ndims[1] * ndims[2]];
            for k in 0..ndims[2] {
                for j in 0..ndims[1] {
                    for i in 0..ndims[0] {
                        let fi = 2 * i + dims[0] * (2 * j + dims[1] * if dim == 3 { 2 * k } else { 0 });
                        nfree[i + ndims[0] * (j + ndims[1] * k)] = free[fi];
                    }
                }
            }
            // Coarse cell coefficient: mean of the children.
            let ncdims = [
                cdims[0] / 2,
                cdims[1] / 2,
                if dim == 3 { cdims[2] / 2 } else { 1 },
            ];
            let mut ncells = vec![0.0; ncdims[0] * ncdims[1] * ncdims[2]];
            for k in 0..ncdims[2] {
                for j in 0..ncdims[1] {
                    for i in 0..ncdims[0] {
                        let mut acc = 0.0;
                        let mut cnt = 0.0;
                        for dk in 0..if dim == 3 { 2 } else { 1 } {
                            for dj in 0..2 {
                                for di in 0..2 {
                                    let ci = 2 * i + di
                                        + cdims[0] * (2 * j + dj + cdims[1] * (2 * k + dk));
                                    acc += cells[ci];
                                    cnt += 1.0;
                                }
                            }
                        }
                        ncells[i + ncdims[0] * (j + ncdims[1] * k)] = acc / cnt;
                    }
                }
            }
            free = nfree;
            dims = ndims;
            cells = ncells;
            cdims = ncdims;
            h *= 2.0;
        }
        Hierarchy { levels }
    }

    /// One V-cycle applying the preconditioner to `b`, result in `x`.
    pub fn vcycle(&self, x: &mut [f64], b: &[f64]) {
        self.cycle(0, x, b);
    }

    fn cycle(&self, l: usize, x: &mut [f64], b: &[f64]) {
        let lvl = &self.levels[l];
        x.fill(0.0);
        if l + 1 == self.levels.len() {
            for _ in 0..20 {
                lvl.gs_sweep(x, b, true);
                lvl.gs_sweep(x, b, false);
            }
            return;
        }
        lvl.gs_sweep(x, b, true);
        lvl.gs_sweep(x, b, true);
        // Residual and restriction.
        let mut ax = vec![0.0; x.len()];
        lvl.apply(x, &mut ax);
        let mut r = vec![0.0; x.len()];
        for i in 0..x.len() {
            r[i] = if lvl.free[i] { b[i] - ax[i] } else { 0.0 };
        }
        let coarse = &self.levels[l + 1];
        let mut bc = vec![0.0; coarse.free.len()];
        restrict(lvl, coarse, &r, &mut bc);
        let mut xc = vec![0.0; bc.len()];
        self.cycle(l + 1, &mut xc, &bc);
        prolong_add(lvl, coarse, &xc, x);
        lvl.gs_sweep(x, b, false);
        lvl.gs_sweep(x, b, false);
    }
}

/// Full-weighting restriction (transpose of multilinear prolongation).
fn restrict(fine: &Level, coarse: &Level, r: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let fdims = fine.dims;
    let cdims = coarse.dims;
    let dim = fine.dim;
    let zmax = if dim == 3 { cdims[2] } else { 1 };
    for k in 0..zmax {
        for j in 0..cdims[1] {
            for i in 0..cdims[0] {
                let cidx = i + cdims[0] * (j + cdims[1] * k);
                if !coarse.free[cidx] {
                    continue;
                }
                let (fi, fj, fk) = (2 * i, 2 * j, if dim == 3 { 2 * k } else { 0 });
                let mut acc = 0.0;
                let span = 1i64;
                for dk in -span..=span {
                    if dim == 2 && dk != 0 {
                        continue;
                    }
                    for dj in -span..=span {
                        for di in -span..=span {
                            let (x, y, z) =
                                (fi as i64 + di, fj as i64 + dj, fk as i64 + dk);
                            if x < 0
                                || y < 0
                                || z < 0
                                || x >= fdims[0] as i64
                                || y >= fdims[1] as i64
                                || (dim == 3 && z >= fdims[2] as i64)
                            {
                                continue;
                            }
                            let w = weight1(di) * weight1(dj) * if dim == 3 { weight1(dk) } else { 1.0 };
                            let fidx = x as usize
                                + fdims[0] * (y as usize + fdims[1] * z as usize);
                            acc += w * r[fidx];
                        }
                    }
                }
                out[cidx] = acc;
            }
        }
    }
}

#[inline]
fn weight1(d: i64) -> f64 {
    if d == 0 {
        0.5
    } else {
        0.25
    }
}

/// Multilinear prolongation, added into the fine vector at free nodes.
fn prolong_add(fine: &Level, coarse: &Level, xc: &[f64], x: &mut [f64]) {
    let fdims = fine.dims;
    let cdims = coarse.dims;
    let dim = fine.dim;
    let zmax = if dim == 3 { fdims[2] } else { 1 };
    for k in 0..zmax {
        for j in 0..fdims[1] {
            for i in 0..fdims[0] {
                let fidx = i + fdims[0] * (j + fdims[1] * k);
                if !fine.free[fidx] {
                    continue;
                }
                let (ci, ri) = (i / 2, i % 2);
                let (cj, rj) = (j / 2, j % 2);
                let (ck, rk) = (k / 2, k % 2);
                let mut acc = 0.0;
                for dk in 0..=if dim == 3 { rk } else { 0 } {
                    for dj in 0..=rj {
                        for di in 0..=ri {
                            let (x_, y_, z_) = (ci + di, cj + dj, ck + dk);
                            if x_ >= cdims[0] || y_ >= cdims[1] || (dim == 3 && z_ >= cdims[2]) {
                                continue;
                            }
                            let w = 1.0
                                / ((1 + ri) as f64 * (1 + rj) as f64
                                    * if dim == 3 { (1 + rk) as f64 } else { 1.0 });
                            let cidx = x_ + cdims[0] * (y_ + cdims[1] * z_);
                            acc += w * xc[cidx];
                        }
                    }
                }
                x[fidx] += acc;
            }
        }
    }
}

/// Preconditioned conjugate gradients with a caller-supplied operator and the
/// V-cycle preconditioner. Vectors live on the full node set with zeros at
/// non-free nodes. Returns (iterations, achieved relative residual).
pub fn pcg(
    hier: &Hierarchy,
    free: &[bool],
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> (usize, f64) {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    apply(x, &mut q);
    for i in 0..n {
        r[i] = if free[i] { b[i] - q[i] } else { 0.0 };
    }
    let bnorm = norm(&r).max(1e-300);
    let mut z = vec![0.0; n];
    hier.vcycle(&mut z, &r);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut rn = bnorm;
    for it in 0..max_iter {
        if rn <= rtol * bnorm {
            return (it, rn / bnorm);
        }
        apply(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) {
            // Loss of positive definiteness; bail out with current iterate.
            return (it, rn / bnorm);
        }
        let alpha = rz / dq;
        for i in 0..n {
            if free[i] {
                x[i] += alpha * d[i];
                r[i] -= alpha * q[i];
            }
        }
        rn = norm(&r);
        hier.vcycle(&mut z, &r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            if free[i] {
                d[i] = z[i] + beta * d[i];
            }
        }
    }
    (max_iter, rn / bnorm)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
