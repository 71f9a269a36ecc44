//! Convex bodies: halfspace polytopes, balls, and Minkowski combinations.
//!
//! Polytopes are stored in halfspace form `{x : <x, ξ_i> <= q_i}` with unit
//! normals. Vertices are enumerated lazily by intersecting all n-subsets of
//! the bounding planes and filtering for feasibility; instances are desk
//! scale (tens of halfspaces), so the combinatorial route is fine.

use serde::{Deserialize, Serialize};
use std::cell::OnceCell;

use crate::error::Error;
use crate::geom;
use crate::quadrature::DirectionGrid;
use crate::Result;

/// Feasibility slack for vertex membership checks.
pub const VERTEX_TOL: f64 = 1e-9;

/// Intersection of halfspaces `<x, ξ_i> <= q_i` with unit normals.
pub struct Polytope {
    dim: usize,
    normals: Vec<Vec<f64>>,
    heights: Vec<f64>,
    vertices: OnceCell<Vec<Vec<f64>>>,
}

impl Clone for Polytope {
    fn clone(&self) -> Self {
        Polytope {
            dim: self.dim,
            normals: self.normals.clone(),
            heights: self.heights.clone(),
            vertices: OnceCell::new(),
        }
    }
}

impl std::fmt::Debug for Polytope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Polytope")
            .field("dim", &self.dim)
            .field("halfspaces", &self.normals.len())
            .finish()
    }
}

impl Polytope {
    /// Builds a polytope after normalizing the normals to unit length and
    /// verifying that the normal set bounds a compact body.
    pub fn new(normals: Vec<Vec<f64>>, heights: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != heights.len() {
            return Err(Error::Schema(
                "polytope needs matching nonempty normals and heights".into(),
            ));
        }
        let dim = normals[0].len();
        if !(dim == 2 || dim == 3) {
            return Err(Error::Domain("polytopes exist for n in {2, 3}".into()));
        }
        let mut unit_normals = Vec::with_capacity(normals.len());
        for nm in &normals {
            if nm.len() != dim {
                return Err(Error::Schema("inconsistent normal dimensions".into()));
            }
            let u = geom::unit(nm)
                .ok_or_else(|| Error::Schema("zero normal vector".into()))?;
            unit_normals.push(u);
        }
        // Pairwise distinct normals.
        for i in 0..unit_normals.len() {
            for j in (i + 1)..unit_normals.len() {
                if geom::dist(&unit_normals[i], &unit_normals[j]) < 1e-12 {
                    return Err(Error::Schema(format!(
                        "duplicate normals at {i} and {j}"
                    )));
                }
            }
        }
        let p = Polytope {
            dim,
            normals: unit_normals,
            heights,
            vertices: OnceCell::new(),
        };
        if !p.normals_bound_body() {
            return Err(Error::UnboundedBody(
                "normal set leaves an unbounded recession direction".into(),
            ));
        }
        Ok(p)
    }

    /// Axis box `[-a_1, a_1] x ... x [-a_n, a_n]`.
    pub fn axis_box(half_widths: &[f64]) -> Result<Self> {
        let n = half_widths.len();
        let mut normals = Vec::new();
        let mut heights = Vec::new();
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut nm = vec![0.0; n];
                nm[i] = s;
                normals.push(nm);
                heights.push(half_widths[i]);
            }
        }
        Polytope::new(normals, heights)
    }

    /// Cube `[-a, a]^n`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Polytope::axis_box(&vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Same normals with new heights.
    pub fn with_heights(&self, heights: Vec<f64>) -> Result<Self> {
        Polytope::new(self.normals.clone(), heights)
    }

    fn normals_bound_body(&self) -> bool {
        // Bounded iff no direction has all normals in its closed opposite
        // halfspace; probe on a standard grid.
        let grid = DirectionGrid::standard(self.dim);
        for d in grid.iter() {
            let best = self
                .normals
                .iter()
                .map(|nm| geom::dot(nm, d))
                .fold(f64::NEG_INFINITY, f64::max);
            if best < 1e-6 {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.normals
            .iter()
            .zip(&self.heights)
            .all(|(nm, q)| geom::dot(nm, x) <= q + slack)
    }

    /// Enumerated vertex list (cached).
    pub fn vertices(&self) -> &[Vec<f64>] {
        self.vertices.get_or_init(|| self.enumerate_vertices())
    }

    fn enumerate_vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim;
        let m = self.normals.len();
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut idx = vec![0usize; n];
        enumerate_subsets(m, n, &mut idx, 0, 0, &mut |subset| {
            if let Some(x) = solve_square(&self.normals, &self.heights, subset) {
                if self.contains(&x, VERTEX_TOL)
                    && !verts.iter().any(|v| geom::dist(v, &x) < 1e-8)
                {
                    verts.push(x);
                }
            }
        });
        verts
    }

    /// Exact support value: max over vertices of `<θ, v>`.
    pub fn support(&self, theta: &[f64]) -> f64 {
        self.vertices()
            .iter()
            .map(|v| geom::dot(theta, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Chebyshev center and inscribed radius.
    pub fn chebyshev_center(&self) -> (Vec<f64>, f64) {
        chebyshev(&self.normals, &self.heights, self.dim)
    }

    /// True if the interior is (numerically) empty.
    pub fn is_degenerate(&self) -> bool {
        let (_, r) = self.chebyshev_center();
        r < 1e-9 || self.vertices().len() <= self.dim
    }

    /// Faces with positive (n-1)-measure: `(normal index, area, vertex ring)`.
    ///
    /// For n = 3 the vertex ring is ordered around the face; for n = 2 it is
    /// the two segment endpoints.
    pub fn faces(&self) -> Result<Vec<Face>> {
        if self.is_degenerate() {
            return Err(Error::DegenerateBody(
                "polytope has empty interior".into(),
            ));
        }
        let mut out = Vec::new();
        for (i, (nm, q)) in self.normals.iter().zip(&self.heights).enumerate() {
            let on_face: Vec<Vec<f64>> = self
                .vertices()
                .iter()
                .filter(|v| (geom::dot(nm, v) - q).abs() < 1e-7)
                .cloned()
                .collect();
            if on_face.len() < self.dim {
                continue;
            }
            let (area, ring) = face_geometry(nm, &on_face, self.dim);
            if area > 1e-12 {
                out.push(Face {
                    normal_index: i,
                    normal: nm.clone(),
                    height: *q,
                    area,
                    ring,
                });
            }
        }
        Ok(out)
    }

    /// Quadrature points on face `face`, spaced about `spacing`, excluding a
    /// margin strip along the face boundary. Excluded area is reassigned by
    /// scaling the kept weights so they sum to the full face area.
    pub fn face_quadrature(
        &self,
        face: &Face,
        spacing: f64,
        margin: f64,
    ) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
        face_quadrature_impl(face, spacing, margin)
    }
}

/// One face of a polytope.
#[derive(Debug, Clone)]
pub struct Face {
    pub normal_index: usize,
    pub normal: Vec<f64>,
    pub height: f64,
    pub area: f64,
    /// Ordered boundary vertices of the face.
    pub ring: Vec<Vec<f64>>,
}

fn enumerate_subsets(
    m: usize,
    k: usize,
    idx: &mut Vec<usize>,
    depth: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        visit(idx);
        return;
    }
    for i in start..m {
        idx[depth] = i;
        enumerate_subsets(m, k, idx, depth + 1, i + 1, visit);
    }
}

fn solve_square(normals: &[Vec<f64>], heights: &[f64], subset: &[usize]) -> Option<Vec<f64>> {
    let n = subset.len();
    let mut a = nalgebra::DMatrix::zeros(n, n);
    let mut b = nalgebra::DVector::zeros(n);
    for (r, &i) in subset.iter().enumerate() {
        for c in 0..n {
            a[(r, c)] = normals[i][c];
        }
        b[r] = heights[i];
    }
    let lu = a.lu();
    if lu.determinant().abs() < 1e-10 {
        return None;
    }
    lu.solve(&b).map(|x| x.iter().cloned().collect())
}

/// Chebyshev center by enumerating active sets of the small LP
/// `max r : <x, ξ_i> + r <= q_i` when the instance is small, with a
/// subgradient ascent + active-set polish fallback for large normal sets.
pub fn chebyshev(normals: &[Vec<f64>], heights: &[f64], dim: usize) -> (Vec<f64>, f64) {
    let m = normals.len();
    let k = dim + 1;
    let feasible_r = |x: &[f64]| -> f64 {
        normals
            .iter()
            .zip(heights)
            .map(|(nm, q)| q - geom::dot(nm, x))
            .fold(f64::INFINITY, f64::min)
    };
    if m <= 40 {
        let mut best = (vec![0.0; dim], f64::NEG_INFINITY);
        let mut idx = vec![0usize; k];
        let lifted: Vec<Vec<f64>> = normals
            .iter()
            .map(|nm| {
                let mut v = nm.clone();
                v.push(1.0);
                v
            })
            .collect();
        enumerate_subsets(m, k, &mut idx, 0, 0, &mut |subset| {
            if let Some(xr) = solve_square(&lifted, heights, subset) {
                let (x, r) = (xr[..dim].to_vec(), xr[dim]);
                if r > best.1 && feasible_r(&x) >= r - 1e-9 {
                    best = (x, r);
                }
            }
        });
        if best.1 > f64::NEG_INFINITY {
            return best;
        }
    }
    // Subgradient ascent on the concave function x -> min_i (q_i - <x, ξ_i>).
    let mut x = vec![0.0; dim];
    let mut best_x = x.clone();
    let mut best_r = feasible_r(&x);
    let mut step = heights.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    for _ in 0..400 {
        let (mut worst, mut wi) = (f64::INFINITY, 0);
        for (i, (nm, q)) in normals.iter().zip(heights).enumerate() {
            let s = q - geom::dot(nm, &x);
            if s < worst {
                worst = s;
                wi = i;
            }
        }
        let g = geom::scale(&normals[wi], -1.0);
        geom::axpy(&mut x, step, &g);
        let r = feasible_r(&x);
        if r > best_r {
            best_r = r;
            best_x = x.clone();
            step *= 1.05;
        } else {
            x = best_x.clone();
            step *= 0.6;
        }
        if step < 1e-12 {
            break;
        }
    }
    (best_x, best_r)
}

fn face_geometry(normal: &[f64], verts: &[Vec<f64>], dim: usize) -> (f64, Vec<Vec<f64>>) {
    match dim {
        2 => {
            // A 2-D "face" is a segment; area is its length.
            let mut best = (0.0, verts[0].clone(), verts[0].clone());
            for i in 0..verts.len() {
                for j in (i + 1)..verts.len() {
                    let d = geom::dist(&verts[i], &verts[j]);
                    if d > best.0 {
                        best = (d, verts[i].clone(), verts[j].clone());
                    }
                }
            }
            (best.0, vec![best.1, best.2])
        }
        3 => {
            let c = centroid(verts);
            let e1 = geom::unit(&geom::sub(&verts[0], &c)).unwrap_or_else(|| {
                // All vertices coincide; zero-area face.
                vec![1.0, 0.0, 0.0]
            });
            let e2 = cross3(normal, &e1);
            let mut ordered: Vec<(f64, Vec<f64>)> = verts
                .iter()
                .map(|v| {
                    let d = geom::sub(v, &c);
                    (geom::dot(&d, &e2).atan2(geom::dot(&d, &e1)), v.clone())
                })
                .collect();
            ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let ring: Vec<Vec<f64>> = ordered.into_iter().map(|(_, v)| v).collect();
            let mut area = 0.0;
            for i in 0..ring.len() {
                let a = geom::sub(&ring[i], &c);
                let b = geom::sub(&ring[(i + 1) % ring.len()], &c);
                area += 0.5 * geom::norm(&cross3(&a, &b));
            }
            (area, ring)
        }
        _ => unreachable!(),
    }
}

fn centroid(verts: &[Vec<f64>]) -> Vec<f64> {
    let n = verts[0].len();
    let mut c = vec![0.0; n];
    for v in verts {
        geom::axpy(&mut c, 1.0, v);
    }
    geom::scale(&c, 1.0 / verts.len() as f64)
}

pub(crate) fn cross3(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn face_quadrature_impl(face: &Face, spacing: f64, margin: f64) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
    let dim = face.normal.len();
    match dim {
        2 => {
            let (a, b) = (&face.ring[0], &face.ring[1]);
            let len = geom::dist(a, b);
            let dir = geom::scale(&geom::sub(b, a), 1.0 / len);
            let usable = (len - 2.0 * margin).max(0.0);
            let count = (usable / spacing).floor().max(1.0) as usize;
            let mut pts = Vec::new();
            for i in 0..count {
                let t = margin + usable * (i as f64 + 0.5) / count as f64;
                let mut p = a.clone();
                geom::axpy(&mut p, t, &dir);
                pts.push(p);
            }
            let w = face.area / pts.len() as f64;
            let n = pts.len();
            (pts, vec![w; n], count)
        }
        3 => {
            // Rasterize the face polygon in its own plane.
            let c = centroid(&face.ring);
            let e1 = geom::unit(&geom::sub(&face.ring[0], &c)).unwrap();
            let e2 = cross3(&face.normal, &e1);
            let poly2: Vec<[f64; 2]> = face
                .ring
                .iter()
                .map(|v| {
                    let d = geom::sub(v, &c);
                    [geom::dot(&d, &e1), geom::dot(&d, &e2)]
                })
                .collect();
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in &poly2 {
                for i in 0..2 {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
            let mut pts = Vec::new();
            let mut covered = 0usize;
            let nx = (((hi[0] - lo[0]) / spacing).ceil() as usize).max(1);
            let ny = (((hi[1] - lo[1]) / spacing).ceil() as usize).max(1);
            for ix in 0..nx {
                for iy in 0..ny {
                    let px = lo[0] + (ix as f64 + 0.5) * (hi[0] - lo[0]) / nx as f64;
                    let py = lo[1] + (iy as f64 + 0.5) * (hi[1] - lo[1]) / ny as f64;
                    if point_in_polygon(&poly2, px, py)
                        && dist_to_polygon_boundary(&poly2, px, py) > margin
                    {
                        covered += 1;
                        let mut p = c.clone();
                        geom::axpy(&mut p, px, &e1);
                        geom::axpy(&mut p, py, &e2);
                        pts.push(p);
                    }
                }
            }
            if pts.is_empty() {
                // Face too small for the margin: fall back to its centroid.
                pts.push(c);
                covered = 1;
            }
            let w = face.area / pts.len() as f64;
            let n = pts.len();
            (pts, vec![w; n], covered)
        }
        _ => unreachable!(),
    }
}

fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > y) != (b[1] > y) {
            let t = (y - a[1]) / (b[1] - a[1]);
            if x < a[0] + t * (b[0] - a[0]) {
                inside = !inside;
            }
        }
    }
    inside
}

fn dist_to_polygon_boundary(poly: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (a[0] + t * dx, a[1] + t * dy);
        best = best.min(((x - px).powi(2) + (y - py).powi(2)).sqrt());
    }
    best
}

/// Ball, polytope, or a Minkowski combination `λ E_1 + (1-λ) E_2`.
#[derive(Debug, Clone)]
pub enum ConvexBody {
    Polytope(Polytope),
    Ball { center: Vec<f64>, radius: f64 },
    Combo { lambda: f64, a: Box<ConvexBody>, b: Box<ConvexBody> },
}

impl ConvexBody {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain("ball radius must be positive".into()));
        }
        if !(center.len() == 2 || center.len() == 3) {
            return Err(Error::Domain("bodies exist for n in {2, 3}".into()));
        }
        Ok(ConvexBody::Ball { center, radius })
    }

    pub fn polytope(p: Polytope) -> Self {
        ConvexBody::Polytope(p)
    }

    pub fn combo(lambda: f64, a: ConvexBody, b: ConvexBody) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain("lambda must lie in [0, 1]".into()));
        }
        if a.dim() != b.dim() {
            return Err(Error::Domain("combo parts must share a dimension".into()));
        }
        Ok(ConvexBody::Combo {
            lambda,
            a: Box::new(a),
            b: Box::new(b),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Polytope(p) => p.dim(),
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Combo { a, .. } => a.dim(),
        }
    }

    /// Support function `h(θ) = sup_{x in E} <θ, x>`.
    pub fn support(&self, theta: &[f64]) -> f64 {
        match self {
            ConvexBody::Polytope(p) => p.support(theta),
            ConvexBody::Ball { center, radius } => geom::dot(center, theta) + radius,
            ConvexBody::Combo { lambda, a, b } => {
                lambda * a.support(theta) + (1.0 - lambda) * b.support(theta)
            }
        }
    }

    /// Membership with slack; combinations defer to an outer polytope
    /// realization on the standard direction grid.
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        match self {
            ConvexBody::Polytope(p) => p.contains(x, slack),
            ConvexBody::Ball { center, radius } => geom::dist(x, center) <= radius + slack,
            ConvexBody::Combo { .. } => self
                .realize_polytope(&DirectionGrid::standard(self.dim()))
                .expect("combo realization")
                .contains(x, slack),
        }
    }

    /// Outer polytope approximation: heights are exact support values on the
    /// given direction grid (plus any polytope part's own normals, which make
    /// flat pieces exact).
    pub fn realize_polytope(&self, grid: &DirectionGrid) -> Result<Polytope> {
        if let ConvexBody::Polytope(p) = self {
            return Ok(p.clone());
        }
        let mut dirs: Vec<Vec<f64>> = grid.iter().map(|d| d.to_vec()).collect();
        self.collect_natural_normals(&mut dirs);
        // Deduplicate.
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(dirs.len());
        for d in dirs {
            if !kept.iter().any(|e| geom::dist(e, &d) < 1e-10) {
                kept.push(d);
            }
        }
        let heights: Vec<f64> = kept.iter().map(|d| self.support(d)).collect();
        Polytope::new(kept, heights)
    }

    fn collect_natural_normals(&self, out: &mut Vec<Vec<f64>>) {
        match self {
            ConvexBody::Polytope(p) => out.extend(p.normals().iter().cloned()),
            ConvexBody::Ball { .. } => {}
            ConvexBody::Combo { a, b, .. } => {
                a.collect_natural_normals(out);
                b.collect_natural_normals(out);
            }
        }
    }

    /// `(r_in, r_out)`: inscribed (Chebyshev) radius and max norm over the
    /// body.
    pub fn inner_outer_radius(&self) -> (f64, f64) {
        match self {
            ConvexBody::Ball { center, radius } => (*radius, geom::norm(center) + radius),
            ConvexBody::Polytope(p) => {
                let (_, r_in) = p.chebyshev_center();
                let r_out = p
                    .vertices()
                    .iter()
                    .map(|v| geom::norm(v))
                    .fold(0.0, f64::max);
                (r_in, r_out)
            }
            ConvexBody::Combo { .. } => {
                let p = self
                    .realize_polytope(&DirectionGrid::standard(self.dim()))
                    .expect("combo realization");
                let (_, r_in) = p.chebyshev_center();
                let grid = DirectionGrid::standard(self.dim());
                let r_out = grid.iter().map(|d| self.support(d)).fold(0.0, f64::max);
                (r_in, r_out)
            }
        }
    }

    /// Translated body `E + z`.
    pub fn translate(&self, z: &[f64]) -> ConvexBody {
        match self {
            ConvexBody::Polytope(p) => {
                let heights = p
                    .normals()
                    .iter()
                    .zip(p.heights())
                    .map(|(nm, q)| q + geom::dot(nm, z))
                    .collect();
                ConvexBody::Polytope(p.with_heights(heights).expect("translate"))
            }
            ConvexBody::Ball { center, radius } => ConvexBody::Ball {
                center: geom::add(center, z),
                radius: *radius,
            },
            ConvexBody::Combo { lambda, a, b } => ConvexBody::Combo {
                lambda: *lambda,
                a: Box::new(a.translate(z)),
                b: Box::new(b.translate(z)),
            },
        }
    }

    /// Dilated body `ρ E`.
    pub fn dilate(&self, rho: f64) -> ConvexBody {
        match self {
            ConvexBody::Polytope(p) => ConvexBody::Polytope(
                p.with_heights(p.heights().iter().map(|q| rho * q).collect())
                    .expect("dilate"),
            ),
            ConvexBody::Ball { center, radius } => ConvexBody::Ball {
                center: geom::scale(center, rho),
                radius: rho * radius,
            },
            ConvexBody::Combo { lambda, a, b } => ConvexBody::Combo {
                lambda: *lambda,
                a: Box::new(a.dilate(rho)),
                b: Box::new(b.dilate(rho)),
            },
        }
    }

    pub fn to_spec(&self) -> BodySpec {
        match self {
            ConvexBody::Polytope(p) => BodySpec {
                kind: "polytope".into(),
                normals: Some(p.normals().to_vec()),
                heights: Some(p.heights().to_vec()),
                ..Default::default()
            },
            ConvexBody::Ball { center, radius } => BodySpec {
                kind: "ball".into(),
                center: Some(center.clone()),
                radius: Some(*radius),
                ..Default::default()
            },
            ConvexBody::Combo { lambda, a, b } => BodySpec {
                kind: "combo".into(),
                lambda: Some(*lambda),
                parts: Some(vec![a.to_spec(), b.to_spec()]),
                ..Default::default()
            },
        }
    }

    pub fn from_spec(spec: &BodySpec) -> Result<ConvexBody> {
        match spec.kind.as_str() {
            "polytope" => {
                let normals = spec
                    .normals
                    .clone()
                    .ok_or_else(|| Error::Schema("polytope requires normals".into()))?;
                let heights = spec
                    .heights
                    .clone()
                    .ok_or_else(|| Error::Schema("polytope requires heights".into()))?;
                Ok(ConvexBody::Polytope(Polytope::new(normals, heights)?))
            }
            "ball" => {
                let center = spec
                    .center
                    .clone()
                    .ok_or_else(|| Error::Schema("ball requires center".into()))?;
                let radius = spec
                    .radius
                    .ok_or_else(|| Error::Schema("ball requires radius".into()))?;
                ConvexBody::ball(center, radius)
            }
            "combo" => {
                let lambda = spec
                    .lambda
                    .ok_or_else(|| Error::Schema("combo requires lambda".into()))?;
                let parts = spec
                    .parts
                    .as_ref()
                    .ok_or_else(|| Error::Schema("combo requires parts".into()))?;
                if parts.len() != 2 {
                    return Err(Error::Schema("combo requires exactly two parts".into()));
                }
                ConvexBody::combo(
                    lambda,
                    ConvexBody::from_spec(&parts[0])?,
                    ConvexBody::from_spec(&parts[1])?,
                )
            }
            other => Err(Error::Schema(format!("unknown body kind {other:?}"))),
        }
    }
}

/// JSON form of a body.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<BodySpec>>,
}

/// Hausdorff distance of convex bodies as the sup of support differences
/// over a direction grid (exact in the refinement limit).
pub fn hausdorff_distance(a: &ConvexBody, b: &ConvexBody, grid: &DirectionGrid) -> f64 {
    grid.iter()
        .map(|d| (a.support(d) - b.support(d)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_cube() -> Polytope {
        Polytope::cube(3, 1.0).unwrap()
    }

    #[test]
    fn cube_vertices_and_support() {
        let c = unit_cube();
        assert_eq!(c.vertices().len(), 8);
        for v in c.vertices() {
            assert!(c.contains(v, VERTEX_TOL));
        }
        let d = geom::unit(&[1.0, 1.0, 1.0]).unwrap();
        // Vertex-enumeration oracle: the support in the diagonal direction is
        // attained at (1,1,1).
        assert!((c.support(&d) - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ball_support_is_constant() {
        let b = ConvexBody::ball(vec![0.0, 0.0, 0.0], 2.5).unwrap();
        for d in DirectionGrid::icosphere(1).iter() {
            assert!((b.support(d) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn combo_of_balls_is_linear() {
        let b1 = ConvexBody::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap();
        let b2 = ConvexBody::ball(vec![0.0, 0.0, 0.0], 3.0).unwrap();
        let c = ConvexBody::combo(0.25, b1, b2).unwrap();
        for d in DirectionGrid::icosphere(0).iter() {
            assert!((c.support(d) - (0.25 * 1.0 + 0.75 * 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_normal_set_rejected() {
        // All normals in the upper hemisphere: unbounded below.
        let r = Polytope::new(
            vec![vec![0.0, 0.0, 1.0], vec![0.6, 0.0, 0.8], vec![0.0, 0.6, 0.8]],
            vec![1.0, 1.0, 1.0],
        );
        assert!(matches!(r, Err(Error::UnboundedBody(_))));
    }

    #[test]
    fn cube_faces() {
        let c = unit_cube();
        let faces = c.faces().unwrap();
        assert_eq!(faces.len(), 6);
        for f in &faces {
            assert!((f.area - 4.0).abs() < 1e-9);
            assert_eq!(f.ring.len(), 4);
        }
    }

    #[test]
    fn simplex_face_areas_match_shoelace_oracle() {
        let s3 = 3f64.sqrt();
        let p = Polytope::new(
            vec![
                vec![-1.0, 0.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, -1.0],
                vec![1.0 / s3, 1.0 / s3, 1.0 / s3],
            ],
            vec![0.0, 0.0, 0.0, 1.0 / s3],
        )
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
        let faces = p.faces().unwrap();
        assert_eq!(faces.len(), 4);
        // Coordinate faces are right triangles with legs 1: area 1/2. The
        // slanted face is equilateral with side sqrt(2): area sqrt(3)/2.
        let mut areas: Vec<f64> = faces.iter().map(|f| f.area).collect();
        areas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for a in &areas[..3] {
            assert!((a - 0.5).abs() < 1e-9);
        }
        assert!((areas[3] - 3f64.sqrt() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn raised_height_drops_face() {
        // Cube plus a tighter parallel plane at x = 0.5; raising that plane's
        // height past 1 hands the face back to the cube plane and the raised
        // constraint stops contributing a face.
        let c = unit_cube();
        let mut normals = c.normals().to_vec();
        let mut heights = c.heights().to_vec();
        normals.push(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0]);
        heights.push(2f64.sqrt() * 0.7);
        let p = Polytope::new(normals.clone(), heights.clone()).unwrap();
        let active = p.faces().unwrap();
        assert!(active.iter().any(|f| f.normal_index == 6));

        heights[6] = 10.0;
        let p = Polytope::new(normals, heights).unwrap();
        let faces = p.faces().unwrap();
        assert_eq!(faces.len(), 6);
        assert!(faces.iter().all(|f| f.normal_index != 6));
        // Support in the raised direction is set by the cube planes now.
        let d = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        assert!((p.support(&d) - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn inner_outer_radius_examples() {
        let b = ConvexBody::ball(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        let (ri, ro) = b.inner_outer_radius();
        assert!((ri - 2.0).abs() < 1e-12 && (ro - 2.0).abs() < 1e-12);

        let c = ConvexBody::polytope(unit_cube());
        let (ri, ro) = c.inner_outer_radius();
        assert!((ri - 1.0).abs() < 1e-9);
        assert!((ro - 3f64.sqrt()).abs() < 1e-9);

        // Simplex: compare the Chebyshev LP against the enumeration oracle
        // through an independent feasibility sweep.
        let s3 = 3f64.sqrt();
        let p = Polytope::new(
            vec![
                vec![-1.0, 0.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, -1.0],
                vec![1.0 / s3, 1.0 / s3, 1.0 / s3],
            ],
            vec![0.0, 0.0, 0.0, 1.0 / s3],
        )
        .unwrap();
        let (x, r) = p.chebyshev_center();
        // Inflating by r must stay inside; by 1.01 r must not.
        for (nm, q) in p.normals().iter().zip(p.heights()) {
            assert!(geom::dot(nm, &x) + r <= q + 1e-9);
        }
        let slack: f64 = p
            .normals()
            .iter()
            .zip(p.heights())
            .map(|(nm, q)| q - geom::dot(nm, &x))
            .fold(f64::INFINITY, f64::min);
        assert!((slack - r).abs() < 1e-9);
    }

    #[test]
    fn hausdorff_examples() {
        let grid = DirectionGrid::standard(3);
        let b1 = ConvexBody::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap();
        let b2 = ConvexBody::ball(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        assert!(hausdorff_distance(&b1, &b1, &grid).abs() < 1e-15);
        assert!((hausdorff_distance(&b1, &b2, &grid) - 1.0).abs() < 1e-12);

        let c = ConvexBody::polytope(unit_cube());
        let c2 = ConvexBody::polytope(Polytope::cube(3, 1.1).unwrap());
        let d = hausdorff_distance(&c, &c2, &grid);
        // Support difference is 0.1 at the face normals, up to sqrt(3)*0.1 at
        // corners; the grid sup must land in that window.
        assert!(d >= 0.1 - 1e-12 && d <= 0.1 * 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn combo_realization_keeps_flat_faces_exact() {
        let cube = ConvexBody::polytope(unit_cube());
        let ball = ConvexBody::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap();
        let combo = ConvexBody::combo(0.5, cube, ball).unwrap();
        let poly = combo.realize_polytope(&DirectionGrid::icosphere(3)).unwrap();
        // The cube normals are included, so the flat support values are exact.
        assert!((poly.support(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-9);
        let d = geom::unit(&[1.0, 1.0, 1.0]).unwrap();
        let exact = 0.5 * 3f64.sqrt() + 0.5;
        let approx = poly.support(&d);
        assert!(approx >= exact - 1e-9);
        // Outer approximation overshoot is bounded by the angular gap of the
        // 642-vertex icosphere.
        assert!(approx <= exact * 1.004, "approx {approx} vs exact {exact}");
    }

    #[test]
    fn body_spec_roundtrip() {
        let cube = ConvexBody::polytope(unit_cube());
        let ball = ConvexBody::ball(vec![0.1, 0.0, 0.0], 1.0).unwrap();
        let combo = ConvexBody::combo(0.25, cube, ball).unwrap();
        let json = serde_json::to_string(&combo.to_spec()).unwrap();
        let back = ConvexBody::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        let grid = DirectionGrid::icosphere(1);
        assert!(hausdorff_distance(&combo, &back, &grid) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn support_subadditive_and_homogeneous(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            s in 0.1f64..3.0,
        ) {
            let d = [x, y, z];
            prop_assume!(geom::norm(&d) > 1e-3);
            let c = unit_cube();
            // 1-homogeneity.
            let h1 = c.support(&d);
            let hs = c.support(&geom::scale(&d, s));
            prop_assert!((hs - s * h1).abs() < 1e-9 * h1.abs().max(1.0));
            // Subadditivity against a fixed second direction.
            let e = [0.3, -0.7, 0.2];
            let sum = geom::add(&d, &e);
            prop_assert!(c.support(&sum) <= c.support(&d) + c.support(&e) + 1e-9);
        }

        #[test]
        fn minkowski_sum_support_adds(lam in 0.0f64..1.0) {
            let cube = ConvexBody::polytope(unit_cube());
            let ball = ConvexBody::ball(vec![0.0,0.0,0.0], 0.7).unwrap();
            let combo = ConvexBody::combo(lam, cube.clone(), ball.clone()).unwrap();
            for d in DirectionGrid::icosphere(0).iter() {
                let expect = lam * cube.support(d) + (1.0 - lam) * ball.support(d);
                prop_assert!((combo.support(d) - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn hausdorff_triangle_inequality(r1 in 0.5f64..2.0, r2 in 0.5f64..2.0) {
            let grid = DirectionGrid::circle(256);
            let a = ConvexBody::ball(vec![0.0, 0.0], r1).unwrap();
            let b = ConvexBody::ball(vec![0.3, 0.0], r2).unwrap();
            let c = ConvexBody::polytope(Polytope::cube(2, 1.0).unwrap());
            let dab = hausdorff_distance(&a, &b, &grid);
            let dbc = hausdorff_distance(&b, &c, &grid);
            let dac = hausdorff_distance(&a, &c, &grid);
            prop_assert!(dac <= dab + dbc + 1e-12);
            prop_assert!((dab - hausdorff_distance(&b, &a, &grid)).abs() < 1e-15);
        }
    }
}
