//! Direction grids and sphere quadrature.
//!
//! Two kinds of direction sets are used throughout: icosphere subdivisions for
//! n = 3 and uniform angles for n = 2. Quadrature of smooth integrands over
//! the sphere uses product Gauss-Legendre x periodic trapezoid (n = 3) or the
//! plain trapezoid rule on the circle (n = 2).

/// A set of unit directions in dimension `dim`, flattened row-major.
#[derive(Debug, Clone)]
pub struct DirectionGrid {
    pub dim: usize,
    dirs: Vec<f64>,
}

impl DirectionGrid {
    /// Uniform angles on the circle.
    pub fn circle(count: usize) -> Self {
        let mut dirs = Vec::with_capacity(2 * count);
        for k in 0..count {
            let t = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
            dirs.push(t.cos());
            dirs.push(t.sin());
        }
        DirectionGrid { dim: 2, dirs }
    }

    /// Icosphere vertex directions after `subdiv` edge subdivisions.
    ///
    /// Vertex counts: 12, 42, 162, 642, 2562 for subdiv 0..=4.
    pub fn icosphere(subdiv: usize) -> Self {
        let (mut verts, mut faces) = icosahedron();
        for _ in 0..subdiv {
            let mut midpoint = std::collections::BTreeMap::new();
            let mut new_faces = Vec::with_capacity(faces.len() * 4);
            for &(a, b, c) in &faces {
                let ab = edge_midpoint(&mut verts, &mut midpoint, a, b);
                let bc = edge_midpoint(&mut verts, &mut midpoint, b, c);
                let ca = edge_midpoint(&mut verts, &mut midpoint, c, a);
                new_faces.push((a, ab, ca));
                new_faces.push((b, bc, ab));
                new_faces.push((c, ca, bc));
                new_faces.push((ab, bc, ca));
            }
            faces = new_faces;
        }
        let mut dirs = Vec::with_capacity(verts.len() * 3);
        for v in verts {
            dirs.extend_from_slice(&v);
        }
        DirectionGrid { dim: 3, dirs }
    }

    /// Default grid for the given dimension: 1280 angles (n = 2) or the
    /// 642-vertex icosphere (n = 3).
    pub fn standard(dim: usize) -> Self {
        match dim {
            2 => DirectionGrid::circle(1280),
            3 => DirectionGrid::icosphere(3),
            _ => panic!("direction grids exist only for n in {{2, 3}}"),
        }
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.dirs.chunks_exact(self.dim)
    }

    /// Appends extra unit directions (deduplicated against existing ones).
    pub fn extend_with(&mut self, extra: impl IntoIterator<Item = Vec<f64>>) {
        for d in extra {
            assert_eq!(d.len(), self.dim);
            let dup = self
                .iter()
                .any(|e| crate::geom::dist(e, &d) < 1e-12);
            if !dup {
                self.dirs.extend_from_slice(&d);
            }
        }
    }
}

fn icosahedron() -> (Vec<[f64; 3]>, Vec<(usize, usize, usize)>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let verts: Vec<[f64; 3]> = raw
        .iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();
    let faces = vec![
        (0, 11, 5),
        (0, 5, 1),
        (0, 1, 7),
        (0, 7, 10),
        (0, 10, 11),
        (1, 5, 9),
        (5, 11, 4),
        (11, 10, 2),
        (10, 7, 6),
        (7, 1, 8),
        (3, 9, 4),
        (3, 4, 2),
        (3, 2, 6),
        (3, 6, 8),
        (3, 8, 9),
        (4, 9, 5),
        (2, 4, 11),
        (6, 2, 10),
        (8, 6, 7),
        (9, 8, 1),
    ];
    (verts, faces)
}

fn edge_midpoint(
    verts: &mut Vec<[f64; 3]>,
    cache: &mut std::collections::BTreeMap<(usize, usize), usize>,
    a: usize,
    b: usize,
) -> usize {
    let key = (a.min(b), a.max(b));
    if let Some(&i) = cache.get(&key) {
        return i;
    }
    let (va, vb) = (verts[a], verts[b]);
    let mut m = [va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]];
    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    m = [m[0] / n, m[1] / n, m[2] / n];
    verts.push(m);
    let i = verts.len() - 1;
    cache.insert(key, i);
    i
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Legendre polynomial P_n and derivative at `t`.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// Integrates a function over the unit sphere S^{n-1}, n in {2, 3}.
///
/// `res` controls the resolution: n = 3 uses `res` Gauss-Legendre nodes in
/// the polar variable and `2*res` azimuthal angles; n = 2 uses `4*res`
/// angles on the circle.
pub fn sphere_integral(dim: usize, res: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    match dim {
        2 => {
            let m = 4 * res;
            let dt = 2.0 * std::f64::consts::PI / m as f64;
            (0..m)
                .map(|k| {
                    let t = dt * k as f64;
                    f(&[t.cos(), t.sin()]) * dt
                })
                .sum()
        }
        3 => {
            let (xs, ws) = gauss_legendre(res);
            let m = 2 * res;
            let dphi = 2.0 * std::f64::consts::PI / m as f64;
            let mut total = 0.0;
            for (c, wc) in xs.iter().zip(&ws) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let phi = dphi * k as f64;
                    total += wc * dphi * f(&[s * phi.cos(), s * phi.sin(), *c]);
                }
            }
            total
        }
        _ => panic!("sphere_integral supports n in {{2, 3}}"),
    }
}

/// Surface area of the unit sphere S^{n-1}.
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("sphere_area supports n in {{2, 3}}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_and_unit_norm() {
        for (s, count) in [(0usize, 12usize), (1, 42), (2, 162), (3, 642)] {
            let g = DirectionGrid::icosphere(s);
            assert_eq!(g.len(), count);
            for d in g.iter() {
                assert!((crate::geom::norm(d) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_integral_of_one_is_area() {
        let a3 = sphere_integral(3, 32, |_| 1.0);
        assert!((a3 - sphere_area(3)).abs() / sphere_area(3) < 1e-12);
        let a2 = sphere_integral(2, 32, |_| 1.0);
        assert!((a2 - sphere_area(2)).abs() / sphere_area(2) < 1e-12);
    }

    #[test]
    fn sphere_integral_of_coordinate_square() {
        // int_{S^2} z^2 = 4*pi/3
        let v = sphere_integral(3, 24, |d| d[2] * d[2]);
        assert!((v - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // int_{-1}^{1} t^6 = 2/7
        let v: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(6)).sum();
        assert!((v - 2.0 / 7.0).abs() < 1e-13);
    }
}
