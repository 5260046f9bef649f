//! Hyperbolic toral automorphisms in the level-two subgroup: validation,
//! eigendata, the diagonalizing frame, lattice cells and unstable orbits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("determinant is {0}, expected 1")]
    NotUnimodular(i64),
    #[error("parity condition a11*a12 = a21*a22 = 0 mod 2 fails")]
    NotInGamma2,
    #[error("|trace| = {0} is too small for a hyperbolic map")]
    NotHyperbolic(i64),
    #[error("eigenline slope {0} is numerically rational or axis-parallel")]
    RationalEigenline(f64),
    #[error("kappa = {kappa} is not admissible (must lie in (0, {limit}))")]
    KappaTooLarge { kappa: f64, limit: f64 },
    #[error("no orbit length up to {0} satisfies the cover condition")]
    NotFound(f64),
    #[error("malformed map literal: {0}")]
    Parse(String),
}

pub type Mat2i = [[i64; 2]; 2];
pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

/// The Degli-Esposti map `[[2,1],[3,2]]`.
pub const GAMMA_DE: Mat2i = [[2, 1], [3, 2]];

/// Denominator bound for the numerical irrationality certificate.
pub const RATIONAL_DENOMINATOR_BOUND: i64 = 1_000_000;
/// Tolerance on `|q·x − p|`; float rounding of a genuine `p/q` stays well
/// below it for `q ≤ 10⁶`, while quadratic irrationals stay far above it.
pub const RATIONAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicMap {
    pub entries: Mat2i,
    pub lambda_u: f64,
    pub lambda_s: f64,
    pub m_u: f64,
    pub m_s: f64,
    pub v_u: Vec2,
    pub v_s: Vec2,
    pub iota: Mat2,
    pub iota_inv: Mat2,
}

#[derive(Serialize, Deserialize)]
struct MapLiteral {
    matrix: Mat2i,
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn mat2_apply(a: &Mat2, v: Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn mat2i_mul(a: &Mat2i, b: &Mat2i) -> Option<Mat2i> {
    let mut c = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0].checked_mul(b[0][j])?.checked_add(a[i][1].checked_mul(b[1][j])?)?;
        }
    }
    Some(c)
}

pub fn mat2i_inverse_unimodular(a: &Mat2i) -> Mat2i {
    [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
}

pub fn mat2i_transpose(a: &Mat2i) -> Mat2i {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// `aᵖ` for any integer power of a unimodular matrix; `None` on overflow.
pub fn mat2i_pow(a: &Mat2i, power: i64) -> Option<Mat2i> {
    let base = if power < 0 { mat2i_inverse_unimodular(a) } else { *a };
    let mut result: Mat2i = [[1, 0], [0, 1]];
    for _ in 0..power.unsigned_abs() {
        result = mat2i_mul(&result, &base)?;
    }
    Some(result)
}

fn is_numerically_rational(x: f64) -> bool {
    (1..=RATIONAL_DENOMINATOR_BOUND).any(|q| {
        let qf = q as f64;
        let p = (x * qf).round();
        (x * qf - p).abs() < RATIONAL_TOLERANCE
    })
}

pub fn validate_map(entries: Mat2i) -> Result<HyperbolicMap, ClassicalError> {
    let [[a, b], [c, d]] = entries;
    let det = a * d - b * c;
    if det != 1 {
        return Err(ClassicalError::NotUnimodular(det));
    }
    if (a * b).rem_euclid(2) != 0 || (c * d).rem_euclid(2) != 0 {
        return Err(ClassicalError::NotInGamma2);
    }
    let tr = a + d;
    if tr.abs() <= 2 {
        return Err(ClassicalError::NotHyperbolic(tr.abs()));
    }
    let t = tr as f64;
    let disc = (t * t - 4.0).sqrt();
    let lambda_u = t.signum() * (t.abs() + disc) / 2.0;
    // product is exactly one; avoids cancellation in (|t| - disc)/2
    let lambda_s = 1.0 / lambda_u;
    // b ≠ 0 for hyperbolic unimodular maps: b = 0 forces a = d = ±1
    let (af, bf) = (a as f64, b as f64);
    let m_u = (lambda_u - af) / bf;
    let m_s = (lambda_s - af) / bf;
    for m in [m_u, m_s] {
        if !m.is_finite() || m == 0.0 || is_numerically_rational(m) {
            return Err(ClassicalError::RationalEigenline(m));
        }
    }
    let nu = (1.0 + m_u * m_u).sqrt();
    let ns = (1.0 + m_s * m_s).sqrt();
    let v_u = [1.0 / nu, m_u / nu];
    let v_s = [1.0 / ns, m_s / ns];
    let gap = m_u - m_s;
    let sgn = gap.signum();
    let r = 1.0 / gap.abs().sqrt();
    // columns: unstable and (sign-adjusted) stable direction, det = 1
    let iota = [[r, -sgn * r], [m_u * r, -sgn * m_s * r]];
    let det_iota = iota[0][0] * iota[1][1] - iota[0][1] * iota[1][0];
    let iota_inv = [
        [iota[1][1] / det_iota, -iota[0][1] / det_iota],
        [-iota[1][0] / det_iota, iota[0][0] / det_iota],
    ];
    Ok(HyperbolicMap { entries, lambda_u, lambda_s, m_u, m_s, v_u, v_s, iota, iota_inv })
}

impl HyperbolicMap {
    pub fn degli_esposti() -> Self {
        validate_map(GAMMA_DE).expect("reference map is valid")
    }

    pub fn matrix_f64(&self) -> Mat2 {
        let e = self.entries;
        [[e[0][0] as f64, e[0][1] as f64], [e[1][0] as f64, e[1][1] as f64]]
    }

    pub fn trace(&self) -> i64 {
        self.entries[0][0] + self.entries[1][1]
    }

    /// `‖ι⁻¹γι − diag(λ_u, λ_s)‖∞`.
    pub fn diagonalization_residual(&self) -> f64 {
        let d = mat2_mul(&self.iota_inv, &mat2_mul(&self.matrix_f64(), &self.iota));
        let want = [[self.lambda_u, 0.0], [0.0, self.lambda_s]];
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((d[i][j] - want[i][j]).abs());
            }
        }
        m
    }

    pub fn iota_det(&self) -> f64 {
        self.iota[0][0] * self.iota[1][1] - self.iota[0][1] * self.iota[1][0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MapLiteral { matrix: self.entries }).expect("integers serialize")
    }

    /// Parses `{"matrix": [[a,b],[c,d]]}` and validates it.
    pub fn from_json(s: &str) -> Result<Self, ClassicalError> {
        let lit: MapLiteral = serde_json::from_str(s).map_err(|e| ClassicalError::Parse(e.to_string()))?;
        validate_map(lit.matrix)
    }
}

/// Reduces a real to `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Periodic Euclidean distance on the unit torus.
pub fn torus_distance(p: Vec2, q: Vec2) -> f64 {
    let d = |a: f64, b: f64| {
        let t = wrap(a - b);
        t.min(1.0 - t)
    };
    d(p[0], q[0]).hypot(d(p[1], q[1]))
}

/// `γᵖ·(y, η) mod 1`, applied one step at a time so the iterate stays reduced.
pub fn apply_map(map: &HyperbolicMap, point: Vec2, power: i64) -> Vec2 {
    let m = if power >= 0 { map.entries } else { mat2i_inverse_unimodular(&map.entries) };
    let [[a, b], [c, d]] = m;
    let mut p = [wrap(point[0]), wrap(point[1])];
    for _ in 0..power.unsigned_abs() {
        p = [
            wrap(a as f64 * p[0] + b as f64 * p[1]),
            wrap(c as f64 * p[0] + d as f64 * p[1]),
        ];
    }
    p
}

/// Random element of the level-two subgroup: a product of one to `max_len`
/// factors drawn from `γ_DE` and its transpose.
pub fn random_gamma2_map<R: Rng>(rng: &mut R, max_len: usize) -> HyperbolicMap {
    let t = mat2i_transpose(&GAMMA_DE);
    loop {
        let len = rng.random_range(1..=max_len.max(1));
        let mut m: Mat2i = [[1, 0], [0, 1]];
        for _ in 0..len {
            let f = if rng.random_bool(0.5) { &GAMMA_DE } else { &t };
            m = mat2i_mul(&m, f).expect("short products do not overflow");
        }
        if let Ok(h) = validate_map(m) {
            return h;
        }
    }
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Fundamental cell of the lattice `ι⁻¹ℤ²` spanned by a shortest vector and a
/// unimodular completion, with its `κ`-thickening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeCell {
    pub p: Vec2,
    pub p_prime: Vec2,
    /// `(n, m)` with `P = ι⁻¹(n, m)`.
    pub nm: [i64; 2],
    /// `(k, l)` with `P' = ι⁻¹(k, l)` and `nl − km = 1`.
    pub kl: [i64; 2],
    pub kappa: f64,
    /// Outward offset of each side used for the thickened cell.
    pub offset: f64,
    pub ell_y: f64,
    pub ell_eta: f64,
    pub ell: f64,
}

impl LatticeCell {
    /// Cell coordinates `(s, t)` of a point `s P + t P'`.
    pub fn cell_coords(&self, x: Vec2) -> Vec2 {
        let [p, q] = [self.p, self.p_prime];
        let det = p[0] * q[1] - p[1] * q[0];
        [(x[0] * q[1] - x[1] * q[0]) / det, (p[0] * x[1] - p[1] * x[0]) / det]
    }

    pub fn point(&self, s: f64, t: f64) -> Vec2 {
        [s * self.p[0] + t * self.p_prime[0], s * self.p[1] + t * self.p_prime[1]]
    }

    pub fn det(&self) -> f64 {
        self.p[0] * self.p_prime[1] - self.p[1] * self.p_prime[0]
    }

    /// Half the smaller height of the unit cell; the interior region of
    /// points farther than `κ` from the boundary is empty beyond it.
    pub fn inradius(&self) -> f64 {
        let np = self.p[0].hypot(self.p[1]);
        let nq = self.p_prime[0].hypot(self.p_prime[1]);
        0.5 * (1.0 / np).min(1.0 / nq)
    }

    /// Signed distance from `x` to the boundary of the closed cell, positive
    /// inside.
    pub fn signed_distance(&self, x: Vec2) -> f64 {
        let [s, t] = self.cell_coords(x);
        let hs = 1.0 / self.p_prime[0].hypot(self.p_prime[1]);
        let ht = 1.0 / self.p[0].hypot(self.p[1]);
        let ds = (s.min(1.0 - s)) * hs;
        let dt = (t.min(1.0 - t)) * ht;
        if ds >= 0.0 && dt >= 0.0 {
            ds.min(dt)
        } else {
            let os = (-ds).max(0.0);
            let ot = (-dt).max(0.0);
            // exterior distance to a parallelogram is bounded by this; the
            // bound is exact away from the corners
            -(os.max(ot))
        }
    }

    /// Vertices of the thickened cell `S⁰(κ)`.
    pub fn thick_vertices(&self) -> [Vec2; 4] {
        let ds = self.offset * self.p_prime[0].hypot(self.p_prime[1]);
        let dt = self.offset * self.p[0].hypot(self.p[1]);
        [
            self.point(-ds, -dt),
            self.point(1.0 + ds, -dt),
            self.point(1.0 + ds, 1.0 + dt),
            self.point(-ds, 1.0 + dt),
        ]
    }

    /// Axis-aligned bounding box `[(y_min, y_max), (η_min, η_max)]` of `S⁰(κ)`.
    pub fn bounding_box(&self) -> [[f64; 2]; 2] {
        let v = self.thick_vertices();
        let ys = v.iter().map(|p| p[0]);
        let es = v.iter().map(|p| p[1]);
        [
            [ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max)],
            [es.clone().fold(f64::INFINITY, f64::min), es.fold(f64::NEG_INFINITY, f64::max)],
        ]
    }
}

pub fn shortest_cell_basis(map: &HyperbolicMap, kappa: f64) -> Result<LatticeCell, ClassicalError> {
    let li = map.iota_inv;
    // any (n, m) with ‖ι⁻¹(n, m)‖ ≤ 2 has |n|, |m| ≤ 2‖ι‖_F
    let fro = map.iota.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let bound = (2.0 * fro).ceil() as i64 + 1;
    let mut best: Option<([i64; 2], f64)> = None;
    for n in -bound..=bound {
        for m in -bound..=bound {
            if n == 0 && m == 0 {
                continue;
            }
            let v = mat2_apply(&li, [n as f64, m as f64]);
            let len = v[0].hypot(v[1]);
            let better = match best {
                None => true,
                Some((bnm, bl)) => {
                    if len < bl - 1e-12 {
                        true
                    } else if (len - bl).abs() <= 1e-12 {
                        // deterministic representative among ± pairs and ties
                        let key = |x: [i64; 2]| (x[1] <= 0, x[0] < 0, x[0].abs(), x[1].abs());
                        key([n, m]) < key(bnm)
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some(([n, m], len));
            }
        }
    }
    let (nm, _) = best.expect("Minkowski guarantees a lattice point");
    let (g, x, y) = ext_gcd(nm[0], nm[1]);
    // n·x + m·y = g = ±1, and nl − km = 1 with l = x/g, k = −y/g
    let (mut k, mut l) = (-y * g, x * g);
    let p = mat2_apply(&li, [nm[0] as f64, nm[1] as f64]);
    // Gauss reduction of the completion against P keeps the angle in [60°, 120°]
    let q0 = mat2_apply(&li, [k as f64, l as f64]);
    let r = ((q0[0] * p[0] + q0[1] * p[1]) / (p[0] * p[0] + p[1] * p[1])).round() as i64;
    k -= r * nm[0];
    l -= r * nm[1];
    let p_prime = mat2_apply(&li, [k as f64, l as f64]);
    let mut cell = LatticeCell {
        p,
        p_prime,
        nm,
        kl: [k, l],
        kappa,
        offset: kappa / 2.0,
        ell_y: 0.0,
        ell_eta: 0.0,
        ell: 0.0,
    };
    let limit = cell.inradius();
    if !(kappa > 0.0 && kappa < limit) {
        return Err(ClassicalError::KappaTooLarge { kappa, limit });
    }
    let bb = cell.bounding_box();
    cell.ell_y = bb[0][1] - bb[0][0];
    cell.ell_eta = bb[1][1] - bb[1][0];
    cell.ell = cell.ell_y.max(cell.ell_eta);
    Ok(cell)
}

/// Result of the unstable-orbit cover search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitCover {
    /// Orbit length after which every sampled orbit has visited both balls
    /// for a stretch of length `ell`.
    pub length: f64,
    pub ell: f64,
    /// Side of the square grid of start points.
    pub start_grid: usize,
    /// Time step along the orbit.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitCoverQuery {
    pub k1_center: Vec2,
    pub k2_center: Vec2,
    /// The small balls have radius `radius / 4`.
    pub radius: f64,
    /// Required length of each sub-orbit inside a small ball.
    pub ell: f64,
    pub l_max: f64,
    pub start_grid: usize,
    pub dt: f64,
}

impl OrbitCoverQuery {
    pub fn new(k1_center: Vec2, k2_center: Vec2, radius: f64, ell: f64, l_max: f64) -> Self {
        Self { k1_center, k2_center, radius, ell, l_max, start_grid: 100, dt: 1e-3 }
    }
}

/// First time at which a run of consecutive samples inside `ball` spans
/// length `ell`; `None` if not reached by `t_max`.
fn first_run_completion(start: Vec2, dir: Vec2, center: Vec2, r: f64, ell: f64, dt: f64, t_max: f64) -> Option<f64> {
    let steps = (t_max / dt).ceil() as usize;
    let mut run_start: Option<usize> = None;
    for i in 0..=steps {
        let t = i as f64 * dt;
        let p = [start[0] + t * dir[0], start[1] + t * dir[1]];
        if torus_distance(p, center) < r {
            let s = *run_start.get_or_insert(i);
            if (i - s) as f64 * dt >= ell {
                return Some(t);
            }
        } else {
            run_start = None;
        }
    }
    None
}

/// Grid search for an orbit length `L` such that every unstable orbit segment
/// of length `L` (sampled over a start grid) contains sub-orbits of length
/// `ell` inside both balls `B(K_ε center, radius/4)`. Certified only at the
/// sampling resolution reported in the result.
pub fn unstable_orbit_cover(map: &HyperbolicMap, query: &OrbitCoverQuery) -> Result<OrbitCover, ClassicalError> {
    let r = query.radius / 4.0;
    let g = query.start_grid.max(1);
    let mut worst: f64 = query.ell;
    for i in 0..g {
        for j in 0..g {
            let start = [i as f64 / g as f64, j as f64 / g as f64];
            let mut need = 0.0f64;
            for c in [query.k1_center, query.k2_center] {
                match first_run_completion(start, map.v_u, c, r, query.ell, query.dt, query.l_max) {
                    Some(t) => need = need.max(t),
                    None => return Err(ClassicalError::NotFound(query.l_max)),
                }
            }
            worst = worst.max(need);
        }
    }
    Ok(OrbitCover { length: worst, ell: query.ell, start_grid: g, dt: query.dt })
}

/// Smallest `L` (on the `dt` grid) such that the unstable orbit of length `L`
/// from `start` passes within `eps` of every target.
pub fn orbit_density_length(map: &HyperbolicMap, start: Vec2, targets: &[Vec2], eps: f64, dt: f64, l_max: f64) -> Option<f64> {
    let mut hit = vec![false; targets.len()];
    let mut remaining = targets.len();
    let steps = (l_max / dt).ceil() as usize;
    for i in 0..=steps {
        if remaining == 0 {
            return Some((i.saturating_sub(1)) as f64 * dt);
        }
        let t = i as f64 * dt;
        let p = [start[0] + t * map.v_u[0], start[1] + t * map.v_u[1]];
        for (h, q) in hit.iter_mut().zip(targets) {
            if !*h && torus_distance(p, *q) < eps {
                *h = true;
                remaining -= 1;
            }
        }
    }
    if remaining == 0 {
        Some(steps as f64 * dt)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_map_eigendata() {
        let h = HyperbolicMap::degli_esposti();
        let s3 = 3f64.sqrt();
        assert!((h.lambda_u - (2.0 + s3)).abs() < 1e-14);
        assert!((h.lambda_s - (2.0 - s3)).abs() < 1e-14);
        assert!((h.m_u - s3).abs() < 1e-14);
        assert!((h.m_s + s3).abs() < 1e-14);
        assert!(h.diagonalization_residual() < 1e-10);
        assert!((h.iota_det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        assert_eq!(validate_map([[1, 0], [0, 1]]), Err(ClassicalError::NotHyperbolic(2)));
        assert_eq!(validate_map([[1, 1], [1, 2]]), Err(ClassicalError::NotInGamma2));
        assert_eq!(validate_map([[2, 1], [1, 2]]), Err(ClassicalError::NotUnimodular(3)));
    }

    #[test]
    fn apply_map_examples() {
        let h = HyperbolicMap::degli_esposti();
        assert_eq!(apply_map(&h, [0.0, 0.0], 5), [0.0, 0.0]);
        let p = apply_map(&h, [0.5, 0.5], 1);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let q = [0.123, 0.456];
        let back = apply_map(&h, apply_map(&h, q, 1), -1);
        assert!(torus_distance(back, q) < 1e-12);
    }

    #[test]
    fn reference_cell() {
        let h = HyperbolicMap::degli_esposti();
        let cell = shortest_cell_basis(&h, 0.05).unwrap();
        assert_eq!(cell.nm, [0, 1]);
        assert_eq!(cell.kl, [-1, 0]);
        assert!((cell.p[0] - 0.5373).abs() < 1e-4 && (cell.p[1] - 0.5373).abs() < 1e-4);
        assert!((cell.p[0].hypot(cell.p[1]) - 0.7599).abs() < 1e-4);
        assert!((cell.det().abs() - 1.0).abs() < 1e-12);
        assert!(matches!(shortest_cell_basis(&h, 0.7), Err(ClassicalError::KappaTooLarge { .. })));
        assert!(matches!(shortest_cell_basis(&h, 0.0), Err(ClassicalError::KappaTooLarge { .. })));
    }

    #[test]
    fn ext_gcd_bezout() {
        for (a, b) in [(0, 1), (3, 5), (-4, 7), (12, -5)] {
            let (g, x, y) = ext_gcd(a, b);
            assert_eq!(a * x + b * y, g);
            assert_eq!(g.abs(), 1);
        }
    }

    #[test]
    fn map_literal_round_trip() {
        let h = HyperbolicMap::from_json(r#"{"matrix": [[2,1],[3,2]]}"#).unwrap();
        assert_eq!(h.entries, GAMMA_DE);
        assert_eq!(HyperbolicMap::from_json(&h.to_json()).unwrap(), h);
        assert!(HyperbolicMap::from_json("{}").is_err());
    }
}
