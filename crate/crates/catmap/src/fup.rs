//! Porosity of interval unions, the discrete fractal uncertainty norm, and
//! porosity of the supports of propagated word symbols in a lattice cell.

use crate::classical::{mat2_apply, shortest_cell_basis, wrap, ClassicalError, HyperbolicMap, LatticeCell, Vec2};
use crate::linalg::op_norm;
use crate::quantize::PartitionPair;
use crate::stats::ols;
use crate::words::Word;
use crate::C64;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Ratio of consecutive window lengths in the porosity scale grid.
pub const SCALE_RATIO: f64 = 1.1;
/// Step of the grid searched by [`max_porosity`].
pub const POROSITY_STEP: f64 = 1e-3;
/// Default rasterization of propagated supports.
pub const DEFAULT_RESOLUTION: usize = 2048;
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;
/// Slack on `gap ≥ νL` to absorb rounding in endpoint arithmetic.
const GAP_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FupError {
    #[error("scale range is empty: tau0 = {0} > tau1 = {1}")]
    DegenerateScales(f64, f64),
    #[error("invalid porosity query: {0}")]
    BadQuery(String),
    #[error("invalid interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("digits must be a nonempty proper subset of 0..{0}")]
    BadDigits(usize),
    #[error("index set is empty")]
    EmptySet,
    #[error("index {0} is outside Z_{1}")]
    BadIndex(usize, usize),
    #[error("need at least 3 positive points, got {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
}

/// Finite union of closed intervals in canonical (sorted, merged) form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    pub intervals: Vec<[f64; 2]>,
}

impl IntervalSet {
    pub fn new(mut raw: Vec<[f64; 2]>) -> Result<Self, FupError> {
        if let Some(iv) = raw.iter().find(|iv| !(iv[0] <= iv[1]) || !iv[0].is_finite() || !iv[1].is_finite()) {
            return Err(FupError::BadInterval(iv[0], iv[1]));
        }
        raw.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut intervals: Vec<[f64; 2]> = Vec::with_capacity(raw.len());
        for iv in raw {
            match intervals.last_mut() {
                Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
                _ => intervals.push(iv),
            }
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|iv| iv[1] - iv[0]).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv[1] < x);
        i < self.intervals.len() && self.intervals[i][0] <= x
    }

    /// Whether every interval of `self` lies inside `other`.
    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.intervals.iter().all(|iv| {
            let i = other.intervals.partition_point(|o| o[1] < iv[1]);
            i < other.intervals.len() && other.intervals[i][0] <= iv[0]
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite floats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, FupError> {
        let raw: IntervalSet = serde_json::from_str(s).map_err(|e| FupError::BadQuery(e.to_string()))?;
        Self::new(raw.intervals)
    }

    /// Length of the longest sub-interval of `[x, x + len]` avoiding the set.
    pub fn largest_gap(&self, x: f64, len: f64) -> f64 {
        let end = x + len;
        let mut cursor = x;
        let mut best: f64 = 0.0;
        let start = self.intervals.partition_point(|iv| iv[1] < x);
        for iv in &self.intervals[start..] {
            if iv[0] > end {
                break;
            }
            best = best.max(iv[0] - cursor);
            cursor = cursor.max(iv[1]);
        }
        best.max(end - cursor)
    }

    /// `min_x largest_gap(x, len)` and a minimizing `x`. Between consecutive
    /// positions where a window end meets an endpoint of the set, the overlap
    /// with each complementary gap is linear in `x` with slope −1, 0 or 1, so
    /// the longest gap there is `max(A, x + u, d − x)` and its minimum is at a
    /// segment end or at the crossing `x = (d − u)/2`.
    pub fn min_gap(&self, len: f64) -> (f64, f64) {
        let mut best = (len, 0.0);
        let iv = &self.intervals;
        if iv.is_empty() {
            return best;
        }
        let mut comps: Vec<[f64; 2]> = Vec::with_capacity(iv.len() + 1);
        comps.push([f64::NEG_INFINITY, iv[0][0]]);
        for w in iv.windows(2) {
            comps.push([w[0][1], w[1][0]]);
        }
        comps.push([iv[iv.len() - 1][1], f64::INFINITY]);
        let mut cuts: Vec<f64> = iv.iter().flat_map(|v| [v[0], v[1], v[0] - len, v[1] - len]).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let consider = |x: f64, best: &mut (f64, f64)| {
            let g = self.largest_gap(x, len);
            if g < best.0 {
                *best = (g, x);
            }
        };
        for w in cuts.windows(2) {
            let (p, q) = (w[0], w[1]);
            consider(p, &mut best);
            let mid = 0.5 * (p + q);
            let (mut u, mut d) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let start = comps.partition_point(|c| c[1] <= mid);
            for c in comps[start..].iter().take_while(|c| c[0] < mid + len) {
                // overlap = min(x + len, c1) − max(x, c0), with fixed branches on (p, q)
                let right_moves = mid + len < c[1];
                let left_moves = mid > c[0];
                match (right_moves, left_moves) {
                    (true, false) => u = u.max(len - c[0]),
                    (false, true) => d = d.max(c[1]),
                    _ => {}
                }
            }
            if u.is_finite() && d.is_finite() {
                let x = (0.5 * (d - u)).clamp(p, q);
                consider(x, &mut best);
            }
        }
        if let Some(&last) = cuts.last() {
            consider(last, &mut best);
        }
        best
    }
}

/// `ν`-porosity on window lengths `[τ₀, τ₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PorosityQuery {
    pub nu: f64,
    pub tau0: f64,
    pub tau1: f64,
}

impl PorosityQuery {
    pub fn new(nu: f64, tau0: f64, tau1: f64) -> Result<Self, FupError> {
        if tau0 > tau1 {
            return Err(FupError::DegenerateScales(tau0, tau1));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(FupError::BadQuery(format!("nu = {nu} is not in (0, 1)")));
        }
        if !(tau0 > 0.0) {
            return Err(FupError::BadQuery(format!("tau0 = {tau0} is not positive")));
        }
        Ok(Self { nu, tau0, tau1 })
    }
}

/// Window lengths `τ₁ r⁻ⁱ ≥ τ₀`, plus `τ₀` itself, so every length in the
/// range has a grid length in `(L/r, L]`.
pub fn scale_grid(tau0: f64, tau1: f64) -> Vec<f64> {
    let mut out = vec![tau1];
    loop {
        let next = out.last().unwrap() / SCALE_RATIO;
        if next < tau0 * (1.0 + 1e-12) {
            break;
        }
        out.push(next);
    }
    if *out.last().unwrap() > tau0 * (1.0 + 1e-12) {
        out.push(tau0);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorosityReport {
    pub porous: bool,
    /// A window `[x, x + L]` without a gap of length `νL`.
    pub witness: Option<[f64; 2]>,
    /// Porosity constant valid for every length in the range, `ν/r`.
    pub certified_nu: f64,
    pub scales_checked: usize,
}

pub fn porosity_check(omega: &IntervalSet, query: &PorosityQuery) -> Result<PorosityReport, FupError> {
    let q = PorosityQuery::new(query.nu, query.tau0, query.tau1)?;
    let scales = scale_grid(q.tau0, q.tau1);
    for &len in &scales {
        let (gap, x) = omega.min_gap(len);
        if gap < q.nu * len - GAP_SLACK {
            return Ok(PorosityReport { porous: false, witness: Some([x, x + len]), certified_nu: 0.0, scales_checked: scales.len() });
        }
    }
    Ok(PorosityReport { porous: true, witness: None, certified_nu: q.nu / SCALE_RATIO, scales_checked: scales.len() })
}

/// Largest `ν` on the [`POROSITY_STEP`] grid for which [`porosity_check`]
/// passes, or 0.
pub fn max_porosity(omega: &IntervalSet, tau0: f64, tau1: f64) -> Result<f64, FupError> {
    if tau0 > tau1 {
        return Err(FupError::DegenerateScales(tau0, tau1));
    }
    let top = (1.0 / POROSITY_STEP).round() as usize - 1;
    let passes = |k: usize| -> Result<bool, FupError> {
        Ok(porosity_check(omega, &PorosityQuery::new(k as f64 * POROSITY_STEP, tau0, tau1)?)?.porous)
    };
    if !passes(1)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (1usize, top + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo as f64 * POROSITY_STEP)
}

/// Level-`k` Cantor iterate in base `b` with allowed digits `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSet {
    pub base: usize,
    pub digits: Vec<usize>,
    pub level: u32,
    pub intervals: IntervalSet,
    /// Residues of `Z_{b^k}` whose `k` base-`b` digits all lie in `D`.
    pub residues: Vec<usize>,
}

impl CantorSet {
    pub fn modulus(&self) -> usize {
        self.base.pow(self.level)
    }
}

pub fn cantor_set(base: usize, digits: &[usize], level: u32) -> Result<CantorSet, FupError> {
    let mut d: Vec<usize> = digits.to_vec();
    d.sort_unstable();
    d.dedup();
    if base < 3 || d.is_empty() || d.len() >= base || d.iter().any(|&x| x >= base) {
        return Err(FupError::BadDigits(base));
    }
    let mut residues = vec![0usize];
    for _ in 0..level {
        residues = residues.iter().flat_map(|r| d.iter().map(move |x| r * base + x)).collect();
    }
    let scale = (base as f64).powi(level as i32);
    let intervals = IntervalSet::new(residues.iter().map(|&r| [r as f64 / scale, (r + 1) as f64 / scale]).collect())?;
    Ok(CantorSet { base, digits: d, level, intervals, residues })
}

fn check_indices(s: &[usize], n: usize) -> Result<(), FupError> {
    if s.is_empty() {
        return Err(FupError::EmptySet);
    }
    match s.iter().find(|&&j| j >= n) {
        Some(&j) => Err(FupError::BadIndex(j, n)),
        None => Ok(()),
    }
}

/// Cyclic distance from every residue of `Z_N` to the set.
fn distance_to_set(s: &[usize], n: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; n];
    for &j in s {
        d[j] = 0;
    }
    // two sweeps around the circle relax distances in both directions
    for _ in 0..2 {
        for j in 0..2 * n {
            let (a, b) = (j % n, (j + 1) % n);
            if d[a] != usize::MAX {
                d[b] = d[b].min(d[a] + 1);
            }
        }
        for j in (0..2 * n).rev() {
            let (a, b) = ((j + 1) % n, j % n);
            if d[a] != usize::MAX {
                d[b] = d[b].min(d[a] + 1);
            }
        }
    }
    d
}

/// Residues at cyclic distance `< s` from the set.
pub fn thicken(set: &[usize], n: usize, s: f64) -> Vec<usize> {
    distance_to_set(set, n).into_iter().enumerate().filter(|(_, d)| (*d as f64) < s).map(|(j, _)| j).collect()
}

/// Trapezoid weight `max(0, 1 − dist/s)`, equal to 1 on the set.
pub fn trapezoid_weights(set: &[usize], n: usize, s: f64) -> Vec<f64> {
    distance_to_set(set, n).into_iter().map(|d| (1.0 - d as f64 / s).max(0.0)).collect()
}

fn weighted_dft_norm(rows: &[(usize, f64)], cols: &[(usize, f64)], n: usize) -> f64 {
    let scale = 1.0 / (n as f64).sqrt();
    let table: Vec<C64> = (0..n).map(|r| C64::from_polar(scale, 2.0 * PI * r as f64 / n as f64)).collect();
    let m = Mat::from_fn(rows.len(), cols.len(), |i, j| {
        let (a, wa) = rows[i];
        let (b, wb) = cols[j];
        table[(a * b) % n] * (wa * wb)
    });
    op_norm(m.as_ref())
}

/// Largest singular value of the `Y × X` block of the inverse unitary DFT
/// `e^{2πi jk/N}/√N`. With `smooth = Some(s)` the indicators become
/// trapezoid weights supported on the `s`-thickened sets.
pub fn dft_localization_norm(x: &[usize], y: &[usize], n: usize, smooth: Option<f64>) -> Result<f64, FupError> {
    check_indices(x, n)?;
    check_indices(y, n)?;
    let pairs = |set: &[usize]| -> Vec<(usize, f64)> {
        match smooth {
            None => set.iter().map(|&j| (j, 1.0)).collect(),
            Some(s) => trapezoid_weights(set, n, s).into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect(),
        }
    };
    Ok(weighted_dft_norm(&pairs(y), &pairs(x), n))
}

/// Fitted decay `norm ≈ C N^{−β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FupResult {
    pub n_values: Vec<usize>,
    pub norms: Vec<f64>,
    pub beta_hat: f64,
    pub r_squared: f64,
}

/// OLS slope of `−log(norm)` against `log N`.
pub fn fit_beta(results: &[(usize, f64)]) -> Result<FupResult, FupError> {
    if results.len() < 3 || results.iter().any(|r| !(r.1 > 0.0) || r.0 == 0) {
        return Err(FupError::InsufficientData(results.len()));
    }
    let x: Vec<f64> = results.iter().map(|r| (r.0 as f64).ln()).collect();
    let y: Vec<f64> = results.iter().map(|r| -r.1.ln()).collect();
    let fit = ols(&x, &y).ok_or(FupError::InsufficientData(results.len()))?;
    Ok(FupResult {
        n_values: results.iter().map(|r| r.0).collect(),
        norms: results.iter().map(|r| r.1).collect(),
        beta_hat: fit.slope,
        r_squared: fit.r_squared,
    })
}

const MOLLIFIER_RADIAL: usize = 12;
const MOLLIFIER_ANGULAR: usize = 24;

/// Quadrature of the normalized radial bump `exp(−1/(1 − (r/R)²))` on the
/// disc of radius `R`: midpoint rule in `r`, uniform in angle, weights
/// summing to 1.
fn mollifier_nodes(radius: f64) -> Vec<(Vec2, f64)> {
    let mut nodes = Vec::with_capacity(MOLLIFIER_RADIAL * MOLLIFIER_ANGULAR);
    for i in 0..MOLLIFIER_RADIAL {
        let u = (i as f64 + 0.5) / MOLLIFIER_RADIAL as f64;
        let w = (-1.0 / (1.0 - u * u)).exp() * u;
        for j in 0..MOLLIFIER_ANGULAR {
            let th = 2.0 * PI * (j as f64 + 0.5 * (i % 2) as f64) / MOLLIFIER_ANGULAR as f64;
            nodes.push(([radius * u * th.cos(), radius * u * th.sin()], w));
        }
    }
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    nodes.iter_mut().for_each(|n| n.1 /= total);
    nodes
}

/// Mollified indicator `1^κ_{S⁰} = 1_{S⁰} * ρ_{κ/2}`. Membership of each
/// quadrature point is decided by the integer part of its cell coordinates,
/// so every point of the plane lies in exactly one translate of `S⁰` and the
/// lattice sum of translates is 1 up to rounding.
#[derive(Debug, Clone)]
pub struct CellCutoff {
    pub cell: LatticeCell,
    pub kappa: f64,
    pub resolution: usize,
    /// Bounding box of `S⁰(κ)`.
    pub bbox: [[f64; 2]; 2],
    /// `values[i·R + j]` at the center of grid cell `(i, j)` (`i` along `y`).
    pub values: Vec<f64>,
    nodes: Vec<(Vec2, f64)>,
}

impl CellCutoff {
    fn index(&self, x: Vec2) -> (i64, i64) {
        let [s, t] = self.cell.cell_coords(x);
        (s.floor() as i64, t.floor() as i64)
    }

    fn radius(&self) -> f64 {
        self.kappa / 2.0
    }

    /// Cutoff at `x` for the translate `S⁰ + iP + jP'`.
    pub fn value_translate(&self, x: Vec2, i: i64, j: i64) -> f64 {
        let shifted = [x[0] - i as f64 * self.cell.p[0] - j as f64 * self.cell.p_prime[0], x[1] - i as f64 * self.cell.p[1] - j as f64 * self.cell.p_prime[1]];
        self.value_at(shifted)
    }

    pub fn value_at(&self, x: Vec2) -> f64 {
        let sd = self.cell.signed_distance(x);
        let r = self.radius();
        if sd > r * (1.0 + 1e-9) {
            return 1.0;
        }
        if sd < -r * (1.0 + 1e-9) {
            return 0.0;
        }
        self.nodes.iter().filter(|(z, _)| self.index([x[0] - z[0], x[1] - z[1]]) == (0, 0)).map(|(_, w)| w).sum()
    }

    pub fn grid_point(&self, i: usize, j: usize) -> Vec2 {
        let [[y0, y1], [e0, e1]] = self.bbox;
        let r = self.resolution as f64;
        [y0 + (i as f64 + 0.5) * (y1 - y0) / r, e0 + (j as f64 + 0.5) * (e1 - e0) / r]
    }

    /// `max |Σ_{|i|,|j| ≤ 1} 1^κ(x − iP − jP') − 1|` over grid points in `S⁰`.
    pub fn translate_residual(&self) -> f64 {
        (0..self.resolution)
            .into_par_iter()
            .map(|i| {
                let mut worst: f64 = 0.0;
                for j in 0..self.resolution {
                    let x = self.grid_point(i, j);
                    if self.cell.signed_distance(x) < 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for a in -1..=1 {
                        for b in -1..=1 {
                            s += self.value_translate(x, a, b);
                        }
                    }
                    worst = worst.max((s - 1.0).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

pub fn cell_cutoff(cell: &LatticeCell, kappa: f64, resolution: usize) -> Result<CellCutoff, FupError> {
    let limit = cell.inradius();
    if !(kappa > 0.0 && kappa < limit) {
        return Err(ClassicalError::KappaTooLarge { kappa, limit }.into());
    }
    let mut c = CellCutoff { cell: cell.clone(), kappa, resolution, bbox: cell.bounding_box(), values: Vec::new(), nodes: mollifier_nodes(kappa / 2.0) };
    let values: Vec<f64> = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| c.value_at(c.grid_point(idx / resolution, idx % resolution)))
        .collect();
    c.values = values;
    Ok(c)
}

/// Which propagated product is rasterized and onto which axis it projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Times `1..=T′`, projected to `y`.
    Plus,
    /// Times `−T′+1..=0`, projected to `η`.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub resolution: usize,
    pub threshold: f64,
}

impl Default for RasterSpec {
    fn default() -> Self {
        Self { resolution: DEFAULT_RESOLUTION, threshold: DEFAULT_SUPPORT_THRESHOLD }
    }
}

/// Projection of `supp(Π_k a_{w_k} ∘ γᵏ ∘ ι · 1^κ_{S⁰})`, rasterized on a
/// `resolution²` grid over the bounding box of `S⁰(κ)` and thresholded at
/// `threshold`. The letters are evaluated in closed form (before Fourier
/// truncation), and `γᵏ ι = ι diag(λ_uᵏ, λ_sᵏ)` keeps the iterate well
/// conditioned. Rasterization under-approximates the closed support.
pub fn support_projection(
    partition: &PartitionPair,
    map: &HyperbolicMap,
    cutoff: &CellCutoff,
    w: &Word,
    side: Side,
    raster: RasterSpec,
) -> IntervalSet {
    let res = raster.resolution;
    let bbox = cutoff.bbox;
    let times: Vec<(i32, u8)> = w
        .letters
        .iter()
        .enumerate()
        .map(|(idx, &b)| match side {
            Side::Plus => (idx as i32 + 1, b),
            Side::Minus => (idx as i32 + 1 - w.len() as i32, b),
        })
        .collect();
    let scales: Vec<(f64, f64, u8)> = times.iter().map(|&(k, b)| (map.lambda_u.powi(k), map.lambda_s.powi(k), b)).collect();
    let geo = CellCutoff { values: Vec::new(), resolution: res, ..cutoff.clone() };
    let marked: Vec<bool> = (0..res)
        .into_par_iter()
        .map(|a| {
            (0..res).any(|b| {
                let (i, j) = match side {
                    Side::Plus => (a, b),
                    Side::Minus => (b, a),
                };
                let x = geo.grid_point(i, j);
                let mut prod = 1.0;
                for &(lu, ls, letter) in &scales {
                    let z = mat2_apply(&map.iota, [lu * x[0], ls * x[1]]);
                    prod *= partition.exact_value(letter, [wrap(z[0]), wrap(z[1])]);
                    if prod <= raster.threshold {
                        return false;
                    }
                }
                prod * geo.value_at(x) > raster.threshold
            })
        })
        .collect();
    let (lo, hi) = match side {
        Side::Plus => (bbox[0][0], bbox[0][1]),
        Side::Minus => (bbox[1][0], bbox[1][1]),
    };
    let step = (hi - lo) / res as f64;
    let mut raw = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &m) in marked.iter().chain(std::iter::once(&false)).enumerate() {
        match (m, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                raw.push([lo + s as f64 * step, lo + k as f64 * step]);
                start = None;
            }
            _ => {}
        }
    }
    IntervalSet::new(raw).expect("grid cells are ordered")
}

/// Grid step of [`support_projection`] along the projected axis.
pub fn projection_step(cutoff: &CellCutoff, side: Side, resolution: usize) -> f64 {
    let axis = match side {
        Side::Plus => cutoff.bbox[0],
        Side::Minus => cutoff.bbox[1],
    };
    (axis[1] - axis[0]) / resolution as f64
}

/// Lattice cell and its cutoff for a map.
pub fn cell_for_map(map: &HyperbolicMap, kappa: f64, resolution: usize) -> Result<CellCutoff, FupError> {
    let cell = shortest_cell_basis(map, kappa)?;
    cell_cutoff(&cell, kappa, resolution)
}
