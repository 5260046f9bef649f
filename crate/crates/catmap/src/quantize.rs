//! Torus symbols stored as Fourier tables, their Weyl quantization, exact
//! composition with the map, smooth partitions of unity, and the Moyal and
//! Gårding probes.

use crate::classical::{mat2i_pow, torus_distance, HyperbolicMap, Vec2};
use crate::hilbert::HilbertSpec;
use crate::linalg::{fft2_inplace, hermitian_eigenvalues, hermitian_part, op_norm};
use crate::{CMat, C64};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;
use thiserror::Error;

pub const DEFAULT_L_MAX: i64 = 48;
/// Hard bound on relabeled frequencies in [`compose_with_map`].
pub const DEFAULT_FREQ_BOUND: i64 = 1 << 20;
/// Coefficients below this fraction of the largest one are dropped when
/// sampling.
const PRUNE_RELATIVE: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("grid of side {m} is too coarse for cutoff {l_max} (need at least {need})")]
    GridTooCoarse { m: usize, l_max: i64, need: usize },
    #[error("relabeled frequency {0:?} exceeds the bound {1}")]
    CutoffOverflow([i64; 2], i64),
    #[error("regions overlap: {0}")]
    OverlappingRegions(String),
    #[error("support radius {0} exceeds 1/2")]
    SupportTooLarge(f64),
    #[error("integer overflow in map power {0}")]
    PowerOverflow(i64),
    #[error("malformed symbol input: {0}")]
    Parse(String),
}

/// Real smooth function on the torus as a finite Fourier table,
/// `a(y, η) = Σ_l â(l) e^{2πi(l₂y − l₁η)}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TorusSymbol {
    pub coeffs: BTreeMap<[i64; 2], C64>,
    /// Largest deviation between the truncated table and the samples it was
    /// built from; zero for symbols given exactly.
    pub truncation_error: f64,
}

#[derive(Serialize, Deserialize)]
struct CoeffRecord {
    l: [i64; 2],
    re: f64,
    im: f64,
}

impl TorusSymbol {
    pub fn from_modes<I: IntoIterator<Item = ([i64; 2], C64)>>(modes: I) -> Self {
        let mut coeffs = BTreeMap::new();
        for (l, c) in modes {
            *coeffs.entry(l).or_insert(C64::new(0.0, 0.0)) += c;
        }
        Self { coeffs, truncation_error: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_modes([([0, 0], C64::new(c, 0.0))])
    }

    /// A single Fourier mode `e^{2πi(l₂y − l₁η)}`.
    pub fn mode(l: [i64; 2]) -> Self {
        Self::from_modes([(l, C64::new(1.0, 0.0))])
    }

    /// `cos(2π(p·y + q·η))`.
    pub fn cosine(p: i64, q: i64) -> Self {
        Self::from_modes([([-q, p], C64::new(0.5, 0.0)), ([q, -p], C64::new(0.5, 0.0))])
    }

    /// Samples `f` on an `m × m` grid and truncates to `‖l‖∞ ≤ l_max`.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(f: F, m: usize, l_max: i64) -> Result<Self, QuantizeError> {
        let mut samples = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..m {
                samples[p * m + q] = f(p as f64 / m as f64, q as f64 / m as f64);
            }
        }
        sample_symbol(&samples, m, l_max)
    }

    /// Radial plateau: 1 within `r0` of `center`, 0 beyond `r1`.
    pub fn radial_bump(center: Vec2, r0: f64, r1: f64, l_max: i64) -> Result<Self, QuantizeError> {
        if r1 > 0.5 {
            return Err(QuantizeError::SupportTooLarge(r1));
        }
        Self::from_fn(|y, e| radial_plateau(torus_distance([y, e], center), r0, r1), grid_side_for(l_max), l_max)
    }

    pub fn mean(&self) -> C64 {
        self.coeffs.get(&[0, 0]).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    /// Largest `‖l‖∞` present.
    pub fn cutoff(&self) -> i64 {
        self.coeffs.keys().map(|l| l[0].abs().max(l[1].abs())).max().unwrap_or(0)
    }

    pub fn is_position_only(&self) -> bool {
        self.coeffs.keys().all(|l| l[0] == 0)
    }

    /// Largest violation of `â(−l) = conj(â(l))`.
    pub fn reality_defect(&self) -> f64 {
        let zero = C64::new(0.0, 0.0);
        self.coeffs
            .iter()
            .map(|(l, c)| (c - self.coeffs.get(&[-l[0], -l[1]]).copied().unwrap_or(zero).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn eval_complex(&self, y: f64, eta: f64) -> C64 {
        self.coeffs
            .iter()
            .map(|(l, c)| c * C64::from_polar(1.0, 2.0 * PI * (l[1] as f64 * y - l[0] as f64 * eta)))
            .sum()
    }

    pub fn eval(&self, y: f64, eta: f64) -> f64 {
        self.eval_complex(y, eta).re
    }

    /// Values at `(p/m, q/m)`, row-major in `p` (the `y` index). Exact for
    /// any `m`: frequencies are folded modulo the grid before the FFT.
    pub fn eval_grid_complex(&self, m: usize) -> Vec<C64> {
        let mut f = vec![C64::new(0.0, 0.0); m * m];
        let mi = m as i64;
        for (l, c) in &self.coeffs {
            let u = l[1].rem_euclid(mi) as usize;
            let v = (-l[0]).rem_euclid(mi) as usize;
            f[u * m + v] += c;
        }
        fft2_inplace(&mut f, m, true);
        f
    }

    pub fn eval_grid(&self, m: usize) -> Vec<f64> {
        self.eval_grid_complex(m).into_iter().map(|z| z.re).collect()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|(l, c)| (*l, c * s)).collect(), truncation_error: self.truncation_error * s.norm() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for (l, c) in &other.coeffs {
            *coeffs.entry(*l).or_insert(C64::new(0.0, 0.0)) += c;
        }
        Self { coeffs, truncation_error: self.truncation_error + other.truncation_error }
    }

    /// `1 − a`.
    pub fn complement(&self) -> Self {
        let mut out = self.scaled(C64::new(-1.0, 0.0));
        *out.coeffs.entry([0, 0]).or_insert(C64::new(0.0, 0.0)) += 1.0;
        out
    }

    pub fn to_json(&self) -> String {
        let recs: Vec<CoeffRecord> = self.coeffs.iter().map(|(l, c)| CoeffRecord { l: *l, re: c.re, im: c.im }).collect();
        serde_json::to_string(&recs).expect("finite floats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, QuantizeError> {
        let recs: Vec<CoeffRecord> = serde_json::from_str(s).map_err(|e| QuantizeError::Parse(e.to_string()))?;
        Ok(Self::from_modes(recs.into_iter().map(|r| (r.l, C64::new(r.re, r.im)))))
    }
}

/// Grid side used when sampling a symbol with cutoff `l_max`.
pub fn grid_side_for(l_max: i64) -> usize {
    (4 * (l_max.max(0) as usize + 1)).max(256).next_power_of_two()
}

fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// `C^∞` step from 0 at `t ≤ 0` to 1 at `t ≥ 1`.
pub fn smoothstep(t: f64) -> f64 {
    let a = psi(t);
    let b = psi(1.0 - t);
    if a + b == 0.0 {
        if t >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        a / (a + b)
    }
}

/// 1 for `d ≤ r0`, 0 for `d ≥ r1`, smooth in between.
pub fn radial_plateau(d: f64, r0: f64, r1: f64) -> f64 {
    if d <= r0 {
        1.0
    } else if d >= r1 {
        0.0
    } else {
        smoothstep((r1 - d) / (r1 - r0))
    }
}

/// Fourier table from real samples on an `m × m` grid (row index = `y`).
pub fn sample_symbol(samples: &[f64], m: usize, l_max: i64) -> Result<TorusSymbol, QuantizeError> {
    let need = 2 * l_max.max(0) as usize + 2;
    if m < need {
        return Err(QuantizeError::GridTooCoarse { m, l_max, need });
    }
    if samples.len() != m * m {
        return Err(QuantizeError::Parse(format!("expected {} samples, got {}", m * m, samples.len())));
    }
    let mut f: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft2_inplace(&mut f, m, false);
    let norm = 1.0 / (m * m) as f64;
    let mi = m as i64;
    let at = |l: [i64; 2]| f[l[1].rem_euclid(mi) as usize * m + (-l[0]).rem_euclid(mi) as usize] * norm;
    let mut raw = BTreeMap::new();
    let mut largest = 0.0f64;
    for l1 in -l_max..=l_max {
        for l2 in -l_max..=l_max {
            // symmetrize so the table is exactly real
            let c = 0.5 * (at([l1, l2]) + at([-l1, -l2]).conj());
            largest = largest.max(c.norm());
            raw.insert([l1, l2], c);
        }
    }
    let floor = PRUNE_RELATIVE * largest;
    let coeffs: BTreeMap<[i64; 2], C64> = raw.into_iter().filter(|(_, c)| c.norm() > floor).collect();
    let mut sym = TorusSymbol { coeffs, truncation_error: 0.0 };
    let back = sym.eval_grid(m);
    sym.truncation_error = back.iter().zip(samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(sym)
}

/// Reads an `m × m` CSV of real samples (rows indexed by `y`).
pub fn sample_symbol_from_csv<R: Read>(reader: R, l_max: i64) -> Result<TorusSymbol, QuantizeError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| QuantizeError::Parse(e.to_string()))?;
        let row = rec.iter().map(|s| s.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|e| QuantizeError::Parse(e.to_string()))?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(QuantizeError::Parse("grid must be square".into()));
    }
    sample_symbol(&rows.concat(), m, l_max)
}

/// Table of `e^{iπr/N}` for `r = 0..2N`.
pub(crate) fn half_phase_table(n: usize) -> Vec<C64> {
    (0..2 * n).map(|r| C64::from_polar(1.0, PI * r as f64 / n as f64)).collect()
}

/// Folds frequencies to residues modulo `N`, absorbing the sign picked up by
/// `T_{l+Nq} = ± T_l`.
pub(crate) fn fold_coefficients(a: &TorusSymbol, n: usize) -> BTreeMap<[i64; 2], C64> {
    let nn = n as i64;
    let mut out = BTreeMap::new();
    for (l, c) in &a.coeffs {
        let (r1, q1) = (l[0].rem_euclid(nn), l[0].div_euclid(nn));
        let (r2, q2) = (l[1].rem_euclid(nn), l[1].div_euclid(nn));
        let parity = (r1 * q2.rem_euclid(2) + q1.rem_euclid(2) * r2 + nn * (q1 * q2).rem_euclid(2)).rem_euclid(2);
        let s = if parity == 0 { 1.0 } else { -1.0 };
        *out.entry([r1, r2]).or_insert(C64::new(0.0, 0.0)) += c * s;
    }
    out
}

/// `Op_N(a) = Σ_l â(l) T_{l/N}`.
pub fn op_matrix(a: &TorusSymbol, spec: HilbertSpec) -> CMat {
    let n = spec.n;
    let table = half_phase_table(n);
    let two_n = 2 * n as i64;
    let mut m = CMat::zeros(n, n);
    for (l, c) in fold_coefficients(a, n) {
        let (l1, l2) = (l[0], l[1]);
        let shift = l1 as usize;
        let base = (-(l1 * l2)).rem_euclid(two_n);
        let step = (2 * l2).rem_euclid(two_n);
        for j in 0..n {
            let k = (j + shift) % n;
            let e = (base + step * k as i64) % two_n;
            m[(k, j)] += c * table[e as usize];
        }
    }
    m
}

/// Exact relabeling `a ∘ γᵖ`: the coefficient at `l` moves to `γ⁻ᵖ l`.
pub fn compose_with_map(a: &TorusSymbol, map: &HyperbolicMap, power: i64) -> Result<TorusSymbol, QuantizeError> {
    compose_with_map_bounded(a, map, power, DEFAULT_FREQ_BOUND)
}

pub fn compose_with_map_bounded(a: &TorusSymbol, map: &HyperbolicMap, power: i64, bound: i64) -> Result<TorusSymbol, QuantizeError> {
    let g = mat2i_pow(&map.entries, -power).ok_or(QuantizeError::PowerOverflow(power))?;
    let mut coeffs = BTreeMap::new();
    for (l, c) in &a.coeffs {
        let nl = [
            g[0][0].checked_mul(l[0]).and_then(|x| x.checked_add(g[0][1].checked_mul(l[1])?)),
            g[1][0].checked_mul(l[0]).and_then(|x| x.checked_add(g[1][1].checked_mul(l[1])?)),
        ];
        let nl = match nl {
            [Some(x), Some(y)] => [x, y],
            _ => return Err(QuantizeError::CutoffOverflow(*l, bound)),
        };
        if nl[0].abs() > bound || nl[1].abs() > bound {
            return Err(QuantizeError::CutoffOverflow(nl, bound));
        }
        coeffs.insert(nl, *c);
    }
    Ok(TorusSymbol { coeffs, truncation_error: a.truncation_error })
}

/// Ball on the torus in the periodic Euclidean metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec2,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        torus_distance(p, self.center) <= self.radius
    }
}

/// Two-element smooth partition of unity `a₁ + a₂ = 1` with `a₁ = 1` on `K₂`
/// and `a₁ = 0` on `K₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPair {
    pub a1: TorusSymbol,
    pub a2: TorusSymbol,
    pub k1: Ball,
    pub k2: Ball,
    pub support: Ball,
    /// Radius (about the support center) on which `a₁ ≡ 1`.
    pub plateau: f64,
    pub l_max: i64,
}

/// Deviations of a partition from its defining properties on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCheck {
    pub coefficient_sum_error: f64,
    pub k2_deviation: f64,
    pub k1_deviation: f64,
    pub range_violation: f64,
    pub truncation_error: f64,
}

pub fn build_partition(k1: Ball, k2: Ball, support: Ball, l_max: i64) -> Result<PartitionPair, QuantizeError> {
    let d12 = torus_distance(k1.center, k2.center);
    if d12 <= k1.radius + k2.radius {
        return Err(QuantizeError::OverlappingRegions("K1 and K2 intersect".into()));
    }
    if support.radius > 0.5 {
        return Err(QuantizeError::SupportTooLarge(support.radius));
    }
    let plateau = torus_distance(support.center, k2.center) + k2.radius;
    if plateau >= support.radius {
        return Err(QuantizeError::OverlappingRegions("K2 is not strictly inside the support bound".into()));
    }
    if torus_distance(support.center, k1.center) <= support.radius + k1.radius {
        return Err(QuantizeError::OverlappingRegions("K1 meets the support bound".into()));
    }
    let a1 = TorusSymbol::radial_bump(support.center, plateau, support.radius, l_max)?;
    let a2 = a1.complement();
    Ok(PartitionPair { a1, a2, k1, k2, support, plateau, l_max })
}

impl PartitionPair {
    /// Partition used by the word experiments: `a₁` is a plateau of radius
    /// 0.455 around (0.7, 0.7) supported in radius 0.5, and `K₁` a small
    /// ball near the antipodal corner.
    pub fn standard() -> Self {
        build_partition(
            Ball::new([0.2, 0.2], 0.1),
            Ball::new([0.7, 0.7], 0.455),
            Ball::new([0.7, 0.7], 0.5),
            STANDARD_L_MAX,
        )
        .expect("standard partition geometry is admissible")
    }

    pub fn letter(&self, eps: u8) -> &TorusSymbol {
        if eps == 1 {
            &self.a1
        } else {
            &self.a2
        }
    }

    /// Closed-form value of `a_ε` at a torus point, before Fourier
    /// truncation.
    pub fn exact_value(&self, eps: u8, x: Vec2) -> f64 {
        let v = radial_plateau(torus_distance(x, self.support.center), self.plateau, self.support.radius);
        if eps == 1 {
            v
        } else {
            1.0 - v
        }
    }

    pub fn check(&self, m: usize) -> PartitionCheck {
        let sum = self.a1.add(&self.a2);
        let coefficient_sum_error = sum
            .coeffs
            .iter()
            .map(|(l, c)| if *l == [0, 0] { (c - 1.0).norm() } else { c.norm() })
            .fold(0.0, f64::max);
        let g1 = self.a1.eval_grid(m);
        let g2 = self.a2.eval_grid(m);
        let (mut k1d, mut k2d, mut rv) = (0.0f64, 0.0f64, 0.0f64);
        for p in 0..m {
            for q in 0..m {
                let x = [p as f64 / m as f64, q as f64 / m as f64];
                let (v1, v2) = (g1[p * m + q], g2[p * m + q]);
                if self.k2.contains(x) {
                    k2d = k2d.max((v1 - 1.0).abs());
                }
                if self.k1.contains(x) {
                    k1d = k1d.max(v1.abs());
                }
                for v in [v1, v2] {
                    rv = rv.max((-v).max(v - 1.0).max(0.0));
                }
            }
        }
        PartitionCheck {
            coefficient_sum_error,
            k2_deviation: k2d,
            k1_deviation: k1d,
            range_violation: rv,
            truncation_error: self.a1.truncation_error,
        }
    }
}

/// Fourier cutoff of [`PartitionPair::standard`]; the narrow transition
/// layer needs more modes than the default.
pub const STANDARD_L_MAX: i64 = 384;

/// Pointwise product `ab`, evaluated on a zero-padded grid large enough that
/// the product table is exact.
pub fn product_symbol(a: &TorusSymbol, b: &TorusSymbol) -> TorusSymbol {
    let l = a.cutoff() + b.cutoff();
    let m = (4 * (a.cutoff().max(b.cutoff()) as usize + 1)).max(2 * l as usize + 2).max(8).next_power_of_two();
    let ga = a.eval_grid_complex(m);
    let gb = b.eval_grid_complex(m);
    let mut f: Vec<C64> = ga.iter().zip(&gb).map(|(x, y)| x * y).collect();
    fft2_inplace(&mut f, m, false);
    let norm = 1.0 / (m * m) as f64;
    let mi = m as i64;
    let mut coeffs = BTreeMap::new();
    for l1 in -l..=l {
        for l2 in -l..=l {
            let c = f[l2.rem_euclid(mi) as usize * m + (-l1).rem_euclid(mi) as usize] * norm;
            if c.norm() > 1e-300 {
                coeffs.insert([l1, l2], c);
            }
        }
    }
    TorusSymbol { coeffs, truncation_error: a.truncation_error + b.truncation_error }
}

/// `‖Op_N(a)Op_N(b) − Op_N(ab)‖`.
pub fn moyal_defect(a: &TorusSymbol, b: &TorusSymbol, spec: HilbertSpec) -> f64 {
    let ab = product_symbol(a, b);
    let lhs = &op_matrix(a, spec) * &op_matrix(b, spec);
    let d = lhs - op_matrix(&ab, spec);
    op_norm(d.as_ref())
}

/// Smallest eigenvalue of the Hermitian part of `Op_N(a)`.
pub fn garding_floor(a: &TorusSymbol, spec: HilbertSpec) -> f64 {
    let h = hermitian_part(op_matrix(a, spec).as_ref());
    hermitian_eigenvalues(h.as_ref()).and_then(|v| v.first().copied()).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub t: i64,
    /// Sup-norm of the derivative of `a∘γᵗ` along the unit unstable direction.
    pub unstable_norm: f64,
    pub stable_norm: f64,
    pub lambda_pow: f64,
    /// `unstable_norm / (λ_uᵗ · unstable_norm at t = 0)`.
    pub unstable_ratio: f64,
    /// `stable_norm · λ_uᵗ / stable_norm at t = 0`.
    pub stable_ratio: f64,
}

/// Sup-norm on an `m × m` grid of the central difference of `a` along `v`
/// with step `s`, evaluated spectrally: the shift `x ↦ x ± s v` multiplies
/// each coefficient by a phase.
fn directional_difference_norm(a: &TorusSymbol, v: Vec2, s: f64, m: usize) -> f64 {
    let d = TorusSymbol {
        coeffs: a
            .coeffs
            .iter()
            .map(|(l, c)| {
                let w = 2.0 * PI * (l[1] as f64 * v[0] - l[0] as f64 * v[1]) * s;
                (*l, c * C64::new(0.0, w.sin() / s))
            })
            .collect(),
        truncation_error: 0.0,
    };
    d.eval_grid(m).into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Finite-difference growth of `a∘γᵗ` along the stable and unstable
/// directions, normalized by `λ_uᵗ` and the `t = 0` values.
pub fn derivative_growth_probe(a: &TorusSymbol, map: &HyperbolicMap, t: i64, m: usize) -> Result<GrowthReport, QuantizeError> {
    let s = 1e-6;
    let b = compose_with_map(a, map, t)?;
    let grid = m.max(2 * b.cutoff() as usize + 2);
    let u0 = directional_difference_norm(a, map.v_u, s, grid);
    let s0 = directional_difference_norm(a, map.v_s, s, grid);
    let unstable_norm = directional_difference_norm(&b, map.v_u, s, grid);
    let stable_norm = directional_difference_norm(&b, map.v_s, s, grid);
    let lambda_pow = map.lambda_u.abs().powi(t as i32);
    Ok(GrowthReport {
        t,
        unstable_norm,
        stable_norm,
        lambda_pow,
        unstable_ratio: unstable_norm / (lambda_pow * u0),
        stable_ratio: stable_norm * lambda_pow / s0,
    })
}
