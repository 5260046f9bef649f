//! The quantized cat map `M_N(γ)`: kernel construction, exact Egorov checks,
//! unitary eigendecomposition with degenerate clusters, and the quantum period.

use crate::classical::{mat2i_pow, HyperbolicMap};
use crate::hilbert::{translation_phase, HilbertSpec, StateVector};
use crate::linalg::{hermitian_eigen, hermitian_part, matrix_power, op_norm, skew_part, unitarity_residual};
use crate::quantize::{compose_with_map, op_matrix, QuantizeError, TorusSymbol};
use crate::{CMat, C64};
use faer::Mat;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Residual above which a freshly built kernel is rejected.
pub const UNITARITY_FAILURE: f64 = 1e-8;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_GAP: f64 = 1e-8;
/// Coarser grouping used in the first (Hermitian-part) stage.
const STAGE_ONE_GAP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("kernel needs b != 0 and gcd(2b, N) = 1 (b = {b}, N = {n})")]
    UnsupportedN { n: usize, b: i64 },
    #[error("unitarity residual {0:e} exceeds tolerance")]
    UnitarityFailure(f64),
    #[error("eigensolver did not converge")]
    ConvergenceFailure,
    #[error("no period up to {0}")]
    NotFound(u64),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error("malformed matrix dump: {0}")]
    Decode(String),
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a.rem_euclid(b))
    }
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn mod_inverse(a: i64, n: i64) -> Option<i64> {
    let (mut r0, mut r1) = (a.rem_euclid(n), n);
    let (mut s0, mut s1) = (1i64, 0i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 == 1 || n == 1 {
        Some(s0.rem_euclid(n.max(1)))
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct QuantumCatMap {
    pub spec: HilbertSpec,
    pub map: HyperbolicMap,
    pub matrix: CMat,
    /// Unimodular prefactor; chosen so `M[0,0]` has argument in `[0, 2π/N)`.
    pub sigma: C64,
    /// `(2b)⁻¹ mod N`.
    pub inv_2b: i64,
}

/// Integer exponent `r` with `M[j,k] = σ e^{2πi r/N}/√N`.
fn kernel_exponent(inv_2b: i64, e: [[i64; 2]; 2], j: i64, k: i64, n: i64) -> i64 {
    let a = e[0][0].rem_euclid(n) as i128;
    let d = e[1][1].rem_euclid(n) as i128;
    let (j, k, n128) = (j as i128, k as i128, n as i128);
    let q = (a * k % n128 * k - 2 * j * k + d * j % n128 * j).rem_euclid(n128);
    ((inv_2b as i128 * q).rem_euclid(n128)) as i64
}

/// `M[j,k] = (σ/√N) exp(2πi·inv(2b)·(a k² − 2jk + d j²)/N)`.
pub fn build_cat_matrix(map: &HyperbolicMap, spec: HilbertSpec) -> Result<QuantumCatMap, PropagatorError> {
    let qcm = build_unchecked(map, spec)?;
    let r = unitarity_residual(qcm.matrix.as_ref());
    if !(r < UNITARITY_FAILURE) {
        return Err(PropagatorError::UnitarityFailure(r));
    }
    Ok(qcm)
}

/// Kernel construction without the `O(N³)` unitarity post-check.
pub fn build_unchecked(map: &HyperbolicMap, spec: HilbertSpec) -> Result<QuantumCatMap, PropagatorError> {
    let n = spec.n as i64;
    let b = map.entries[0][1];
    if b == 0 || gcd(2 * b, n) != 1 {
        return Err(PropagatorError::UnsupportedN { n: spec.n, b });
    }
    let inv_2b = mod_inverse(2 * b, n).ok_or(PropagatorError::UnsupportedN { n: spec.n, b })?;
    let table: Vec<C64> = (0..n).map(|r| C64::from_polar(1.0, 2.0 * PI * r as f64 / n as f64)).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let sigma = C64::new(1.0, 0.0);
    let e = map.entries;
    let matrix = Mat::from_fn(spec.n, spec.n, |j, k| table[kernel_exponent(inv_2b, e, j as i64, k as i64, n) as usize] * (sigma * scale));
    Ok(QuantumCatMap { spec, map: map.clone(), matrix, sigma, inv_2b })
}

impl QuantumCatMap {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(self.matrix.as_ref())
    }

    pub fn adjoint(&self) -> CMat {
        self.matrix.adjoint().to_owned()
    }

    /// `Mᵖ` for any integer `p` (negative powers use `M†`).
    pub fn power(&self, p: i64) -> CMat {
        if p >= 0 {
            matrix_power(self.matrix.as_ref(), p as u32)
        } else {
            matrix_power(self.adjoint().as_ref(), p.unsigned_abs() as u32)
        }
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let v = &self.matrix * Mat::from_fn(self.n(), 1, |i, _| psi.amplitudes[i]);
        StateVector { spec: self.spec, amplitudes: (0..self.n()).map(|i| v[(i, 0)]).collect() }
    }

    /// Matrix dump: magic `QCM1`, `u64` N, then row-major interleaved re/im.
    pub fn to_bytes(&self) -> Vec<u8> {
        matrix_to_bytes(&self.matrix)
    }
}

pub fn matrix_to_bytes(m: &CMat) -> Vec<u8> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(12 + 16 * n * m.ncols());
    out.extend_from_slice(b"QCM1");
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    out
}

/// Reads a square matrix written by [`matrix_to_bytes`].
pub fn matrix_from_bytes(bytes: &[u8]) -> Result<CMat, PropagatorError> {
    if bytes.len() < 12 || &bytes[..4] != b"QCM1" {
        return Err(PropagatorError::Decode("bad magic".into()));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + 16 * n * n {
        return Err(PropagatorError::Decode("length does not match header".into()));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
    Ok(Mat::from_fn(n, n, |i, j| {
        let o = 12 + 16 * (i * n + j);
        C64::new(f(o), f(o + 8))
    }))
}

/// `O(N log N)` application of the kernel: chirp, DFT with the frequency
/// index scaled by `2·(2b)⁻¹`, chirp.
pub struct FastCatMap {
    n: usize,
    chirp_in: Vec<C64>,
    chirp_out: Vec<C64>,
    stride: usize,
    scale: C64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl FastCatMap {
    pub fn new(qcm: &QuantumCatMap) -> Self {
        let n = qcm.n();
        let ni = n as i64;
        let e = qcm.map.entries;
        let phase = |r: i64| C64::from_polar(1.0, 2.0 * PI * r.rem_euclid(ni) as f64 / n as f64);
        let c = qcm.inv_2b as i128;
        let chirp = |coef: i64, k: i64| {
            let q = (coef.rem_euclid(ni) as i128 * k as i128 % ni as i128 * k as i128) % ni as i128;
            phase(((c * q) % ni as i128) as i64)
        };
        let chirp_in = (0..ni).map(|k| chirp(e[0][0], k)).collect();
        let chirp_out = (0..ni).map(|j| chirp(e[1][1], j)).collect();
        let stride = ((2 * c) % ni as i128) as usize;
        let mut planner = FftPlanner::new();
        Self {
            n,
            chirp_in,
            chirp_out,
            stride,
            scale: qcm.sigma / (n as f64).sqrt(),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    /// `M x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut y: Vec<C64> = x.iter().zip(&self.chirp_in).map(|(a, b)| a * b).collect();
        self.fft.process(&mut y);
        (0..n).map(|j| self.chirp_out[j] * y[(self.stride * j) % n] * self.scale).collect()
    }

    /// `M† x`.
    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut z: Vec<C64> = x.iter().zip(&self.chirp_out).map(|(a, b)| a * b.conj()).collect();
        self.ifft.process(&mut z);
        (0..n).map(|k| self.chirp_in[k].conj() * z[(self.stride * k) % n] * self.scale.conj()).collect()
    }
}

/// `‖M⁻¹ Op_N(a) M − Op_N(a∘γ)‖`.
pub fn egorov_defect(qcm: &QuantumCatMap, a: &TorusSymbol) -> Result<f64, PropagatorError> {
    egorov_defect_power(qcm, a, 1)
}

/// `‖M⁻ⁿ Op_N(a) Mⁿ − Op_N(a∘γⁿ)‖` for `n ≥ 0`.
pub fn egorov_defect_power(qcm: &QuantumCatMap, a: &TorusSymbol, n: u32) -> Result<f64, PropagatorError> {
    let b = compose_with_map(a, &qcm.map, n as i64)?;
    let mn = qcm.power(n as i64);
    let lhs = mn.adjoint() * op_matrix(a, qcm.spec) * &mn;
    let d = lhs - op_matrix(&b, qcm.spec);
    Ok(op_norm(d.as_ref()))
}

/// Single-mode Egorov checks against a cached power `Mⁿ`. Uses the unitary
/// equivalence `‖M⁻ⁿ T_l Mⁿ − T_{l'}‖ = ‖T_l Mⁿ − Mⁿ T_{l'}‖` with
/// `l' = γ⁻ⁿ l`, and bounds the spectral norm by the Frobenius norm, which
/// costs `O(N²)` per mode.
pub struct ModeEgorovSweep {
    pub power: i64,
    spec: HilbertSpec,
    mn: CMat,
    inverse_power: [[i64; 2]; 2],
}

impl ModeEgorovSweep {
    pub fn new(qcm: &QuantumCatMap, power: u32) -> Result<Self, PropagatorError> {
        let g = mat2i_pow(&qcm.map.entries, -(power as i64)).ok_or(QuantizeError::PowerOverflow(power as i64))?;
        Ok(Self { power: power as i64, spec: qcm.spec, mn: qcm.power(power as i64), inverse_power: g })
    }

    pub fn image(&self, l: [i64; 2]) -> [i64; 2] {
        let g = self.inverse_power;
        [g[0][0] * l[0] + g[0][1] * l[1], g[1][0] * l[0] + g[1][1] * l[1]]
    }

    /// Frobenius upper bound on the defect of the mode `l`.
    pub fn defect_bound(&self, l: [i64; 2]) -> f64 {
        let n = self.spec.n;
        let lp = self.image(l);
        let s = l[0].rem_euclid(n as i64) as usize;
        let sp = lp[0].rem_euclid(n as i64) as usize;
        let ph: Vec<C64> = (0..n).map(|k| translation_phase(l, k, n)).collect();
        let php: Vec<C64> = (0..n).map(|k| translation_phase(lp, k, n)).collect();
        let mut acc = 0.0;
        for j in 0..n {
            // (Mⁿ T_{l'})[:, j] = phase_{l'}(j + s') · Mⁿ[:, j + s']
            let jj = (j + sp) % n;
            let c = php[jj];
            for k in 0..n {
                // (T_l Mⁿ)[k, j] = phase_l(k) · Mⁿ[k − s, j]
                let left = ph[k] * self.mn[((k + n - s) % n, j)];
                let right = self.mn[(k, jj)] * c;
                acc += (left - right).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

/// How to fix the basis inside a degenerate eigenspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TieBreak {
    /// Diagonalize the window-mass form on the eigenspace, ascending.
    WindowMass { alpha1: f64, alpha2: f64 },
    /// Keep the solver's basis.
    Solver,
}

impl Default for TieBreak {
    fn default() -> Self {
        TieBreak::WindowMass { alpha1: 0.3, alpha2: 0.7 }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub spec: HilbertSpec,
    pub eigenvalues: Vec<C64>,
    /// Columns are eigenvectors of unit Euclidean norm.
    pub vectors: CMat,
    /// Index sets of degenerate clusters, ordered by eigenphase.
    pub clusters: Vec<Vec<usize>>,
}

impl SpectralData {
    /// Eigenvector `j` as a unit vector of `H_N`.
    pub fn state(&self, j: usize) -> StateVector {
        let col: Vec<C64> = (0..self.spec.n).map(|i| self.vectors[(i, j)]).collect();
        StateVector::from_euclidean_unit(self.spec, &col)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.eigenvalues.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `‖V†V − I‖∞`.
    pub fn gram_residual(&self) -> f64 {
        let g = self.vectors.adjoint() * &self.vectors;
        let n = g.nrows();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let d = if i == j { g[(i, j)] - 1.0 } else { g[(i, j)] };
                m = m.max(d.norm());
            }
        }
        m
    }

    /// `‖M − VΛV†‖∞`.
    pub fn reconstruction_residual(&self, m: &CMat) -> f64 {
        let n = self.spec.n;
        let vl = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.eigenvalues[j]);
        let r = vl * self.vectors.adjoint() - m;
        crate::linalg::max_abs(r.as_ref())
    }

    /// Largest cluster size.
    pub fn max_degeneracy(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// Replaces the basis of every cluster by a Haar-random rotation of it.
    pub fn randomized<R: Rng>(&self, rng: &mut R) -> SpectralData {
        let mut out = self.clone();
        for c in &self.clusters {
            if c.len() < 2 {
                continue;
            }
            let u = random_unitary(c.len(), rng);
            let q = Mat::from_fn(self.spec.n, c.len(), |i, j| self.vectors[(i, c[j])]);
            let rot = q * u;
            for (jj, &j) in c.iter().enumerate() {
                for i in 0..self.spec.n {
                    out.vectors[(i, j)] = rot[(i, jj)];
                }
            }
        }
        out
    }

    /// Eigenvalues as a JSON list of `[re, im]`.
    pub fn eigenvalues_json(&self) -> String {
        let v: Vec<[f64; 2]> = self.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
        serde_json::to_string(&v).expect("finite floats serialize")
    }

    pub fn vectors_bytes(&self) -> Vec<u8> {
        matrix_to_bytes(&self.vectors)
    }
}

/// Haar-distributed unitary via Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(k: usize, rng: &mut R) -> CMat {
    use rand_distr_free::gaussian;
    let mut q = Mat::from_fn(k, k, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    for j in 0..k {
        for p in 0..j {
            let mut dot = C64::new(0.0, 0.0);
            for i in 0..k {
                dot += q[(i, p)].conj() * q[(i, j)];
            }
            for i in 0..k {
                let v = q[(i, p)];
                q[(i, j)] -= dot * v;
            }
        }
        let nrm = (0..k).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..k {
            q[(i, j)] /= nrm;
        }
    }
    q
}

mod rand_distr_free {
    use rand::Rng;

    /// Standard normal sample (Box–Muller).
    pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let v: f64 = rng.random();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

fn group_sorted(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn columns(m: &CMat, idx: &[usize]) -> CMat {
    Mat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Rotates each column so its largest-modulus entry is real and positive.
fn fix_phases(v: &mut CMat) {
    for j in 0..v.ncols() {
        let mut best = C64::new(0.0, 0.0);
        for i in 0..v.nrows() {
            // first entry within rounding of the maximum keeps the choice stable
            if v[(i, j)].norm() > best.norm() * (1.0 + 1e-9) {
                best = v[(i, j)];
            }
        }
        if best.norm() > 0.0 {
            let ph = best.conj() / best.norm();
            for i in 0..v.nrows() {
                v[(i, j)] *= ph;
            }
        }
    }
}

/// Unitary diagonalization. The Hermitian part separates eigenvalues by
/// `cos θ`; inside each group the skew part separates `± sin θ`. Clusters of
/// eigenvalues within [`CLUSTER_GAP`] are then given the basis selected by
/// `tie_break`.
pub fn eigendecompose_with(qcm: &QuantumCatMap, tie_break: TieBreak) -> Result<SpectralData, PropagatorError> {
    let n = qcm.n();
    let m = &qcm.matrix;
    let (w, v) = hermitian_eigen(hermitian_part(m.as_ref()).as_ref()).ok_or(PropagatorError::ConvergenceFailure)?;
    let skew = skew_part(m.as_ref());
    let mut vecs: Vec<Vec<C64>> = Vec::with_capacity(n);
    for g in group_sorted(&w, STAGE_ONE_GAP) {
        let idx: Vec<usize> = g.collect();
        let q = columns(&v, &idx);
        let k = q.adjoint() * &skew * &q;
        let (_, u) = hermitian_eigen(k.as_ref()).ok_or(PropagatorError::ConvergenceFailure)?;
        let r = q * u;
        for j in 0..r.ncols() {
            let col: Vec<C64> = (0..n).map(|i| r[(i, j)]).collect();
            vecs.push(col);
        }
    }
    // Rayleigh quotients give the eigenvalues
    let basis = Mat::from_fn(n, n, |i, j| vecs[j][i]);
    let mb = m * &basis;
    let mut lam: Vec<C64> = (0..n)
        .map(|j| (0..n).map(|i| basis[(i, j)].conj() * mb[(i, j)]).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let angle = |z: &C64| {
        let a = z.arg();
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    };
    order.sort_by(|&a, &b| angle(&lam[a]).partial_cmp(&angle(&lam[b])).unwrap_or(std::cmp::Ordering::Equal));
    let basis = columns(&basis, &order);
    lam = order.iter().map(|&i| lam[i]).collect();
    // chain eigenvalues into clusters, wrapping across angle 0
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for j in 0..n {
        match clusters.last_mut() {
            Some(c) if (lam[j] - lam[*c.last().unwrap()]).norm() < CLUSTER_GAP => c.push(j),
            _ => clusters.push(vec![j]),
        }
    }
    if clusters.len() > 1 && (lam[0] - lam[n - 1]).norm() < CLUSTER_GAP {
        let mut last = clusters.pop().unwrap();
        last.extend(clusters[0].iter().copied());
        clusters[0] = last;
    }
    let mut vectors = basis.clone();
    for c in &clusters {
        if c.len() < 2 {
            continue;
        }
        let q = columns(&basis, c);
        let rotated = match tie_break {
            TieBreak::Solver => q,
            TieBreak::WindowMass { alpha1, alpha2 } => {
                let (k0, k1) = window_indices(n, alpha1, alpha2);
                let qw = Mat::from_fn(k1 + 1 - k0, c.len(), |i, j| q[(k0 + i, j)]);
                let wform = qw.adjoint() * &qw;
                let (_, u) = hermitian_eigen(wform.as_ref()).ok_or(PropagatorError::ConvergenceFailure)?;
                q * u
            }
        };
        for (jj, &j) in c.iter().enumerate() {
            for i in 0..n {
                vectors[(i, j)] = rotated[(i, jj)];
            }
        }
    }
    fix_phases(&mut vectors);
    let mv = m * &vectors;
    let eigenvalues = (0..n).map(|j| (0..n).map(|i| vectors[(i, j)].conj() * mv[(i, j)]).sum()).collect();
    Ok(SpectralData { spec: qcm.spec, eigenvalues, vectors, clusters })
}

pub fn eigendecompose(qcm: &QuantumCatMap) -> Result<SpectralData, PropagatorError> {
    eigendecompose_with(qcm, TieBreak::default())
}

/// Inclusive index range `⌈α₁N⌉ ..= ⌊α₂N⌋`, clamped to `0..N`.
pub fn window_indices(n: usize, alpha1: f64, alpha2: f64) -> (usize, usize) {
    let k0 = (alpha1 * n as f64).ceil().max(0.0) as usize;
    let k1 = ((alpha2 * n as f64).floor() as usize).min(n - 1);
    (k0, k1)
}

/// Least `P ≤ p_max` with `M^P = ζ·Id` for a unimodular `ζ`.
pub fn quantum_period(qcm: &QuantumCatMap, p_max: u64) -> Result<(u64, C64), PropagatorError> {
    let n = qcm.n();
    let mut acc = qcm.matrix.clone();
    for p in 1..=p_max {
        if p > 1 {
            acc = &acc * &qcm.matrix;
        }
        let zeta = acc[(0, 0)];
        let mut res = (zeta.norm() - 1.0).abs();
        'outer: for j in 0..n {
            for i in 0..n {
                let want = if i == j { zeta } else { C64::new(0.0, 0.0) };
                res = res.max((acc[(i, j)] - want).norm());
                if res > 1e-8 {
                    break 'outer;
                }
            }
        }
        if res <= 1e-8 {
            return Ok((p, zeta));
        }
    }
    Err(PropagatorError::NotFound(p_max))
}
