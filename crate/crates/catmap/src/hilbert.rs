//! The state space `H_N`: vectors with the `1/N`-weighted inner product and
//! the Weyl–Heisenberg translations acting on them.

use crate::{CMat, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("only the untwisted space kappa = 0 is supported, got ({0}, {1})")]
    TwistedSpace(f64, f64),
    #[error("malformed state encoding: {0}")]
    Decode(String),
}

/// Dimension `N` together with the effective Planck constant `h = 1/(2πN)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub n: usize,
    pub h: f64,
}

impl HilbertSpec {
    pub fn new(n: usize) -> Result<Self, HilbertError> {
        if n == 0 {
            return Err(HilbertError::ZeroDimension);
        }
        Ok(Self { n, h: 1.0 / (2.0 * PI * n as f64) })
    }

    /// Twisted spaces are rejected; only `kappa = (0, 0)` is accepted.
    pub fn with_twist(n: usize, kappa: (f64, f64)) -> Result<Self, HilbertError> {
        if kappa != (0.0, 0.0) {
            return Err(HilbertError::TwistedSpace(kappa.0, kappa.1));
        }
        Self::new(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub spec: HilbertSpec,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(spec: HilbertSpec, amplitudes: Vec<C64>) -> Result<Self, HilbertError> {
        if amplitudes.len() != spec.n {
            return Err(HilbertError::DimensionMismatch(spec.n, amplitudes.len()));
        }
        Ok(Self { spec, amplitudes })
    }

    pub fn zeros(spec: HilbertSpec) -> Self {
        Self { spec, amplitudes: vec![C64::new(0.0, 0.0); spec.n] }
    }

    /// Coordinate vector `e_j`; its `H_N` norm is `1/√N`.
    pub fn basis(spec: HilbertSpec, j: usize) -> Self {
        let mut v = Self::zeros(spec);
        v.amplitudes[j % spec.n] = C64::new(1.0, 0.0);
        v
    }

    /// `√N e_j`, a unit vector in `H_N`.
    pub fn position_state(spec: HilbertSpec, j: usize) -> Self {
        let mut v = Self::basis(spec, j);
        v.amplitudes[j % spec.n] = C64::new((spec.n as f64).sqrt(), 0.0);
        v
    }

    /// All amplitudes equal to one (unit norm in `H_N`).
    pub fn uniform(spec: HilbertSpec) -> Self {
        Self { spec, amplitudes: vec![C64::new(1.0, 0.0); spec.n] }
    }

    pub fn dim(&self) -> usize {
        self.spec.n
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.spec.n as f64
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let s = self.norm();
        Self { spec: self.spec, amplitudes: self.amplitudes.iter().map(|z| z / s).collect() }
    }

    /// Builds a state from a column of unit Euclidean norm, rescaling by `√N`.
    pub fn from_euclidean_unit(spec: HilbertSpec, col: &[C64]) -> Self {
        let s = (spec.n as f64).sqrt();
        Self { spec, amplitudes: col.iter().map(|z| z * s).collect() }
    }

    pub fn to_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.amplitudes.iter().map(|z| [z.re, z.im]).collect();
        serde_json::to_string(&pairs).expect("finite floats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, HilbertError> {
        let pairs: Vec<[f64; 2]> =
            serde_json::from_str(s).map_err(|e| HilbertError::Decode(e.to_string()))?;
        let spec = HilbertSpec::new(pairs.len())?;
        Ok(Self { spec, amplitudes: pairs.iter().map(|p| C64::new(p[0], p[1])).collect() })
    }

    /// 8-byte little-endian `N`, then interleaved little-endian `f64` re/im.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.spec.n);
        out.extend_from_slice(&(self.spec.n as u64).to_le_bytes());
        for z in &self.amplitudes {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HilbertError> {
        if bytes.len() < 8 {
            return Err(HilbertError::Decode("missing header".into()));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + 16 * n {
            return Err(HilbertError::Decode(format!("expected {} bytes, got {}", 8 + 16 * n, bytes.len())));
        }
        let spec = HilbertSpec::new(n)?;
        let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
        let amplitudes = (0..n).map(|j| C64::new(f(8 + 16 * j), f(16 + 16 * j))).collect();
        Ok(Self { spec, amplitudes })
    }
}

/// `(1/N) Σ f_j conj(g_j)`.
pub fn inner_product(f: &StateVector, g: &StateVector) -> Result<C64, HilbertError> {
    if f.spec.n != g.spec.n {
        return Err(HilbertError::DimensionMismatch(f.spec.n, g.spec.n));
    }
    let s: C64 = f.amplitudes.iter().zip(&g.amplitudes).map(|(a, b)| a * b.conj()).sum();
    Ok(s / f.spec.n as f64)
}

/// `e^{iπ e/N}` with the integer exponent reduced modulo `2N` first, so large
/// frequencies do not lose phase accuracy.
#[inline]
pub(crate) fn half_phase(e: i64, n: usize) -> C64 {
    let m = 2 * n as i64;
    let r = e.rem_euclid(m);
    C64::from_polar(1.0, PI * r as f64 / n as f64)
}

/// Phase picked up by entry `k` under the translation by `l/N`:
/// `e^{iπ l₁l₂/N} e^{2πi l₂(k−l₁)/N} = e^{iπ(2l₂k − l₁l₂)/N}`.
#[inline]
pub(crate) fn translation_phase(l: [i64; 2], k: usize, n: usize) -> C64 {
    let nn = n as i64;
    let l1 = l[0].rem_euclid(2 * nn);
    let l2 = l[1].rem_euclid(2 * nn);
    let e = (2 * l2 % (2 * nn)) * (k as i64) - (l1 * l2) % (2 * nn);
    half_phase(e, n)
}

/// `(T_{l/N} ψ)_k = e^{iπ l₁l₂/N} e^{2πi l₂(k−l₁)/N} ψ_{(k−l₁) mod N}`.
pub fn translation_apply(l: [i64; 2], psi: &StateVector) -> StateVector {
    let n = psi.spec.n;
    let shift = l[0].rem_euclid(n as i64) as usize;
    let amplitudes = (0..n)
        .map(|k| {
            let src = (k + n - shift) % n;
            translation_phase(l, k, n) * psi.amplitudes[src]
        })
        .collect();
    StateVector { spec: psi.spec, amplitudes }
}

/// Dense matrix of `T_{l/N}`; column `j` is `T_{l/N} e_j`.
pub fn translation_matrix(l: [i64; 2], spec: HilbertSpec) -> CMat {
    let n = spec.n;
    let shift = l[0].rem_euclid(n as i64) as usize;
    let mut m = CMat::zeros(n, n);
    for j in 0..n {
        let k = (j + shift) % n;
        m[(k, j)] = translation_phase(l, k, n);
    }
    m
}
