//! Words over the two-letter partition, their propagated operators
//! `A_w`, the control function and the controlled/uncontrolled split.

use crate::classical::HyperbolicMap;
use crate::hilbert::{HilbertSpec, StateVector};
use crate::linalg::{identity, op_norm};
use crate::observables::{c1_proxy, ObservableError};
use crate::propagator::{build_cat_matrix, eigendecompose, PropagatorError, QuantumCatMap};
use crate::quantize::{op_matrix, PartitionPair, TorusSymbol};
use crate::stats::{loglog_fit, LinearFit};
use crate::{CMat, C64};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("control value of the empty word is undefined")]
    EmptyWord,
    #[error("letters must be 1 or 2, got {0}")]
    BadLetter(u8),
    #[error("block length must be positive")]
    ZeroLength,
    #[error("{0} is too long to enumerate")]
    TooLong(usize),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// Sequence over `{1, 2}`; letter `j` is applied at time `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<u8>,
}

impl Word {
    pub fn new(letters: Vec<u8>) -> Result<Self, WordError> {
        if let Some(&b) = letters.iter().find(|&&b| b != 1 && b != 2) {
            return Err(WordError::BadLetter(b));
        }
        Ok(Self { letters })
    }

    pub fn parse(s: &str) -> Result<Self, WordError> {
        Self::new(s.bytes().map(|b| b.wrapping_sub(b'0')).collect())
    }

    pub fn constant(letter: u8, len: usize) -> Self {
        Self { letters: vec![letter; len] }
    }

    /// Word number `index` of length `len` in lexicographic order (`1 < 2`).
    pub fn from_index(index: u64, len: usize) -> Self {
        Self { letters: (0..len).map(|j| 1 + ((index >> (len - 1 - j)) & 1) as u8).collect() }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.letters.iter().filter(|&&b| b == 1).count()
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word { letters: self.letters.iter().chain(&other.letters).copied().collect() }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.letters {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Fraction of letters equal to 1.
pub fn control_value(w: &Word) -> Result<f64, WordError> {
    if w.is_empty() {
        return Err(WordError::EmptyWord);
    }
    Ok(w.ones() as f64 / w.len() as f64)
}

/// Block length `T`, long length `T′ = 4T`, and the parameters `ρ`, `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordSchedule {
    pub t: usize,
    pub t_prime: usize,
    pub rho: f64,
    pub delta: f64,
    /// `⌊ρ log(2πN) / (4 log λ_u)⌋` when the schedule was derived from `N`.
    pub derived_t: Option<usize>,
}

impl WordSchedule {
    pub fn new(t: usize, rho: f64, delta: f64) -> Result<Self, WordError> {
        if t == 0 {
            return Err(WordError::ZeroLength);
        }
        Ok(Self { t, t_prime: 4 * t, rho, delta, derived_t: None })
    }

    /// Schedule from `h = 1/(2πN)`; the block length is clamped to at least 1
    /// because desk-scale `N` often gives 0.
    pub fn from_n(n: usize, map: &HyperbolicMap, rho: f64, delta: f64) -> Self {
        let raw = (rho * (2.0 * PI * n as f64).ln() / (4.0 * map.lambda_u.ln())).floor().max(0.0) as usize;
        let t = raw.max(1);
        Self { t, t_prime: 4 * t, rho, delta, derived_t: Some(raw) }
    }

    /// `δ = (3β/16)²`, the value tied to a decay exponent `β`.
    pub fn delta_for_beta(beta: f64) -> f64 {
        (3.0 * beta / 16.0).powi(2)
    }
}

/// Controlled blocks `𝒵 ⊂ 𝒲(T)` and closed-form counts for `𝒳 = (𝒲(T)∖𝒵)⁸`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordClassification {
    pub t: usize,
    pub delta: f64,
    pub z: Vec<Word>,
    pub complement: Vec<Word>,
}

/// Number of blocks in a long word.
pub const BLOCKS: u32 = 8;
const ENUMERATION_LIMIT: usize = 24;

impl WordClassification {
    /// `#𝒳 = (2^T − #𝒵)^8` when it fits in `u128`.
    pub fn x_count(&self) -> Option<u128> {
        (self.complement.len() as u128).checked_pow(BLOCKS)
    }

    pub fn x_count_log2(&self) -> f64 {
        BLOCKS as f64 * (self.complement.len() as f64).log2()
    }

    pub fn is_controlled(&self, block: &Word) -> bool {
        block.len() == self.t && control_value(block).map(|f| f >= self.delta).unwrap_or(false)
    }

    /// Membership of a word of length `8T` in `𝒳`.
    pub fn in_x(&self, w: &Word) -> bool {
        w.len() == BLOCKS as usize * self.t
            && w.letters.chunks(self.t).all(|b| !self.is_controlled(&Word { letters: b.to_vec() }))
    }

    /// Lazy enumeration of `𝒳`.
    pub fn x_iter(&self) -> impl Iterator<Item = Word> + '_ {
        let k = self.complement.len();
        let total = self.x_count().unwrap_or(u128::MAX);
        (0..total).map_while(move |mut idx| {
            if k == 0 {
                return None;
            }
            let mut digits = [0usize; BLOCKS as usize];
            for d in digits.iter_mut().rev() {
                *d = (idx % k as u128) as usize;
                idx /= k as u128;
            }
            Some(digits.iter().fold(Word { letters: vec![] }, |acc, &d| acc.concat(&self.complement[d])))
        })
    }

    /// Uniform sample from `𝒳`.
    pub fn sample_x<R: Rng>(&self, rng: &mut R) -> Option<Word> {
        if self.complement.is_empty() {
            return None;
        }
        Some((0..BLOCKS).fold(Word { letters: vec![] }, |acc, _| acc.concat(&self.complement[rng.random_range(0..self.complement.len())])))
    }
}

pub fn classify_words(schedule: &WordSchedule) -> Result<WordClassification, WordError> {
    let t = schedule.t;
    if t == 0 {
        return Err(WordError::ZeroLength);
    }
    if t > ENUMERATION_LIMIT {
        return Err(WordError::TooLong(t));
    }
    let (mut z, mut complement) = (Vec::new(), Vec::new());
    for idx in 0..(1u64 << t) {
        let w = Word::from_index(idx, t);
        if control_value(&w)? >= schedule.delta {
            z.push(w);
        } else {
            complement.push(w);
        }
    }
    Ok(WordClassification { t, delta: schedule.delta, z, complement })
}

/// Dense `Op_N(a₁)`, `Op_N(a₂)`, `M` and `M†` for one `(partition, N)`.
pub struct WordContext {
    pub spec: HilbertSpec,
    pub ops: [CMat; 2],
    pub m: CMat,
    pub m_adj: CMat,
}

impl WordContext {
    pub fn new(partition: &PartitionPair, qcm: &QuantumCatMap) -> Self {
        Self {
            spec: qcm.spec,
            ops: [op_matrix(&partition.a1, qcm.spec), op_matrix(&partition.a2, qcm.spec)],
            m: qcm.matrix.clone(),
            m_adj: qcm.adjoint(),
        }
    }

    pub fn op(&self, letter: u8) -> &CMat {
        &self.ops[(letter - 1) as usize]
    }

    fn conjugate_left(&self, mut a: CMat, steps: usize) -> CMat {
        for _ in 0..steps {
            a = &self.m_adj * a;
        }
        a
    }

    /// `A_w = A_{w_{n−1}}(n−1) ⋯ A_{w_0}(0)` with `A(j) = M⁻ʲ Op M ʲ`,
    /// evaluated as `M^{−(n−1)} Op_{w_{n−1}} M ⋯ M Op_{w_0}`.
    pub fn word_operator(&self, w: &Word) -> CMat {
        let Some((&first, rest)) = w.letters.split_first() else {
            return identity(self.spec.n);
        };
        let mut acc = self.op(first).clone();
        for &b in rest {
            acc = self.op(b) * (&self.m * acc);
        }
        self.conjugate_left(acc, w.len() - 1)
    }

    /// `Σ_{w ∈ 𝒲(n)} A_w` by depth-first summation over all `2ⁿ` words,
    /// sharing prefix products.
    pub fn sum_all_words(&self, n: usize) -> CMat {
        if n == 0 {
            return identity(self.spec.n);
        }
        let mut total = CMat::zeros(self.spec.n, self.spec.n);
        let mut stack: Vec<(CMat, usize)> = vec![(self.ops[0].clone(), 1), (self.ops[1].clone(), 1)];
        while let Some((p, depth)) = stack.pop() {
            if depth == n {
                total += p;
                continue;
            }
            let mp = &self.m * p;
            stack.push((&self.ops[0] * &mp, depth + 1));
            stack.push((&self.ops[1] * mp, depth + 1));
        }
        self.conjugate_left(total, n - 1)
    }

    /// `Σ_{w ∈ S} A_w` for a set of words of a common length.
    pub fn sum_words(&self, words: &[Word]) -> CMat {
        let mut total = CMat::zeros(self.spec.n, self.spec.n);
        for w in words {
            total += self.word_operator(w);
        }
        total
    }

    /// `(A_𝒳, A_𝒴)` on `𝒲(8T)`. `A_𝒳` factors blockwise as
    /// `Π_j M^{−jT} A_{𝒲(T)∖𝒵} M^{jT}`; `A_𝒴` is the full blockwise product
    /// of `A_𝒵 + A_{𝒲(T)∖𝒵}` minus `A_𝒳`, so `𝒴` is never enumerated.
    pub fn class_operators(&self, cls: &WordClassification) -> (CMat, CMat) {
        let t = cls.t;
        let b_x = self.sum_words(&cls.complement);
        let b_all = &b_x + self.sum_words(&cls.z);
        let mt = crate::linalg::matrix_power(self.m.as_ref(), t as u32);
        let mt_adj = mt.adjoint().to_owned();
        // product over blocks j = 7..0 of M^{-jT} B M^{jT}
        // = M^{-7T} B M^T B M^T ... M^T B
        let chain = |b: &CMat| {
            let mut acc = b.clone();
            for _ in 1..BLOCKS {
                acc = b * (&mt * acc);
            }
            for _ in 1..BLOCKS {
                acc = &mt_adj * acc;
            }
            acc
        };
        let a_x = chain(&b_x);
        let a_y = chain(&b_all) - &a_x;
        (a_x, a_y)
    }
}

pub fn word_operator(partition: &PartitionPair, qcm: &QuantumCatMap, w: &Word) -> CMat {
    WordContext::new(partition, qcm).word_operator(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNormRow {
    pub n: usize,
    /// `‖A_w‖` for `w = 2^{8T}`.
    pub all2_norm: f64,
    /// `‖A_𝒵‖` for `A_𝒵 = Σ_{w∈𝒵} A_w`.
    pub z_norm: f64,
    /// `#𝒵 · max_{w∈𝒵} ‖A_w‖`.
    pub z_bound: f64,
    /// Sampled `𝒳` words and their norms.
    pub random_x: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNormScan {
    pub rows: Vec<ClassNormRow>,
    /// Decay exponent of the all-2 norm: `−slope` of `log‖A‖` on `log N`.
    pub beta_hat: Option<f64>,
    pub r_squared: Option<f64>,
    /// `(3β̂/16)²`.
    pub delta_for_beta: Option<f64>,
}

pub fn class_norm_scan(
    partition: &PartitionPair,
    map: &HyperbolicMap,
    schedule: &WordSchedule,
    n_list: &[usize],
    random_x: usize,
    seed: u64,
) -> Result<ClassNormScan, WordError> {
    let cls = classify_words(schedule)?;
    let long = BLOCKS as usize * schedule.t;
    let rows = n_list
        .par_iter()
        .map(|&n| -> Result<ClassNormRow, WordError> {
            let spec = HilbertSpec::new(n).map_err(ObservableError::from)?;
            let qcm = build_cat_matrix(map, spec)?;
            let ctx = WordContext::new(partition, &qcm);
            let all2_norm = op_norm(ctx.word_operator(&Word::constant(2, long)).as_ref());
            let zs: Vec<CMat> = cls.z.iter().map(|w| ctx.word_operator(w)).collect();
            let max_z = zs.iter().map(|a| op_norm(a.as_ref())).fold(0.0, f64::max);
            let mut az = CMat::zeros(n, n);
            for a in &zs {
                az += a;
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ n as u64);
            let random_x = (0..random_x)
                .filter_map(|_| cls.sample_x(&mut rng))
                .map(|w| {
                    let v = op_norm(ctx.word_operator(&w).as_ref());
                    (w.to_string(), v)
                })
                .collect();
            Ok(ClassNormRow { n, all2_norm, z_norm: op_norm(az.as_ref()), z_bound: cls.z.len() as f64 * max_z, random_x })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_decay(&rows.iter().map(|r| (r.n, r.all2_norm)).collect::<Vec<_>>());
    Ok(ClassNormScan {
        beta_hat: fit.map(|f| -f.slope),
        r_squared: fit.map(|f| f.r_squared),
        delta_for_beta: fit.map(|f| WordSchedule::delta_for_beta(-f.slope)),
        rows,
    })
}

/// Log-log least squares of norm against `N`.
pub fn fit_decay(points: &[(usize, f64)]) -> Option<LinearFit> {
    let x: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    loglog_fit(&x, &y)
}

/// Number of points of the unit-circle grid used for `min_z ‖(M − z)u‖`.
pub const Z_GRID: usize = 360;
/// Random unit vectors tested per `N`.
pub const PROBE_SAMPLES: usize = 50;

/// `min_z ‖(M − z)u‖ / ‖u‖` over the [`Z_GRID`]-point unit circle grid,
/// given `Mu`.
pub fn min_resolvent_term(u: &[C64], mu: &[C64]) -> f64 {
    let uu: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    (0..Z_GRID)
        .map(|k| {
            let z = C64::from_polar(1.0, 2.0 * PI * k as f64 / Z_GRID as f64);
            mu.iter().zip(u).map(|(m, x)| (m - z * x).norm_sqr()).sum::<f64>().sqrt()
        })
        .fold(f64::INFINITY, f64::min)
        / uu.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEstimateRow {
    pub n: usize,
    /// `1 / min_j ‖Op_N(a)φ_j‖`.
    pub c1_proxy: f64,
    /// `max_j ‖(M − λ_j)φ_j‖`: the `min_z` term evaluated at each exact
    /// eigenvalue.
    pub eigen_resolvent_max: f64,
    /// Smallest `Ĉ₂` with `‖u‖ ≤ Ĉ₁‖Op_N(a)u‖ + Ĉ₂ log N min_z‖(M−z)u‖` for
    /// every sampled `u`, taking `Ĉ₁ = c1_proxy`.
    pub c2_envelope: f64,
}

pub fn main_estimate_probe(map: &HyperbolicMap, a: &TorusSymbol, n_list: &[usize], seed: u64) -> Result<Vec<MainEstimateRow>, WordError> {
    n_list
        .par_iter()
        .map(|&n| {
            let spec = HilbertSpec::new(n).map_err(ObservableError::from)?;
            let qcm = build_cat_matrix(map, spec)?;
            let s = eigendecompose(&qcm)?;
            let op = op_matrix(a, spec);
            let c1 = c1_proxy(&s, &op);
            let mv = &qcm.matrix * &s.vectors;
            let eigen_resolvent_max = (0..n)
                .map(|j| (0..n).map(|i| (mv[(i, j)] - s.eigenvalues[j] * s.vectors[(i, j)]).norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ n as u64);
            let mut c2: f64 = 0.0;
            let log_n = (n as f64).ln();
            for _ in 0..PROBE_SAMPLES {
                let u = StateVector::new(spec, (0..n).map(|_| C64::new(gauss(&mut rng), gauss(&mut rng))).collect())
                    .map_err(ObservableError::from)?
                    .normalized();
                let col = Mat::from_fn(n, 1, |i, _| u.amplitudes[i]);
                let au = &op * &col;
                let mu = &qcm.matrix * &col;
                let unorm = u.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let au_norm = (0..n).map(|i| au[(i, 0)].norm_sqr()).sum::<f64>().sqrt() / unorm;
                let mu_vec: Vec<C64> = (0..n).map(|i| mu[(i, 0)]).collect();
                let res = min_resolvent_term(&u.amplitudes, &mu_vec);
                let deficit = 1.0 - c1 * au_norm;
                if deficit > 0.0 {
                    c2 = c2.max(deficit / (log_n * res));
                }
            }
            Ok(MainEstimateRow { n, c1_proxy: c1, eigen_resolvent_max, c2_envelope: c2 })
        })
        .collect()
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * rng.random::<f64>()).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::quantize::{build_partition, Ball};
    use proptest::prelude::*;

    fn small_partition() -> PartitionPair {
        build_partition(Ball::new([0.2, 0.2], 0.1), Ball::new([0.7, 0.7], 0.2), Ball::new([0.7, 0.7], 0.4), 32).unwrap()
    }

    fn de(n: usize) -> QuantumCatMap {
        build_cat_matrix(&HyperbolicMap::degli_esposti(), HilbertSpec::new(n).unwrap()).unwrap()
    }

    #[test]
    fn control_values() {
        assert_eq!(control_value(&Word::parse("11").unwrap()), Ok(1.0));
        assert_eq!(control_value(&Word::parse("12").unwrap()), Ok(0.5));
        assert_eq!(control_value(&Word::parse("222").unwrap()), Ok(0.0));
        assert_eq!(control_value(&Word::parse("").unwrap()), Err(WordError::EmptyWord));
        assert_eq!(Word::parse("13"), Err(WordError::BadLetter(3)));
    }

    #[test]
    fn classification_examples() {
        let c = classify_words(&WordSchedule::new(2, 0.5, 0.5).unwrap()).unwrap();
        let names: Vec<String> = c.z.iter().map(|w| w.to_string()).collect();
        assert_eq!(names, ["11", "12", "21"]);
        assert_eq!(c.x_count(), Some(1));
        let all = classify_words(&WordSchedule::new(3, 0.5, 0.0).unwrap()).unwrap();
        assert_eq!((all.z.len(), all.x_count()), (8, Some(0)));
        // F ≥ 0.4 on length 3 means at least two 1s
        let c3 = classify_words(&WordSchedule::new(3, 0.5, 0.4).unwrap()).unwrap();
        assert_eq!((c3.z.len(), c3.x_count()), (4, Some(65536)));
        let c3b = classify_words(&WordSchedule::new(3, 0.5, 0.3).unwrap()).unwrap();
        assert_eq!((c3b.z.len(), c3b.x_count()), (7, Some(1)));
    }

    #[test]
    fn x_count_matches_enumeration() {
        for t in 1..=4 {
            for delta in [0.2, 0.5, 0.8] {
                let c = classify_words(&WordSchedule::new(t, 0.5, delta).unwrap()).unwrap();
                let count = c.x_count().unwrap();
                if count <= 70_000 {
                    let listed: Vec<Word> = c.x_iter().collect();
                    assert_eq!(listed.len() as u128, count);
                    assert!(listed.iter().all(|w| c.in_x(w)));
                } else {
                    // exhaustive membership count over 𝒲(8T) for small T
                    assert!(t >= 2);
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
                    for _ in 0..200 {
                        assert!(c.in_x(&c.sample_x(&mut rng).unwrap()));
                    }
                }
            }
        }
        let c = classify_words(&WordSchedule::new(1, 0.5, 0.6).unwrap()).unwrap();
        let brute = (0..256u64).filter(|&i| c.in_x(&Word::from_index(i, 8))).count();
        assert_eq!(brute as u128, c.x_count().unwrap());
        let c2 = classify_words(&WordSchedule::new(2, 0.5, 0.6).unwrap()).unwrap();
        let brute2 = (0..65536u64).filter(|&i| c2.in_x(&Word::from_index(i, 16))).count();
        assert_eq!(brute2 as u128, c2.x_count().unwrap());
    }

    #[test]
    fn schedule_from_n() {
        let de = HyperbolicMap::degli_esposti();
        let s = WordSchedule::from_n(501, &de, 0.9, 0.1);
        assert_eq!(s.derived_t, Some(1));
        assert_eq!((s.t, s.t_prime), (1, 4));
        assert_eq!(WordSchedule::from_n(11, &de, 0.1, 0.1).t, 1);
    }

    #[test]
    fn word_operator_examples() {
        let p = small_partition();
        let q = de(31);
        let ctx = WordContext::new(&p, &q);
        assert!(max_abs((ctx.word_operator(&Word { letters: vec![] }) - identity(31)).as_ref()) == 0.0);
        assert!(max_abs((ctx.word_operator(&Word::parse("1").unwrap()) - op_matrix(&p.a1, q.spec)).as_ref()) < 1e-15);
        // explicit conjugation oracle for a length-3 word
        let w = Word::parse("121").unwrap();
        let a = |j: i64, b: u8| q.power(-j) * ctx.op(b) * q.power(j);
        let want = a(2, 1) * a(1, 2) * a(0, 1);
        assert!(max_abs((ctx.word_operator(&w) - want).as_ref()) < 1e-12);
        let bound = op_norm(ctx.op(1).as_ref()).powi(2) * op_norm(ctx.op(2).as_ref());
        assert!(op_norm(ctx.word_operator(&w).as_ref()) <= bound + 1e-9);
    }

    #[test]
    fn telescoping_identity() {
        let p = small_partition();
        for n in [33usize, 64] {
            let q = build_cat_matrix(&HyperbolicMap::degli_esposti(), HilbertSpec::new(n).unwrap());
            let Ok(q) = q else { continue };
            let ctx = WordContext::new(&p, &q);
            for len in [1usize, 3, 6] {
                let s = ctx.sum_all_words(len);
                assert!(op_norm((s - identity(n)).as_ref()) <= len as f64 * 1e-10);
            }
        }
    }

    #[test]
    fn class_operators_recover_identity() {
        let p = small_partition();
        let q = de(41);
        let ctx = WordContext::new(&p, &q);
        let cls = classify_words(&WordSchedule::new(1, 0.5, 0.5).unwrap()).unwrap();
        let (ax, ay) = ctx.class_operators(&cls);
        assert!(op_norm((&ax + &ay - identity(41)).as_ref()) <= 8.0 * 1e-9);
        // T = 1: 𝒳 is the single all-2 word of length 8
        let direct = ctx.word_operator(&Word::constant(2, 8));
        assert!(max_abs((ax - direct).as_ref()) < 1e-12);
    }

    #[test]
    fn degenerate_partition_all2_is_identity() {
        let p = PartitionPair { a1: TorusSymbol::constant(0.0), a2: TorusSymbol::constant(1.0), ..small_partition() };
        let q = de(21);
        let ctx = WordContext::new(&p, &q);
        let a = ctx.word_operator(&Word::constant(2, 16));
        assert!((op_norm(a.as_ref()) - 1.0).abs() < 1e-12);
        assert!(max_abs((a - identity(21)).as_ref()) < 1e-12);
    }

    #[test]
    fn class_scan_triangle_bound() {
        let scan = class_norm_scan(&small_partition(), &HyperbolicMap::degli_esposti(), &WordSchedule::new(1, 0.5, 0.5).unwrap(), &[21, 31, 41], 2, 9).unwrap();
        assert_eq!(scan.rows.len(), 3);
        for r in &scan.rows {
            assert!(r.z_norm <= r.z_bound + 1e-12);
            assert!(r.all2_norm <= 1.0 + 1e-9);
            assert_eq!(r.random_x.len(), 2);
        }
        assert!(scan.beta_hat.is_some());
    }

    #[test]
    fn main_estimate_examples() {
        let de = HyperbolicMap::degli_esposti();
        let rows = main_estimate_probe(&de, &TorusSymbol::constant(1.0), &[21, 25], 1).unwrap();
        for r in &rows {
            assert!((r.c1_proxy - 1.0).abs() < 1e-12);
            assert!(r.eigen_resolvent_max <= 1e-9);
            assert_eq!(r.c2_envelope, 0.0);
        }
        let bump = TorusSymbol::radial_bump([0.5, 0.5], 0.1, 0.2, 32).unwrap();
        let rows = main_estimate_probe(&de, &bump, &[41], 1).unwrap();
        assert!(rows[0].c1_proxy.is_finite() && rows[0].c1_proxy > 1.0);
    }

    #[test]
    fn resolvent_term_vanishes_on_grid_eigenvalue() {
        let u = vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)];
        let z = C64::from_polar(1.0, 2.0 * PI * 17.0 / 360.0);
        let mu: Vec<C64> = u.iter().map(|x| z * x).collect();
        assert!(min_resolvent_term(&u, &mu) < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn word_norm_is_submultiplicative(idx in 0u64..64, len in 1usize..6) {
            let p = small_partition();
            let q = de(23);
            let ctx = WordContext::new(&p, &q);
            let w = Word::from_index(idx % (1 << len), len);
            let bound: f64 = w.letters.iter().map(|&b| op_norm(ctx.op(b).as_ref())).product();
            prop_assert!(op_norm(ctx.word_operator(&w).as_ref()) <= bound + 1e-9);
        }

        #[test]
        fn control_value_in_unit_interval(letters in proptest::collection::vec(1u8..=2, 1..30)) {
            let w = Word::new(letters).unwrap();
            let f = control_value(&w).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!((f * w.len() as f64 - w.ones() as f64).abs() < 1e-12);
        }
    }
}
