//! Almost-additive potentials: k-step tables and positive matrix cocycles.
//!
//! A k-step potential is generated by a function g on admissible k-words,
//! with Birkhoff sums `phi_n(x) = sum_j g(x_{j+1}..x_{j+k})`. A matrix
//! cocycle assigns a positive q x q matrix per symbol and takes
//! `phi_n(x) = log |M_{x_1} ... M_{x_n}|` in the entry-sum norm.
//!
//! Cylinder suprema, infima and variations are exact for k-step potentials
//! (the free tail has k-1 symbols and is resolved by dynamic programming)
//! and exact for cocycles (the n-block value depends on the first n symbols
//! only).

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::sft::{pack, word_string, Sft, WordSet};

/// Default cap on materialized word tables.
pub const DEFAULT_WORD_CAP: u64 = 10_000_000;

/// Potential generated by a table on admissible k-words.
#[derive(Debug, Clone)]
pub struct KStepPotential {
    k: usize,
    words: WordSet,
    values: Vec<f64>,
    tails: OnceLock<TailCache>,
}

#[derive(Debug, Clone)]
struct TailCache {
    states: WordSet,
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl KStepPotential {
    /// Builds the table by evaluating `f` on every admissible k-word.
    pub fn from_fn<F: FnMut(&[u8]) -> f64>(sft: &Sft, k: usize, mut f: F) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPotential {
                reason: "window size k must be at least 1".into(),
            });
        }
        let words = WordSet::build(sft, k, DEFAULT_WORD_CAP)?;
        let mut values = Vec::with_capacity(words.len_words());
        let mut buf = vec![0u8; k];
        for r in 0..words.len_words() {
            words.write_word(r, &mut buf);
            let v = f(&buf);
            if !v.is_finite() {
                return Err(Error::InvalidPotential {
                    reason: format!("non-finite value at word {}", word_string(&buf)),
                });
            }
            values.push(v);
        }
        Ok(KStepPotential {
            k,
            words,
            values,
            tails: OnceLock::new(),
        })
    }

    /// Builds from explicit word/value pairs; every admissible k-word must
    /// appear exactly once.
    pub fn from_pairs(sft: &Sft, k: usize, pairs: &[(Vec<u8>, f64)]) -> Result<Self> {
        let words = WordSet::build(sft, k, DEFAULT_WORD_CAP)?;
        let mut values = vec![f64::NAN; words.len_words()];
        for (w, v) in pairs {
            if w.len() != k || !sft.admissible(w) {
                return Err(Error::WordNotAdmissible {
                    word: word_string(w),
                });
            }
            let r = words
                .rank_of(pack(w, sft.alphabet_size()))
                .expect("admissible word is in the set");
            if !values[r].is_nan() {
                return Err(Error::InvalidPotential {
                    reason: format!("word {} listed twice", word_string(w)),
                });
            }
            values[r] = *v;
        }
        if let Some(r) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidPotential {
                reason: format!("missing value for word {}", word_string(&words.word_at(r))),
            });
        }
        Ok(KStepPotential {
            k,
            words,
            values,
            tails: OnceLock::new(),
        })
    }

    /// One-step potential from per-symbol values.
    pub fn from_symbol_values(sft: &Sft, values: &[f64]) -> Result<Self> {
        if values.len() != sft.alphabet_size() {
            return Err(Error::InvalidPotential {
                reason: format!(
                    "expected {} symbol values, got {}",
                    sft.alphabet_size(),
                    values.len()
                ),
            });
        }
        KStepPotential::from_fn(sft, 1, |w| values[w[0] as usize])
    }

    /// Constant one-step potential.
    pub fn constant(sft: &Sft, c: f64) -> Self {
        KStepPotential::from_fn(sft, 1, |_| c).expect("constant table")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn word_table(&self) -> &WordSet {
        &self.words
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_of(&self, sft: &Sft, word: &[u8]) -> Option<f64> {
        if word.len() != self.k || !sft.admissible(word) {
            return None;
        }
        self.words
            .rank_of(pack(word, sft.alphabet_size()))
            .map(|r| self.values[r])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        self.max_value() == self.min_value()
    }

    fn tails(&self, sft: &Sft) -> &TailCache {
        self.tails.get_or_init(|| {
            let (states, hi, lo) = tail_tables(sft, &self.words, &self.values, self.k);
            TailCache { states, hi, lo }
        })
    }
}

/// Free-tail extrema: for each (k-1)-word state, the max and min of the
/// k-1 trailing windows of `phi` over admissible continuations.
pub(crate) fn tail_tables(
    sft: &Sft,
    kwords: &WordSet,
    values: &[f64],
    k: usize,
) -> (WordSet, Vec<f64>, Vec<f64>) {
    let m = sft.alphabet_size();
    let kappa = k.saturating_sub(1).max(1);
    let states = WordSet::build(sft, kappa, u64::MAX).expect("state set fits");
    let ns = states.len_words();
    let mut hi = vec![0.0; ns];
    let mut lo = vec![0.0; ns];
    if k == 1 {
        return (states, hi, lo);
    }
    let modulus = {
        let mut p = 1u64;
        for _ in 0..kappa {
            p *= m as u64;
        }
        p
    };
    for _ in 0..k - 1 {
        let mut next_hi = vec![f64::NEG_INFINITY; ns];
        let mut next_lo = vec![f64::INFINITY; ns];
        for s in 0..ns {
            let sp = states.packed_at(s);
            let last = (sp % m as u64) as u8;
            let mut mask = sft.successors(last);
            while mask != 0 {
                let sym = mask.trailing_zeros() as u64;
                mask &= mask - 1;
                let kw = sp * m as u64 + sym;
                let Some(e) = kwords.rank_of(kw) else {
                    continue;
                };
                let nxt = states
                    .rank_of(kw % modulus)
                    .expect("suffix of admissible word is admissible");
                let vh = values[e] + hi[nxt];
                let vl = values[e] + lo[nxt];
                if vh > next_hi[s] {
                    next_hi[s] = vh;
                }
                if vl < next_lo[s] {
                    next_lo[s] = vl;
                }
            }
        }
        hi = next_hi;
        lo = next_lo;
    }
    (states, hi, lo)
}

/// Positive matrix cocycle: one strictly positive q x q matrix per symbol.
#[derive(Debug, Clone)]
pub struct MatrixCocycle {
    q: usize,
    /// Row-major q*q entries, one matrix per symbol.
    mats: Vec<Vec<f64>>,
}

impl MatrixCocycle {
    pub fn new(mats: Vec<Vec<f64>>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidPotential {
                reason: "cocycle needs one matrix per symbol".into(),
            });
        }
        let q2 = mats[0].len();
        let q = (q2 as f64).sqrt().round() as usize;
        if q * q != q2 || q == 0 {
            return Err(Error::InvalidPotential {
                reason: "cocycle matrices must be square".into(),
            });
        }
        for (j, mat) in mats.iter().enumerate() {
            if mat.len() != q2 {
                return Err(Error::InvalidPotential {
                    reason: format!("matrix {j} has wrong size"),
                });
            }
            if mat.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidPotential {
                    reason: format!("matrix {j} is not strictly positive"),
                });
            }
        }
        Ok(MatrixCocycle { q, mats })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn matrix(&self, symbol: u8) -> &[f64] {
        &self.mats[symbol as usize]
    }

    /// Almost-additivity constant log(q^2 r) where r bounds entry distortion.
    pub fn additivity_constant(&self) -> f64 {
        let mut ratio: f64 = 1.0;
        for mat in &self.mats {
            let hi = mat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = mat.iter().cloned().fold(f64::INFINITY, f64::min);
            ratio = ratio.max(hi / lo);
        }
        2.0 * (self.q as f64).ln() + ratio.ln()
    }

    /// log of the entry sum of M_{w_1} ... M_{w_n}; exact on the cylinder.
    pub fn log_norm(&self, word: &[u8]) -> f64 {
        assert!(!word.is_empty(), "cocycle blocks have length >= 1");
        let q = self.q;
        let mut cur = self.mats[word[0] as usize].clone();
        let mut scale = 0.0f64;
        let mut tmp = vec![0.0f64; q * q];
        for &s in &word[1..] {
            let mat = &self.mats[s as usize];
            for slot in tmp.iter_mut() {
                *slot = 0.0;
            }
            for a in 0..q {
                for b in 0..q {
                    let x = cur[a * q + b];
                    let row = &mat[b * q..(b + 1) * q];
                    for (c, &y) in row.iter().enumerate() {
                        tmp[a * q + c] += x * y;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut tmp);
            let top = cur.iter().cloned().fold(0.0f64, f64::max);
            if top > 1e250 || top < 1e-250 {
                scale += top.ln();
                for slot in cur.iter_mut() {
                    *slot /= top;
                }
            }
        }
        let sum: f64 = cur.iter().sum();
        sum.ln() + scale
    }

    /// Per-symbol one-block values log |M_j|.
    pub fn symbol_log_norms(&self) -> Vec<f64> {
        self.mats
            .iter()
            .map(|m| m.iter().sum::<f64>().ln())
            .collect()
    }
}

/// A scalar almost-additive potential.
#[derive(Debug, Clone)]
pub enum ScalarPotential {
    KStep(KStepPotential),
    Cocycle(MatrixCocycle),
}

impl ScalarPotential {
    /// Window size: k for tables, 1 for cocycles (one matrix per symbol).
    pub fn window(&self) -> usize {
        match self {
            ScalarPotential::KStep(p) => p.k(),
            ScalarPotential::Cocycle(_) => 1,
        }
    }

    pub fn additivity_constant(&self) -> f64 {
        match self {
            ScalarPotential::KStep(_) => 0.0,
            ScalarPotential::Cocycle(c) => c.additivity_constant(),
        }
    }

    /// sup over x of phi_1.
    pub fn phi1_max(&self) -> f64 {
        match self {
            ScalarPotential::KStep(p) => p.max_value(),
            ScalarPotential::Cocycle(c) => c
                .symbol_log_norms()
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn phi1_min(&self) -> f64 {
        match self {
            ScalarPotential::KStep(p) => p.min_value(),
            ScalarPotential::Cocycle(c) => c
                .symbol_log_norms()
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Upper growth bound max(phi_1) + C.
    pub fn phi_max(&self) -> f64 {
        self.phi1_max() + self.additivity_constant()
    }

    /// Lower growth bound min(phi_1) - C.
    pub fn phi_min(&self) -> f64 {
        self.phi1_min() - self.additivity_constant()
    }

    pub fn norm(&self) -> f64 {
        self.phi_max().abs().max(self.phi_min().abs())
    }

    /// log of the cylinder supremum weight, log Phi[w] = sup over [w] of phi_|w|.
    pub fn sup_weight_log(&self, sft: &Sft, word: &[u8]) -> Result<f64> {
        self.birkhoff_range(sft, word).map(|(_, hi)| hi)
    }

    /// Cylinder supremum weight Phi[w] itself; the empty word gives 1.
    pub fn sup_weight(&self, sft: &Sft, word: &[u8]) -> Result<f64> {
        Ok(self.sup_weight_log(sft, word)?.exp())
    }

    /// Exact range of phi_n over the cylinder [w], n = |w|.
    pub fn birkhoff_range(&self, sft: &Sft, word: &[u8]) -> Result<(f64, f64)> {
        if !sft.admissible(word) {
            return Err(Error::WordNotAdmissible {
                word: word_string(word),
            });
        }
        let n = word.len();
        if n == 0 {
            return Ok((0.0, 0.0));
        }
        match self {
            ScalarPotential::Cocycle(c) => {
                let v = c.log_norm(word);
                Ok((v, v))
            }
            ScalarPotential::KStep(p) => {
                let k = p.k();
                let m = sft.alphabet_size();
                if n >= k {
                    let mut det = 0.0;
                    for j in 0..=n - k {
                        det += p
                            .value_of(sft, &word[j..j + k])
                            .expect("subword of admissible word");
                    }
                    let tails = p.tails(sft);
                    if k == 1 {
                        return Ok((det, det));
                    }
                    let s = tails
                        .states
                        .rank_of(pack(&word[n - (k - 1)..], m))
                        .expect("suffix is admissible");
                    Ok((det + tails.lo[s], det + tails.hi[s]))
                } else if n == k - 1 {
                    let tails = p.tails(sft);
                    let s = tails
                        .states
                        .rank_of(pack(word, m))
                        .expect("word is admissible");
                    Ok((tails.lo[s], tails.hi[s]))
                } else {
                    // short word: resolve the free coordinates by recursion
                    let mut ext = word.to_vec();
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    range_rec(sft, p, &mut ext, n, &mut lo, &mut hi);
                    Ok((lo, hi))
                }
            }
        }
    }

    /// Variation of phi_n over n-cylinders, Eq-exact for both kinds.
    pub fn var_norm(&self, sft: &Sft, n: usize) -> f64 {
        match self {
            // the n-block value of a cocycle is a function of the first n symbols
            ScalarPotential::Cocycle(_) => 0.0,
            ScalarPotential::KStep(p) => {
                if p.k() == 1 || n == 0 {
                    return 0.0;
                }
                let k = p.k();
                if n >= k - 1 {
                    let tails = p.tails(sft);
                    let mut worst = 0.0f64;
                    for s in 0..tails.hi.len() {
                        worst = worst.max(tails.hi[s] - tails.lo[s]);
                    }
                    worst
                } else {
                    let mut worst = 0.0f64;
                    sft.for_each_word(n, |w| {
                        let (lo, hi) = self.birkhoff_range(sft, w).expect("admissible");
                        worst = worst.max(hi - lo);
                    });
                    worst
                }
            }
        }
    }

    /// max of var_norm(l) over the Moran window c1*n <= l <= c2*n.
    pub fn var_norm_star(&self, sft: &Sft, n: usize, c1: f64, c2: f64) -> f64 {
        let lo = (c1 * n as f64).ceil() as usize;
        let hi = (c2 * n as f64).floor() as usize;
        let mut worst = 0.0f64;
        for l in lo.max(1)..=hi.max(lo.max(1)) {
            worst = worst.max(self.var_norm(sft, l));
        }
        worst
    }

    /// k-step approximation: generator phi_k(x_w)/k at the periodic point
    /// x_w = (w . bridge)^infinity, plus the certified sup-norm error bound
    /// C/k + |Phi|_k / k on the Birkhoff average deviation.
    pub fn holder_approx(&self, sft: &Sft, k: usize) -> Result<(KStepPotential, f64)> {
        if k == 0 {
            return Err(Error::InvalidPotential {
                reason: "approximation window must be at least 1".into(),
            });
        }
        let approx = match self {
            ScalarPotential::Cocycle(c) => {
                KStepPotential::from_fn(sft, k, |w| c.log_norm(w) / k as f64)?
            }
            ScalarPotential::KStep(p) => {
                let kp = p.k();
                let need = k + kp - 1;
                KStepPotential::from_fn(sft, k, |w| {
                    let mut x = Vec::with_capacity(need + k);
                    while x.len() < need {
                        x.extend_from_slice(w);
                        x.extend_from_slice(sft.bridge(w[w.len() - 1], w[0]));
                    }
                    let mut sum = 0.0;
                    for j in 0..k {
                        sum += p
                            .value_of(sft, &x[j..j + kp])
                            .expect("periodic extension is admissible");
                    }
                    sum / k as f64
                })?
            }
        };
        let bound = self.additivity_constant() / k as f64 + self.var_norm(sft, k) / k as f64;
        Ok((approx, bound))
    }
}

fn range_rec(sft: &Sft, p: &KStepPotential, ext: &mut Vec<u8>, n: usize, lo: &mut f64, hi: &mut f64) {
    if ext.len() == n + p.k() - 1 {
        let mut sum = 0.0;
        for j in 0..n {
            sum += p
                .value_of(sft, &ext[j..j + p.k()])
                .expect("admissible extension");
        }
        *lo = lo.min(sum);
        *hi = hi.max(sum);
        return;
    }
    let last = *ext.last().expect("nonempty");
    let mut mask = sft.successors(last);
    while mask != 0 {
        let s = mask.trailing_zeros() as u8;
        mask &= mask - 1;
        ext.push(s);
        range_rec(sft, p, ext, n, lo, hi);
        ext.pop();
    }
}

/// A vector potential: up to two scalar components evaluated jointly.
#[derive(Debug, Clone)]
pub struct PotentialBundle {
    components: Vec<ScalarPotential>,
}

impl PotentialBundle {
    pub fn new(components: Vec<ScalarPotential>) -> Result<Self> {
        let d = components.len();
        if d == 0 || d > 2 {
            return Err(Error::DimensionUnsupported { d });
        }
        Ok(PotentialBundle { components })
    }

    pub fn scalar(p: ScalarPotential) -> Self {
        PotentialBundle {
            components: vec![p],
        }
    }

    /// Observable components plus a trailing gauge slot, for the joint
    /// transfer matrices used by the spectrum solver.
    pub(crate) fn with_gauge(phi: &PotentialBundle, psi: ScalarPotential) -> Self {
        let mut components = phi.components.clone();
        components.push(psi);
        PotentialBundle { components }
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarPotential] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &ScalarPotential {
        &self.components[i]
    }

    /// Largest window over the components.
    pub fn window(&self) -> usize {
        self.components.iter().map(|c| c.window()).max().unwrap_or(1)
    }

    pub fn phi_max(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.phi_max()).collect()
    }

    pub fn phi_min(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.phi_min()).collect()
    }

    /// Euclidean norm bound across components.
    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.norm() * c.norm())
            .sum::<f64>()
            .sqrt()
    }

    pub fn birkhoff_range(&self, sft: &Sft, word: &[u8]) -> Result<Vec<(f64, f64)>> {
        self.components
            .iter()
            .map(|c| c.birkhoff_range(sft, word))
            .collect()
    }

    pub fn var_norm(&self, sft: &Sft, n: usize) -> Vec<f64> {
        self.components.iter().map(|c| c.var_norm(sft, n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digit(sft: &Sft) -> ScalarPotential {
        ScalarPotential::KStep(KStepPotential::from_symbol_values(sft, &[0.0, 1.0]).unwrap())
    }

    #[test]
    fn one_step_range_is_a_point() {
        let s = Sft::full(2).unwrap();
        let p = digit(&s);
        let (lo, hi) = p.birkhoff_range(&s, &[0, 1]).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn two_step_range_resolves_free_symbol() {
        let s = Sft::full(2).unwrap();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| (2 * w[0] + w[1]) as f64).unwrap(),
        );
        // phi_1 on [1] is g(1 x2) with x2 free: {0, 1}
        let (lo, hi) = p.birkhoff_range(&s, &[0]).unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn trivial_cocycle_has_zero_range() {
        let s = Sft::full(2).unwrap();
        let c = ScalarPotential::Cocycle(MatrixCocycle::new(vec![vec![1.0], vec![1.0]]).unwrap());
        let (lo, hi) = c.birkhoff_range(&s, &[0, 1, 0]).unwrap();
        assert!(lo.abs() < 1e-15 && hi.abs() < 1e-15);
    }

    #[test]
    fn sup_weight_of_constant_metric_potential() {
        let s = Sft::full(2).unwrap();
        let p = ScalarPotential::KStep(KStepPotential::constant(&s, -(2.0f64.ln())));
        let w = p.sup_weight(&s, &[0, 1, 0]).unwrap();
        assert!((w - 0.125).abs() < 1e-15);
    }

    #[test]
    fn sup_weight_of_digit_word() {
        let s = Sft::full(2).unwrap();
        let p = digit(&s);
        // word "101" in digits carries phi_3 = 2
        let w = p.sup_weight(&s, &[1, 0, 1]).unwrap();
        assert!((w.ln() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sup_weight_on_golden_mean() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, -2.0]).unwrap(),
        );
        let w = p.sup_weight(&s, &[1, 0, 1]).unwrap();
        assert!((w.ln() + 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_word_has_weight_one() {
        let s = Sft::full(2).unwrap();
        assert_eq!(digit(&s).sup_weight(&s, &[]).unwrap(), 1.0);
    }

    #[test]
    fn inadmissible_word_is_rejected() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(KStepPotential::constant(&s, -1.0));
        assert!(matches!(
            p.birkhoff_range(&s, &[1, 1]),
            Err(Error::WordNotAdmissible { .. })
        ));
    }

    #[test]
    fn var_norm_of_one_step_is_zero() {
        let s = Sft::full(2).unwrap();
        for n in 1..6 {
            assert_eq!(digit(&s).var_norm(&s, n), 0.0);
        }
    }

    #[test]
    fn var_norm_of_two_step_sees_one_free_symbol() {
        let s = Sft::full(2).unwrap();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| (2 * w[0] + w[1]) as f64).unwrap(),
        );
        for n in 1..6 {
            assert!((p.var_norm(&s, n) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn var_norm_of_cocycle_is_zero() {
        let s = Sft::full(2).unwrap();
        let c = ScalarPotential::Cocycle(
            MatrixCocycle::new(vec![vec![2.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 3.0]]).unwrap(),
        );
        assert_eq!(c.var_norm(&s, 4), 0.0);
    }

    #[test]
    fn var_norm_halves_along_doubling() {
        // |Phi|_{2n} / 2n <= |Phi|_n / n for k-step tables
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 3, |w| {
                (w[0] as f64) * 0.3 - (w[1] as f64) * 0.7 + (w[2] as f64) * 0.2
            })
            .unwrap(),
        );
        for n in [2usize, 4, 8] {
            let a = p.var_norm(&s, n) / n as f64;
            let b = p.var_norm(&s, 2 * n) / (2 * n) as f64;
            assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn cocycle_multiplicative_bounds_brute_force() {
        let s = Sft::golden_mean();
        let c = ScalarPotential::Cocycle(
            MatrixCocycle::new(vec![vec![2.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 3.0]]).unwrap(),
        );
        let cc = c.additivity_constant();
        for nu in 1..=5usize {
            for nv in 1..=5usize {
                s.for_each_word(nu + nv, |w| {
                    let (u, v) = w.split_at(nu);
                    let fu = c.sup_weight_log(&s, u).unwrap();
                    let fv = c.sup_weight_log(&s, v).unwrap();
                    let fw = c.sup_weight_log(&s, w).unwrap();
                    let vn = c.var_norm(&s, nu);
                    assert!(fw <= cc + fu + fv + 1e-10);
                    assert!(fw >= fu + fv - cc - vn - 1e-10);
                });
            }
        }
    }

    #[test]
    fn kstep_multiplicative_bounds_brute_force() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| 0.4 * w[0] as f64 - 0.9 * w[1] as f64).unwrap(),
        );
        for nu in 1..=4usize {
            for nv in 1..=4usize {
                s.for_each_word(nu + nv, |w| {
                    let (u, v) = w.split_at(nu);
                    let fu = p.sup_weight_log(&s, u).unwrap();
                    let fv = p.sup_weight_log(&s, v).unwrap();
                    let fw = p.sup_weight_log(&s, w).unwrap();
                    let vn = p.var_norm(&s, nu);
                    assert!(fw <= fu + fv + 1e-10);
                    assert!(fw >= fu + fv - vn - 1e-10);
                });
            }
        }
    }

    #[test]
    fn negative_potential_weights_shrink_under_extension() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-0.5, -1.5]).unwrap(),
        );
        s.for_each_word(6, |w| {
            for cut in 1..w.len() {
                let a = p.sup_weight_log(&s, &w[..cut]).unwrap();
                let b = p.sup_weight_log(&s, w).unwrap();
                assert!(b <= a + 1e-12);
            }
        });
    }

    #[test]
    fn growth_bounds_hold_on_cylinders() {
        // n * Phi_min <= phi_n <= n * Phi_max on every sampled cylinder
        let s = Sft::golden_mean();
        let c = ScalarPotential::Cocycle(
            MatrixCocycle::new(vec![vec![2.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 3.0]]).unwrap(),
        );
        let (pmin, pmax) = (c.phi_min(), c.phi_max());
        for n in 1..=7usize {
            s.for_each_word(n, |w| {
                let (lo, hi) = c.birkhoff_range(&s, w).unwrap();
                assert!(lo >= n as f64 * pmin - 1e-9);
                assert!(hi <= n as f64 * pmax + 1e-9);
            });
        }
    }

    #[test]
    fn almost_additivity_constant_is_valid_on_triples() {
        use rand::{Rng, SeedableRng};
        let s = Sft::golden_mean();
        let c = ScalarPotential::Cocycle(
            MatrixCocycle::new(vec![vec![2.0, 1.0, 0.5, 1.0], vec![1.0, 4.0, 1.0, 3.0]]).unwrap(),
        );
        let cc = c.additivity_constant();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let n = rng.gen_range(1..=6usize);
            let p = rng.gen_range(1..=6usize);
            let mut word = Vec::new();
            // random admissible word of length n + p
            let mut sym = rng.gen_range(0..2u8);
            word.push(sym);
            while word.len() < n + p {
                let nxt = rng.gen_range(0..2u8);
                sym = if s.edge(sym, nxt) { nxt } else { 0 };
                word.push(sym);
            }
            let whole = c.birkhoff_range(&s, &word).unwrap().0;
            let first = c.birkhoff_range(&s, &word[..n]).unwrap().0;
            let second = c.birkhoff_range(&s, &word[n..]).unwrap().0;
            assert!((whole - first - second).abs() <= cc + 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn holder_approx_of_one_step_is_exact() {
        let s = Sft::full(2).unwrap();
        let p = digit(&s);
        let (a, bound) = p.holder_approx(&s, 1).unwrap();
        assert_eq!(bound, 0.0);
        assert_eq!(a.value_of(&s, &[1]).unwrap(), 1.0);
        assert_eq!(a.value_of(&s, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn holder_approx_of_constant_cocycle() {
        let s = Sft::full(3).unwrap();
        let m = vec![1.0, 1.0, 1.0, 1.0];
        let c = ScalarPotential::Cocycle(MatrixCocycle::new(vec![m.clone(), m.clone(), m]).unwrap());
        let k = 4;
        let (a, bound) = c.holder_approx(&s, k).unwrap();
        // |M^4| = 2^3 * 4, generator is log of that over 4, the same for every word
        let expect = (32.0f64).ln() / 4.0;
        let mut seen = Vec::new();
        s.for_each_word(k, |w| seen.push(a.value_of(&s, w).unwrap()));
        for v in seen {
            assert!((v - expect).abs() < 1e-12);
        }
        let cc = c.additivity_constant();
        assert!((bound - cc / k as f64).abs() < 1e-12);
    }

    #[test]
    fn holder_approx_bound_is_monotone_in_k() {
        let s = Sft::golden_mean();
        let c = ScalarPotential::Cocycle(
            MatrixCocycle::new(vec![vec![2.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 3.0]]).unwrap(),
        );
        let mut prev = f64::INFINITY;
        for k in [2usize, 4, 8, 16] {
            let (_, bound) = c.holder_approx(&s, k).unwrap();
            assert!(bound <= prev + 1e-15);
            prev = bound;
        }
    }

    #[test]
    fn bundle_dimension_limits() {
        let s = Sft::full(2).unwrap();
        let p = || digit(&s);
        assert!(PotentialBundle::new(vec![]).is_err());
        assert!(PotentialBundle::new(vec![p(), p(), p()]).is_err());
        assert_eq!(PotentialBundle::new(vec![p(), p()]).unwrap().d(), 2);
    }

    #[test]
    fn missing_table_entry_is_rejected() {
        let s = Sft::full(2).unwrap();
        let r = KStepPotential::from_pairs(&s, 1, &[(vec![0], 1.0)]);
        assert!(matches!(r, Err(Error::InvalidPotential { .. })));
    }
}
