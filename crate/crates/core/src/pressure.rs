//! Topological pressure via transfer operators on de Bruijn states.
//!
//! States are admissible kappa-words with kappa = max(k-1, 1), edges are
//! admissible (kappa+1)-words, and each edge appends one symbol. A k-step
//! generator contributes the value of its window ending at the appended
//! symbol; windows that end inside the initial state are collected in a
//! per-state head table, windows that end past the last determined symbol
//! in free-tail extrema tables. With these three pieces, cylinder suprema
//! and n-block partition sums are exact, and the pressure is the log
//! spectral radius of the weighted adjacency matrix.
//!
//! The spectral radius comes with two-sided Collatz-Wielandt bounds: for a
//! strictly positive test vector v, min (Mv/v) <= rho <= max (Mv/v), so the
//! returned enclosure is certified whenever the iteration kept v positive.

use crate::error::{Error, Result};
use crate::optim::LogSum;
use crate::potential::{MatrixCocycle, PotentialBundle, ScalarPotential, DEFAULT_WORD_CAP};
use crate::sft::{pack, Sft, WordSet};

/// Stopping rules for the power iteration.
#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Target width of the log enclosure.
    pub tol: f64,
    pub max_iter: usize,
    /// Accept an uncertified estimate when underflow breaks positivity;
    /// used by boundary sweeps at extreme weights.
    pub allow_uncertified: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            tol: 1e-12,
            max_iter: 20_000,
            allow_uncertified: false,
        }
    }
}

/// A certified (or flagged) log spectral radius.
#[derive(Debug, Clone, Copy)]
pub struct SpectralData {
    pub log_rho: f64,
    pub log_lo: f64,
    pub log_hi: f64,
    pub certified: bool,
    pub iterations: usize,
}

/// Perron data for equilibrium states: radius plus right/left vectors.
#[derive(Debug, Clone)]
pub struct PerronData {
    pub log_rho: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub certified: bool,
}

/// Weighted de Bruijn adjacency for a potential bundle. Owns copies of the
/// subshift and bundle so downstream holders need no lifetimes.
pub struct TransferMatrix {
    sft: Sft,
    bundle: PotentialBundle,
    k: usize,
    kappa: usize,
    pub(crate) states: WordSet,
    pub(crate) edges: WordSet,
    pub(crate) row_ptr: Vec<u32>,
    pub(crate) tgt: Vec<u32>,
    /// (edge, next state) per state * m + symbol; u32::MAX when inadmissible.
    pub(crate) trans: Vec<(u32, u32)>,
    /// Per k-step bundle slot: generator value per edge.
    comp_values: Vec<Vec<f64>>,
    /// Per k-step bundle slot: head windows inside the initial state.
    comp_head: Vec<Vec<f64>>,
    /// Bundle slots occupied by k-step tables (same order as comp_values).
    kstep_slots: Vec<usize>,
    /// Bundle slots occupied by cocycles.
    cocycle_slots: Vec<usize>,
}

impl TransferMatrix {
    pub fn new(sft: &Sft, bundle: &PotentialBundle) -> Result<Self> {
        TransferMatrix::with_window(sft, bundle, bundle.window())
    }

    /// Builds with a wider window than the bundle needs, for callers that
    /// want a specific state order.
    pub fn with_window(sft: &Sft, bundle: &PotentialBundle, k: usize) -> Result<Self> {
        if k < bundle.window() || k == 0 {
            return Err(Error::OrderMismatch {
                order: k,
                step: bundle.window(),
            });
        }
        let m = sft.alphabet_size();
        let kappa = k.saturating_sub(1).max(1);
        let states = WordSet::build(sft, kappa, DEFAULT_WORD_CAP)?;
        let edges = WordSet::build(sft, kappa + 1, DEFAULT_WORD_CAP)?;
        let ns = states.len_words();
        let ne = edges.len_words();
        let modulus = states.modulus();

        // edges sorted lexicographically are grouped by their kappa-prefix
        let mut row_ptr = vec![0u32; ns + 1];
        let mut tgt = vec![0u32; ne];
        let mut trans = vec![(u32::MAX, u32::MAX); ns * m];
        for e in 0..ne {
            let p = edges.packed_at(e);
            let src = states
                .rank_of(p / m as u64)
                .expect("prefix of admissible word");
            let nxt = states
                .rank_of(p % modulus)
                .expect("suffix of admissible word");
            row_ptr[src + 1] += 1;
            tgt[e] = nxt as u32;
            let sym = (p % m as u64) as usize;
            trans[src * m + sym] = (e as u32, nxt as u32);
        }
        for s in 0..ns {
            row_ptr[s + 1] += row_ptr[s];
        }

        let mut comp_values = Vec::new();
        let mut comp_head = Vec::new();
        let mut kstep_slots = Vec::new();
        let mut cocycle_slots = Vec::new();
        let mut buf = vec![0u8; kappa + 1];
        for (slot, comp) in bundle.components().iter().enumerate() {
            match comp {
                ScalarPotential::Cocycle(_) => cocycle_slots.push(slot),
                ScalarPotential::KStep(p) => {
                    let ki = p.k();
                    let mut vals = vec![0.0f64; ne];
                    for e in 0..ne {
                        edges.write_word(e, &mut buf);
                        vals[e] = p
                            .value_of(sft, &buf[kappa + 1 - ki..])
                            .expect("suffix of admissible word");
                    }
                    let mut head = vec![0.0f64; ns];
                    let mut sbuf = vec![0u8; kappa];
                    for s in 0..ns {
                        states.write_word(s, &mut sbuf);
                        let mut acc = 0.0;
                        for end in ki..=kappa {
                            acc += p
                                .value_of(sft, &sbuf[end - ki..end])
                                .expect("subword of admissible word");
                        }
                        head[s] = acc;
                    }
                    comp_values.push(vals);
                    comp_head.push(head);
                    kstep_slots.push(slot);
                }
            }
        }

        Ok(TransferMatrix {
            sft: sft.clone(),
            bundle: bundle.clone(),
            k,
            kappa,
            states,
            edges,
            row_ptr,
            tgt,
            trans,
            comp_values,
            comp_head,
            kstep_slots,
            cocycle_slots,
        })
    }

    pub fn sft(&self) -> &Sft {
        &self.sft
    }

    pub fn bundle(&self) -> &PotentialBundle {
        &self.bundle
    }

    pub fn window(&self) -> usize {
        self.k
    }

    pub fn state_order(&self) -> usize {
        self.kappa
    }

    pub fn num_states(&self) -> usize {
        self.states.len_words()
    }

    pub fn num_edges(&self) -> usize {
        self.tgt.len()
    }

    /// Symbol appended by an edge.
    pub fn edge_symbol(&self, e: usize) -> u8 {
        (self.edges.packed_at(e) % self.sft.alphabet_size() as u64) as u8
    }

    fn check_spectral_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.bundle.d() {
            return Err(Error::DimensionUnsupported { d: coeffs.len() });
        }
        for &slot in &self.cocycle_slots {
            if coeffs[slot] != 0.0 {
                return Err(Error::InvalidPotential {
                    reason: "spectral pressure needs k-step components; \
                             approximate cocycles with holder_approx first"
                        .into(),
                });
            }
        }
        Ok(())
    }

    fn merged_edge_values(&self, coeffs: &[f64]) -> Vec<f64> {
        let ne = self.tgt.len();
        let mut out = vec![0.0f64; ne];
        for (ci, &slot) in self.kstep_slots.iter().enumerate() {
            let c = coeffs[slot];
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.comp_values[ci]) {
                *o += c * v;
            }
        }
        out
    }

    /// Log spectral radius of the operator weighted by
    /// exp(sum_i coeffs[i] * g_i + constant), with Collatz-Wielandt
    /// certification. `warm` carries the Perron vector across nearby calls.
    pub fn log_spectral_radius(
        &self,
        coeffs: &[f64],
        constant: f64,
        opts: &SpectralOptions,
        warm: Option<&mut Vec<f64>>,
    ) -> Result<SpectralData> {
        self.check_spectral_coeffs(coeffs)?;
        let merged = self.merged_edge_values(coeffs);
        let shift = merged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = merged.iter().map(|v| (v - shift).exp()).collect();
        let ns = self.num_states();

        let mut warm = warm;
        let mut v = vec![1.0f64; ns];
        if let Some(w) = warm.as_deref() {
            if w.len() == ns && w.iter().all(|x| x.is_finite() && *x > 0.0) {
                v.copy_from_slice(w);
            }
        }
        let mut u = vec![0.0f64; ns];
        let mut best_lo = f64::NEG_INFINITY;
        let mut best_hi = f64::INFINITY;
        let mut positive = true;
        let mut iters = 0usize;
        let mut last_growth = 0.0f64;
        let mut sigma = 0.0f64;
        while iters < opts.max_iter {
            iters += 1;
            self.apply(&weights, &v, &mut u);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut any_zero = false;
            for s in 0..ns {
                if v[s] > 0.0 {
                    let r = u[s] / v[s];
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
                if u[s] <= 0.0 {
                    any_zero = true;
                }
            }
            if any_zero {
                positive = false;
            }
            if positive && lo > 0.0 {
                best_lo = best_lo.max(lo.ln());
                best_hi = best_hi.min(hi.ln());
                if best_hi < best_lo {
                    let mid = 0.5 * (best_lo + best_hi);
                    best_lo = mid;
                    best_hi = mid;
                }
                if best_hi - best_lo <= opts.tol {
                    let log_rho = shift + constant + 0.5 * (best_lo + best_hi);
                    if let Some(w) = warm.as_deref_mut() {
                        w.clear();
                        w.extend_from_slice(&v);
                    }
                    return Ok(SpectralData {
                        log_rho,
                        log_lo: shift + constant + best_lo,
                        log_hi: shift + constant + best_hi,
                        certified: true,
                        iterations: iters,
                    });
                }
            }
            last_growth = u.iter().cloned().fold(0.0f64, f64::max).ln();
            // advance with a diagonal shift at the scale of rho; plain
            // iteration stalls when the subdominant eigenvalue sits near
            // -rho (weighted graphs that are periodic up to underflow)
            let next_sigma = if positive && lo > 0.0 && hi.is_finite() {
                (lo * hi).sqrt()
            } else {
                0.0
            };
            if sigma > 0.0 {
                for s in 0..ns {
                    u[s] += sigma * v[s];
                }
            }
            sigma = next_sigma;
            let top = u.iter().cloned().fold(0.0f64, f64::max);
            if top == 0.0 {
                return Err(Error::NonConvergence {
                    what: "power iteration collapsed to zero",
                    iterations: iters,
                });
            }
            for s in 0..ns {
                v[s] = u[s] / top;
            }
        }
        if opts.allow_uncertified {
            let log_rho = if best_lo.is_finite() && best_hi.is_finite() {
                shift + constant + 0.5 * (best_lo + best_hi)
            } else {
                shift + constant + last_growth
            };
            return Ok(SpectralData {
                log_rho,
                log_lo: f64::NEG_INFINITY,
                log_hi: f64::INFINITY,
                certified: false,
                iterations: iters,
            });
        }
        Err(Error::NonConvergence {
            what: "power iteration",
            iterations: iters,
        })
    }

    fn apply(&self, weights: &[f64], v: &[f64], u: &mut [f64]) {
        for s in 0..self.num_states() {
            let mut acc = 0.0;
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                acc += weights[e] * v[self.tgt[e] as usize];
            }
            u[s] = acc;
        }
    }

    fn apply_transpose(&self, weights: &[f64], v: &[f64], u: &mut [f64]) {
        for x in u.iter_mut() {
            *x = 0.0;
        }
        for s in 0..self.num_states() {
            let vs = v[s];
            if vs == 0.0 {
                continue;
            }
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                u[self.tgt[e] as usize] += weights[e] * vs;
            }
        }
    }

    /// Right and left Perron vectors (sup-normalized) with the radius.
    pub fn perron(
        &self,
        coeffs: &[f64],
        constant: f64,
        opts: &SpectralOptions,
    ) -> Result<PerronData> {
        self.perron_warm(coeffs, constant, opts, None, None)
    }

    /// Perron solve with caller-held warm vectors; iterative minimizers
    /// move the coefficients a little per step, so seeding both iterations
    /// from the previous solution cuts most of the work.
    pub(crate) fn perron_warm(
        &self,
        coeffs: &[f64],
        constant: f64,
        opts: &SpectralOptions,
        mut warm_right: Option<&mut Vec<f64>>,
        warm_left: Option<&mut Vec<f64>>,
    ) -> Result<PerronData> {
        self.check_spectral_coeffs(coeffs)?;
        let data = self.log_spectral_radius(coeffs, constant, opts, warm_right.as_deref_mut())?;
        let merged = self.merged_edge_values(coeffs);
        let shift = merged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = merged.iter().map(|v| (v - shift).exp()).collect();
        let ns = self.num_states();
        let run = |transpose: bool, seed: Option<&[f64]>| -> Result<Vec<f64>> {
            let mut v = vec![1.0f64; ns];
            if let Some(w) = seed {
                if w.len() == ns && w.iter().all(|x| x.is_finite() && *x > 0.0) {
                    v.copy_from_slice(w);
                }
            }
            let mut u = vec![0.0f64; ns];
            let mut width_ok = false;
            let mut sigma = 0.0f64;
            for _ in 0..opts.max_iter {
                if transpose {
                    self.apply_transpose(&weights, &v, &mut u);
                } else {
                    self.apply(&weights, &v, &mut u);
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for s in 0..ns {
                    if v[s] > 0.0 && u[s] > 0.0 {
                        let r = u[s] / v[s];
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                }
                if lo > 0.0 && lo.is_finite() && hi.ln() - lo.ln() <= opts.tol.max(1e-13) {
                    width_ok = true;
                    break;
                }
                // same anti-periodicity shift as the radius iteration
                let next_sigma = if lo > 0.0 && hi.is_finite() {
                    (lo * hi).sqrt()
                } else {
                    0.0
                };
                if sigma > 0.0 {
                    for s in 0..ns {
                        u[s] += sigma * v[s];
                    }
                }
                sigma = next_sigma;
                let top = u.iter().cloned().fold(0.0f64, f64::max);
                if top == 0.0 {
                    return Err(Error::NonConvergence {
                        what: "perron iteration collapsed",
                        iterations: 0,
                    });
                }
                for s in 0..ns {
                    v[s] = u[s] / top;
                }
            }
            if !width_ok && !opts.allow_uncertified {
                return Err(Error::NonConvergence {
                    what: "perron iteration",
                    iterations: opts.max_iter,
                });
            }
            Ok(v)
        };
        let right = run(false, warm_right.as_deref().map(|w| w.as_slice()))?;
        let left = run(true, warm_left.as_deref().map(|w| w.as_slice()))?;
        if let Some(w) = warm_right {
            w.clear();
            w.extend_from_slice(&right);
        }
        if let Some(w) = warm_left {
            w.clear();
            w.extend_from_slice(&left);
        }
        Ok(PerronData {
            log_rho: data.log_rho,
            right,
            left,
            certified: data.certified,
        })
    }

    /// Stationary equilibrium average of every k-step generator under the
    /// tilted operator, all from a single Perron solve. The equilibrium
    /// chain weights edge u -> v by left(u) W(u, v) right(v).
    pub(crate) fn equilibrium_slot_averages(
        &self,
        coeffs: &[f64],
        constant: f64,
        opts: &SpectralOptions,
        warm_right: Option<&mut Vec<f64>>,
        warm_left: Option<&mut Vec<f64>>,
    ) -> Result<(f64, Vec<f64>)> {
        let pd = self.perron_warm(coeffs, constant, opts, warm_right, warm_left)?;
        let merged = self.merged_edge_values(coeffs);
        let shift = merged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0f64;
        let mut sums = vec![0.0f64; self.kstep_slots.len()];
        for s in 0..self.num_states() {
            let ls = pd.left[s];
            if ls == 0.0 {
                continue;
            }
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                let p = ls * (merged[e] - shift).exp() * pd.right[self.tgt[e] as usize];
                if p == 0.0 {
                    continue;
                }
                total += p;
                for (ci, vals) in self.comp_values.iter().enumerate() {
                    sums[ci] += p * vals[e];
                }
            }
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonConvergence {
                what: "equilibrium edge weights underflowed",
                iterations: 0,
            });
        }
        let mut out = vec![0.0f64; self.bundle.d()];
        for (ci, &slot) in self.kstep_slots.iter().enumerate() {
            out[slot] = sums[ci] / total;
        }
        Ok((pd.log_rho, out))
    }

    /// log sum over admissible n-words of the cylinder supremum of
    /// exp(phi_n) for the merged potential; exact.
    pub fn block_log_sum(&self, coeffs: &[f64], constant: f64, n: usize) -> Result<f64> {
        self.check_spectral_coeffs(coeffs)?;
        let table = self.cylinder_table(coeffs, constant)?;
        if n < self.kappa {
            let mut acc = LogSum::default();
            let mut err = None;
            self.sft.for_each_word(n, |w| {
                if err.is_some() {
                    return;
                }
                match table.log_range(w) {
                    Ok((_, hi)) => acc.push(hi),
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            return Ok(acc.value());
        }
        let ns = self.num_states();
        let merged = self.merged_edge_values(coeffs);
        let shift = merged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = merged.iter().map(|v| (v - shift).exp()).collect();
        let tail_top = table
            .tail_hi
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut v: Vec<f64> = table.tail_hi.iter().map(|t| (t - tail_top).exp()).collect();
        let mut log_norm = tail_top;
        let mut u = vec![0.0f64; ns];
        for _ in 0..n - self.kappa {
            self.apply(&weights, &v, &mut u);
            let top = u.iter().cloned().fold(0.0f64, f64::max);
            if top == 0.0 {
                return Err(Error::NonConvergence {
                    what: "block sum underflow",
                    iterations: n,
                });
            }
            for s in 0..ns {
                v[s] = u[s] / top;
            }
            log_norm += top.ln() + shift;
        }
        let mut acc = LogSum::default();
        for s in 0..ns {
            if v[s] > 0.0 {
                acc.push(table.head[s] + v[s].ln());
            }
        }
        Ok(acc.value() + log_norm + n as f64 * constant)
    }

    /// Exact cylinder evaluator for one coefficient vector.
    pub fn cylinder_table(&self, coeffs: &[f64], constant: f64) -> Result<CylinderTable<'_>> {
        if coeffs.len() != self.bundle.d() {
            return Err(Error::DimensionUnsupported { d: coeffs.len() });
        }
        let values = self.merged_edge_values(coeffs);
        let ns = self.num_states();
        let mut head = vec![0.0f64; ns];
        for (ci, &slot) in self.kstep_slots.iter().enumerate() {
            let c = coeffs[slot];
            if c == 0.0 {
                continue;
            }
            for (h, x) in head.iter_mut().zip(&self.comp_head[ci]) {
                *h += c * x;
            }
        }
        // step-gated free tails: component i only contributes to the first
        // k_i - 1 steps past the end of the word
        let mut tail_hi = vec![0.0f64; ns];
        let mut tail_lo = vec![0.0f64; ns];
        let mut inc = vec![0.0f64; self.tgt.len()];
        for r in (1..self.k).rev() {
            for x in inc.iter_mut() {
                *x = 0.0;
            }
            let mut live = false;
            for (ci, &slot) in self.kstep_slots.iter().enumerate() {
                let ki = match self.bundle.component(slot) {
                    ScalarPotential::KStep(p) => p.k(),
                    ScalarPotential::Cocycle(_) => unreachable!(),
                };
                let c = coeffs[slot];
                if c == 0.0 || ki <= r {
                    continue;
                }
                live = true;
                for (x, v) in inc.iter_mut().zip(&self.comp_values[ci]) {
                    *x += c * v;
                }
            }
            let mut next_hi = vec![f64::NEG_INFINITY; ns];
            let mut next_lo = vec![f64::INFINITY; ns];
            for s in 0..ns {
                let mut h = f64::NEG_INFINITY;
                let mut l = f64::INFINITY;
                for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                    let t = self.tgt[e] as usize;
                    let step = if live { inc[e] } else { 0.0 };
                    h = h.max(step + tail_hi[t]);
                    l = l.min(step + tail_lo[t]);
                }
                next_hi[s] = h;
                next_lo[s] = l;
            }
            tail_hi = next_hi;
            tail_lo = next_lo;
        }
        let mut cocycles = Vec::new();
        for &slot in &self.cocycle_slots {
            let c = coeffs[slot];
            if c == 0.0 {
                continue;
            }
            match self.bundle.component(slot) {
                ScalarPotential::Cocycle(cy) => cocycles.push((c, cy.clone())),
                ScalarPotential::KStep(_) => unreachable!(),
            }
        }
        Ok(CylinderTable {
            tm: self,
            coeffs: coeffs.to_vec(),
            values,
            head,
            tail_hi,
            tail_lo,
            cocycles,
            constant,
        })
    }
}

/// Exact sup/inf of merged Birkhoff sums over cylinders, for one fixed
/// coefficient vector. Borrowed from its transfer matrix.
pub struct CylinderTable<'t> {
    tm: &'t TransferMatrix,
    coeffs: Vec<f64>,
    pub(crate) values: Vec<f64>,
    pub(crate) head: Vec<f64>,
    pub(crate) tail_hi: Vec<f64>,
    pub(crate) tail_lo: Vec<f64>,
    cocycles: Vec<(f64, MatrixCocycle)>,
    constant: f64,
}

impl<'t> CylinderTable<'t> {
    pub fn matrix(&self) -> &TransferMatrix {
        self.tm
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub(crate) fn cocycles(&self) -> &[(f64, MatrixCocycle)] {
        &self.cocycles
    }

    pub fn log_sup(&self, word: &[u8]) -> Result<f64> {
        self.log_range(word).map(|(_, hi)| hi)
    }

    /// Exact range of the merged phi_n over [word], n = |word|.
    pub fn log_range(&self, word: &[u8]) -> Result<(f64, f64)> {
        let sft = self.tm.sft();
        if !sft.admissible(word) {
            return Err(Error::WordNotAdmissible {
                word: crate::sft::word_string(word),
            });
        }
        let n = word.len();
        if n == 0 {
            return Ok((0.0, 0.0));
        }
        let m = sft.alphabet_size() as u64;
        let kappa = self.tm.kappa;
        let (mut lo, mut hi) = if n >= kappa {
            let first = self
                .tm
                .states
                .rank_of(pack(&word[..kappa], sft.alphabet_size()))
                .expect("prefix is admissible");
            let mut det = self.head[first];
            let mut state = first;
            for &sym in &word[kappa..] {
                let (e, nxt) = self.tm.trans[state * m as usize + sym as usize];
                debug_assert_ne!(e, u32::MAX);
                det += self.values[e as usize];
                state = nxt as usize;
            }
            (det + self.tail_lo[state], det + self.tail_hi[state])
        } else {
            let mut ext = word.to_vec();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            self.short_word_rec(&mut ext, n, &mut lo, &mut hi);
            (lo, hi)
        };
        lo += n as f64 * self.constant;
        hi += n as f64 * self.constant;
        for (c, cy) in &self.cocycles {
            let v = c * cy.log_norm(word);
            lo += v;
            hi += v;
        }
        Ok((lo, hi))
    }

    fn short_word_rec(&self, ext: &mut Vec<u8>, n: usize, lo: &mut f64, hi: &mut f64) {
        let sft = self.tm.sft();
        if ext.len() == n + self.tm.k - 1 {
            let mut sum = 0.0;
            for &slot in &self.tm.kstep_slots {
                let c = self.coeffs[slot];
                if c == 0.0 {
                    continue;
                }
                let ScalarPotential::KStep(p) = self.tm.bundle.component(slot) else {
                    unreachable!()
                };
                for j in 0..n {
                    sum += c * p
                        .value_of(sft, &ext[j..j + p.k()])
                        .expect("admissible extension");
                }
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
            self.short_word_rec(ext, n, lo, hi);
            ext.pop();
        }
    }
}

/// Two-sided pressure bracket from one exact n-block sum.
#[derive(Debug, Clone, Copy)]
pub struct PressureBracket {
    pub n: usize,
    pub block_log_sum: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PressureBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// How a pressure value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureMethod {
    Spectral,
    BlockExtrapolation,
}

#[derive(Debug, Clone, Copy)]
pub struct PressureEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: PressureMethod,
}

/// Exact n-block log sum for a scalar potential of any kind.
pub fn block_log_sum(sft: &Sft, pot: &ScalarPotential, n: usize) -> Result<f64> {
    match pot {
        ScalarPotential::KStep(_) => {
            let bundle = PotentialBundle::scalar(pot.clone());
            let tm = TransferMatrix::new(sft, &bundle)?;
            tm.block_log_sum(&[1.0], 0.0, n)
        }
        ScalarPotential::Cocycle(cy) => Ok(cocycle_block_log_sum(sft, cy, n)),
    }
}

/// log sum over admissible n-words of the entry-sum norm of the matrix
/// product, by dynamic programming over (last symbol, matrix) pairs.
fn cocycle_block_log_sum(sft: &Sft, cy: &MatrixCocycle, n: usize) -> f64 {
    assert!(n >= 1);
    let m = sft.alphabet_size();
    let q = cy.q();
    // acc[j] = sum of M_w over admissible w ending in j
    let mut acc: Vec<Vec<f64>> = (0..m).map(|j| cy.matrix(j as u8).to_vec()).collect();
    let mut log_norm = 0.0f64;
    let mut sums = vec![0.0f64; q * q];
    for _ in 1..n {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j2 in 0..m {
            for x in sums.iter_mut() {
                *x = 0.0;
            }
            for (j, a) in acc.iter().enumerate() {
                if sft.edge(j as u8, j2 as u8) {
                    for (x, y) in sums.iter_mut().zip(a) {
                        *x += y;
                    }
                }
            }
            let mat = cy.matrix(j2 as u8);
            let mut prod = vec![0.0f64; q * q];
            for a in 0..q {
                for b in 0..q {
                    let x = sums[a * q + b];
                    if x == 0.0 {
                        continue;
                    }
                    for c in 0..q {
                        prod[a * q + c] += x * mat[b * q + c];
                    }
                }
            }
            next.push(prod);
        }
        acc = next;
        let top = acc
            .iter()
            .flat_map(|a| a.iter().cloned())
            .fold(0.0f64, f64::max);
        if top > 1e250 || (top < 1e-250 && top > 0.0) {
            log_norm += top.ln();
            for a in acc.iter_mut() {
                for x in a.iter_mut() {
                    *x /= top;
                }
            }
        }
    }
    let total: f64 = acc.iter().flat_map(|a| a.iter()).sum();
    total.ln() + log_norm
}

/// Pressure as a certified spectral radius; k-step potentials only.
pub fn pressure_exact(
    sft: &Sft,
    pot: &ScalarPotential,
    opts: &SpectralOptions,
) -> Result<SpectralData> {
    match pot {
        ScalarPotential::KStep(_) => {
            let bundle = PotentialBundle::scalar(pot.clone());
            let tm = TransferMatrix::new(sft, &bundle)?;
            tm.log_spectral_radius(&[1.0], 0.0, opts, None)
        }
        ScalarPotential::Cocycle(_) => Err(Error::InvalidPotential {
            reason: "spectral pressure needs k-step components; \
                     approximate cocycles with holder_approx first"
                .into(),
        }),
    }
}

/// Finite-n pressure bracket for any almost-additive potential.
///
/// The upper bound is Fekete's lemma applied to the almost-subadditive
/// sequence a_n + C. The lower bound glues n-blocks through connecting
/// words of length p0 and charges each junction the worst-case loss
/// 2C + |Phi|_n plus the bridge contribution p0 (|Phi| + C).
pub fn pressure_bracket(sft: &Sft, pot: &ScalarPotential, n: usize) -> Result<PressureBracket> {
    if n == 0 {
        return Err(Error::InvalidPotential {
            reason: "bracket needs n >= 1".into(),
        });
    }
    let a_n = block_log_sum(sft, pot, n)?;
    let c = pot.additivity_constant();
    let var = pot.var_norm(sft, n);
    let p0 = sft.primitivity_exponent() as f64;
    let upper = (a_n + c) / n as f64;
    let lower = (a_n - 2.0 * c - var - p0 * (pot.norm() + c)) / (n as f64 + p0);
    Ok(PressureBracket {
        n,
        block_log_sum: a_n,
        lower,
        upper,
    })
}

/// Best available pressure value: certified spectral radius for k-step
/// potentials, two-block Richardson extrapolation for cocycles, always
/// accompanied by the finite-n bracket.
pub fn pressure_combined(
    sft: &Sft,
    pot: &ScalarPotential,
    n: usize,
    opts: &SpectralOptions,
) -> Result<PressureEstimate> {
    let bracket = pressure_bracket(sft, pot, n)?;
    match pot {
        ScalarPotential::KStep(_) => {
            let sd = pressure_exact(sft, pot, opts)?;
            Ok(PressureEstimate {
                value: sd.log_rho,
                lower: bracket.lower.max(sd.log_lo),
                upper: bracket.upper.min(sd.log_hi),
                method: PressureMethod::Spectral,
            })
        }
        ScalarPotential::Cocycle(_) => {
            let a2 = block_log_sum(sft, pot, 2 * n)?;
            let value = (a2 - bracket.block_log_sum) / n as f64;
            Ok(PressureEstimate {
                value,
                lower: bracket.lower,
                upper: bracket.upper,
                method: PressureMethod::BlockExtrapolation,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::KStepPotential;

    const LOG_GOLDEN: f64 = 0.481_211_825_059_603_45;

    fn zero(sft: &Sft) -> ScalarPotential {
        ScalarPotential::KStep(KStepPotential::constant(sft, 0.0))
    }

    #[test]
    fn entropy_of_full_shift() {
        let s = Sft::full(3).unwrap();
        let sd = pressure_exact(&s, &zero(&s), &SpectralOptions::default()).unwrap();
        assert!((sd.log_rho - 3.0f64.ln()).abs() < 1e-12);
        assert!(sd.certified);
        assert!(sd.log_hi - sd.log_lo <= 1e-12);
    }

    #[test]
    fn entropy_of_golden_mean_shift() {
        let s = Sft::golden_mean();
        let sd = pressure_exact(&s, &zero(&s), &SpectralOptions::default()).unwrap();
        assert!((sd.log_rho - LOG_GOLDEN).abs() < 1e-12);
    }

    #[test]
    fn pressure_shifts_by_constants() {
        let s = Sft::golden_mean();
        let c = ScalarPotential::KStep(KStepPotential::constant(&s, -0.7));
        let sd = pressure_exact(&s, &c, &SpectralOptions::default()).unwrap();
        assert!((sd.log_rho - (LOG_GOLDEN - 0.7)).abs() < 1e-11);
    }

    #[test]
    fn weighted_full_shift_matches_free_energy() {
        // P(t * digit) = log(1 + e^t) on the full 2-shift
        let s = Sft::full(2).unwrap();
        for t in [-2.0f64, -0.5, 0.0, 1.3] {
            let p = ScalarPotential::KStep(
                KStepPotential::from_symbol_values(&s, &[0.0, t]).unwrap(),
            );
            let sd = pressure_exact(&s, &p, &SpectralOptions::default()).unwrap();
            assert!((sd.log_rho - (1.0 + t.exp()).ln()).abs() < 1e-11, "t = {t}");
        }
    }

    #[test]
    fn two_step_window_agrees_with_one_step() {
        // lifting a 1-step table to a 2-step window keeps the pressure
        let s = Sft::golden_mean();
        let one = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-0.3, 0.9]).unwrap(),
        );
        let two = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| if w[1] == 1 { 0.9 } else { -0.3 }).unwrap(),
        );
        let a = pressure_exact(&s, &one, &SpectralOptions::default()).unwrap();
        let b = pressure_exact(&s, &two, &SpectralOptions::default()).unwrap();
        assert!((a.log_rho - b.log_rho).abs() < 1e-11);
    }

    #[test]
    fn block_sums_count_words_for_zero_potential() {
        let s = Sft::golden_mean();
        for n in 1..=10usize {
            let a = block_log_sum(&s, &zero(&s), n).unwrap();
            assert!((a - (s.word_count(n) as f64).ln()).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn block_sums_match_enumeration_for_two_step() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| 0.4 * w[0] as f64 - 1.1 * w[1] as f64).unwrap(),
        );
        for n in 1..=7usize {
            let fast = block_log_sum(&s, &p, n).unwrap();
            let mut acc = LogSum::default();
            s.for_each_word(n, |w| acc.push(p.sup_weight_log(&s, w).unwrap()));
            assert!((fast - acc.value()).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn cocycle_block_sum_matches_enumeration() {
        let s = Sft::golden_mean();
        let cy = MatrixCocycle::new(vec![vec![2.0, 1.0, 0.5, 1.0], vec![1.0, 3.0, 1.0, 0.25]])
            .unwrap();
        let pot = ScalarPotential::Cocycle(cy);
        for n in 1..=7usize {
            let fast = block_log_sum(&s, &pot, n).unwrap();
            let mut acc = LogSum::default();
            s.for_each_word(n, |w| acc.push(pot.sup_weight_log(&s, w).unwrap()));
            assert!((fast - acc.value()).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn all_ones_cocycle_block_sum_in_closed_form() {
        // sum over 2^n words of the entry sum of J^n, J the 2x2 ones matrix:
        // entry sum is 2^(n+1), so a_n = n log 2 + (n + 1) log 2
        let s = Sft::full(2).unwrap();
        let cy = MatrixCocycle::new(vec![vec![1.0; 4], vec![1.0; 4]]).unwrap();
        let pot = ScalarPotential::Cocycle(cy);
        for n in [1usize, 5, 17, 40] {
            let a = block_log_sum(&s, &pot, n).unwrap();
            let expect = (2 * n + 1) as f64 * 2.0f64.ln();
            assert!((a - expect).abs() < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn bracket_contains_spectral_value() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.2, -0.6]).unwrap(),
        );
        let sd = pressure_exact(&s, &p, &SpectralOptions::default()).unwrap();
        let mut prev_width = f64::INFINITY;
        for n in [4usize, 8, 16, 32] {
            let b = pressure_bracket(&s, &p, n).unwrap();
            assert!(b.lower <= sd.log_rho + 1e-10, "n = {n}");
            assert!(b.upper >= sd.log_rho - 1e-10, "n = {n}");
            assert!(b.width() < prev_width, "n = {n}");
            prev_width = b.width();
        }
    }

    #[test]
    fn combined_cocycle_extrapolation_on_full_shift() {
        let s = Sft::full(2).unwrap();
        let cy = MatrixCocycle::new(vec![vec![1.0; 4], vec![1.0; 4]]).unwrap();
        let pot = ScalarPotential::Cocycle(cy);
        let est = pressure_combined(&s, &pot, 16, &SpectralOptions::default()).unwrap();
        assert_eq!(est.method, PressureMethod::BlockExtrapolation);
        assert!((est.value - 4.0f64.ln()).abs() < 1e-10);
        assert!(est.lower <= est.value && est.value <= est.upper);
    }

    #[test]
    fn cylinder_table_matches_direct_ranges() {
        let s = Sft::golden_mean();
        let p2 = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 3, |w| {
                0.3 * w[0] as f64 - 0.8 * w[1] as f64 + 0.1 * w[2] as f64
            })
            .unwrap(),
        );
        let p1 = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.5, -0.25]).unwrap(),
        );
        let bundle = PotentialBundle::new(vec![p1.clone(), p2.clone()]).unwrap();
        let tm = TransferMatrix::new(&s, &bundle).unwrap();
        let coeffs = [0.7, -1.3];
        let table = tm.cylinder_table(&coeffs, 0.05).unwrap();
        // brute force over extensions at a few short and long words
        for n in 1..=6usize {
            s.for_each_word(n, |w| {
                let (lo, hi) = table.log_range(w).unwrap();
                let mut blo = f64::INFINITY;
                let mut bhi = f64::NEG_INFINITY;
                s.for_each_word_with_prefix(w, n + 2, |x| {
                    let mut sum = 0.05 * n as f64;
                    for (c, pot) in [(coeffs[0], &p1), (coeffs[1], &p2)] {
                        for j in 0..n {
                            let ki = match pot {
                                ScalarPotential::KStep(p) => p.k(),
                                _ => unreachable!(),
                            };
                            let v = match pot {
                                ScalarPotential::KStep(p) => {
                                    p.value_of(&s, &x[j..j + ki]).unwrap()
                                }
                                _ => unreachable!(),
                            };
                            sum += c * v;
                        }
                    }
                    blo = blo.min(sum);
                    bhi = bhi.max(sum);
                });
                assert!((lo - blo).abs() < 1e-10, "lo at {:?}", w);
                assert!((hi - bhi).abs() < 1e-10, "hi at {:?}", w);
            });
        }
    }

    #[test]
    fn spectral_rejects_cocycle_components() {
        let s = Sft::full(2).unwrap();
        let cy = MatrixCocycle::new(vec![vec![1.0; 4], vec![1.0; 4]]).unwrap();
        let r = pressure_exact(&s, &ScalarPotential::Cocycle(cy), &SpectralOptions::default());
        assert!(matches!(r, Err(Error::InvalidPotential { .. })));
    }

    #[test]
    fn warm_start_reuses_perron_vector() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.0, -1.0]).unwrap(),
        );
        let bundle = PotentialBundle::scalar(p);
        let tm = TransferMatrix::new(&s, &bundle).unwrap();
        let opts = SpectralOptions::default();
        let mut warm = Vec::new();
        let cold = tm
            .log_spectral_radius(&[1.0], 0.0, &opts, Some(&mut warm))
            .unwrap();
        let hot = tm
            .log_spectral_radius(&[1.0], 0.0, &opts, Some(&mut warm))
            .unwrap();
        assert!((cold.log_rho - hot.log_rho).abs() < 1e-12);
        assert!(hot.iterations <= cold.iterations);
    }

    #[test]
    fn perron_vectors_solve_the_eigenproblem() {
        let s = Sft::golden_mean();
        let p = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| -0.4 * w[0] as f64 - 0.2 * w[1] as f64).unwrap(),
        );
        let bundle = PotentialBundle::scalar(p);
        let tm = TransferMatrix::new(&s, &bundle).unwrap();
        let pd = tm.perron(&[1.0], 0.0, &SpectralOptions::default()).unwrap();
        let rho = pd.log_rho.exp();
        // check M r = rho r row by row
        let merged = tm.merged_edge_values(&[1.0]);
        for st in 0..tm.num_states() {
            let mut acc = 0.0;
            for e in tm.row_ptr[st] as usize..tm.row_ptr[st + 1] as usize {
                acc += merged[e].exp() * pd.right[tm.tgt[e] as usize];
            }
            assert!((acc - rho * pd.right[st]).abs() < 1e-9);
        }
    }
}
