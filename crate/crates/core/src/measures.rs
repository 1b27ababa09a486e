//! Order-k Markov measures and equilibrium states.
//!
//! A measure of order k lives on the de Bruijn graph of admissible k-words:
//! a row-stochastic transition matrix plus its stationary vector. Entropy,
//! potential averages and cylinder masses are exact finite sums. The
//! equilibrium state of a k-step potential is the Ruelle-Perron-Frobenius
//! chain t(u,v) = W(u,v) r(v) / (rho r(u)) built from the Perron data of
//! the weighted transfer matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::potential::{PotentialBundle, ScalarPotential};
use crate::pressure::{SpectralOptions, TransferMatrix};
use crate::sft::{pack, Sft, WordSet};
use crate::spectrum::{LPhi, Spectrum};

/// Default seed for randomized measure sampling.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// A stationary Markov measure of finite order.
#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    sft: Sft,
    order: usize,
    states: WordSet,
    row_ptr: Vec<u32>,
    tgt: Vec<u32>,
    sym: Vec<u8>,
    /// Edge index per state * m + symbol, u32::MAX when inadmissible.
    trans: Vec<u32>,
    prob: Vec<f64>,
    pi: Vec<f64>,
}

struct Skeleton {
    states: WordSet,
    row_ptr: Vec<u32>,
    tgt: Vec<u32>,
    sym: Vec<u8>,
    trans: Vec<u32>,
}

fn skeleton(sft: &Sft, order: usize) -> Result<Skeleton> {
    if order == 0 {
        return Err(Error::OrderMismatch { order: 0, step: 1 });
    }
    let m = sft.alphabet_size();
    let states = WordSet::build(sft, order, crate::potential::DEFAULT_WORD_CAP)?;
    let ns = states.len_words();
    let modulus = states.modulus();
    let mut row_ptr = vec![0u32; ns + 1];
    let mut tgt = Vec::new();
    let mut sym = Vec::new();
    let mut trans = vec![u32::MAX; ns * m];
    for s in 0..ns {
        let sp = states.packed_at(s);
        let last = (sp % m as u64) as u8;
        let mut mask = sft.successors(last);
        while mask != 0 {
            let sigma = mask.trailing_zeros() as u8;
            mask &= mask - 1;
            let nxt = states
                .rank_of((sp * m as u64 + sigma as u64) % modulus)
                .expect("suffix of admissible word");
            trans[s * m + sigma as usize] = tgt.len() as u32;
            tgt.push(nxt as u32);
            sym.push(sigma);
        }
        row_ptr[s + 1] = tgt.len() as u32;
    }
    Ok(Skeleton {
        states,
        row_ptr,
        tgt,
        sym,
        trans,
    })
}

impl MarkovMeasure {
    /// Builds from unnormalized nonnegative row weights; each admissible
    /// (state, symbol) pair is weighted by `f`, rows are normalized, and
    /// the stationary vector is computed by damped iteration.
    pub fn from_rows<F: FnMut(&[u8], u8) -> f64>(
        sft: &Sft,
        order: usize,
        mut f: F,
    ) -> Result<Self> {
        let sk = skeleton(sft, order)?;
        let ns = sk.states.len_words();
        let mut prob = vec![0.0f64; sk.tgt.len()];
        let mut buf = vec![0u8; order];
        for s in 0..ns {
            sk.states.write_word(s, &mut buf);
            let mut total = 0.0;
            for e in sk.row_ptr[s] as usize..sk.row_ptr[s + 1] as usize {
                let w = f(&buf, sk.sym[e]);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidPotential {
                        reason: "transition weights must be finite and nonnegative".into(),
                    });
                }
                prob[e] = w;
                total += w;
            }
            if total <= 0.0 {
                return Err(Error::DegenerateRow { index: s });
            }
            for e in sk.row_ptr[s] as usize..sk.row_ptr[s + 1] as usize {
                prob[e] /= total;
            }
        }
        let pi = stationary(&sk.row_ptr, &sk.tgt, &prob, ns);
        Ok(MarkovMeasure {
            sft: sft.clone(),
            order,
            states: sk.states,
            row_ptr: sk.row_ptr,
            tgt: sk.tgt,
            sym: sk.sym,
            trans: sk.trans,
            prob,
            pi,
        })
    }

    /// Dirichlet(1,..,1) random rows over the admissible successors.
    pub fn random(sft: &Sft, order: usize, rng: &mut impl Rng) -> Result<Self> {
        MarkovMeasure::from_rows(sft, order, |_, _| {
            // exponential draws give Dirichlet rows after normalization
            let u: f64 = rng.gen::<f64>();
            -(1.0 - u).ln()
        })
    }

    /// Maximal-entropy (Parry) measure.
    pub fn parry(sft: &Sft) -> Result<Self> {
        let (mu, _) = equilibrium_state(sft, &ScalarPotential::KStep(
            crate::potential::KStepPotential::constant(sft, 0.0),
        ))?;
        Ok(mu)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sft(&self) -> &Sft {
        &self.sft
    }

    pub fn num_states(&self) -> usize {
        self.states.len_words()
    }

    pub fn stationary_vec(&self) -> &[f64] {
        &self.pi
    }

    fn refresh_stationary(&mut self) {
        self.pi = stationary(&self.row_ptr, &self.tgt, &self.prob, self.num_states());
    }

    /// -sum_u pi(u) sum_v t(u,v) log t(u,v).
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        for s in 0..self.num_states() {
            let ps = self.pi[s];
            if ps == 0.0 {
                continue;
            }
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                let p = self.prob[e];
                if p > 0.0 {
                    h -= ps * p * p.ln();
                }
            }
        }
        h
    }

    /// Exact average of a k-step potential, k <= order + 1.
    pub fn potential_average(&self, pot: &ScalarPotential) -> Result<f64> {
        let p = match pot {
            ScalarPotential::KStep(p) => p,
            ScalarPotential::Cocycle(_) => {
                return Err(Error::InvalidPotential {
                    reason: "Markov averages need a k-step potential; \
                             approximate cocycles with holder_approx first"
                        .into(),
                })
            }
        };
        let k = p.k();
        if k > self.order + 1 {
            return Err(Error::OrderMismatch {
                order: self.order,
                step: k,
            });
        }
        let m = self.sft.alphabet_size();
        let mut acc = 0.0;
        let mut buf = vec![0u8; self.order + 1];
        for s in 0..self.num_states() {
            let ps = self.pi[s];
            if ps == 0.0 {
                continue;
            }
            let sp = self.states.packed_at(s);
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                let pe = self.prob[e];
                if pe == 0.0 {
                    continue;
                }
                let word = sp * m as u64 + self.sym[e] as u64;
                crate::sft::unpack(word, self.order + 1, m, &mut buf);
                let v = p.value_of(&self.sft, &buf[..k]).expect("admissible prefix");
                acc += ps * pe * v;
            }
        }
        Ok(acc)
    }

    pub fn bundle_average(&self, bundle: &PotentialBundle) -> Result<Vec<f64>> {
        bundle
            .components()
            .iter()
            .map(|c| self.potential_average(c))
            .collect()
    }

    /// log mu([word]); NEG_INFINITY outside the support.
    pub fn cylinder_log_mass(&self, word: &[u8]) -> f64 {
        if !self.sft.admissible(word) {
            return f64::NEG_INFINITY;
        }
        let n = word.len();
        if n == 0 {
            return 0.0;
        }
        let m = self.sft.alphabet_size();
        if n < self.order {
            // marginal over all states extending the word
            let lo = pack(word, m) * self.states.modulus() / m.pow(n as u32) as u64;
            let hi = (pack(word, m) + 1) * self.states.modulus() / m.pow(n as u32) as u64;
            let mut mass = 0.0;
            for s in 0..self.num_states() {
                let sp = self.states.packed_at(s);
                if sp >= lo && sp < hi {
                    mass += self.pi[s];
                }
            }
            return if mass > 0.0 {
                mass.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        let mut state = self
            .states
            .rank_of(pack(&word[..self.order], m))
            .expect("prefix is admissible");
        let mut log_mass = self.pi[state].ln();
        for &sigma in &word[self.order..] {
            let e = self.trans[state * m + sigma as usize];
            debug_assert_ne!(e, u32::MAX);
            let p = self.prob[e as usize];
            if p == 0.0 {
                return f64::NEG_INFINITY;
            }
            log_mass += p.ln();
            state = self.tgt[e as usize] as usize;
        }
        log_mass
    }

    /// Samples a word of the given length, starting from the stationary
    /// distribution (or from `start` when given).
    pub fn sample_path(&self, len: usize, start: Option<usize>, rng: &mut impl Rng) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut state = match start {
            Some(s) => s,
            None => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut picked = self.num_states() - 1;
                for (s, &p) in self.pi.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        picked = s;
                        break;
                    }
                }
                picked
            }
        };
        if start.is_none() {
            let mut buf = vec![0u8; self.order];
            self.states.write_word(state, &mut buf);
            out.extend_from_slice(&buf);
            if out.len() >= len {
                out.truncate(len);
                return out;
            }
        }
        while out.len() < len {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut picked = self.row_ptr[state] as usize;
            for e in self.row_ptr[state] as usize..self.row_ptr[state + 1] as usize {
                acc += self.prob[e];
                picked = e;
                if u < acc {
                    break;
                }
            }
            out.push(self.sym[picked]);
            state = self.tgt[picked] as usize;
        }
        out
    }

    /// sup-norm of pi P - pi.
    pub fn stationarity_residual(&self) -> f64 {
        let ns = self.num_states();
        let mut next = vec![0.0f64; ns];
        for s in 0..ns {
            let ps = self.pi[s];
            for e in self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize {
                next[self.tgt[e] as usize] += ps * self.prob[e];
            }
        }
        next.iter()
            .zip(&self.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }

    /// Worst row-sum deviation from 1.
    pub fn row_sum_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.num_states() {
            let sum: f64 = self.prob[self.row_ptr[s] as usize..self.row_ptr[s + 1] as usize]
                .iter()
                .sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }
}

/// Damped power iteration for the stationary vector; the damping breaks
/// periodic supports without changing the fixed point.
fn stationary(row_ptr: &[u32], tgt: &[u32], prob: &[f64], ns: usize) -> Vec<f64> {
    let mut pi = vec![1.0 / ns as f64; ns];
    let mut next = vec![0.0f64; ns];
    for _ in 0..200_000 {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for s in 0..ns {
            let ps = pi[s];
            if ps == 0.0 {
                continue;
            }
            for e in row_ptr[s] as usize..row_ptr[s + 1] as usize {
                next[tgt[e] as usize] += ps * prob[e];
            }
        }
        let mut diff = 0.0f64;
        for s in 0..ns {
            let blended = 0.5 * (next[s] + pi[s]);
            diff = diff.max((blended - pi[s]).abs());
            pi[s] = blended;
        }
        if diff <= 1e-16 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= total;
    }
    pi
}

/// The RPF equilibrium state of a k-step potential, with P(phi) = log rho.
pub fn equilibrium_state(sft: &Sft, pot: &ScalarPotential) -> Result<(MarkovMeasure, f64)> {
    let ScalarPotential::KStep(_) = pot else {
        return Err(Error::InvalidPotential {
            reason: "equilibrium states need a k-step potential; \
                     approximate cocycles with holder_approx first"
                .into(),
        });
    };
    let bundle = PotentialBundle::scalar(pot.clone());
    let tm = TransferMatrix::new(sft, &bundle)?;
    equilibrium_from_transfer(&tm, &[1.0], 0.0)
}

/// Equilibrium state of a merged potential on an existing transfer matrix.
pub fn equilibrium_from_transfer(
    tm: &TransferMatrix,
    coeffs: &[f64],
    constant: f64,
) -> Result<(MarkovMeasure, f64)> {
    let opts = SpectralOptions::default();
    let pd = tm.perron(coeffs, constant, &opts)?;
    let sft = tm.sft();
    let order = tm.state_order();
    let sk = skeleton(sft, order)?;
    let ns = sk.states.len_words();
    let table = tm.cylinder_table(coeffs, constant)?;
    let m = sft.alphabet_size();
    let mut prob = vec![0.0f64; sk.tgt.len()];
    let mut buf = vec![0u8; order + 1];
    for s in 0..ns {
        let sp = sk.states.packed_at(s);
        let mut total = 0.0;
        for e in sk.row_ptr[s] as usize..sk.row_ptr[s + 1] as usize {
            let word = sp * m as u64 + sk.sym[e] as u64;
            crate::sft::unpack(word, order + 1, m, &mut buf);
            // edge weight: one-step increment of the merged generator
            let w = edge_log_weight(&table, tm, s, sk.sym[e]);
            let t = (w - pd.log_rho).exp() * pd.right[sk.tgt[e] as usize] / pd.right[s];
            prob[e] = t;
            total += t;
        }
        for e in sk.row_ptr[s] as usize..sk.row_ptr[s + 1] as usize {
            prob[e] /= total;
        }
    }
    // stationary vector of an RPF chain is l . r, then polished
    let mut pi: Vec<f64> = pd
        .left
        .iter()
        .zip(&pd.right)
        .map(|(l, r)| l * r)
        .collect();
    let total: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= total;
    }
    let mut mm = MarkovMeasure {
        sft: sft.clone(),
        order,
        states: sk.states,
        row_ptr: sk.row_ptr,
        tgt: sk.tgt,
        sym: sk.sym,
        trans: sk.trans,
        prob,
        pi,
    };
    if mm.stationarity_residual() > 1e-12 {
        mm.refresh_stationary();
    }
    Ok((mm, pd.log_rho))
}

fn edge_log_weight(
    table: &crate::pressure::CylinderTable<'_>,
    tm: &TransferMatrix,
    state: usize,
    sigma: u8,
) -> f64 {
    let m = tm.sft().alphabet_size();
    let (e, _) = tm.trans[state * m + sigma as usize];
    debug_assert_ne!(e, u32::MAX);
    table.values[e as usize] + table.constant()
}

/// Affine dimension of the set of Markov rotation vectors: the numerical
/// rank of the centered matrix of bundle averages over random measures
/// plus all cyclically admissible short-cycle averages.
pub fn lphi_affine_dim(
    sft: &Sft,
    bundle: &PotentialBundle,
    samples: usize,
    seed: u64,
) -> Result<usize> {
    let d = bundle.d();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let order = bundle.window().max(1);
    for _ in 0..samples {
        let mu = MarkovMeasure::random(sft, order, &mut rng)?;
        rows.push(mu.bundle_average(bundle)?);
    }
    for len in 1..=3usize {
        sft.for_each_word(len, |w| {
            if !sft.edge(w[len - 1], w[0]) {
                return;
            }
            if let Some(avg) = cycle_average(sft, bundle, w) {
                rows.push(avg);
            }
        });
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0f64; d];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    // Gram matrix of the centered rows; d <= 2 so eigenvalues are direct
    let mut gram = vec![0.0f64; d * d];
    for r in &rows {
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let eigs: Vec<f64> = match d {
        1 => vec![gram[0]],
        2 => {
            let (a, b, c) = (gram[0], gram[1], gram[3]);
            let tr = a + c;
            let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
            vec![0.5 * (tr + disc), (0.5 * (tr - disc)).max(0.0)]
        }
        _ => return Err(Error::DimensionUnsupported { d }),
    };
    let top = eigs.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    // cutoff is relative to the data scale, so identical rows read as rank 0
    let cutoff = 1e-8 * top.max(scale);
    if cutoff == 0.0 {
        return Ok(0);
    }
    Ok(eigs.iter().filter(|&&e| e.max(0.0).sqrt() > cutoff).count())
}

/// log of the spectral radius of the matrix product along the cycle `w`,
/// by certified power iteration on the strictly positive period matrix.
fn cocycle_cycle_rate(cy: &crate::potential::MatrixCocycle, w: &[u8]) -> f64 {
    let q = cy.q();
    let mut prod = vec![0.0f64; q * q];
    for i in 0..q {
        prod[i * q + i] = 1.0;
    }
    let mut log_scale = 0.0;
    let mut tmp = vec![0.0f64; q * q];
    for &sym in w {
        let m = cy.matrix(sym);
        for x in tmp.iter_mut() {
            *x = 0.0;
        }
        for i in 0..q {
            for l in 0..q {
                let a = prod[i * q + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..q {
                    tmp[i * q + j] += a * m[l * q + j];
                }
            }
        }
        let top = tmp.iter().cloned().fold(0.0f64, f64::max);
        log_scale += top.ln();
        for (p, t) in prod.iter_mut().zip(&tmp) {
            *p = t / top;
        }
    }
    let mut v = vec![1.0f64; q];
    let mut u = vec![0.0f64; q];
    let mut rho = 1.0f64;
    for _ in 0..400 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..q {
            let mut acc = 0.0;
            for j in 0..q {
                acc += prod[i * q + j] * v[j];
            }
            u[i] = acc;
            let r = acc / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        rho = 0.5 * (lo + hi);
        let top = u.iter().cloned().fold(0.0f64, f64::max);
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / top;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    log_scale + rho.ln()
}

/// Birkhoff average of the bundle along the periodic orbit of `w`.
pub fn cycle_average(sft: &Sft, bundle: &PotentialBundle, w: &[u8]) -> Option<Vec<f64>> {
    if w.is_empty() || !sft.admissible(w) || !sft.edge(w[w.len() - 1], w[0]) {
        return None;
    }
    let n = w.len();
    let mut out = Vec::with_capacity(bundle.d());
    for comp in bundle.components() {
        match comp {
            ScalarPotential::KStep(p) => {
                let k = p.k();
                let mut ext = Vec::with_capacity(n + k);
                while ext.len() < n + k - 1 {
                    ext.extend_from_slice(w);
                }
                let mut sum = 0.0;
                for j in 0..n {
                    sum += p.value_of(sft, &ext[j..j + k])?;
                }
                out.push(sum / n as f64);
            }
            ScalarPotential::Cocycle(cy) => {
                out.push(cocycle_cycle_rate(cy, w) / n as f64);
            }
        }
    }
    Some(out)
}

/// Dimension of the level set at alpha through the conditional variational
/// principle: the equilibrium state of <z*, Phi - alpha> + tau* Psi attains
/// sup { h / (-Psi_*) : Phi_* = alpha }, so its entropy-to-contraction
/// ratio reproduces tau*(alpha) with a measure as witness.
pub fn conditional_variational(
    spectrum: &Spectrum,
    alpha: &[f64],
) -> Result<(f64, MarkovMeasure)> {
    let lp = spectrum.legendre(alpha)?;
    if lp.boundary {
        return Err(Error::BoundaryAlpha {
            alpha: alpha.to_vec(),
        });
    }
    let coeffs = spectrum.joint_coeffs(&lp.z_star, lp.tau_star);
    let shift = Spectrum::alpha_shift(&lp.z_star, alpha);
    let (mu, _) = equilibrium_from_transfer(spectrum.transfer(), &coeffs, shift)?;
    for (i, comp) in spectrum.potential().components().iter().enumerate() {
        let avg = mu.potential_average(comp)?;
        if (avg - alpha[i]).abs() > 1e-6 {
            return Err(Error::NonConvergence {
                what: "conditional variational witness",
                iterations: 0,
            });
        }
    }
    let value = mu.entropy() / (-mu.potential_average(spectrum.metric().psi())?);
    Ok((value, mu))
}

/// One draw from the stage-J concatenated Moran measure.
#[derive(Debug, Clone)]
pub struct MoranSample {
    pub word: Vec<u8>,
    /// Level target actually used per block, after grid snapping.
    pub targets: Vec<f64>,
    /// Birkhoff average of the first observable over each block.
    pub block_averages: Vec<f64>,
    pub log_mass: f64,
    pub log_diameter: f64,
    /// Empirical local dimension, log-mass over log-diameter.
    pub ratio: f64,
}

/// Samples a prefix of the concatenated measure that realizes the lower
/// bound for localized level sets: block j draws from the equilibrium
/// measure targeting the stage-j grid snap of xi at the current cylinder,
/// conditioned on the suffix state. Best effort: targets that cannot be
/// witnessed fall back to the unconstrained equilibrium.
pub fn moran_sample(
    spectrum: &Spectrum,
    xi: &ScalarPotential,
    schedule: &[usize],
    seed: u64,
    depth: usize,
) -> Result<MoranSample> {
    if spectrum.d() != 1 {
        return Err(Error::DimensionUnsupported { d: spectrum.d() });
    }
    let ScalarPotential::KStep(target) = xi else {
        return Err(Error::InvalidPotential {
            reason: "level targets must be k-step tables".into(),
        });
    };
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidPotential {
            reason: "block schedule must be nonempty and nondecreasing".into(),
        });
    }
    let sft = spectrum.sft();
    let m = sft.alphabet_size();
    let LPhi::Interval { lo, hi, .. } = spectrum.l_phi()? else {
        unreachable!("d = 1 rotation sets are intervals");
    };
    let width = (hi - lo).max(1e-12);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut word: Vec<u8> = Vec::new();
    let mut targets = Vec::with_capacity(schedule.len());
    let mut spans = Vec::with_capacity(schedule.len());
    let mut log_mass = 0.0f64;
    let mut goal = 0usize;
    for (j0, &len) in schedule.iter().enumerate() {
        goal += len;
        let start = word.len();
        let probe = leftmost_window(sft, &word, target.k());
        let raw = target
            .value_of(sft, &probe)
            .unwrap_or(0.5 * (lo + hi));
        let spacing = (0.5f64).powi((j0 + 1 + depth).min(60) as i32);
        let snapped = lo + ((raw - lo) / spacing).round() * spacing;
        let mut margin = spacing.max(1e-3 * width);
        let mut picked = None;
        for _ in 0..12 {
            if 2.0 * margin >= width {
                break;
            }
            let clamped = snapped.clamp(lo + margin, hi - margin);
            if let Ok((_, nu)) = conditional_variational(spectrum, &[clamped]) {
                picked = Some((clamped, nu));
                break;
            }
            margin *= 2.0;
        }
        let (alpha_used, nu) = match picked {
            Some(x) => x,
            None => {
                let tau = spectrum.d_psi()?;
                let coeffs = spectrum.joint_coeffs(&vec![0.0; 1], tau);
                let (nu, _) = equilibrium_from_transfer(spectrum.transfer(), &coeffs, 0.0)?;
                let a = nu.potential_average(spectrum.potential().component(0))?;
                (a, nu)
            }
        };
        targets.push(alpha_used);
        if word.is_empty() {
            let s0 = sample_slice(&nu.pi, &mut rng);
            log_mass += nu.pi[s0].ln();
            word.extend_from_slice(&nu.states.word_at(s0));
        }
        let order = nu.order;
        let packed = pack(&word[word.len() - order..], m);
        let mut state = nu
            .states
            .rank_of(packed)
            .expect("sampled suffix stays admissible");
        while word.len() < goal {
            let row = nu.row_ptr[state] as usize..nu.row_ptr[state + 1] as usize;
            let e = row.start + sample_slice(&nu.prob[row.clone()], &mut rng);
            log_mass += nu.prob[e].ln();
            word.push(nu.sym[e]);
            state = nu.tgt[e] as usize;
        }
        spans.push((start, word.len()));
    }
    let comp = spectrum.potential().component(0);
    let mut block_averages = Vec::with_capacity(spans.len());
    for &(s, e) in &spans {
        block_averages.push(block_average(sft, comp, &word, s, e));
    }
    let log_diameter = spectrum.metric().log_weight(sft, &word)?;
    Ok(MoranSample {
        ratio: log_mass / log_diameter,
        word,
        targets,
        block_averages,
        log_mass,
        log_diameter,
    })
}

/// First k symbols of the leftmost admissible extension of `word`.
fn leftmost_window(sft: &Sft, word: &[u8], k: usize) -> Vec<u8> {
    let mut w: Vec<u8> = word.iter().cloned().take(k).collect();
    if w.is_empty() {
        w.push(0);
    }
    while w.len() < k {
        let succ = sft.successors(*w.last().unwrap());
        w.push(succ.trailing_zeros() as u8);
    }
    w
}

/// Birkhoff average of one component over the windows starting in [s, e).
fn block_average(sft: &Sft, comp: &ScalarPotential, word: &[u8], s: usize, e: usize) -> f64 {
    match comp {
        ScalarPotential::KStep(p) => {
            let k = p.k();
            let last = if word.len() + 1 > k {
                e.min(word.len() + 1 - k)
            } else {
                s
            };
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in s..last {
                if let Some(v) = p.value_of(sft, &word[i..i + k]) {
                    sum += v;
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        }
        ScalarPotential::Cocycle(cy) => {
            if e > s {
                cy.log_norm(&word[s..e]) / (e - s) as f64
            } else {
                f64::NAN
            }
        }
    }
}

/// Inverse-CDF draw from a probability slice.
fn sample_slice(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::KStepPotential;
    use crate::pressure::pressure_exact;

    const LOG_GOLDEN: f64 = 0.481_211_825_059_603_45;

    #[test]
    fn parry_measure_of_full_shift() {
        let s = Sft::full(2).unwrap();
        let mu = MarkovMeasure::parry(&s).unwrap();
        assert!((mu.entropy() - 2.0f64.ln()).abs() < 1e-12);
        assert!(mu.row_sum_residual() < 1e-12);
        assert!(mu.stationarity_residual() < 1e-10);
    }

    #[test]
    fn bernoulli_entropy_closed_form() {
        let s = Sft::full(2).unwrap();
        let mu = MarkovMeasure::from_rows(&s, 1, |_, sym| if sym == 0 { 0.25 } else { 0.75 })
            .unwrap();
        let h = -(0.25f64.ln() * 0.25 + 0.75f64.ln() * 0.75);
        assert!((mu.entropy() - h).abs() < 1e-12);
        assert!((h - 0.562_335_144_618_808_3).abs() < 1e-15);
    }

    #[test]
    fn deterministic_cycle_has_zero_entropy() {
        let s = Sft::golden_mean();
        let mu = MarkovMeasure::from_rows(&s, 1, |state, sym| {
            // force the two-cycle 1 -> 2 -> 1
            if state[0] == 0 && sym == 1 {
                1.0
            } else if state[0] == 1 && sym == 0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(mu.entropy().abs() < 1e-14);
        assert!(mu.stationarity_residual() < 1e-10);
        assert!((mu.stationary_vec()[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn digit_average_under_bernoulli() {
        let s = Sft::full(2).unwrap();
        let digit = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.0, 1.0]).unwrap(),
        );
        for p in [0.1f64, 0.5, 0.85] {
            let mu = MarkovMeasure::from_rows(&s, 1, |_, sym| if sym == 1 { p } else { 1.0 - p })
                .unwrap();
            assert!((mu.potential_average(&digit).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_potential_average_is_constant() {
        let s = Sft::golden_mean();
        let psi = ScalarPotential::KStep(KStepPotential::constant(&s, -(2.0f64.ln())));
        let mut rng = ChaCha20Rng::seed_from_u64(DEFAULT_SEED);
        for _ in 0..5 {
            let mu = MarkovMeasure::random(&s, 1, &mut rng).unwrap();
            assert!((mu.potential_average(&psi).unwrap() + 2.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_count_average_matches_long_simulation() {
        let s = Sft::golden_mean();
        // 2-step indicator of the pair "12"
        let pair = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| if w == [0, 1] { 1.0 } else { 0.0 }).unwrap(),
        );
        let mu = MarkovMeasure::parry(&s).unwrap();
        let exact = mu.potential_average(&pair).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(DEFAULT_SEED);
        let path = mu.sample_path(1_000_000, None, &mut rng);
        let hits = path.windows(2).filter(|p| p == &[0, 1]).count();
        let emp = hits as f64 / (path.len() - 1) as f64;
        assert!((exact - emp).abs() < 1e-2, "exact {exact} vs simulated {emp}");
    }

    #[test]
    fn order_mismatch_is_reported() {
        let s = Sft::full(2).unwrap();
        let mu = MarkovMeasure::parry(&s).unwrap();
        let three = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 3, |w| w[0] as f64 + w[2] as f64).unwrap(),
        );
        assert!(matches!(
            mu.potential_average(&three),
            Err(Error::OrderMismatch { .. })
        ));
    }

    #[test]
    fn equilibrium_of_zero_is_parry() {
        let s = Sft::golden_mean();
        let (mu, logp) = equilibrium_state(
            &s,
            &ScalarPotential::KStep(KStepPotential::constant(&s, 0.0)),
        )
        .unwrap();
        assert!((logp - LOG_GOLDEN).abs() < 1e-11);
        assert!((mu.entropy() - LOG_GOLDEN).abs() < 1e-9);
        // golden transitions: from 1 stay with probability 1/phi
        let phi = 1.618_033_988_749_895f64;
        let e = mu.trans[0];
        assert!((mu.prob[e as usize] - 1.0 / phi).abs() < 1e-9);
    }

    #[test]
    fn log_probability_potential_gives_bernoulli() {
        let s = Sft::full(3).unwrap();
        let p = [0.2f64, 0.5, 0.3];
        let pot = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[p[0].ln(), p[1].ln(), p[2].ln()]).unwrap(),
        );
        let (mu, logp) = equilibrium_state(&s, &pot).unwrap();
        assert!(logp.abs() < 1e-10, "normalized potential has zero pressure");
        for s_idx in 0..3 {
            for e in mu.row_ptr[s_idx] as usize..mu.row_ptr[s_idx + 1] as usize {
                let sym = mu.sym[e] as usize;
                assert!((mu.prob[e] - p[sym]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equilibrium_satisfies_variational_equality() {
        let s = Sft::golden_mean();
        let pot = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| 0.3 * w[0] as f64 - 1.2 * w[1] as f64).unwrap(),
        );
        let (mu, logp) = equilibrium_state(&s, &pot).unwrap();
        let lhs = mu.entropy() + mu.potential_average(&pot).unwrap();
        assert!((lhs - logp).abs() < 1e-9, "h + avg = {lhs}, P = {logp}");
    }

    #[test]
    fn random_measures_respect_variational_inequality() {
        let s = Sft::golden_mean();
        let pot = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.4, -0.9]).unwrap(),
        );
        let p = pressure_exact(&s, &pot, &SpectralOptions::default())
            .unwrap()
            .log_rho;
        let mut rng = ChaCha20Rng::seed_from_u64(DEFAULT_SEED);
        for i in 0..100 {
            let order = 1 + (i % 3);
            let mu = MarkovMeasure::random(&s, order, &mut rng).unwrap();
            assert!(mu.row_sum_residual() < 1e-12);
            assert!(mu.stationarity_residual() < 1e-10);
            let lhs = mu.entropy() + mu.potential_average(&pot).unwrap();
            assert!(lhs <= p + 1e-9, "measure {i}: {lhs} > {p}");
        }
    }

    #[test]
    fn gibbs_ratios_stay_bounded() {
        let s = Sft::golden_mean();
        let pot = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-0.2, -0.9]).unwrap(),
        );
        let (mu, logp) = equilibrium_state(&s, &pot).unwrap();
        let mut global_lo = f64::INFINITY;
        let mut global_hi = f64::NEG_INFINITY;
        for n in 1..=12usize {
            s.for_each_word(n, |w| {
                let lm = mu.cylinder_log_mass(w);
                let (_, sup) = pot.birkhoff_range(&s, w).unwrap();
                let ratio = lm - (sup - n as f64 * logp);
                global_lo = global_lo.min(ratio);
                global_hi = global_hi.max(ratio);
            });
        }
        // two-sided Gibbs bounds, uniform over the cylinder length
        assert!(global_hi - global_lo < 3.0);
        assert!(global_lo.is_finite());
    }

    #[test]
    fn cylinder_masses_sum_to_one() {
        let s = Sft::golden_mean();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mu = MarkovMeasure::random(&s, 2, &mut rng).unwrap();
        for n in 1..=8usize {
            let mut total = 0.0;
            s.for_each_word(n, |w| total += mu.cylinder_log_mass(w).exp());
            assert!((total - 1.0).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn short_cylinder_marginals_are_consistent() {
        let s = Sft::golden_mean();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mu = MarkovMeasure::random(&s, 3, &mut rng).unwrap();
        // mass of [w] equals the sum of the masses of its extensions
        for n in 0..3usize {
            s.for_each_word(n, |w| {
                let direct = mu.cylinder_log_mass(w).exp();
                let mut glued = 0.0;
                s.for_each_word_with_prefix(w, n + 1, |x| {
                    glued += mu.cylinder_log_mass(x).exp();
                });
                assert!((direct - glued).abs() < 1e-12);
            });
        }
    }

    #[test]
    fn affine_dim_of_complementary_digits_is_one() {
        let s = Sft::full(2).unwrap();
        let digit = KStepPotential::from_symbol_values(&s, &[0.0, 1.0]).unwrap();
        let co = KStepPotential::from_symbol_values(&s, &[1.0, 0.0]).unwrap();
        let bundle = PotentialBundle::new(vec![
            ScalarPotential::KStep(digit),
            ScalarPotential::KStep(co),
        ])
        .unwrap();
        assert_eq!(lphi_affine_dim(&s, &bundle, 40, DEFAULT_SEED).unwrap(), 1);
    }

    #[test]
    fn affine_dim_of_product_digits_is_two() {
        // full 4-shift coding pairs (a, b) of bits; the two coordinate
        // digits vary independently
        let s = Sft::full(4).unwrap();
        let d1 = KStepPotential::from_symbol_values(&s, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        let d2 = KStepPotential::from_symbol_values(&s, &[0.0, 1.0, 0.0, 1.0]).unwrap();
        let bundle = PotentialBundle::new(vec![
            ScalarPotential::KStep(d1),
            ScalarPotential::KStep(d2),
        ])
        .unwrap();
        assert_eq!(lphi_affine_dim(&s, &bundle, 40, DEFAULT_SEED).unwrap(), 2);
    }

    #[test]
    fn affine_dim_of_constant_is_zero() {
        let s = Sft::full(2).unwrap();
        let bundle = PotentialBundle::scalar(ScalarPotential::KStep(KStepPotential::constant(
            &s, 0.37,
        )));
        assert_eq!(lphi_affine_dim(&s, &bundle, 25, DEFAULT_SEED).unwrap(), 0);
    }

    #[test]
    fn cycle_average_of_cocycle_uses_growth_rate() {
        let s = Sft::full(2).unwrap();
        let cy = crate::potential::MatrixCocycle::new(vec![
            vec![2.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, 3.0],
        ])
        .unwrap();
        let bundle = PotentialBundle::scalar(ScalarPotential::Cocycle(cy.clone()));
        // fixed point of symbol 0: growth is the spectral radius of M_0
        let avg = cycle_average(&s, &bundle, &[0]).unwrap()[0];
        let rho = 0.5 * (3.0 + 5.0f64.sqrt()); // eigenvalue of [[2,1],[1,1]]
        assert!((avg - rho.ln()).abs() < 1e-6);
    }

    fn digit_spectrum() -> Spectrum {
        let s = Sft::full(2).unwrap();
        let digit = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[0.0, 1.0]).unwrap(),
        );
        let psi = ScalarPotential::KStep(KStepPotential::constant(&s, -(2.0f64.ln())));
        Spectrum::new(
            &s,
            PotentialBundle::scalar(digit),
            crate::metric::WeakGibbsMetric::new(psi).unwrap(),
        )
        .unwrap()
    }

    fn binary_entropy(a: f64) -> f64 {
        -(a * a.ln() + (1.0 - a) * (1.0 - a).ln())
    }

    #[test]
    fn conditional_witness_at_the_peak_is_the_parry_measure() {
        let sp = digit_spectrum();
        let (value, mu) = conditional_variational(&sp, &[0.5]).unwrap();
        assert!((value - 1.0).abs() < 1e-9);
        for &p in &mu.prob {
            assert!((p - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn conditional_witness_at_quarter_is_bernoulli() {
        let sp = digit_spectrum();
        let (value, mu) = conditional_variational(&sp, &[0.25]).unwrap();
        assert!((value - binary_entropy(0.25) / 2.0f64.ln()).abs() < 1e-8);
        for e in 0..mu.prob.len() {
            let expect = if mu.sym[e] == 1 { 0.25 } else { 0.75 };
            assert!((mu.prob[e] - expect).abs() < 1e-7);
        }
        let avg = mu
            .potential_average(sp.potential().component(0))
            .unwrap();
        assert!((avg - 0.25).abs() < 1e-7);
    }

    #[test]
    fn conditional_witness_rejects_boundary_and_exterior_levels() {
        let sp = digit_spectrum();
        assert!(matches!(
            conditional_variational(&sp, &[0.0]),
            Err(Error::BoundaryAlpha { .. })
        ));
        assert!(matches!(
            conditional_variational(&sp, &[1.5]),
            Err(Error::NotInLPhi { .. })
        ));
    }

    #[test]
    fn moran_sample_diameter_is_exact_for_constant_gauges() {
        let sp = digit_spectrum();
        let xi = ScalarPotential::KStep(KStepPotential::constant(sp.sft(), 0.5));
        let sample = moran_sample(&sp, &xi, &[32, 64], 7, 4).unwrap();
        assert_eq!(sample.word.len(), 96);
        let expect = -(96.0) * 2.0f64.ln();
        assert!((sample.log_diameter - expect).abs() < 1e-9);
        assert!(sample.log_mass <= 0.0);
        assert!(
            (sample.ratio - sample.log_mass / sample.log_diameter).abs() < 1e-15
        );
        assert_eq!(sample.targets.len(), 2);
        assert_eq!(sample.block_averages.len(), 2);
    }

    #[test]
    fn moran_samples_concentrate_on_the_level_target() {
        let sp = digit_spectrum();
        let xi = ScalarPotential::KStep(KStepPotential::constant(sp.sft(), 0.5));
        let schedule = [256, 512, 1024];
        let mut good = 0;
        for seed in 0..100 {
            let sample = moran_sample(&sp, &xi, &schedule, seed, 4).unwrap();
            if (sample.block_averages[2] - 0.5).abs() < 0.05 {
                good += 1;
            }
        }
        assert!(good >= 95, "only {good} of 100 samples near 1/2");
    }

    #[test]
    fn moran_sample_is_reproducible_per_seed() {
        let sp = digit_spectrum();
        let xi = ScalarPotential::KStep(KStepPotential::constant(sp.sft(), 0.25));
        let a = moran_sample(&sp, &xi, &[64, 128], 42, 4).unwrap();
        let b = moran_sample(&sp, &xi, &[64, 128], 42, 4).unwrap();
        assert_eq!(a.word, b.word);
        assert_eq!(a.log_mass.to_bits(), b.log_mass.to_bits());
        let c = moran_sample(&sp, &xi, &[64, 128], 43, 4).unwrap();
        assert_ne!(a.word, c.word);
    }
}
