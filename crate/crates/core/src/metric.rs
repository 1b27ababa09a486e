//! Weak Gibbs ultrametrics: ball families, covering constants and the
//! metric dimension.
//!
//! The metric is d(x, y) = Psi[x /\ y], the sup-weight of the longest
//! common prefix, for a gauge potential psi with sup psi < 0. Ball
//! families at radius e^{-n} are the frontier of a word-tree walk that
//! descends while the sup-weight still exceeds the radius; monotonicity
//! of sup-weights under extension makes that pruning exact.

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::optim::ls_slope;
use crate::potential::{PotentialBundle, ScalarPotential};
use crate::pressure::{CylinderTable, SpectralOptions, TransferMatrix};
use crate::sft::{pack, Sft};

/// Default cap on the number of words in one ball family.
pub const DEFAULT_BALL_CAP: u64 = 10_000_000;

/// The ultrametric induced by a negative gauge potential.
#[derive(Debug, Clone)]
pub struct WeakGibbsMetric {
    psi: ScalarPotential,
}

impl WeakGibbsMetric {
    /// Validates sup psi < 0, which both makes the weights contract and
    /// guarantees the ball walk terminates.
    pub fn new(psi: ScalarPotential) -> Result<Self> {
        let top = psi.phi_max();
        if !(top < 0.0) {
            return Err(Error::InvalidMetric {
                reason: format!("gauge potential needs max phi_1 + C < 0, got {top}"),
            });
        }
        Ok(WeakGibbsMetric { psi })
    }

    pub fn psi(&self) -> &ScalarPotential {
        &self.psi
    }

    pub fn psi_max(&self) -> f64 {
        self.psi.phi_max()
    }

    pub fn psi_min(&self) -> f64 {
        self.psi.phi_min()
    }

    /// Lower covering constant: every radius-e^{-n} ball word has length
    /// at least c1 * n.
    pub fn c1(&self) -> f64 {
        1.0 / self.psi_min().abs()
    }

    /// Upper covering constant: ball word lengths are at most c2 * n.
    pub fn c2(&self) -> f64 {
        1.0 + 1.0 / self.psi_max().abs()
    }

    /// log of the cylinder diameter, log Psi[w].
    pub fn log_weight(&self, sft: &Sft, word: &[u8]) -> Result<f64> {
        if word.is_empty() {
            return Ok(0.0);
        }
        self.psi.sup_weight_log(sft, word)
    }

    /// Distance between the points coded by two words; equal words give 0,
    /// otherwise the weight of the longest common prefix.
    pub fn distance(&self, sft: &Sft, x: &[u8], y: &[u8]) -> Result<f64> {
        if x == y {
            return Ok(0.0);
        }
        let j = x.iter().zip(y).take_while(|(a, b)| a == b).count();
        Ok(self.log_weight(sft, &x[..j])?.exp())
    }

    /// The family of cylinder balls of radius e^{-n}, lexicographic.
    pub fn ball_family(&self, sft: &Sft, n: usize) -> Result<BallFamily> {
        self.ball_family_with(sft, n, Exec::default(), DEFAULT_BALL_CAP)
    }

    pub fn ball_family_with(
        &self,
        sft: &Sft,
        n: usize,
        exec: Exec,
        cap: u64,
    ) -> Result<BallFamily> {
        let bundle = PotentialBundle::scalar(self.psi.clone());
        let tm = TransferMatrix::new(sft, &bundle)?;
        let table = tm.cylinder_table(&[1.0], 0.0)?;
        let tables = [table];
        let scan = BallScan {
            tables: &tables,
            gauge: 0,
            n,
            cap,
        };
        let (parts, count) = scan.run(
            exec,
            || (Vec::<u8>::new(), Vec::<u32>::new(), 0u32),
            |acc, word, _| {
                acc.0.extend_from_slice(word);
                acc.2 += word.len() as u32;
                acc.1.push(acc.2);
            },
            |mut a, b| {
                a.0.extend_from_slice(&b.0);
                let base = a.2;
                a.1.extend(b.1.iter().map(|o| o + base));
                a.2 += b.2;
                a
            },
        )?;
        debug_assert_eq!(parts.1.len() as u64, count);
        Ok(BallFamily {
            n,
            data: parts.0,
            offsets: parts.1,
        })
    }

    /// D(psi), either as the root of lambda -> P(lambda psi) or as the
    /// least-squares growth rate of the ball counts up to n_max.
    pub fn dimension(
        &self,
        sft: &Sft,
        method: DimensionMethod,
        n_max: usize,
    ) -> Result<DimensionEstimate> {
        match method {
            DimensionMethod::Root => self.dimension_by_root(sft),
            DimensionMethod::Count => self.dimension_by_count(sft, n_max),
        }
    }

    fn dimension_by_root(&self, sft: &Sft) -> Result<DimensionEstimate> {
        if matches!(self.psi, ScalarPotential::Cocycle(_)) {
            return Err(Error::InvalidMetric {
                reason: "root method needs a k-step gauge; use the count method \
                         or a holder_approx of the cocycle"
                    .into(),
            });
        }
        let bundle = PotentialBundle::scalar(self.psi.clone());
        let tm = TransferMatrix::new(sft, &bundle)?;
        let opts = SpectralOptions::default();
        let mut warm: Vec<f64> = Vec::new();
        let h = tm
            .log_spectral_radius(&[0.0], 0.0, &opts, Some(&mut warm))?
            .log_rho;
        if h <= 0.0 {
            return Ok(DimensionEstimate {
                value: 0.0,
                spread: 0.0,
            });
        }
        // pressure in lambda has slope between psi_min and psi_max, both
        // negative, so the root is bracketed by h over their magnitudes
        let pad = 1e-9;
        let lo = h / self.psi_min().abs() - pad;
        let hi = h / self.psi_max().abs() + pad;
        let tol = 1e-12;
        let root = crate::optim::bisect_root(
            |lambda| {
                tm.log_spectral_radius(&[lambda], 0.0, &opts, Some(&mut warm))
                    .map(|d| d.log_rho)
                    .unwrap_or(f64::NAN)
            },
            lo.max(0.0),
            hi,
            tol,
            200,
        )?;
        Ok(DimensionEstimate {
            value: root,
            spread: tol + opts.tol / self.psi_max().abs(),
        })
    }

    fn dimension_by_count(&self, sft: &Sft, n_max: usize) -> Result<DimensionEstimate> {
        if n_max < 2 {
            return Err(Error::NonConvergence {
                what: "ball-count dimension needs n_max >= 2",
                iterations: n_max,
            });
        }
        let bundle = PotentialBundle::scalar(self.psi.clone());
        let tm = TransferMatrix::new(sft, &bundle)?;
        let table = tm.cylinder_table(&[1.0], 0.0)?;
        let tables = [table];
        let mut xs = Vec::with_capacity(n_max);
        let mut ys = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let scan = BallScan {
                tables: &tables,
                gauge: 0,
                n,
                cap: DEFAULT_BALL_CAP,
            };
            let (_, count) = scan.run(Exec::default(), || (), |_, _, _| (), |a, _| a)?;
            xs.push(n as f64);
            ys.push((count as f64).ln());
        }
        let slope = ls_slope(&xs, &ys);
        let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
        let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
        let intercept = mean_y - slope * mean_x;
        let resid = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - (intercept + slope * x)).abs())
            .fold(0.0f64, f64::max);
        Ok(DimensionEstimate {
            value: slope,
            spread: 2.0 * resid / (xs[xs.len() - 1] - xs[0]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMethod {
    Root,
    Count,
}

/// A dimension value with a reported uncertainty scale.
#[derive(Debug, Clone, Copy)]
pub struct DimensionEstimate {
    pub value: f64,
    pub spread: f64,
}

/// Prefix-free cover of the shift space by cylinder balls of one radius.
#[derive(Debug, Clone)]
pub struct BallFamily {
    n: usize,
    data: Vec<u8>,
    offsets: Vec<u32>,
}

impl BallFamily {
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn word(&self, i: usize) -> &[u8] {
        let end = self.offsets[i] as usize;
        let start = if i == 0 {
            0
        } else {
            self.offsets[i - 1] as usize
        };
        &self.data[start..end]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        (0..self.len()).map(move |i| self.word(i))
    }

    pub fn min_word_len(&self) -> usize {
        self.iter().map(|w| w.len()).min().unwrap_or(0)
    }

    pub fn max_word_len(&self) -> usize {
        self.iter().map(|w| w.len()).max().unwrap_or(0)
    }
}

/// One ball-walk job: a gauge table to prune with and companion tables
/// whose exact ranges are reported at every emitted ball.
pub(crate) struct BallScan<'a, 't> {
    pub tables: &'a [CylinderTable<'t>],
    pub gauge: usize,
    pub n: usize,
    pub cap: u64,
}

enum Event {
    Ball(Vec<u8>),
    Root(Vec<u8>),
}

impl BallScan<'_, '_> {
    /// Walks the family once. `leaf` sees every ball word together with the
    /// exact per-table range of the merged Birkhoff sum over that cylinder.
    /// Subtrees below the de Bruijn order fan out through `exec`; results
    /// merge in lexicographic order, so the outcome is scheduling-free.
    pub fn run<A, Init, Leaf, Merge>(
        &self,
        exec: Exec,
        init: Init,
        leaf: Leaf,
        merge: Merge,
    ) -> Result<(A, u64)>
    where
        A: Send,
        Init: Fn() -> A + Sync + Send,
        Leaf: Fn(&mut A, &[u8], &[(f64, f64)]) + Sync + Send,
        Merge: Fn(A, A) -> A,
    {
        let tm = self.tables[self.gauge].matrix();
        for t in self.tables {
            assert!(
                std::ptr::eq(t.matrix(), tm),
                "all scan tables must share one transfer matrix"
            );
        }
        if self.n == 0 {
            // the whole space is the only radius-1 ball
            let mut acc = init();
            let ranges = vec![(0.0, 0.0); self.tables.len()];
            leaf(&mut acc, &[], &ranges);
            return Ok((acc, 1));
        }
        let mut events = Vec::new();
        let mut word = Vec::new();
        for sym in 0..tm.sft().alphabet_size() as u8 {
            word.push(sym);
            self.collect_events(tm, &mut word, &mut events)?;
            word.pop();
        }
        let results = exec::map_items(exec, &events, |ev| -> Result<(A, u64)> {
            match ev {
                Event::Ball(w) => {
                    let mut acc = init();
                    let mut ranges = Vec::with_capacity(self.tables.len());
                    for t in self.tables {
                        ranges.push(t.log_range(w)?);
                    }
                    leaf(&mut acc, w, &ranges);
                    Ok((acc, 1))
                }
                Event::Root(w) => {
                    let mut walker = SubtreeWalker::new(tm, self.tables, self.gauge, self.n, self.cap);
                    let mut acc = init();
                    let count = walker.walk_from(w, &mut acc, &leaf)?;
                    Ok((acc, count))
                }
            }
        });
        let mut acc = init();
        let mut count = 0u64;
        for r in results {
            let (a, c) = r?;
            count += c;
            if count > self.cap {
                return Err(Error::ResolutionTooFine {
                    n: self.n,
                    count,
                    cap: self.cap,
                });
            }
            acc = merge(acc, a);
        }
        Ok((acc, count))
    }

    /// Sequential expansion above the de Bruijn order: short words that are
    /// already balls become leaves, surviving order-length words become
    /// independent subtree roots.
    fn collect_events(
        &self,
        tm: &TransferMatrix,
        word: &mut Vec<u8>,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        if word.len() == tm.state_order() {
            events.push(Event::Root(word.clone()));
            return Ok(());
        }
        let sup = self.tables[self.gauge].log_sup(word)?;
        if sup <= -(self.n as f64) {
            events.push(Event::Ball(word.clone()));
            return Ok(());
        }
        let mut mask = tm.sft().successors(*word.last().expect("nonempty"));
        while mask != 0 {
            let sym = mask.trailing_zeros() as u8;
            mask &= mask - 1;
            word.push(sym);
            self.collect_events(tm, word, events)?;
            word.pop();
        }
        Ok(())
    }
}

/// Running data for one cocycle term of one table: a rescaled row vector
/// 1^T M_w per depth, giving the exact entry-sum norm incrementally.
struct CocTrack {
    table: usize,
    coeff: f64,
    q: usize,
    sym_mats: Vec<Vec<f64>>,
    x: Vec<f64>,
    logoff: Vec<f64>,
    lognorm: Vec<f64>,
}

impl CocTrack {
    fn push(&mut self, depth: usize, sym: u8) {
        let q = self.q;
        let mat = &self.sym_mats[sym as usize];
        let (prev, cur) = self.x.split_at_mut((depth + 1) * q);
        let prev = &prev[depth * q..];
        let cur = &mut cur[..q];
        for c in cur.iter_mut() {
            *c = 0.0;
        }
        for (l, &xl) in prev.iter().enumerate() {
            if xl == 0.0 {
                continue;
            }
            for j in 0..q {
                cur[j] += xl * mat[l * q + j];
            }
        }
        let top = cur.iter().cloned().fold(0.0f64, f64::max);
        for c in cur.iter_mut() {
            *c /= top;
        }
        self.logoff[depth + 1] = self.logoff[depth] + top.ln();
        let sum: f64 = cur.iter().sum();
        self.lognorm[depth + 1] = self.logoff[depth + 1] + sum.ln();
    }
}

/// Depth-indexed scratch for one subtree walk; no per-node allocation.
struct SubtreeWalker<'a, 't> {
    tm: &'a TransferMatrix,
    tables: &'a [CylinderTable<'t>],
    gauge: usize,
    threshold: f64,
    n: usize,
    cap: u64,
    count: u64,
    word: Vec<u8>,
    states: Vec<usize>,
    dets: Vec<f64>,
    coc: Vec<CocTrack>,
    ranges: Vec<(f64, f64)>,
}

impl<'a, 't> SubtreeWalker<'a, 't> {
    fn new(
        tm: &'a TransferMatrix,
        tables: &'a [CylinderTable<'t>],
        gauge: usize,
        n: usize,
        cap: u64,
    ) -> Self {
        let mut coc = Vec::new();
        for (ti, t) in tables.iter().enumerate() {
            for (c, cy) in t.cocycles() {
                let q = cy.q();
                let sym_mats = (0..tm.sft().alphabet_size())
                    .map(|s| cy.matrix(s as u8).to_vec())
                    .collect();
                coc.push(CocTrack {
                    table: ti,
                    coeff: *c,
                    q,
                    sym_mats,
                    x: Vec::new(),
                    logoff: Vec::new(),
                    lognorm: Vec::new(),
                });
            }
        }
        SubtreeWalker {
            tm,
            tables,
            gauge,
            threshold: -(n as f64),
            n,
            cap,
            count: 0,
            word: Vec::new(),
            states: Vec::new(),
            dets: Vec::new(),
            coc,
            ranges: vec![(0.0, 0.0); tables.len()],
        }
    }

    fn walk_from<A, L>(&mut self, root: &[u8], acc: &mut A, leaf: &L) -> Result<u64>
    where
        L: Fn(&mut A, &[u8], &[(f64, f64)]),
    {
        let kappa = self.tm.state_order();
        debug_assert_eq!(root.len(), kappa);
        let m = self.tm.sft().alphabet_size();
        let nt = self.tables.len();
        self.word.clear();
        self.word.extend_from_slice(root);
        let state = self
            .tm
            .states
            .rank_of(pack(root, m))
            .expect("root is admissible");
        self.reserve(0);
        self.states[0] = state;
        for (t, table) in self.tables.iter().enumerate() {
            self.dets[t] = table.head[state];
        }
        for track in &mut self.coc {
            // seed the row vector with 1^T M_{root}
            let q = track.q;
            track.x[..q].fill(1.0);
            track.logoff[0] = 0.0;
            for j in 0..kappa {
                let sym = root[j];
                let mat = track.sym_mats[sym as usize].clone();
                let xs = &mut track.x[..q];
                let mut next = vec![0.0f64; q];
                for (l, &xl) in xs.iter().enumerate() {
                    for jj in 0..q {
                        next[jj] += xl * mat[l * q + jj];
                    }
                }
                let top = next.iter().cloned().fold(0.0f64, f64::max);
                for (slot, v) in xs.iter_mut().zip(&next) {
                    *slot = v / top;
                }
                track.logoff[0] += top.ln();
            }
            let sum: f64 = track.x[..q].iter().sum();
            track.lognorm[0] = track.logoff[0] + sum.ln();
        }
        let _ = nt;
        self.walk(0, acc, leaf)?;
        Ok(self.count)
    }

    fn reserve(&mut self, depth: usize) {
        let need = depth + 2;
        if self.states.len() < need {
            self.states.resize(need, 0);
            self.dets.resize(need * self.tables.len(), 0.0);
            for track in &mut self.coc {
                track.x.resize(need * track.q, 0.0);
                track.logoff.resize(need, 0.0);
                track.lognorm.resize(need, 0.0);
            }
        }
    }

    fn table_range(&self, t: usize, depth: usize) -> (f64, f64) {
        let table = &self.tables[t];
        let state = self.states[depth];
        let det = self.dets[depth * self.tables.len() + t];
        let len = self.word.len() as f64;
        let mut lo = det + table.tail_lo[state] + len * table.constant();
        let mut hi = det + table.tail_hi[state] + len * table.constant();
        for track in &self.coc {
            if track.table == t {
                let v = track.coeff * track.lognorm[depth];
                lo += v;
                hi += v;
            }
        }
        (lo, hi)
    }

    fn walk<A, L>(&mut self, depth: usize, acc: &mut A, leaf: &L) -> Result<()>
    where
        L: Fn(&mut A, &[u8], &[(f64, f64)]),
    {
        let (_, sup) = self.table_range(self.gauge, depth);
        if sup <= self.threshold {
            self.count += 1;
            if self.count > self.cap {
                return Err(Error::ResolutionTooFine {
                    n: self.n,
                    count: self.count,
                    cap: self.cap,
                });
            }
            for t in 0..self.tables.len() {
                self.ranges[t] = self.table_range(t, depth);
            }
            leaf(acc, &self.word, &self.ranges);
            return Ok(());
        }
        self.reserve(depth + 1);
        let m = self.tm.sft().alphabet_size();
        let state = self.states[depth];
        let nt = self.tables.len();
        let mut mask = self.tm.sft().successors(*self.word.last().expect("nonempty"));
        while mask != 0 {
            let sym = mask.trailing_zeros() as u8;
            mask &= mask - 1;
            let (e, nxt) = self.tm.trans[state * m + sym as usize];
            debug_assert_ne!(e, u32::MAX);
            self.states[depth + 1] = nxt as usize;
            for (t, table) in self.tables.iter().enumerate() {
                self.dets[(depth + 1) * nt + t] =
                    self.dets[depth * nt + t] + table.values[e as usize];
            }
            for track in &mut self.coc {
                track.push(depth, sym);
            }
            self.word.push(sym);
            self.walk(depth + 1, acc, leaf)?;
            self.word.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MarkovMeasure;
    use crate::potential::{KStepPotential, MatrixCocycle};

    fn constant_metric(sft: &Sft, c: f64) -> WeakGibbsMetric {
        WeakGibbsMetric::new(ScalarPotential::KStep(KStepPotential::constant(sft, c))).unwrap()
    }

    #[test]
    fn positive_gauge_is_rejected() {
        let s = Sft::full(2).unwrap();
        let bad = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, 0.5]).unwrap(),
        );
        assert!(matches!(
            WeakGibbsMetric::new(bad),
            Err(Error::InvalidMetric { .. })
        ));
    }

    #[test]
    fn covering_constants_are_ordered() {
        let s = Sft::full(2).unwrap();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, -2.0]).unwrap(),
        ))
        .unwrap();
        assert!(g.c1() <= g.c2());
        assert!((g.c1() - 0.5).abs() < 1e-15);
        assert!((g.c2() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_gauge_family_is_all_words_of_length_n() {
        let s = Sft::full(2).unwrap();
        let g = constant_metric(&s, -1.0);
        let fam = g.ball_family(&s, 3).unwrap();
        assert_eq!(fam.len(), 8);
        assert!(fam.iter().all(|w| w.len() == 3));
    }

    #[test]
    fn log3_gauge_at_n1_gives_three_singletons() {
        let s = Sft::full(3).unwrap();
        let g = constant_metric(&s, -(3.0f64.ln()));
        let fam = g.ball_family(&s, 1).unwrap();
        assert_eq!(fam.len(), 3);
        assert!(fam.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn resolution_zero_is_the_whole_space() {
        let s = Sft::golden_mean();
        let g = constant_metric(&s, -1.0);
        let fam = g.ball_family(&s, 0).unwrap();
        assert_eq!(fam.len(), 1);
        assert_eq!(fam.word(0), &[] as &[u8]);
    }

    #[test]
    fn one_step_gauge_frontier_matches_hand_enumeration() {
        let s = Sft::full(2).unwrap();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, -2.0]).unwrap(),
        ))
        .unwrap();
        let fam = g.ball_family(&s, 2).unwrap();
        let words: Vec<&[u8]> = fam.iter().collect();
        assert_eq!(words, vec![&[0u8, 0][..], &[0, 1], &[1]]);
        // each member is at the radius, its parent is not
        for w in fam.iter() {
            assert!(g.log_weight(&s, w).unwrap() <= -2.0);
            assert!(g.log_weight(&s, &w[..w.len() - 1]).unwrap() > -2.0);
        }
    }

    #[test]
    fn families_are_prefix_free_and_cover() {
        let s = Sft::golden_mean();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| -0.7 - 0.9 * w[1] as f64).unwrap(),
        ))
        .unwrap();
        let parry = MarkovMeasure::parry(&s).unwrap();
        for n in [0usize, 1, 2, 5, 9] {
            let fam = g.ball_family(&s, n).unwrap();
            // lexicographic emission makes prefix relations adjacent
            for i in 1..fam.len() {
                let (a, b) = (fam.word(i - 1), fam.word(i));
                assert!(!b.starts_with(a) && !a.starts_with(b));
            }
            let total: f64 = fam.iter().map(|w| parry.cylinder_log_mass(w).exp()).sum();
            assert!((total - 1.0).abs() < 1e-10, "n = {n}: cover mass {total}");
        }
    }

    #[test]
    fn families_refine_under_resolution() {
        let s = Sft::golden_mean();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-0.6, -1.4]).unwrap(),
        ))
        .unwrap();
        for n in 0..8usize {
            let coarse = g.ball_family(&s, n).unwrap();
            let fine = g.ball_family(&s, n + 1).unwrap();
            for w in fine.iter() {
                let parents = coarse
                    .iter()
                    .filter(|p| w.starts_with(p))
                    .count();
                assert_eq!(parents, 1, "w = {:?} at n = {n}", w);
            }
        }
    }

    #[test]
    fn member_lengths_obey_covering_constants() {
        let s = Sft::full(2).unwrap();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, -2.0]).unwrap(),
        ))
        .unwrap();
        for n in 1..=14usize {
            let fam = g.ball_family(&s, n).unwrap();
            let lo = (g.c1() * n as f64).floor() as usize;
            let hi = (g.c2() * n as f64).ceil() as usize;
            assert!(fam.min_word_len() >= lo.max(1), "n = {n}");
            assert!(fam.max_word_len() <= hi, "n = {n}");
        }
    }

    #[test]
    fn member_weights_obey_two_sided_bound() {
        let s = Sft::full(2).unwrap();
        let psi = ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| -0.8 - 0.5 * (w[0] ^ w[1]) as f64).unwrap(),
        );
        let g = WeakGibbsMetric::new(psi.clone()).unwrap();
        let cpsi = psi.additivity_constant();
        for n in [2usize, 5, 9] {
            let fam = g.ball_family(&s, n).unwrap();
            for w in fam.iter() {
                let lw = g.log_weight(&s, w).unwrap();
                assert!(lw <= -(n as f64) + 1e-12);
                let slack = g.psi_min() - cpsi - psi.var_norm(&s, w.len());
                assert!(lw >= -(n as f64) + slack - 1e-12);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let s = Sft::full(2).unwrap();
        let g = constant_metric(&s, -0.05);
        let err = g.ball_family_with(&s, 2, Exec::default(), 100).unwrap_err();
        assert!(matches!(err, Error::ResolutionTooFine { cap: 100, .. }));
    }

    #[test]
    fn parallel_and_sequential_families_agree() {
        let s = Sft::golden_mean();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_fn(&s, 2, |w| -0.9 - 0.3 * w[0] as f64).unwrap(),
        ))
        .unwrap();
        let a = g
            .ball_family_with(&s, 7, Exec::Sequential, DEFAULT_BALL_CAP)
            .unwrap();
        let b = g
            .ball_family_with(&s, 7, Exec::Parallel, DEFAULT_BALL_CAP)
            .unwrap();
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert_eq!(a.word(i), b.word(i));
        }
    }

    #[test]
    fn cocycle_gauge_family_matches_direct_weights() {
        let s = Sft::full(2).unwrap();
        // near-uniform entries keep the distortion constant small, and the
        // scaling makes every one-step norm contract past that constant
        let cy = MatrixCocycle::new(vec![
            vec![0.040, 0.044, 0.036, 0.040],
            vec![0.035, 0.028, 0.042, 0.035],
        ])
        .unwrap();
        let psi = ScalarPotential::Cocycle(cy);
        assert!(psi.phi_max() < 0.0);
        let g = WeakGibbsMetric::new(psi.clone()).unwrap();
        let n = 9;
        let fam = g.ball_family(&s, n).unwrap();
        for w in fam.iter() {
            let lw = psi.sup_weight_log(&s, w).unwrap();
            assert!(lw <= -(n as f64));
            let parent = psi.sup_weight_log(&s, &w[..w.len() - 1]).unwrap();
            assert!(parent > -(n as f64));
        }
        // frontier of an exhaustive walk has the same size
        let mut brute = 0u64;
        let mut stack = vec![vec![0u8], vec![1u8]];
        while let Some(w) = stack.pop() {
            if psi.sup_weight_log(&s, &w).unwrap() <= -(n as f64) {
                brute += 1;
            } else {
                for sym in 0..2u8 {
                    let mut x = w.clone();
                    x.push(sym);
                    stack.push(x);
                }
            }
        }
        assert_eq!(fam.len() as u64, brute);
    }

    #[test]
    fn dimension_of_log_m_gauge_is_one() {
        let s = Sft::full(3).unwrap();
        let g = constant_metric(&s, -(3.0f64.ln()));
        let d = g.dimension(&s, DimensionMethod::Root, 0).unwrap();
        assert!((d.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn golden_mean_unit_gauge_dimension_is_its_entropy() {
        let s = Sft::golden_mean();
        let g = constant_metric(&s, -1.0);
        let d = g.dimension(&s, DimensionMethod::Root, 0).unwrap();
        assert!((d.value - 0.481_211_825_059_603_45).abs() < 1e-10);
    }

    #[test]
    fn root_and_count_dimensions_agree() {
        let s = Sft::full(2).unwrap();
        let g = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&s, &[-1.0, -2.0]).unwrap(),
        ))
        .unwrap();
        let root = g.dimension(&s, DimensionMethod::Root, 0).unwrap();
        let count = g.dimension(&s, DimensionMethod::Count, 20).unwrap();
        assert!(
            (root.value - count.value).abs() < 0.05,
            "root {} vs count {}",
            root.value,
            count.value
        );
    }
}
