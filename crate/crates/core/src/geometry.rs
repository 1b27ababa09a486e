//! Self-similar sets, their symbolic codings, and dimension applications.
//!
//! An iterated function system of similarities f_j(x) = rho_j x + c_j
//! without rotations codes its attractor by the full shift on the map
//! indices. The coding map chi turns geometric questions (Birkhoff spectra
//! of the ambient coordinates, sets of fixed points in the asymptotic
//! average, local dimensions of Gibbs measures) into the symbolic spectrum
//! machinery, with an explicit truncation error for the k-step potentials.

use crate::error::{Error, Result};
use crate::measures;
use crate::metric::WeakGibbsMetric;
use crate::potential::{KStepPotential, PotentialBundle, ScalarPotential};
use crate::pressure::{pressure_exact, SpectralOptions};
use crate::sft::Sft;
use crate::spectrum::{LPhi, Spectrum, SpectrumPoint};

/// Contracting similarities x -> rho_j x + c_j on R^1 or R^2.
#[derive(Debug, Clone)]
pub struct SelfSimilarIfs {
    dim: usize,
    ratios: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    sosc: bool,
}

impl SelfSimilarIfs {
    /// General constructor; separation is asserted by the caller.
    pub fn new(dim: usize, maps: Vec<(f64, Vec<f64>)>, sosc_asserted: bool) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidIfs {
                reason: format!("ambient dimension {dim} not supported (1 or 2)"),
            });
        }
        if maps.len() < 2 {
            return Err(Error::InvalidIfs {
                reason: "need at least two maps".into(),
            });
        }
        let mut ratios = Vec::with_capacity(maps.len());
        let mut shifts = Vec::with_capacity(maps.len());
        for (j, (r, c)) in maps.into_iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidIfs {
                    reason: format!("map {j} has contraction ratio {r}, need (0, 1)"),
                });
            }
            if c.len() != dim || c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidIfs {
                    reason: format!("map {j} translation must be a finite point in R^{dim}"),
                });
            }
            ratios.push(r);
            shifts.push(c);
        }
        Ok(SelfSimilarIfs {
            dim,
            ratios,
            shifts,
            sosc: sosc_asserted,
        })
    }

    /// Base-b interval system x -> (x + digit) / b over the given digits.
    /// Distinct digits give exactly separated cells, so the separation
    /// condition is verified, not asserted.
    pub fn grid_1d(base: usize, digits: &[usize]) -> Result<Self> {
        let cells: Vec<Vec<usize>> = digits.iter().map(|&d| vec![d]).collect();
        SelfSimilarIfs::grid(1, base, &cells)
    }

    /// Base-b carpet: the maps x -> (x + cell) / b over the given cells.
    pub fn grid_2d(base: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let cells: Vec<Vec<usize>> = cells.iter().map(|&(i, j)| vec![i, j]).collect();
        SelfSimilarIfs::grid(2, base, &cells)
    }

    fn grid(dim: usize, base: usize, cells: &[Vec<usize>]) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidIfs {
                reason: format!("grid base {base} must be at least 2"),
            });
        }
        for (a, ca) in cells.iter().enumerate() {
            if ca.iter().any(|&x| x >= base) {
                return Err(Error::InvalidIfs {
                    reason: format!("cell {ca:?} outside base-{base} grid"),
                });
            }
            for (b, cb) in cells.iter().enumerate().skip(a + 1) {
                if ca == cb {
                    return Err(Error::OverlapViolation { a, b });
                }
            }
        }
        let maps = cells
            .iter()
            .map(|c| {
                (
                    1.0 / base as f64,
                    c.iter().map(|&x| x as f64 / base as f64).collect(),
                )
            })
            .collect();
        let mut ifs = SelfSimilarIfs::new(dim, maps, false)?;
        ifs.sosc = true;
        Ok(ifs)
    }

    /// Product of two interval systems with a common contraction ratio.
    pub fn product(&self, other: &SelfSimilarIfs) -> Result<SelfSimilarIfs> {
        if self.dim != 1 || other.dim != 1 {
            return Err(Error::InvalidIfs {
                reason: "products take two one-dimensional systems".into(),
            });
        }
        let r = self.ratios[0];
        if self
            .ratios
            .iter()
            .chain(&other.ratios)
            .any(|&x| (x - r).abs() > 1e-15)
        {
            return Err(Error::NotHomogeneous);
        }
        let mut maps = Vec::with_capacity(self.len() * other.len());
        for a in 0..self.len() {
            for b in 0..other.len() {
                maps.push((r, vec![self.shifts[a][0], other.shifts[b][0]]));
            }
        }
        SelfSimilarIfs::new(2, maps, self.sosc && other.sosc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ratio(&self, j: usize) -> f64 {
        self.ratios[j]
    }

    pub fn shift(&self, j: usize) -> &[f64] {
        &self.shifts[j]
    }

    pub fn sosc(&self) -> bool {
        self.sosc
    }

    /// The common contraction ratio, if all maps share one.
    pub fn homogeneous_ratio(&self) -> Option<f64> {
        let r = self.ratios[0];
        self.ratios
            .iter()
            .all(|&x| (x - r).abs() <= 1e-15)
            .then_some(r)
    }

    /// Fixed point c_j / (1 - rho_j) of map j.
    pub fn fixed_point(&self, j: usize) -> Vec<f64> {
        self.shifts[j]
            .iter()
            .map(|c| c / (1.0 - self.ratios[j]))
            .collect()
    }

    /// Axis-aligned bounding box of the fixed points; contains the attractor.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for j in 0..self.len() {
            for (i, x) in self.fixed_point(j).into_iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        (lo, hi)
    }

    fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinate of chi on the cylinder of `w`, with the unresolved tail
    /// placed at `anchor`. Coding potentials anchor at the bounding box
    /// center, which keeps every point symmetry of the map family exact
    /// at finite truncation order.
    fn coordinate_at(&self, w: &[u8], axis: usize, anchor: f64) -> f64 {
        let mut acc = 0.0;
        let mut scale = 1.0;
        for &sym in w {
            acc += scale * self.shifts[sym as usize][axis];
            scale *= self.ratios[sym as usize];
        }
        acc + scale * anchor
    }

    /// Symbolic coding at truncation order k: the exact 1-step contraction
    /// potential log rho, the k-step coordinate potentials, and a uniform
    /// bound on the truncation error of the coordinates.
    pub fn coding_potential(&self, k: usize) -> Result<CodedSystem> {
        if k == 0 {
            return Err(Error::InvalidIfs {
                reason: "truncation order k must be at least 1".into(),
            });
        }
        let sft = Sft::full(self.len())?;
        let log_r: Vec<f64> = self.ratios.iter().map(|r| r.ln()).collect();
        let metric = WeakGibbsMetric::new(ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&sft, &log_r)?,
        ))?;
        let (box_lo, box_hi) = self.bounding_box();
        let mut comps = Vec::with_capacity(self.dim);
        for axis in 0..self.dim {
            let anchor = 0.5 * (box_lo[axis] + box_hi[axis]);
            comps.push(ScalarPotential::KStep(KStepPotential::from_fn(
                &sft,
                k,
                |w| self.coordinate_at(w, axis, anchor),
            )?));
        }
        let phi = PotentialBundle::new(comps)?;
        // the attractor stays inside the fixed-point box, so the tail of a
        // cylinder is within half a diagonal of the center anchor
        let r_max = self.ratios.iter().cloned().fold(0.0f64, f64::max);
        let error_bound = 0.5 * self.diameter() * r_max.powi(k as i32);
        Ok(CodedSystem {
            sft,
            metric,
            phi,
            error_bound,
        })
    }

    /// The Birkhoff spectrum of the ambient coordinates at one level,
    /// refined along the truncation ladder until successive values agree
    /// within 1e-4 (or the transfer matrix budget is exhausted).
    pub fn birkhoff_spectrum_point(&self, alpha: &[f64]) -> Result<f64> {
        let m = self.len() as u128;
        let mut prev: Option<f64> = None;
        for &k in &[4usize, 6, 8, 10, 12] {
            let states = m.saturating_pow(k as u32 - 1);
            if states > 2_000_000 || states * m > 10_000_000 {
                break;
            }
            let coded = self.coding_potential(k)?;
            let sp = Spectrum::new(&coded.sft, coded.phi, coded.metric)?;
            let v = sp.legendre(alpha)?.tau_star;
            if let Some(p) = prev {
                if (v - p).abs() < 1e-4 {
                    return Ok(v);
                }
            }
            prev = Some(v);
        }
        match prev {
            Some(v) => Ok(v),
            None => {
                let coded = self.coding_potential(2)?;
                let sp = Spectrum::new(&coded.sft, coded.phi, coded.metric)?;
                Ok(sp.legendre(alpha)?.tau_star)
            }
        }
    }

    /// Supremum of the Birkhoff spectrum over the attractor: a
    /// branch-and-bound descent of the cell tree. Every candidate level is
    /// a cell center, so the reported argmax sits within one cell diameter
    /// of the attractor; `full_dim` reports whether the unconstrained
    /// spectrum peak is itself covered by depth-`membership_depth` cells.
    pub fn fixed_point_average_dimension(
        &self,
        k: usize,
        membership_depth: usize,
    ) -> Result<FixedPointDimension> {
        if !self.sosc {
            return Err(Error::InvalidIfs {
                reason: "cell search needs the separation condition".into(),
            });
        }
        let depth = membership_depth.max(1);
        let coded = self.coding_potential(k)?;
        let sp = Spectrum::new(&coded.sft, coded.phi, coded.metric)?;
        let (box_lo, box_hi) = self.bounding_box();
        let psi_cap = sp.metric().psi_max().abs();

        struct Cell {
            scale: f64,
            shift: Vec<f64>,
            value: f64,
            z: Vec<f64>,
            bound: f64,
        }
        let center_of = |scale: f64, shift: &[f64]| -> Vec<f64> {
            (0..self.dim)
                .map(|i| shift[i] + scale * 0.5 * (box_lo[i] + box_hi[i]))
                .collect()
        };
        let halfwidth = |scale: f64| -> f64 {
            (0..self.dim)
                .map(|i| scale * 0.5 * (box_hi[i] - box_lo[i]))
                .fold(0.0f64, f64::max)
        };

        let mut warm = crate::spectrum::SolveScratch::default();
        let root_center = center_of(1.0, &vec![0.0; self.dim]);
        let root_lp =
            sp.legendre_seeded(&root_center, &vec![0.0; self.dim], 1e-5, &mut warm)?;
        let mut frontier = vec![Cell {
            scale: 1.0,
            shift: vec![0.0; self.dim],
            value: root_lp.tau_star,
            z: root_lp.z_star,
            bound: f64::INFINITY,
        }];
        let mut incumbent = f64::NEG_INFINITY;
        for _level in 0..depth {
            let mut next: Vec<Cell> = Vec::new();
            for cell in &frontier {
                if cell.bound <= incumbent - 1e-12 {
                    continue;
                }
                for j in 0..self.len() {
                    let scale = cell.scale * self.ratios[j];
                    let shift: Vec<f64> = (0..self.dim)
                        .map(|i| cell.shift[i] + cell.scale * self.shifts[j][i])
                        .collect();
                    let center = center_of(scale, &shift);
                    let lp = match sp.legendre_seeded(&center, &cell.z, 1e-5, &mut warm) {
                        Ok(lp) => lp,
                        Err(Error::NotInLPhi { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    incumbent = incumbent.max(lp.tau_star);
                    // tau at the parent minimizer is affine-controlled in
                    // alpha, giving a rigorous cap over the child cell
                    let slack = lp.z_star.iter().map(|z| z.abs()).sum::<f64>()
                        * halfwidth(cell.scale)
                        / psi_cap;
                    next.push(Cell {
                        scale,
                        shift,
                        value: lp.tau_star,
                        z: lp.z_star,
                        bound: lp.tau_star + slack + 1e-9,
                    });
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_by(|a, b| {
                b.value
                    .partial_cmp(&a.value)
                    .unwrap()
                    .then_with(|| lex_cmp(&a.shift, &b.shift))
            });
            next.truncate(32);
            frontier = next;
        }

        let best = frontier
            .iter()
            .max_by(|a, b| {
                a.value
                    .partial_cmp(&b.value)
                    .unwrap()
                    .then_with(|| lex_cmp(&b.shift, &a.shift))
            })
            .expect("frontier nonempty");
        let argmax = center_of(best.scale, &best.shift);
        let polished = sp.legendre_seeded(&argmax, &best.z, 1e-8, &mut warm)?;

        let tau_peak = sp.d_psi()?;
        let coeffs = sp.joint_coeffs(&vec![0.0; self.dim], tau_peak);
        let (mu, _) = measures::equilibrium_from_transfer(sp.transfer(), &coeffs, 0.0)?;
        let peak_alpha = mu.bundle_average(sp.potential())?;
        let full_dim = self.covered(&peak_alpha, depth);
        Ok(FixedPointDimension {
            value: polished.tau_star,
            argmax,
            full_dim,
        })
    }

    /// Whether depth-level cells still cover `point` (inclusive on cell
    /// boundaries).
    fn covered(&self, point: &[f64], depth: usize) -> bool {
        let (box_lo, box_hi) = self.bounding_box();
        let mut frontier: Vec<(f64, Vec<f64>)> = vec![(1.0, vec![0.0; self.dim])];
        for _ in 0..depth {
            let mut next = Vec::new();
            for (scale, shift) in &frontier {
                for j in 0..self.len() {
                    let s2 = scale * self.ratios[j];
                    let t2: Vec<f64> = (0..self.dim)
                        .map(|i| shift[i] + scale * self.shifts[j][i])
                        .collect();
                    let eps = 1e-9 * s2;
                    let inside = (0..self.dim).all(|i| {
                        point[i] >= t2[i] + s2 * box_lo[i] - eps
                            && point[i] <= t2[i] + s2 * box_hi[i] + eps
                    });
                    if inside {
                        next.push((s2, t2));
                    }
                }
            }
            if next.is_empty() {
                return false;
            }
            next.truncate(64);
            frontier = next;
        }
        true
    }

    /// Local-dimension spectrum of the Gibbs measure of `phi` on a
    /// homogeneous attractor: the symbolic curve reparametrized by
    /// beta = alpha / log rho.
    pub fn gibbs_local_dimension_spectrum(
        &self,
        phi: &ScalarPotential,
        normalize: bool,
    ) -> Result<GibbsSpectrum> {
        let (sp, log_r) = self.gibbs_spectrum_solver(phi, normalize)?;
        let curve = sp.curve()?;
        let interval = match curve.l_phi {
            LPhi::Interval { lo, hi, .. } => (hi / log_r, lo / log_r),
            LPhi::Polygon { .. } => unreachable!("scalar potential gives d = 1"),
        };
        let mut points: Vec<SpectrumPoint> = curve
            .points
            .into_iter()
            .map(|mut p| {
                p.alpha = vec![p.alpha[0] / log_r];
                p
            })
            .collect();
        points.reverse();
        Ok(GibbsSpectrum {
            log_ratio: log_r,
            interval,
            points,
            d_psi: curve.d_psi,
        })
    }

    /// Dimension of the localized local-dimension level set: targets are
    /// given in local-dimension units and mapped back to Birkhoff levels.
    pub fn gibbs_localized_dimension(
        &self,
        phi: &ScalarPotential,
        xi: &ScalarPotential,
        interval_valued: bool,
        normalize: bool,
    ) -> Result<f64> {
        let (sp, log_r) = self.gibbs_spectrum_solver(phi, normalize)?;
        let ScalarPotential::KStep(t) = xi else {
            return Err(Error::InvalidPotential {
                reason: "localized targets must be k-step tables".into(),
            });
        };
        let scaled = ScalarPotential::KStep(KStepPotential::from_fn(
            sp.sft(),
            t.k(),
            |w| t.value_of(sp.sft(), w).expect("same alphabet") * log_r,
        )?);
        sp.localized_dimension(&scaled, interval_valued)
    }

    fn gibbs_spectrum_solver(
        &self,
        phi: &ScalarPotential,
        normalize: bool,
    ) -> Result<(Spectrum, f64)> {
        let Some(r) = self.homogeneous_ratio() else {
            return Err(Error::NotHomogeneous);
        };
        let sft = Sft::full(self.len())?;
        let opts = SpectralOptions::default();
        let p0 = pressure_exact(&sft, phi, &opts)?.log_rho;
        let normalized = if p0.abs() <= 1e-8 {
            phi.clone()
        } else if normalize {
            let ScalarPotential::KStep(p) = phi else {
                return Err(Error::InvalidPotential {
                    reason: "only k-step potentials can be renormalized here".into(),
                });
            };
            ScalarPotential::KStep(KStepPotential::from_fn(&sft, p.k(), |w| {
                p.value_of(&sft, w).expect("same alphabet") - p0
            })?)
        } else {
            return Err(Error::NotNormalized { pressure: p0 });
        };
        let metric = WeakGibbsMetric::new(ScalarPotential::KStep(KStepPotential::constant(
            &sft,
            r.ln(),
        )))?;
        let sp = Spectrum::new(&sft, PotentialBundle::scalar(normalized), metric)?;
        Ok((sp, r.ln()))
    }

    /// Deterministic attractor sample: images of the box center under all
    /// length-`depth` compositions, lexicographic order, truncated at `cap`.
    pub fn attractor_points(&self, depth: usize, cap: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounding_box();
        let base: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let total = (self.len() as u128)
            .checked_pow(depth as u32)
            .unwrap_or(u128::MAX)
            .min(cap as u128) as usize;
        let mut out = Vec::with_capacity(total);
        let mut word = vec![0usize; depth];
        for _ in 0..total {
            let mut x = base.clone();
            for &j in word.iter().rev() {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = self.ratios[j] * *xi + self.shifts[j][i];
                }
            }
            out.push(x);
            for slot in (0..depth).rev() {
                word[slot] += 1;
                if word[slot] < self.len() {
                    break;
                }
                word[slot] = 0;
            }
        }
        out
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Symbolic coding of an IFS at one truncation order.
pub struct CodedSystem {
    pub sft: Sft,
    pub metric: WeakGibbsMetric,
    pub phi: PotentialBundle,
    /// Uniform bound on |chi - truncation| over the attractor.
    pub error_bound: f64,
}

/// Result of the cell-tree spectrum maximization.
#[derive(Debug, Clone)]
pub struct FixedPointDimension {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub full_dim: bool,
}

/// Spectrum curve in local-dimension coordinates.
#[derive(Debug, Clone)]
pub struct GibbsSpectrum {
    pub log_ratio: f64,
    /// The interval of attainable local dimensions, increasing.
    pub interval: (f64, f64),
    /// Points ordered by increasing local dimension.
    pub points: Vec<SpectrumPoint>,
    pub d_psi: f64,
}

impl GibbsSpectrum {
    pub fn max_value(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.tau_star)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const LOG2_OVER_LOG3: f64 = 0.630_929_753_571_457_4;
    const LOG4_OVER_LOG3: f64 = 1.261_859_507_142_914_8;
    const LOG5_OVER_LOG3: f64 = 1.464_973_520_717_927;

    fn cantor() -> SelfSimilarIfs {
        SelfSimilarIfs::grid_1d(3, &[0, 2]).unwrap()
    }

    /// Truncated coordinate with the tail at the box center, the same
    /// anchor coding_potential uses.
    fn centered_coord(ifs: &SelfSimilarIfs, w: &[u8], axis: usize) -> f64 {
        let (lo, hi) = ifs.bounding_box();
        ifs.coordinate_at(w, axis, 0.5 * (lo[axis] + hi[axis]))
    }

    fn base3() -> SelfSimilarIfs {
        SelfSimilarIfs::grid_1d(3, &[0, 1, 2]).unwrap()
    }

    fn corner_carpet() -> SelfSimilarIfs {
        SelfSimilarIfs::grid_2d(3, &[(0, 0), (0, 2), (2, 0), (2, 2)]).unwrap()
    }

    fn corner_center_carpet() -> SelfSimilarIfs {
        SelfSimilarIfs::grid_2d(3, &[(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)]).unwrap()
    }

    #[test]
    fn construction_validates_ratios_cells_and_overlaps() {
        assert!(matches!(
            SelfSimilarIfs::new(1, vec![(1.2, vec![0.0]), (0.5, vec![0.1])], true),
            Err(Error::InvalidIfs { .. })
        ));
        assert!(matches!(
            SelfSimilarIfs::grid_1d(3, &[0, 3]),
            Err(Error::InvalidIfs { .. })
        ));
        assert!(matches!(
            SelfSimilarIfs::grid_1d(3, &[1, 1]),
            Err(Error::OverlapViolation { a: 0, b: 1 })
        ));
    }

    #[test]
    fn cantor_fixed_points_are_the_interval_endpoints() {
        let c = cantor();
        assert_eq!(c.fixed_point(0), vec![0.0]);
        assert!((c.fixed_point(1)[0] - 1.0).abs() < 1e-12);
        let (lo, hi) = c.bounding_box();
        assert_eq!(lo[0], 0.0);
        assert!((hi[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn carpet_fixed_points_span_the_unit_square() {
        let s = corner_center_carpet();
        for x in s.fixed_point(2) {
            assert!((x - 0.5).abs() < 1e-12);
        }
        let (lo, hi) = s.bounding_box();
        for i in 0..2 {
            assert_eq!(lo[i], 0.0);
            assert!((hi[i] - 1.0).abs() < 1e-12);
        }
        assert!(s.sosc());
    }

    #[test]
    fn coding_recursion_is_exact() {
        let sys = [cantor(), base3(), corner_center_carpet()];
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for ifs in &sys {
            for _ in 0..100 {
                let w: Vec<u8> = (0..40)
                    .map(|_| rng.gen_range(0..ifs.len()) as u8)
                    .collect();
                for axis in 0..ifs.dim() {
                    let whole = centered_coord(ifs, &w, axis);
                    let tail = centered_coord(ifs, &w[1..], axis);
                    let j = w[0] as usize;
                    let rebuilt = ifs.shifts[j][axis] + ifs.ratios[j] * tail;
                    assert!((whole - rebuilt).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn coding_truncation_error_shrinks_geometrically() {
        let b = base3();
        let coded = b.coding_potential(8).unwrap();
        assert!(coded.error_bound <= 1.5 * 3.0f64.powi(-8) + 1e-15);
        // psi is the exact 1-step contraction rate
        assert!((coded.metric.psi_max() + 3.0f64.ln()).abs() < 1e-15);
        assert!((coded.metric.psi_min() + 3.0f64.ln()).abs() < 1e-15);
        // deep truncations approximate chi: compare against a long series
        let w: Vec<u8> = vec![2, 0, 1, 2, 1, 0, 0, 1];
        let g = centered_coord(&b, &w, 0);
        let mut long = w.clone();
        long.extend(std::iter::repeat(0).take(60));
        let chi = centered_coord(&b, &long, 0);
        assert!((g - chi).abs() <= coded.error_bound + 1e-12);
    }

    #[test]
    fn carpet_rotation_set_fills_the_square_up_to_truncation() {
        let s = corner_center_carpet();
        let coded = s.coding_potential(3).unwrap();
        let eb = coded.error_bound + 1e-12;
        let sp = Spectrum::new(&coded.sft, coded.phi, coded.metric).unwrap();
        let LPhi::Polygon { hull, .. } = sp.l_phi().unwrap() else {
            panic!("planar rotation set expected");
        };
        // each square corner is a fixed point, so a hull point must sit
        // within the truncation bound of it
        for corner in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let gap = hull
                .iter()
                .map(|&(x, y)| (x - corner.0).hypot(y - corner.1))
                .fold(f64::INFINITY, f64::min);
            assert!(gap <= eb, "corner {corner:?} at distance {gap} > {eb}");
        }
        for &(x, y) in &hull {
            assert!((-eb..=1.0 + eb).contains(&x));
            assert!((-eb..=1.0 + eb).contains(&y));
        }
    }

    #[test]
    fn interval_spectrum_peaks_at_one() {
        let v = base3().birkhoff_spectrum_point(&[0.5]).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn cantor_spectrum_peaks_at_the_similarity_dimension() {
        let v = cantor().birkhoff_spectrum_point(&[0.5]).unwrap();
        assert!((v - LOG2_OVER_LOG3).abs() < 1e-6, "{v}");
    }

    #[test]
    fn carpet_spectrum_at_the_center_is_log5_over_log3() {
        let v = corner_center_carpet()
            .birkhoff_spectrum_point(&[0.5, 0.5])
            .unwrap();
        assert!((v - LOG5_OVER_LOG3).abs() < 1e-6, "{v}");
    }

    #[test]
    fn carpet_spectrum_respects_square_symmetries() {
        let s = corner_center_carpet();
        let coded = s.coding_potential(4).unwrap();
        let sp = Spectrum::new(&coded.sft, coded.phi, coded.metric).unwrap();
        let base = sp.legendre(&[0.3, 0.4]).unwrap().tau_star;
        for image in [[0.4, 0.3], [0.7, 0.4], [0.3, 0.6], [0.6, 0.7]] {
            let v = sp.legendre(&image).unwrap().tau_star;
            assert!((v - base).abs() < 1e-6, "symmetry image {image:?}: {v} vs {base}");
        }
    }

    #[test]
    fn full_interval_has_full_dimension_everywhere() {
        let r = base3().fixed_point_average_dimension(6, 10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
        assert!((r.argmax[0] - 0.5).abs() < 1e-3);
        assert!(r.full_dim);
    }

    #[test]
    fn cantor_average_fixed_points_lose_dimension() {
        let r = cantor().fixed_point_average_dimension(6, 10).unwrap();
        let h_third = -(1.0f64 / 3.0 * (1.0f64 / 3.0).ln() + 2.0 / 3.0 * (2.0f64 / 3.0).ln());
        let expect = h_third / 3.0f64.ln();
        assert!((r.value - expect).abs() < 2e-3, "{} vs {expect}", r.value);
        assert!(r.value < LOG2_OVER_LOG3 - 1e-3);
        let d = (r.argmax[0] - 1.0 / 3.0)
            .abs()
            .min((r.argmax[0] - 2.0 / 3.0).abs());
        assert!(d < 0.05, "argmax {}", r.argmax[0]);
        assert!(!r.full_dim);
    }

    #[test]
    fn corner_carpet_matches_the_product_rule() {
        let c = cantor();
        let product = c.product(&c).unwrap();
        let one_d = c.fixed_point_average_dimension(6, 8).unwrap();
        let two_d = product.fixed_point_average_dimension(6, 8).unwrap();
        assert!(
            (two_d.value - 2.0 * one_d.value).abs() < 2e-3,
            "{} vs 2 * {}",
            two_d.value,
            one_d.value
        );
        assert!(two_d.value < LOG4_OVER_LOG3 - 1e-3);
        assert!(!two_d.full_dim);
        for x in &two_d.argmax {
            let d = (x - 1.0 / 3.0).abs().min((x - 2.0 / 3.0).abs());
            assert!(d < 0.05, "argmax {:?}", two_d.argmax);
        }
    }

    #[test]
    fn product_requires_matching_ratios() {
        let a = cantor();
        let b = SelfSimilarIfs::grid_1d(2, &[0, 1]).unwrap();
        assert!(matches!(a.product(&b), Err(Error::NotHomogeneous)));
        let p = a.product(&a).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn unverified_separation_is_rejected_by_the_cell_search() {
        let ifs = SelfSimilarIfs::new(
            1,
            vec![(1.0 / 3.0, vec![0.0]), (1.0 / 3.0, vec![2.0 / 3.0])],
            false,
        )
        .unwrap();
        assert!(matches!(
            ifs.fixed_point_average_dimension(4, 6),
            Err(Error::InvalidIfs { .. })
        ));
    }

    #[test]
    fn uniform_gibbs_measure_has_a_single_local_dimension() {
        let c = cantor();
        let sft = Sft::full(2).unwrap();
        let phi = ScalarPotential::KStep(KStepPotential::constant(&sft, -(2.0f64.ln())));
        let g = c.gibbs_local_dimension_spectrum(&phi, false).unwrap();
        assert!((g.interval.0 - LOG2_OVER_LOG3).abs() < 1e-9);
        assert!((g.interval.1 - LOG2_OVER_LOG3).abs() < 1e-9);
        assert_eq!(g.points.len(), 1);
        assert!((g.points[0].tau_star - LOG2_OVER_LOG3).abs() < 1e-9);
    }

    #[test]
    fn bernoulli_gibbs_spectrum_has_the_expected_dimension_interval() {
        let c = cantor();
        let sft = Sft::full(2).unwrap();
        let phi = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&sft, &[(0.25f64).ln(), (0.75f64).ln()])
                .unwrap(),
        );
        let g = c.gibbs_local_dimension_spectrum(&phi, false).unwrap();
        let ln3 = 3.0f64.ln();
        assert!((g.interval.0 - (4.0f64 / 3.0).ln() / ln3).abs() < 1e-9);
        assert!((g.interval.1 - 4.0f64.ln() / ln3).abs() < 1e-9);
        assert!((g.max_value() - LOG2_OVER_LOG3).abs() < 1e-6);
        let betas: Vec<f64> = g.points.iter().map(|p| p.alpha[0]).collect();
        assert!(betas.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        // spot-check one interior point against the closed form
        let mid = &g.points[g.points.len() / 2];
        let alpha = mid.alpha[0] * (1.0f64 / 3.0).ln();
        let p = (alpha - (0.75f64).ln()) / ((0.25f64).ln() - (0.75f64).ln());
        let expect = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / ln3;
        assert!((mid.tau_star - expect).abs() < 1e-6);
    }

    #[test]
    fn gibbs_spectrum_enforces_preconditions() {
        let mixed = SelfSimilarIfs::new(
            1,
            vec![(0.5, vec![0.0]), (0.25, vec![0.75])],
            true,
        )
        .unwrap();
        let sft = Sft::full(2).unwrap();
        let flat = ScalarPotential::KStep(KStepPotential::constant(&sft, -(2.0f64.ln())));
        assert!(matches!(
            mixed.gibbs_local_dimension_spectrum(&flat, false),
            Err(Error::NotHomogeneous)
        ));
        let c = cantor();
        let digit = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&sft, &[0.0, 1.0]).unwrap(),
        );
        assert!(matches!(
            c.gibbs_local_dimension_spectrum(&digit, false),
            Err(Error::NotNormalized { .. })
        ));
        assert!(c.gibbs_local_dimension_spectrum(&digit, true).is_ok());
    }

    #[test]
    fn localized_gibbs_dimension_matches_the_pointwise_spectrum() {
        let c = cantor();
        let sft = Sft::full(2).unwrap();
        let phi = ScalarPotential::KStep(
            KStepPotential::from_symbol_values(&sft, &[(0.25f64).ln(), (0.75f64).ln()])
                .unwrap(),
        );
        let g = c.gibbs_local_dimension_spectrum(&phi, false).unwrap();
        let beta = 0.5 * (g.interval.0 + g.interval.1);
        let xi = ScalarPotential::KStep(KStepPotential::constant(&sft, beta));
        let localized = c.gibbs_localized_dimension(&phi, &xi, false, false).unwrap();
        let ln3 = 3.0f64.ln();
        let alpha = beta * (1.0f64 / 3.0).ln();
        let p = (alpha - (0.75f64).ln()) / ((0.25f64).ln() - (0.75f64).ln());
        let expect = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / ln3;
        assert!((localized - expect).abs() < 1e-6, "{localized} vs {expect}");
    }

    #[test]
    fn attractor_points_are_deterministic_and_inside_the_box() {
        let c = cantor();
        let pts = c.attractor_points(5, 1000);
        assert_eq!(pts.len(), 32);
        for p in &pts {
            assert!((-1e-12..=1.0 + 1e-12).contains(&p[0]));
        }
        assert_eq!(pts, c.attractor_points(5, 1000));
        assert!(pts.windows(2).all(|w| w[0][0] <= w[1][0] + 1e-12));
        let capped = c.attractor_points(5, 10);
        assert_eq!(capped.len(), 10);
        assert_eq!(capped[..], pts[..10]);
    }
}
