//! Multifractal spectra of Birkhoff averages under weak Gibbs metrics.
//!
//! The central object is the implicit exponent tau(z, alpha) solving
//! P(<z, Phi - alpha> + tau Psi) = 0; its infimum over z is the spectrum
//! tau*(alpha). This module computes tau by bracketed bisection on exact
//! pressures, tau* by convex minimization in z, the rotation set L_Phi,
//! large-deviation ball counts, and localized dimensions.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::measures::{self, MarkovMeasure};
use crate::metric::{BallScan, WeakGibbsMetric, DEFAULT_BALL_CAP};
use crate::optim::{self, LogSum, MeanCycleGraph};
use crate::potential::{PotentialBundle, ScalarPotential};
use crate::pressure::{SpectralOptions, TransferMatrix};
use crate::sft::Sft;

/// Tunables for the spectrum solver.
#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Width of the final tau bisection bracket.
    pub root_tol: f64,
    /// Step tolerance of the z minimization.
    pub min_tol: f64,
    /// Minimizer search stops at this |z|; hitting it flags a boundary alpha.
    pub z_cap: f64,
    /// Grid size for one-dimensional spectrum curves.
    pub grid_1d: usize,
    /// Per-axis grid size for two-dimensional curves.
    pub grid_2d: usize,
    /// Ball cap passed to the metric walks.
    pub ball_cap: u64,
    /// Random Markov measures sampled when hulls are approximate.
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
    pub spectral: SpectralOptions,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            root_tol: 1e-10,
            min_tol: 1e-8,
            z_cap: 65_536.0,
            grid_1d: 201,
            grid_2d: 41,
            ball_cap: DEFAULT_BALL_CAP,
            samples: 40,
            seed: crate::measures::DEFAULT_SEED,
            exec: Exec::default(),
            spectral: SpectralOptions::default(),
        }
    }
}

/// The rotation set of Birkhoff averages.
#[derive(Debug, Clone, PartialEq)]
pub enum LPhi {
    /// d = 1: the closed interval of attainable averages. Exact when the
    /// endpoints come from extremal mean cycles, else flagged.
    Interval {
        lo: f64,
        hi: f64,
        approximate: bool,
    },
    /// d = 2: convex hull of sampled measure averages, counterclockwise.
    Polygon {
        hull: Vec<(f64, f64)>,
        approximate: bool,
    },
}

/// One solved spectrum point.
#[derive(Debug, Clone)]
pub struct LegendrePoint {
    pub alpha: Vec<f64>,
    pub tau_star: f64,
    pub z_star: Vec<f64>,
    /// Set when the minimizer ran into the |z| cap, meaning the infimum is
    /// approached but not attained (boundary alpha).
    pub boundary: bool,
}

/// Warm Perron vectors carried between seeded solves.
#[derive(Default)]
pub(crate) struct SolveScratch {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

/// Equilibrium-state summary attached to interior grid points.
#[derive(Debug, Clone)]
pub struct Witness {
    pub entropy: f64,
    pub psi_avg: f64,
    pub phi_avg: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectrumPoint {
    pub alpha: Vec<f64>,
    pub tau_star: f64,
    pub z_star: Vec<f64>,
    pub boundary: bool,
    pub witness: Option<Witness>,
}

/// A full spectrum curve over the rotation set.
#[derive(Debug, Clone)]
pub struct SpectrumCurve {
    pub d: usize,
    pub points: Vec<SpectrumPoint>,
    pub l_phi: LPhi,
    pub d_psi: f64,
}

impl SpectrumCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_tau(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.tau_star)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Large-deviation counting table.
#[derive(Debug, Clone)]
pub struct LambdaRow {
    pub n: usize,
    pub eps: f64,
    pub count: u64,
    /// log f(alpha, n, eps) / n; NEG_INFINITY when the count is zero.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaTable {
    pub rows: Vec<LambdaRow>,
    /// Difference quotient of log f over the two largest n at the
    /// smallest eps; a diagnostic, not a certified limit.
    pub extrapolated: f64,
}

/// Solver context: a subshift, an observable bundle, and a gauge metric,
/// sharing one joint transfer matrix.
pub struct Spectrum {
    sft: Sft,
    phi: PotentialBundle,
    metric: WeakGibbsMetric,
    opts: SpectrumOptions,
    tm: TransferMatrix,
    d: usize,
    lphi: OnceLock<Result<LPhi>>,
    dpsi: OnceLock<Result<f64>>,
}

impl Spectrum {
    pub fn new(sft: &Sft, phi: PotentialBundle, metric: WeakGibbsMetric) -> Result<Self> {
        Spectrum::with_options(sft, phi, metric, SpectrumOptions::default())
    }

    pub fn with_options(
        sft: &Sft,
        phi: PotentialBundle,
        metric: WeakGibbsMetric,
        opts: SpectrumOptions,
    ) -> Result<Self> {
        let d = phi.d();
        if d > 2 {
            return Err(Error::DimensionUnsupported { d });
        }
        let joint = PotentialBundle::with_gauge(&phi, metric.psi().clone());
        let tm = TransferMatrix::new(sft, &joint)?;
        Ok(Spectrum {
            sft: sft.clone(),
            phi,
            metric,
            opts,
            tm,
            d,
            lphi: OnceLock::new(),
            dpsi: OnceLock::new(),
        })
    }

    pub fn sft(&self) -> &Sft {
        &self.sft
    }

    pub fn potential(&self) -> &PotentialBundle {
        &self.phi
    }

    pub fn metric(&self) -> &WeakGibbsMetric {
        &self.metric
    }

    pub fn options(&self) -> &SpectrumOptions {
        &self.opts
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub(crate) fn transfer(&self) -> &TransferMatrix {
        &self.tm
    }

    /// Joint coefficient vector [z, tau] over the [Phi.., Psi] bundle.
    pub(crate) fn joint_coeffs(&self, z: &[f64], tau: f64) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.d + 1);
        c.extend_from_slice(z);
        c.push(tau);
        c
    }

    /// Per-step constant shift of <z, Phi - alpha>.
    pub(crate) fn alpha_shift(z: &[f64], alpha: &[f64]) -> f64 {
        -z.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>()
    }

    /// D(Psi), the dimension of the whole space in the gauge metric.
    pub fn d_psi(&self) -> Result<f64> {
        self.dpsi
            .get_or_init(|| {
                self.metric
                    .dimension(&self.sft, crate::metric::DimensionMethod::Root, 0)
                    .map(|e| e.value)
            })
            .clone()
    }

    fn check_dims(&self, z: &[f64], alpha: &[f64]) -> Result<()> {
        if z.len() != self.d || alpha.len() != self.d {
            return Err(Error::DimensionUnsupported {
                d: z.len().max(alpha.len()),
            });
        }
        Ok(())
    }

    /// The root tau(z, alpha) of P(<z, Phi - alpha> + tau Psi) = 0.
    pub fn tau(&self, z: &[f64], alpha: &[f64]) -> Result<f64> {
        self.check_dims(z, alpha)?;
        let mut warm = Vec::new();
        self.tau_warm(z, alpha, &mut warm)
    }

    fn tau_warm(&self, z: &[f64], alpha: &[f64], warm: &mut Vec<f64>) -> Result<f64> {
        let shift = Spectrum::alpha_shift(z, alpha);
        let p0 = self
            .tm
            .log_spectral_radius(
                &self.joint_coeffs(z, 0.0),
                shift,
                &self.opts.spectral,
                Some(warm),
            )?
            .log_rho;
        if let ScalarPotential::KStep(p) = self.metric.psi() {
            if p.is_constant() {
                // pressure is affine in tau, so the root is explicit
                return Ok(p0 / p.max_value().abs());
            }
        }
        if p0 == 0.0 {
            return Ok(0.0);
        }
        let wmin = self.metric.psi_min().abs();
        let wmax = self.metric.psi_max().abs();
        let (mut lo, mut hi) = if p0 > 0.0 {
            (p0 / wmin, p0 / wmax)
        } else {
            (p0 / wmax, p0 / wmin)
        };
        let pad = self.opts.root_tol.max(1e-12) * (1.0 + lo.abs().max(hi.abs()));
        lo -= pad;
        hi += pad;
        let mut err = None;
        let root = optim::bisect_root(
            |t| {
                match self.tm.log_spectral_radius(
                    &self.joint_coeffs(z, t),
                    shift,
                    &self.opts.spectral,
                    Some(warm),
                ) {
                    Ok(data) => data.log_rho,
                    Err(e) => {
                        err = Some(e);
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
            self.opts.root_tol,
            300,
        );
        if let Some(e) = err {
            return Err(e);
        }
        root
    }

    /// Finite-resolution metric pressure: (1/n) log of the sum over the
    /// radius-e^{-n} ball family of sup exp<z, phi - |w| alpha>.
    pub fn tau_metric_estimate(&self, z: &[f64], alpha: &[f64], n: usize) -> Result<f64> {
        self.check_dims(z, alpha)?;
        if n == 0 {
            return Err(Error::InvalidMetric {
                reason: "metric pressure estimates need resolution n >= 1".into(),
            });
        }
        let gauge = self.tm.cylinder_table(&self.unit_coeffs(self.d), 0.0)?;
        let merged = self
            .tm
            .cylinder_table(&self.joint_coeffs(z, 0.0), Spectrum::alpha_shift(z, alpha))?;
        let tables = [gauge, merged];
        let scan = BallScan {
            tables: &tables,
            gauge: 0,
            n,
            cap: self.opts.ball_cap,
        };
        let (sum, _) = scan.run(
            self.opts.exec,
            LogSum::default,
            |acc: &mut LogSum, _w, ranges| acc.push(ranges[1].1),
            LogSum::merge,
        )?;
        Ok(sum.value() / n as f64)
    }

    fn unit_coeffs(&self, slot: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.d + 1];
        c[slot] = 1.0;
        c
    }

    fn inflation(&self) -> f64 {
        1e-8 * (1.0 + self.phi.norm())
    }

    /// Membership check against the (possibly approximate) rotation set.
    fn check_alpha(&self, alpha: &[f64]) -> Result<Option<LegendrePoint>> {
        match self.l_phi()? {
            LPhi::Interval { lo, hi, approximate } => {
                let infl = if approximate {
                    100.0 * self.inflation()
                } else {
                    self.inflation()
                };
                let a = alpha[0];
                if a < lo - infl || a > hi + infl {
                    return Err(Error::NotInLPhi {
                        alpha: alpha.to_vec(),
                    });
                }
                if hi - lo <= 1e-11 * (1.0 + lo.abs()) {
                    // single-point rotation set: the level set is everything
                    return Ok(Some(LegendrePoint {
                        alpha: alpha.to_vec(),
                        tau_star: self.d_psi()?,
                        z_star: vec![0.0; self.d],
                        boundary: false,
                    }));
                }
            }
            LPhi::Polygon { hull, .. } => {
                if hull.len() < 3 {
                    return Err(Error::NotFullDimensional {
                        rank: hull.len().saturating_sub(1),
                        d: self.d,
                    });
                }
                let sd = optim::hull_signed_distance(&hull, (alpha[0], alpha[1]));
                if sd > 100.0 * self.inflation() {
                    return Err(Error::NotInLPhi {
                        alpha: alpha.to_vec(),
                    });
                }
            }
        }
        Ok(None)
    }

    /// tau*(alpha) = inf_z tau(z, alpha) with its minimizer.
    pub fn legendre(&self, alpha: &[f64]) -> Result<LegendrePoint> {
        let mut scratch = SolveScratch::default();
        let start = vec![0.0; self.d];
        self.legendre_seeded(alpha, &start, self.opts.min_tol, &mut scratch)
    }

    /// Same minimization started from a caller-supplied z and tolerance;
    /// lets grid and cell searches reuse neighboring solutions.
    pub(crate) fn legendre_seeded(
        &self,
        alpha: &[f64],
        start: &[f64],
        tol: f64,
        scratch: &mut SolveScratch,
    ) -> Result<LegendrePoint> {
        if alpha.len() != self.d {
            return Err(Error::DimensionUnsupported { d: alpha.len() });
        }
        if let Some(short) = self.check_alpha(alpha)? {
            return Ok(short);
        }
        let mut lp = match self.d {
            1 => self.legendre_1d(alpha, start[0], tol, scratch),
            _ => self.legendre_2d(alpha, start, tol, scratch),
        }?;
        // at the edge of the rotation set the infimum is a limit along
        // |z| -> infinity, which underflow plateaus may reach early
        lp.boundary |= match &self.l_phi()? {
            LPhi::Interval { lo, hi, .. } => {
                let band = self.inflation();
                alpha[0] <= lo + band || alpha[0] >= hi - band
            }
            LPhi::Polygon { hull, .. } => {
                optim::hull_signed_distance(hull, (alpha[0], alpha[1]))
                    >= -100.0 * self.inflation()
            }
        };
        Ok(lp)
    }

    fn legendre_1d(
        &self,
        alpha: &[f64],
        start: f64,
        tol: f64,
        scratch: &mut SolveScratch,
    ) -> Result<LegendrePoint> {
        let warm = &mut scratch.right;
        let mut err = None;
        let mut f = |z: f64| match self.tau_warm(&[z], alpha, warm) {
            Ok(t) => t,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        };
        let (z, t, hit) = line_min(&mut f, start, self.opts.z_cap, tol);
        if let Some(e) = err {
            return Err(e);
        }
        Ok(LegendrePoint {
            alpha: alpha.to_vec(),
            tau_star: t,
            z_star: vec![z],
            boundary: hit,
        })
    }

    /// Quasi-Newton descent on the stationarity system: the gradient of
    /// tau in z is (E_mu[Phi] - alpha) over the gauge slope, with mu the
    /// equilibrium of the tilted operator, so each iterate costs one
    /// Perron solve instead of a bracketing line search.
    fn legendre_2d(
        &self,
        alpha: &[f64],
        start: &[f64],
        tol: f64,
        scratch: &mut SolveScratch,
    ) -> Result<LegendrePoint> {
        if self
            .phi
            .components()
            .iter()
            .any(|c| matches!(c, ScalarPotential::Cocycle(_)))
        {
            return self.legendre_2d_marches(alpha, start, tol, scratch);
        }
        let const_abs = match self.metric.psi() {
            ScalarPotential::KStep(p) if p.is_constant() => Some(p.max_value().abs()),
            _ => None,
        };
        let gtol = tol * self.metric.psi_max().abs();
        let cap = self.opts.z_cap;
        let spectral = &self.opts.spectral;
        let eval = |z: &[f64; 2], scratch: &mut SolveScratch| -> Result<(f64, [f64; 2])> {
            let shift = Spectrum::alpha_shift(z, alpha);
            let (tau, avg) = match const_abs {
                Some(wc) => {
                    let (p0, avg) = self.tm.equilibrium_slot_averages(
                        &self.joint_coeffs(z, 0.0),
                        shift,
                        spectral,
                        Some(&mut scratch.right),
                        Some(&mut scratch.left),
                    )?;
                    (p0 / wc, avg)
                }
                None => {
                    let t = self.tau_warm(z, alpha, &mut scratch.right)?;
                    let (_, avg) = self.tm.equilibrium_slot_averages(
                        &self.joint_coeffs(z, t),
                        shift,
                        spectral,
                        Some(&mut scratch.right),
                        Some(&mut scratch.left),
                    )?;
                    (t, avg)
                }
            };
            Ok((tau, [avg[0] - alpha[0], avg[1] - alpha[1]]))
        };

        let mut z = [start[0].clamp(-cap, cap), start[1].clamp(-cap, cap)];
        let (mut tau, mut g) = eval(&z, scratch)?;
        let mut best = (tau, z);
        let mut jac = [[0.0f64; 2]; 2];
        let mut have_jac = false;
        let mut refreshed = false;
        let mut boundary = false;
        let mut evals = 1usize;
        'outer: while evals < 100 {
            if g[0].abs().max(g[1].abs()) <= gtol {
                break;
            }
            if !have_jac {
                let h = 1e-4 * (1.0 + z[0].abs().max(z[1].abs()));
                for i in 0..2 {
                    let mut done = false;
                    for dir in [h, -h] {
                        let mut zp = z;
                        zp[i] += dir;
                        evals += 1;
                        if let Ok((tp, gp)) = eval(&zp, scratch) {
                            if tp < best.0 {
                                best = (tp, zp);
                            }
                            jac[0][i] = (gp[0] - g[0]) / dir;
                            jac[1][i] = (gp[1] - g[1]) / dir;
                            done = true;
                            break;
                        }
                    }
                    if !done {
                        break 'outer;
                    }
                }
                have_jac = true;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            let jscale = jac.iter().flatten().map(|x| x.abs()).fold(0.0f64, f64::max);
            let mut s = if det.abs() > 1e-14 * (1.0 + jscale * jscale) {
                [
                    (-g[0] * jac[1][1] + g[1] * jac[0][1]) / det,
                    (-g[1] * jac[0][0] + g[0] * jac[1][0]) / det,
                ]
            } else {
                // covariance degenerated; fall back to a descent step
                let n = g[0].hypot(g[1]);
                [-g[0] / n, -g[1] / n]
            };
            let sn = s[0].abs().max(s[1].abs());
            if sn > 8.0 {
                s[0] *= 8.0 / sn;
                s[1] *= 8.0 / sn;
            }
            let g0n = g[0].abs().max(g[1].abs());
            let mut accepted = false;
            for _ in 0..7 {
                let z2 = [(z[0] + s[0]).clamp(-cap, cap), (z[1] + s[1]).clamp(-cap, cap)];
                evals += 1;
                match eval(&z2, scratch) {
                    Ok((t2, g2)) => {
                        let g2n = g2[0].abs().max(g2[1].abs());
                        if g2n < g0n {
                            let ds = [z2[0] - z[0], z2[1] - z[1]];
                            let ds2 = ds[0] * ds[0] + ds[1] * ds[1];
                            if ds2 > 0.0 {
                                let y = [g2[0] - g[0], g2[1] - g[1]];
                                let bs = [
                                    jac[0][0] * ds[0] + jac[0][1] * ds[1],
                                    jac[1][0] * ds[0] + jac[1][1] * ds[1],
                                ];
                                for r in 0..2 {
                                    for c in 0..2 {
                                        jac[r][c] += (y[r] - bs[r]) * ds[c] / ds2;
                                    }
                                }
                            }
                            if z2[0].abs() >= cap - 1e-9 || z2[1].abs() >= cap - 1e-9 {
                                boundary = true;
                            }
                            z = z2;
                            g = g2;
                            tau = t2;
                            if t2 < best.0 {
                                best = (t2, z2);
                            }
                            accepted = true;
                            break;
                        }
                    }
                    Err(_) => {}
                }
                s[0] *= 0.5;
                s[1] *= 0.5;
            }
            if boundary {
                break;
            }
            if !accepted {
                if refreshed {
                    break;
                }
                refreshed = true;
                have_jac = false;
            } else {
                refreshed = false;
            }
        }
        let _ = tau;
        Ok(LegendrePoint {
            alpha: alpha.to_vec(),
            tau_star: best.0,
            z_star: best.1.to_vec(),
            boundary,
        })
    }

    /// Coordinate-wise golden-section cycles for bundles with cocycle
    /// components, where equilibrium gradients are unavailable. Convexity
    /// of z -> tau makes the alternating line minimum converge.
    fn legendre_2d_marches(
        &self,
        alpha: &[f64],
        start: &[f64],
        tol: f64,
        scratch: &mut SolveScratch,
    ) -> Result<LegendrePoint> {
        let warm = &mut scratch.right;
        let mut err = None;
        let mut z = [start[0], start[1]];
        let mut fcur = {
            let t = self.tau_warm(&z, alpha, warm);
            match t {
                Ok(v) => v,
                Err(e) => return Err(e),
            }
        };
        let mut boundary = false;
        let mut fprev = fcur;
        for _cycle in 0..60 {
            let mut moved = 0.0f64;
            for i in 0..2 {
                let frozen = z;
                let mut g = |t: f64| {
                    let mut p = frozen;
                    p[i] = t;
                    match self.tau_warm(&p, alpha, warm) {
                        Ok(v) => v,
                        Err(e) => {
                            err = Some(e);
                            f64::NAN
                        }
                    }
                };
                let (t, ft, hit) = line_min(&mut g, z[i], self.opts.z_cap, tol);
                if err.is_some() {
                    break;
                }
                moved = moved.max((t - z[i]).abs());
                z[i] = t;
                fcur = ft;
                boundary |= hit;
            }
            // alternating minimization converges linearly in the argument
            // but much faster in value; a value plateau ends the search
            let flat = (fprev - fcur).abs() <= 1e-13 * (1.0 + fcur.abs());
            fprev = fcur;
            if err.is_some() || boundary || moved < tol || flat {
                break;
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(LegendrePoint {
            alpha: alpha.to_vec(),
            tau_star: fcur,
            z_star: z.to_vec(),
            boundary,
        })
    }

    /// Equilibrium summary for an attained spectrum point.
    fn witness(&self, lp: &LegendrePoint) -> Result<Witness> {
        let coeffs = self.joint_coeffs(&lp.z_star, lp.tau_star);
        let shift = Spectrum::alpha_shift(&lp.z_star, &lp.alpha);
        let (mu, _) = measures::equilibrium_from_transfer(&self.tm, &coeffs, shift)?;
        let mut phi_avg = Vec::with_capacity(self.d);
        for comp in self.phi.components() {
            phi_avg.push(mu.potential_average(comp)?);
        }
        Ok(Witness {
            entropy: mu.entropy(),
            psi_avg: mu.potential_average(self.metric.psi())?,
            phi_avg,
        })
    }

    /// Full spectrum curve over a deterministic grid of the rotation set.
    pub fn curve(&self) -> Result<SpectrumCurve> {
        let l_phi = self.l_phi()?;
        let d_psi = self.d_psi()?;
        let alphas: Vec<Vec<f64>> = match &l_phi {
            LPhi::Interval { lo, hi, .. } => {
                if hi - lo <= 1e-11 * (1.0 + lo.abs()) {
                    vec![vec![0.5 * (lo + hi)]]
                } else {
                    let g = self.opts.grid_1d.max(2);
                    (0..g)
                        .map(|i| vec![lo + (hi - lo) * i as f64 / (g - 1) as f64])
                        .collect()
                }
            }
            LPhi::Polygon { hull, .. } => {
                if hull.len() < 3 {
                    return Err(Error::NotFullDimensional {
                        rank: hull.len().saturating_sub(1),
                        d: self.d,
                    });
                }
                let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
                for &(x, y) in hull {
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
                let g = self.opts.grid_2d.max(2);
                let mut pts = Vec::new();
                for i in 0..g {
                    for j in 0..g {
                        let a = (
                            x0 + (x1 - x0) * i as f64 / (g - 1) as f64,
                            y0 + (y1 - y0) * j as f64 / (g - 1) as f64,
                        );
                        if optim::hull_signed_distance(hull, a) <= 1e-9 {
                            pts.push(vec![a.0, a.1]);
                        }
                    }
                }
                pts
            }
        };
        let solved = exec::map_items(self.opts.exec, &alphas, |alpha| -> Result<SpectrumPoint> {
            let lp = self.legendre(alpha)?;
            let witness = if lp.boundary {
                None
            } else {
                Some(self.witness(&lp)?)
            };
            Ok(SpectrumPoint {
                alpha: lp.alpha,
                tau_star: lp.tau_star,
                z_star: lp.z_star,
                boundary: lp.boundary,
                witness,
            })
        });
        let mut points = Vec::with_capacity(solved.len());
        for p in solved {
            points.push(p?);
        }
        Ok(SpectrumCurve {
            d: self.d,
            points,
            l_phi,
            d_psi,
        })
    }

    /// f(alpha, n, eps): how many radius-e^{-n} balls contain a point whose
    /// length-normalized Birkhoff box comes eps-close to alpha.
    pub fn ld_count(&self, alpha: &[f64], n: usize, eps: f64) -> Result<u64> {
        if alpha.len() != self.d {
            return Err(Error::DimensionUnsupported { d: alpha.len() });
        }
        if n == 0 {
            return Ok(1);
        }
        let mut tables = Vec::with_capacity(self.d + 1);
        for i in 0..=self.d {
            tables.push(self.tm.cylinder_table(&self.unit_coeffs(i), 0.0)?);
        }
        let scan = BallScan {
            tables: &tables,
            gauge: self.d,
            n,
            cap: self.opts.ball_cap,
        };
        let d = self.d;
        let (hits, _) = scan.run(
            self.opts.exec,
            || 0u64,
            |acc, w, ranges| {
                let len = w.len() as f64;
                let mut dist2 = 0.0;
                for i in 0..d {
                    let (lo, hi) = ranges[i];
                    let gap = (lo / len - alpha[i]).max(alpha[i] - hi / len).max(0.0);
                    dist2 += gap * gap;
                }
                if dist2.sqrt() < eps {
                    *acc += 1;
                }
            },
            |a, b| a + b,
        )?;
        Ok(hits)
    }

    /// Large-deviation table over a grid of resolutions and tolerances.
    pub fn lambda_estimate(
        &self,
        alpha: &[f64],
        ns: &[usize],
        epss: &[f64],
    ) -> Result<LambdaTable> {
        let mut rows = Vec::with_capacity(ns.len() * epss.len());
        for &n in ns {
            for &eps in epss {
                let count = self.ld_count(alpha, n, eps)?;
                let value = if count == 0 {
                    f64::NEG_INFINITY
                } else {
                    (count as f64).ln() / n as f64
                };
                rows.push(LambdaRow {
                    n,
                    eps,
                    count,
                    value,
                });
            }
        }
        let extrapolated = {
            let eps_min = epss.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut at_min: Vec<&LambdaRow> = rows
                .iter()
                .filter(|r| r.eps == eps_min && r.count > 0)
                .collect();
            at_min.sort_by_key(|r| r.n);
            match at_min.len() {
                0 => f64::NEG_INFINITY,
                1 => at_min[0].value,
                l => {
                    let (a, b) = (at_min[l - 2], at_min[l - 1]);
                    ((b.count as f64).ln() - (a.count as f64).ln()) / (b.n - a.n) as f64
                }
            }
        };
        Ok(LambdaTable { rows, extrapolated })
    }

    /// The rotation set L_Phi, cached after the first call.
    pub fn l_phi(&self) -> Result<LPhi> {
        self.lphi.get_or_init(|| self.compute_l_phi()).clone()
    }

    fn compute_l_phi(&self) -> Result<LPhi> {
        if self.d == 1 {
            let comp = self.phi.component(0);
            let nv = self.tm.num_states() as u64;
            let ne = self.tm.num_edges() as u64;
            let karp_ok = matches!(comp, ScalarPotential::KStep(_))
                && nv * (nv + 1) <= 4_000_000
                && nv * ne <= 200_000_000;
            if karp_ok {
                let table = self.tm.cylinder_table(&self.unit_coeffs(0), 0.0)?;
                let g = MeanCycleGraph {
                    nv: self.tm.num_states(),
                    row_ptr: self.tm.row_ptr.clone(),
                    tgt: self.tm.tgt.clone(),
                };
                let (hi, _) = optim::max_cycle_mean(&g, &table.values);
                let (lo, _) = optim::min_cycle_mean(&g, &table.values);
                return Ok(LPhi::Interval {
                    lo,
                    hi,
                    approximate: false,
                });
            }
            let pts = self.sampled_averages()?;
            let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            return Ok(LPhi::Interval {
                lo,
                hi,
                approximate: true,
            });
        }
        let pts = self.sampled_averages()?;
        let mut hull = optim::convex_hull(
            &pts.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>(),
        );
        if hull.len() >= 3 {
            // collapse slivers: averages that are affinely dependent up to
            // roundoff should read as a segment, not a thin polygon
            let scale = hull
                .iter()
                .map(|&(x, y)| x.abs().max(y.abs()))
                .fold(0.0, f64::max);
            let (mut p, mut q, mut best) = (hull[0], hull[0], -1.0);
            for &u in &hull {
                for &v in &hull {
                    let d2 = (u.0 - v.0).powi(2) + (u.1 - v.1).powi(2);
                    if d2 > best {
                        best = d2;
                        p = u;
                        q = v;
                    }
                }
            }
            let len = best.sqrt();
            let thick = hull
                .iter()
                .map(|&(x, y)| {
                    ((q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0)).abs()
                })
                .fold(0.0, f64::max)
                / len.max(1e-300);
            if thick <= 1e-9 * (1.0 + scale) {
                hull = vec![p, q];
            }
        }
        Ok(LPhi::Polygon {
            hull,
            approximate: true,
        })
    }

    /// Cycle averages for every short cyclically admissible word, plus
    /// random Markov measures when the graph is small enough.
    fn sampled_averages(&self) -> Result<Vec<Vec<f64>>> {
        let mut pts = Vec::new();
        let m = self.sft.alphabet_size() as u64;
        let mut len_cap = 1usize;
        let mut total = m;
        while len_cap < 24 && total.saturating_mul(m) <= 200_000 {
            len_cap += 1;
            total = total.saturating_mul(m);
        }
        for len in 1..=len_cap {
            self.sft.for_each_word(len, |w| {
                if let Some(avg) = measures::cycle_average(&self.sft, &self.phi, w) {
                    pts.push(avg);
                }
            });
        }
        let all_kstep = self
            .phi
            .components()
            .iter()
            .all(|c| matches!(c, ScalarPotential::KStep(_)));
        let order = self.phi.window().max(1);
        if all_kstep && order <= 6 {
            let mut rng = ChaCha20Rng::seed_from_u64(self.opts.seed);
            for _ in 0..self.opts.samples {
                let mu = MarkovMeasure::random(&self.sft, order, &mut rng)?;
                pts.push(mu.bundle_average(&self.phi)?);
            }
        }
        Ok(pts)
    }

    /// Dimension of the localized level set: the sup of tau* over the
    /// range of a k-step target function xi.
    ///
    /// A k-step table takes finitely many values, so by default the sup
    /// runs over that value set; `interval_valued` additionally maximizes
    /// over the full interval [min xi, max xi].
    pub fn localized_dimension(&self, xi: &ScalarPotential, interval_valued: bool) -> Result<f64> {
        if self.d != 1 {
            return Err(Error::DimensionUnsupported { d: self.d });
        }
        let ScalarPotential::KStep(p) = xi else {
            return Err(Error::InvalidPotential {
                reason: "localized targets must be k-step tables".into(),
            });
        };
        let (xlo, xhi) = (p.min_value(), p.max_value());
        let LPhi::Interval { lo, hi, .. } = self.l_phi()? else {
            unreachable!("d = 1 rotation sets are intervals");
        };
        let infl = self.inflation();
        if xlo < lo - infl || xhi > hi + infl {
            return Err(Error::RangeEscapesLPhi {
                lo: vec![xlo],
                hi: vec![xhi],
            });
        }
        let mut values: Vec<f64> = p.values().to_vec();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite xi values"));
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        let mut best = f64::NEG_INFINITY;
        for v in &values {
            best = best.max(self.legendre(&[*v])?.tau_star);
        }
        if interval_valued && xhi - xlo > 1e-12 {
            let mut err = None;
            let mut g = |a: f64| match self.legendre(&[a]) {
                Ok(lp) => -lp.tau_star,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            };
            let step = self.opts.min_tol * (1.0 + (xhi - xlo));
            let (_, neg) = optim::golden_min(&mut g, xlo, xhi, step, 300);
            if let Some(e) = err {
                return Err(e);
            }
            best = best.max(-neg);
        }
        Ok(best)
    }
}

/// Convex line minimization with geometric bracket growth and a hard cap.
/// Returns (argmin, min, hit_cap); NAN values from the callback fall
/// through and are resolved by the caller's error channel.
fn line_min(
    g: &mut impl FnMut(f64) -> f64,
    start: f64,
    cap: f64,
    tol: f64,
) -> (f64, f64, bool) {
    let mut a = (start - 1.0).max(-cap);
    let mut m = start;
    let mut b = (start + 1.0).min(cap);
    let mut fa = g(a);
    let mut fm = g(m);
    let mut fb = g(b);
    for _ in 0..200 {
        if fa.is_nan() || fm.is_nan() || fb.is_nan() {
            break;
        }
        // improvements below the spectral noise floor mean the function
        // has flattened out (an unattained infimum), not a real descent
        let imp = 1e-12 * (1.0 + fm.abs());
        if fa < fm - imp {
            if a <= -cap {
                return (a, fa, true);
            }
            let span = 2.0 * (m - a);
            b = m;
            fb = fm;
            m = a;
            fm = fa;
            a = (m - span).max(-cap);
            fa = g(a);
        } else if fb < fm - imp {
            if b >= cap {
                return (b, fb, true);
            }
            let span = 2.0 * (b - m);
            a = m;
            fa = fm;
            m = b;
            fm = fb;
            b = (m + span).min(cap);
            fb = g(b);
        } else {
            break;
        }
    }
    let (x, fx) = optim::golden_min(|t| g(t), a, b, tol, 400);
    if fm < fx {
        (m, fm, false)
    } else {
        (x, fx, false)
    }
}
