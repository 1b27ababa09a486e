//! Runtime invariant battery behind the command-line `check` subcommand.
//!
//! Every check re-verifies one structural identity of a configured system:
//! counting recurrences on the shift, almost-additivity of the potential,
//! ball-family covers of the metric, the variational principle, Legendre
//! duality of the spectrum, and the coding recursion of self-similar sets.
//! Outcomes carry a suite tag, a pass flag and a short numeric detail.
//! Checks that would enumerate past their size budgets are reported as
//! skipped rather than failed, so the battery stays usable on systems of
//! any size.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::SelfSimilarIfs;
use crate::measures::{
    conditional_variational, equilibrium_from_transfer, equilibrium_state, MarkovMeasure,
};
use crate::metric::WeakGibbsMetric;
use crate::potential::ScalarPotential;
use crate::pressure::{pressure_bracket, pressure_exact};
use crate::sft::Sft;
use crate::spectrum::{LPhi, Spectrum};

/// Exhaustive word scans stop once the count would pass this.
const WORD_BUDGET: u128 = 1_000_000;
/// Ball families finer than this are skipped, not failed.
const BALL_BUDGET: u64 = 2_000_000;

/// Result of one invariant check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub skipped: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(suite: &'static str, name: &'static str, detail: String) -> Self {
        CheckOutcome {
            suite,
            name,
            passed: true,
            skipped: false,
            detail,
        }
    }

    fn fail(suite: &'static str, name: &'static str, detail: String) -> Self {
        CheckOutcome {
            suite,
            name,
            passed: false,
            skipped: false,
            detail,
        }
    }

    fn skip(suite: &'static str, name: &'static str, detail: String) -> Self {
        CheckOutcome {
            suite,
            name,
            passed: true,
            skipped: true,
            detail,
        }
    }

    pub fn status(&self) -> &'static str {
        if !self.passed {
            "FAIL"
        } else if self.skipped {
            "SKIP"
        } else {
            "PASS"
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: {}",
            self.status(),
            self.suite,
            self.name,
            self.detail
        )
    }
}

fn wrap(suite: &'static str, name: &'static str, r: Result<CheckOutcome>) -> CheckOutcome {
    match r {
        Ok(o) => o,
        Err(Error::EnumerationCap { .. }) | Err(Error::ResolutionTooFine { .. }) => {
            CheckOutcome::skip(suite, name, "system too large for this check".into())
        }
        Err(e) => CheckOutcome::fail(suite, name, e.to_string()),
    }
}

/// Runs every suite against one configured symbolic system.
pub fn check_system(spectrum: &Spectrum, seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.extend(sft_suite(spectrum.sft()));
    out.extend(potential_suite(spectrum, seed));
    out.extend(metric_suite(spectrum.sft(), spectrum.metric()));
    out.extend(pressure_suite(spectrum, seed));
    out.extend(spectrum_suite(spectrum, seed));
    out.extend(measures_suite(spectrum, seed));
    out
}

/// Runs the geometric suite against one iterated function system.
pub fn check_ifs(ifs: &SelfSimilarIfs, k: usize, seed: u64) -> Vec<CheckOutcome> {
    // Transfer states grow like m^(k-1); clamp the coding depth so the
    // battery stays interactive on large map families.
    let m = ifs.len() as u128;
    let mut k_eff = k.max(2);
    while k_eff > 2 && m.pow(k_eff as u32 - 1) > 300_000 {
        k_eff -= 1;
    }
    vec![
        wrap("geometry", "coding-recursion", coding_recursion(ifs, seed)),
        wrap(
            "geometry",
            "attractor-dimension",
            attractor_dimension(ifs, k_eff, seed),
        ),
        wrap("geometry", "symmetry-orbit", symmetry_orbit(ifs, k_eff)),
        wrap("geometry", "product-rule", product_rule(ifs, k_eff)),
    ]
}

// ---------------------------------------------------------------- sft

fn sft_suite(sft: &Sft) -> Vec<CheckOutcome> {
    vec![
        wrap("sft", "count-recurrence", count_recurrence(sft)),
        wrap("sft", "factor-closure", factor_closure(sft)),
    ]
}

fn count_recurrence(sft: &Sft) -> Result<CheckOutcome> {
    let mut top = 0;
    for n in 1..=10 {
        if sft.word_count(n) > WORD_BUDGET {
            break;
        }
        let mut brute: u128 = 0;
        sft.for_each_word(n, |_| brute += 1);
        if brute != sft.word_count(n) {
            return Ok(CheckOutcome::fail(
                "sft",
                "count-recurrence",
                format!("n = {n}: matrix count {} vs brute {brute}", sft.word_count(n)),
            ));
        }
        top = n;
    }
    if top == 0 {
        return Ok(CheckOutcome::skip(
            "sft",
            "count-recurrence",
            "alphabet too large to enumerate".into(),
        ));
    }
    Ok(CheckOutcome::pass(
        "sft",
        "count-recurrence",
        format!("matrix counts match brute force for n <= {top}"),
    ))
}

fn factor_closure(sft: &Sft) -> Result<CheckOutcome> {
    let mut top = 0;
    for n in 1..=8 {
        if sft.word_count(n + 1) > WORD_BUDGET {
            break;
        }
        let mut bad = 0u64;
        sft.for_each_word(n + 1, |w| {
            if !sft.admissible(&w[..n]) || !sft.admissible(&w[1..]) {
                bad += 1;
            }
        });
        if bad > 0 {
            return Ok(CheckOutcome::fail(
                "sft",
                "factor-closure",
                format!("{bad} words of length {} with inadmissible factors", n + 1),
            ));
        }
        top = n;
    }
    if top == 0 {
        return Ok(CheckOutcome::skip(
            "sft",
            "factor-closure",
            "alphabet too large to enumerate".into(),
        ));
    }
    Ok(CheckOutcome::pass(
        "sft",
        "factor-closure",
        format!("prefixes and suffixes admissible up to length {}", top + 1),
    ))
}

// ---------------------------------------------------------- potential

/// All scalar generators of the system, labelled for failure reports.
fn labelled_scalars(spectrum: &Spectrum) -> Vec<(String, ScalarPotential)> {
    let mut v: Vec<(String, ScalarPotential)> = spectrum
        .potential()
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("phi[{i}]"), c.clone()))
        .collect();
    v.push(("psi".into(), spectrum.metric().psi().clone()));
    v
}

fn potential_suite(spectrum: &Spectrum, seed: u64) -> Vec<CheckOutcome> {
    let sft = spectrum.sft();
    let pots = labelled_scalars(spectrum);
    vec![
        wrap(
            "potential",
            "almost-additivity",
            almost_additivity(sft, &pots, seed),
        ),
        wrap(
            "potential",
            "birkhoff-envelope",
            birkhoff_envelope(sft, &pots, seed),
        ),
        wrap("potential", "product-bound", product_bound(sft, &pots, seed)),
        wrap(
            "potential",
            "sup-weight-extension",
            sup_weight_extension(sft, &pots, seed),
        ),
        wrap("potential", "seminorm-doubling", seminorm_doubling(sft, &pots)),
    ]
}

/// phi_n at the point coded by `word`, starting at offset `from`. The word
/// must carry window - 1 extra symbols past the last summand.
fn pointwise(pot: &ScalarPotential, sft: &Sft, word: &[u8], from: usize, n: usize) -> Option<f64> {
    match pot {
        ScalarPotential::KStep(p) => {
            let k = p.k();
            let mut acc = 0.0;
            for t in 0..n {
                acc += p.value_of(sft, &word[from + t..from + t + k])?;
            }
            Some(acc)
        }
        ScalarPotential::Cocycle(c) => Some(c.log_norm(&word[from..from + n])),
    }
}

fn almost_additivity(
    sft: &Sft,
    pots: &[(String, ScalarPotential)],
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xA1);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10usize);
        let p = rng.gen_range(1..=10usize);
        for (label, pot) in pots {
            let win = pot.window();
            let w = random_word(sft, n + p + win - 1, &mut rng);
            let whole = pointwise(pot, sft, &w, 0, n + p);
            let head = pointwise(pot, sft, &w, 0, n);
            let tail = pointwise(pot, sft, &w, n, p);
            let (Some(a), Some(b), Some(c)) = (whole, head, tail) else {
                return Ok(CheckOutcome::fail(
                    "potential",
                    "almost-additivity",
                    format!("{label}: table lookup failed on an admissible word"),
                ));
            };
            let margin = (a - b - c).abs() - pot.additivity_constant();
            if margin > worst {
                worst = margin;
            }
            if margin > 1e-12 {
                return Ok(CheckOutcome::fail(
                    "potential",
                    "almost-additivity",
                    format!("{label}: |phi_(n+p) - phi_n - phi_p| exceeds C by {margin:.3e}"),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "potential",
        "almost-additivity",
        format!("1000 random triples, worst slack over C = {worst:.3e}"),
    ))
}

fn birkhoff_envelope(
    sft: &Sft,
    pots: &[(String, ScalarPotential)],
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xB2);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = rng.gen_range(2..=12usize);
        let w = random_word(sft, n, &mut rng);
        for (label, pot) in pots {
            let (lo, hi) = pot.birkhoff_range(sft, &w)?;
            let under = n as f64 * pot.phi_min() - lo;
            let over = hi - n as f64 * pot.phi_max();
            let margin = under.max(over);
            if margin > worst {
                worst = margin;
            }
            if margin > 1e-9 {
                return Ok(CheckOutcome::fail(
                    "potential",
                    "birkhoff-envelope",
                    format!("{label}: cylinder range escapes [n phi_min, n phi_max] by {margin:.3e}"),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "potential",
        "birkhoff-envelope",
        format!("200 random cylinders inside the growth envelope, margin {worst:.3e}"),
    ))
}

fn product_bound(
    sft: &Sft,
    pots: &[(String, ScalarPotential)],
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xC3);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..500 {
        let n = rng.gen_range(1..=8usize);
        let p = rng.gen_range(1..=8usize);
        let w = random_word(sft, n + p, &mut rng);
        for (label, pot) in pots {
            // k-step sup weights pick up an extra boundary window on top of
            // the almost-additivity constant.
            let osc = (pot.window() - 1) as f64 * (pot.phi1_max() - pot.phi1_min());
            let allowed = pot.additivity_constant() + osc + 1e-12;
            let s_uv = pot.sup_weight_log(sft, &w)?;
            let s_u = pot.sup_weight_log(sft, &w[..n])?;
            let s_v = pot.sup_weight_log(sft, &w[n..])?;
            let margin = (s_uv - s_u - s_v).abs() - allowed;
            if margin > worst {
                worst = margin;
            }
            if margin > 0.0 {
                return Ok(CheckOutcome::fail(
                    "potential",
                    "product-bound",
                    format!("{label}: |Phi[uv]/(Phi[u]Phi[v])| off by e^{margin:.3e}"),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "potential",
        "product-bound",
        format!("500 random splits two-sided bounded, margin {worst:.3e}"),
    ))
}

fn sup_weight_extension(
    sft: &Sft,
    pots: &[(String, ScalarPotential)],
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xD4);
    let negative: Vec<&(String, ScalarPotential)> =
        pots.iter().filter(|(_, p)| p.phi_max() < 0.0).collect();
    if negative.is_empty() {
        return Ok(CheckOutcome::skip(
            "potential",
            "sup-weight-extension",
            "no negative generator in this system".into(),
        ));
    }
    let m = sft.alphabet_size() as u8;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = rng.gen_range(1..=10usize);
        let mut w = random_word(sft, n, &mut rng);
        for (label, pot) in &negative {
            let base = pot.sup_weight_log(sft, &w)?;
            let last = w[n - 1];
            for a in 0..m {
                if !sft.edge(last, a) {
                    continue;
                }
                w.push(a);
                let ext = pot.sup_weight_log(sft, &w)?;
                w.pop();
                let margin = ext - base;
                if margin > worst {
                    worst = margin;
                }
                if margin > 1e-12 {
                    return Ok(CheckOutcome::fail(
                        "potential",
                        "sup-weight-extension",
                        format!("{label}: weight grew by {margin:.3e} under extension"),
                    ));
                }
            }
        }
    }
    let names: Vec<&str> = negative.iter().map(|(l, _)| l.as_str()).collect();
    Ok(CheckOutcome::pass(
        "potential",
        "sup-weight-extension",
        format!("{} nonincreasing, worst step {worst:.3e}", names.join(", ")),
    ))
}

fn seminorm_doubling(sft: &Sft, pots: &[(String, ScalarPotential)]) -> Result<CheckOutcome> {
    // sup |phi_n| over all n-cylinders, by enumeration.
    let norm_at = |pot: &ScalarPotential, n: usize| -> Result<f64> {
        let mut top: f64 = 0.0;
        let mut err = None;
        sft.for_each_word(n, |w| {
            if err.is_some() {
                return;
            }
            match pot.birkhoff_range(sft, w) {
                Ok((lo, hi)) => top = top.max(lo.abs()).max(hi.abs()),
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(top),
        }
    };
    let mut pairs = Vec::new();
    for n in [2usize, 4, 8] {
        if sft.word_count(2 * n) <= 20_000 {
            pairs.push(n);
        }
    }
    if pairs.is_empty() {
        return Ok(CheckOutcome::skip(
            "potential",
            "seminorm-doubling",
            "doubling ladder exceeds the enumeration budget".into(),
        ));
    }
    let mut detail = String::new();
    for (label, pot) in pots {
        for &n in &pairs {
            let a = norm_at(pot, n)? / n as f64;
            let b = norm_at(pot, 2 * n)? / (2 * n) as f64;
            // subadditivity up to C charges the junction once per doubling
            let allowed = pot.additivity_constant() / (2 * n) as f64 + 1e-9;
            if b > a + allowed {
                return Ok(CheckOutcome::fail(
                    "potential",
                    "seminorm-doubling",
                    format!("{label}: |phi|_{}/{} = {b:.6} above |phi|_{n}/{n} = {a:.6}", 2 * n, 2 * n),
                ));
            }
        }
        detail = format!("per-step norms nonincreasing on n in {pairs:?} doublings");
    }
    Ok(CheckOutcome::pass("potential", "seminorm-doubling", detail))
}

// ------------------------------------------------------------- metric

fn metric_suite(sft: &Sft, metric: &WeakGibbsMetric) -> Vec<CheckOutcome> {
    let mut fams = Vec::new();
    let mut capped = false;
    for n in 1..=8usize {
        match metric.ball_family_with(sft, n, Exec::default(), BALL_BUDGET) {
            Ok(f) => fams.push(f),
            Err(Error::ResolutionTooFine { .. }) | Err(Error::EnumerationCap { .. }) => {
                capped = true;
                break;
            }
            Err(e) => {
                return vec![CheckOutcome::fail(
                    "metric",
                    "ball-cover",
                    e.to_string(),
                )]
            }
        }
    }
    if fams.is_empty() {
        let why = if capped {
            "coarsest family already over budget"
        } else {
            "no families computed"
        };
        return vec![CheckOutcome::skip("metric", "ball-cover", why.into())];
    }
    vec![
        wrap("metric", "ball-cover", ball_cover(sft, &fams)),
        wrap("metric", "ball-refinement", ball_refinement(&fams)),
        wrap("metric", "ball-word-length", ball_word_length(metric, &fams)),
        wrap("metric", "moran-lower-bound", moran_lower(sft, metric, &fams)),
    ]
}

fn ball_cover(sft: &Sft, fams: &[crate::metric::BallFamily]) -> Result<CheckOutcome> {
    let parry = MarkovMeasure::parry(sft)?;
    let mut worst: f64 = 0.0;
    for fam in fams {
        let total: f64 = fam.iter().map(|w| parry.cylinder_log_mass(w).exp()).sum();
        let err = (total - 1.0).abs();
        if err > worst {
            worst = err;
        }
        if err > 1e-9 {
            return Ok(CheckOutcome::fail(
                "metric",
                "ball-cover",
                format!("Parry mass of B_{} sums to {total:.12}", fam.resolution()),
            ));
        }
    }
    Ok(CheckOutcome::pass(
        "metric",
        "ball-cover",
        format!(
            "families up to n = {} cover with mass defect {worst:.3e}",
            fams.last().unwrap().resolution()
        ),
    ))
}

fn ball_refinement(fams: &[crate::metric::BallFamily]) -> Result<CheckOutcome> {
    for pair in fams.windows(2) {
        let coarse: HashSet<&[u8]> = pair[0].iter().collect();
        let lo = pair[0].min_word_len();
        let hi = pair[0].max_word_len();
        for w in pair[1].iter() {
            let mut hits = 0;
            for l in lo..=hi.min(w.len()) {
                if coarse.contains(&w[..l]) {
                    hits += 1;
                }
            }
            if hits != 1 {
                return Ok(CheckOutcome::fail(
                    "metric",
                    "ball-refinement",
                    format!(
                        "word in B_{} has {hits} ancestors in B_{}",
                        pair[1].resolution(),
                        pair[0].resolution()
                    ),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "metric",
        "ball-refinement",
        format!("unique coarse ancestor across {} consecutive pairs", fams.len() - 1),
    ))
}

fn ball_word_length(
    metric: &WeakGibbsMetric,
    fams: &[crate::metric::BallFamily],
) -> Result<CheckOutcome> {
    let c1 = metric.c1();
    let c2 = metric.c2();
    for fam in fams {
        let n = fam.resolution() as f64;
        for w in fam.iter() {
            let len = w.len() as f64;
            if len + 1e-9 < c1 * n || len > c2 * n + 1e-9 {
                return Ok(CheckOutcome::fail(
                    "metric",
                    "ball-word-length",
                    format!(
                        "length {len} outside [{:.3}, {:.3}] at n = {n}",
                        c1 * n,
                        c2 * n
                    ),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "metric",
        "ball-word-length",
        format!("all members within [C1 n, C2 n], C1 = {c1:.4}, C2 = {c2:.4}"),
    ))
}

fn moran_lower(
    sft: &Sft,
    metric: &WeakGibbsMetric,
    fams: &[crate::metric::BallFamily],
) -> Result<CheckOutcome> {
    let psi = metric.psi();
    // one extension step can lower the sup weight by at most this much
    let drop = psi.phi1_min()
        - psi.additivity_constant()
        - (psi.window() - 1) as f64 * (psi.phi1_max() - psi.phi1_min());
    let mut worst: f64 = f64::INFINITY;
    for fam in fams {
        let n = fam.resolution() as f64;
        for w in fam.iter() {
            let lw = metric.log_weight(sft, w)?;
            if lw > -n + 1e-12 {
                return Ok(CheckOutcome::fail(
                    "metric",
                    "moran-lower-bound",
                    format!("member of B_{n} has weight e^{lw:.6} above the radius"),
                ));
            }
            let slack = lw - (-n + drop);
            if slack < worst {
                worst = slack;
            }
            if slack < -1e-9 {
                return Ok(CheckOutcome::fail(
                    "metric",
                    "moran-lower-bound",
                    format!("member of B_{n} under the corrected floor by {:.3e}", -slack),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "metric",
        "moran-lower-bound",
        format!("weights in [e^(-n) e^({drop:.3}), e^(-n)], tightest slack {worst:.3e}"),
    ))
}

// ----------------------------------------------------------- pressure

fn has_cocycle(spectrum: &Spectrum) -> bool {
    spectrum
        .potential()
        .components()
        .iter()
        .chain(std::iter::once(spectrum.metric().psi()))
        .any(|c| matches!(c, ScalarPotential::Cocycle(_)))
}

fn pressure_suite(spectrum: &Spectrum, seed: u64) -> Vec<CheckOutcome> {
    vec![
        wrap(
            "pressure",
            "slope-containment",
            slope_containment(spectrum, seed),
        ),
        wrap(
            "pressure",
            "variational-principle",
            variational_principle(spectrum, seed),
        ),
        wrap(
            "pressure",
            "bracket-consistency",
            bracket_consistency(spectrum),
        ),
    ]
}

fn slope_containment(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    if has_cocycle(spectrum) {
        return Ok(CheckOutcome::skip(
            "pressure",
            "slope-containment",
            "spectral slopes need k-step generators; approximate cocycles first".into(),
        ));
    }
    let tm = spectrum.transfer();
    let d = spectrum.d();
    let opts = &spectrum.options().spectral;
    let lo = spectrum.metric().psi_min();
    let hi = spectrum.metric().psi_max();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x51);
    let mut coeffs = vec![1.0; d + 1];
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut tested = 0;
    while tested < 20 {
        let l1: f64 = rng.gen_range(-2.0..2.0);
        let l2: f64 = rng.gen_range(-2.0..2.0);
        if (l2 - l1).abs() < 0.05 {
            continue;
        }
        coeffs[d] = l1;
        let p1 = tm.log_spectral_radius(&coeffs, 0.0, opts, None)?.log_rho;
        coeffs[d] = l2;
        let p2 = tm.log_spectral_radius(&coeffs, 0.0, opts, None)?.log_rho;
        let slope = (p2 - p1) / (l2 - l1);
        let margin = (lo - slope).max(slope - hi);
        if margin > worst {
            worst = margin;
        }
        if margin > 1e-8 {
            return Ok(CheckOutcome::fail(
                "pressure",
                "slope-containment",
                format!("slope {slope:.6} escapes [{lo:.6}, {hi:.6}] by {margin:.3e}"),
            ));
        }
        tested += 1;
    }
    Ok(CheckOutcome::pass(
        "pressure",
        "slope-containment",
        format!("20 random secants inside [psi_min, psi_max], margin {worst:.3e}"),
    ))
}

fn variational_principle(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    if has_cocycle(spectrum) {
        return Ok(CheckOutcome::skip(
            "pressure",
            "variational-principle",
            "cocycle generators have no finite-order equilibrium".into(),
        ));
    }
    let sft = spectrum.sft();
    let bundle = spectrum.potential();
    let tm = spectrum.transfer();
    let d = spectrum.d();
    let mut coeffs = vec![1.0; d + 1];
    coeffs[d] = 0.0;
    let (mu, p) = equilibrium_from_transfer(tm, &coeffs, 0.0)?;
    let avg: f64 = mu.bundle_average(bundle)?.iter().sum();
    let gap = (mu.entropy() + avg - p).abs();
    if gap > 1e-9 {
        return Ok(CheckOutcome::fail(
            "pressure",
            "variational-principle",
            format!("equilibrium misses P by {gap:.3e}"),
        ));
    }
    let order = bundle.window().saturating_sub(1).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x52);
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..50 {
        let mm = MarkovMeasure::random(sft, order + (i % 2), &mut rng)?;
        let a: f64 = mm.bundle_average(bundle)?.iter().sum();
        let excess = mm.entropy() + a - p;
        if excess > worst {
            worst = excess;
        }
        if excess > 1e-9 {
            return Ok(CheckOutcome::fail(
                "pressure",
                "variational-principle",
                format!("random measure beats P by {excess:.3e}"),
            ));
        }
    }
    Ok(CheckOutcome::pass(
        "pressure",
        "variational-principle",
        format!("equilibrium within {gap:.3e}, best of 50 random measures {worst:.3e} under P"),
    ))
}

fn bracket_consistency(spectrum: &Spectrum) -> Result<CheckOutcome> {
    let sft = spectrum.sft();
    let opts = &spectrum.options().spectral;
    for (label, pot) in labelled_scalars(spectrum) {
        let b4 = pressure_bracket(sft, &pot, 4)?;
        let b8 = pressure_bracket(sft, &pot, 8)?;
        if b8.width() > b4.width() + 1e-9 {
            return Ok(CheckOutcome::fail(
                "pressure",
                "bracket-consistency",
                format!("{label}: width grew from {:.3e} to {:.3e}", b4.width(), b8.width()),
            ));
        }
        if b8.upper > b4.upper + 1e-9 {
            return Ok(CheckOutcome::fail(
                "pressure",
                "bracket-consistency",
                format!("{label}: Fekete upper bound increased with n"),
            ));
        }
        if let ScalarPotential::KStep(_) = pot {
            let p = pressure_exact(sft, &pot, opts)?.log_rho;
            for b in [&b4, &b8] {
                if p < b.lower - 1e-9 || p > b.upper + 1e-9 {
                    return Ok(CheckOutcome::fail(
                        "pressure",
                        "bracket-consistency",
                        format!(
                            "{label}: exact P = {p:.9} outside n = {} bracket [{:.9}, {:.9}]",
                            b.n, b.lower, b.upper
                        ),
                    ));
                }
            }
        }
    }
    Ok(CheckOutcome::pass(
        "pressure",
        "bracket-consistency",
        "brackets shrink with n and contain the spectral value".into(),
    ))
}

// ----------------------------------------------------------- spectrum

fn spectrum_suite(spectrum: &Spectrum, seed: u64) -> Vec<CheckOutcome> {
    if has_cocycle(spectrum) {
        return [
            "slope-control",
            "tau-convexity",
            "curve-dimension",
            "quasi-concavity",
            "duality-closure",
            "counting-consistency",
        ]
        .into_iter()
        .map(|name| {
            CheckOutcome::skip(
                "spectrum",
                name,
                "spectral solves need k-step generators; approximate cocycles first".into(),
            )
        })
        .collect();
    }
    let mut out = vec![
        wrap("spectrum", "slope-control", slope_control(spectrum, seed)),
        wrap("spectrum", "tau-convexity", tau_convexity(spectrum)),
    ];
    let curve = match spectrum.curve() {
        Ok(c) => c,
        Err(e) => {
            out.push(CheckOutcome::fail(
                "spectrum",
                "curve-dimension",
                e.to_string(),
            ));
            return out;
        }
    };
    out.push(wrap(
        "spectrum",
        "curve-dimension",
        curve_dimension(spectrum, &curve),
    ));
    out.push(wrap(
        "spectrum",
        "quasi-concavity",
        quasi_concavity(&curve),
    ));
    out.push(wrap(
        "spectrum",
        "duality-closure",
        duality_closure(spectrum, &curve),
    ));
    out.push(wrap(
        "spectrum",
        "counting-consistency",
        counting_consistency(spectrum, &curve),
    ));
    out
}

/// Per-component alpha sampling box, wide enough to leave the rotation set.
fn alpha_box(spectrum: &Spectrum) -> Vec<(f64, f64)> {
    spectrum
        .potential()
        .components()
        .iter()
        .map(|c| (c.phi1_min() - 0.5, c.phi1_max() + 0.5))
        .collect()
}

fn slope_control(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    let c1 = spectrum.metric().c1();
    let c2 = spectrum.metric().c2();
    let d = spectrum.d();
    let boxes = alpha_box(spectrum);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x61);
    let mut tested = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    while tested < 50 {
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a: Vec<f64> = boxes.iter().map(|&(l, h)| rng.gen_range(l..h)).collect();
        let b: Vec<f64> = boxes.iter().map(|&(l, h)| rng.gen_range(l..h)).collect();
        let gap: f64 = z.iter().zip(a.iter().zip(&b)).map(|(zi, (ai, bi))| zi * (bi - ai)).sum();
        if gap < 0.0 {
            continue;
        }
        let ta = spectrum.tau(&z, &a)?;
        let tb = spectrum.tau(&z, &b)?;
        let margin = (c1 * gap - (ta - tb)).max((ta - tb) - c2 * gap);
        if margin > worst {
            worst = margin;
        }
        if margin > 1e-6 {
            return Ok(CheckOutcome::fail(
                "spectrum",
                "slope-control",
                format!("tau drop {:.6} outside [{:.6}, {:.6}]", ta - tb, c1 * gap, c2 * gap),
            ));
        }
        tested += 1;
    }
    Ok(CheckOutcome::pass(
        "spectrum",
        "slope-control",
        format!("50 random level shifts slope-bounded, margin {worst:.3e}"),
    ))
}

fn tau_convexity(spectrum: &Spectrum) -> Result<CheckOutcome> {
    let d = spectrum.d();
    let boxes = alpha_box(spectrum);
    let alpha: Vec<f64> = boxes.iter().map(|&(l, h)| 0.5 * (l + h)).collect();
    let mut worst: f64 = f64::INFINITY;
    for axis in 0..d {
        let mut vals = Vec::with_capacity(9);
        for i in 0..9 {
            let mut z = vec![0.0; d];
            z[axis] = -2.0 + 0.5 * i as f64;
            vals.push(spectrum.tau(&z, &alpha)?);
        }
        for w in vals.windows(3) {
            let second = w[0] - 2.0 * w[1] + w[2];
            if second < worst {
                worst = second;
            }
            if second < -1e-8 {
                return Ok(CheckOutcome::fail(
                    "spectrum",
                    "tau-convexity",
                    format!("second difference {second:.3e} along axis {axis}"),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "spectrum",
        "tau-convexity",
        format!("grid second differences >= {worst:.3e}"),
    ))
}

fn curve_dimension(
    spectrum: &Spectrum,
    curve: &crate::spectrum::SpectrumCurve,
) -> Result<CheckOutcome> {
    let dpsi = curve.d_psi;
    let mut over: f64 = f64::NEG_INFINITY;
    for p in &curve.points {
        if p.tau_star - dpsi > over {
            over = p.tau_star - dpsi;
        }
    }
    if over > 1e-9 {
        return Ok(CheckOutcome::fail(
            "spectrum",
            "curve-dimension",
            format!("tau* exceeds D(psi) by {over:.3e}"),
        ));
    }
    let h = match spectrum.l_phi()? {
        LPhi::Interval { lo, hi, .. } => (hi - lo) / (spectrum.options().grid_1d - 1).max(1) as f64,
        LPhi::Polygon { hull, .. } => {
            let (mut w, mut hgt) = (0.0f64, 0.0f64);
            for a in &hull {
                for b in &hull {
                    w = w.max((a.0 - b.0).abs());
                    hgt = hgt.max((a.1 - b.1).abs());
                }
            }
            w.max(hgt) / (spectrum.options().grid_2d - 1).max(1) as f64
        }
    };
    let slack = (50.0 * h * h).max(1e-4);
    let deficit = dpsi - curve.max_tau();
    if deficit > slack {
        return Ok(CheckOutcome::fail(
            "spectrum",
            "curve-dimension",
            format!("grid peak misses D(psi) by {deficit:.3e} > slack {slack:.3e}"),
        ));
    }
    Ok(CheckOutcome::pass(
        "spectrum",
        "curve-dimension",
        format!("tau* <= D(psi) = {dpsi:.9}, grid peak within {deficit:.3e}"),
    ))
}

/// Quasi-concavity along one increasing-abscissa slice.
fn slice_quasi_concave(taus: &[f64]) -> Option<String> {
    for w in taus.windows(3) {
        if w[1] < w[0].min(w[2]) - 1e-6 {
            return Some(format!("interior dip {:.3e}", w[0].min(w[2]) - w[1]));
        }
    }
    let peak = taus
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?
        .0;
    for i in 1..=peak {
        if taus[i] < taus[i - 1] - 1e-6 {
            return Some(format!("drop of {:.3e} before the peak", taus[i - 1] - taus[i]));
        }
    }
    for i in peak..taus.len() - 1 {
        if taus[i + 1] > taus[i] + 1e-6 {
            return Some(format!("rise of {:.3e} after the peak", taus[i + 1] - taus[i]));
        }
    }
    None
}

fn quasi_concavity(curve: &crate::spectrum::SpectrumCurve) -> Result<CheckOutcome> {
    let mut slices: Vec<Vec<f64>> = Vec::new();
    if curve.d == 1 {
        slices.push(curve.points.iter().map(|p| p.tau_star).collect());
    } else {
        // slice through the grid peak, once per axis
        let peak = curve
            .points
            .iter()
            .max_by(|a, b| a.tau_star.partial_cmp(&b.tau_star).unwrap())
            .unwrap();
        for axis in 0..2 {
            let fixed = 1 - axis;
            let mut line: Vec<(f64, f64)> = curve
                .points
                .iter()
                .filter(|p| (p.alpha[fixed] - peak.alpha[fixed]).abs() < 1e-9)
                .map(|p| (p.alpha[axis], p.tau_star))
                .collect();
            line.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            if line.len() >= 5 {
                slices.push(line.into_iter().map(|(_, t)| t).collect());
            }
        }
    }
    if slices.is_empty() {
        return Ok(CheckOutcome::skip(
            "spectrum",
            "quasi-concavity",
            "no grid slice long enough through the peak".into(),
        ));
    }
    for taus in &slices {
        if let Some(why) = slice_quasi_concave(taus) {
            return Ok(CheckOutcome::fail("spectrum", "quasi-concavity", why));
        }
    }
    Ok(CheckOutcome::pass(
        "spectrum",
        "quasi-concavity",
        format!("unimodal along {} grid slice(s)", slices.len()),
    ))
}

/// Levels at least five percent of the rotation set's extent away from its
/// boundary. Witness accuracy degrades right at the edge, where the
/// Legendre minimizer needs very large tilts.
fn well_interior(spectrum: &Spectrum, alpha: &[f64]) -> Result<bool> {
    match spectrum.l_phi()? {
        LPhi::Interval { lo, hi, .. } => {
            let f = (alpha[0] - lo) / (hi - lo);
            Ok(f > 0.05 + 1e-9 && f < 0.95 - 1e-9)
        }
        LPhi::Polygon { hull, .. } => {
            let mut diag = 0.0f64;
            for a in &hull {
                for b in &hull {
                    diag = diag.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
                }
            }
            let sd = crate::optim::hull_signed_distance(&hull, (alpha[0], alpha[1]));
            Ok(sd <= -(0.05 + 1e-9) * diag)
        }
    }
}

fn duality_closure(
    spectrum: &Spectrum,
    curve: &crate::spectrum::SpectrumCurve,
) -> Result<CheckOutcome> {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for p in &curve.points {
        let Some(w) = &p.witness else { continue };
        if !well_interior(spectrum, &p.alpha)? {
            continue;
        }
        let avg_err = w
            .phi_avg
            .iter()
            .zip(&p.alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let dim_err = (w.entropy / (-w.psi_avg) - p.tau_star).abs();
        let err = avg_err.max(dim_err);
        if err > worst {
            worst = err;
        }
        if err > 1e-5 {
            return Ok(CheckOutcome::fail(
                "spectrum",
                "duality-closure",
                format!("witness at alpha {:?} off by {err:.3e}", p.alpha),
            ));
        }
        checked += 1;
    }
    if checked == 0 {
        return Ok(CheckOutcome::skip(
            "spectrum",
            "duality-closure",
            "no interior witnesses on the grid".into(),
        ));
    }
    Ok(CheckOutcome::pass(
        "spectrum",
        "duality-closure",
        format!("{checked} witnesses close the duality within {worst:.3e}"),
    ))
}

fn counting_consistency(
    spectrum: &Spectrum,
    curve: &crate::spectrum::SpectrumCurve,
) -> Result<CheckOutcome> {
    let n = 12usize;
    let span = match spectrum.l_phi()? {
        LPhi::Interval { lo, hi, .. } => hi - lo,
        LPhi::Polygon { hull, .. } => {
            let mut diag = 0.0f64;
            for a in &hull {
                for b in &hull {
                    diag = diag.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
                }
            }
            diag
        }
    };
    let eps = 0.1 * span;
    let interior: Vec<&crate::spectrum::SpectrumPoint> =
        curve.points.iter().filter(|p| !p.boundary).collect();
    if interior.len() < 3 {
        return Ok(CheckOutcome::skip(
            "spectrum",
            "counting-consistency",
            "too few interior grid points".into(),
        ));
    }
    let mut detail = String::new();
    for q in [0.3, 0.5, 0.7] {
        let p = interior[((interior.len() - 1) as f64 * q) as usize];
        let f = spectrum.ld_count(&p.alpha, n, eps)?;
        if f == 0 {
            continue;
        }
        let lhs = (f as f64).ln() / n as f64;
        let rhs = curve
            .points
            .iter()
            .filter(|q| {
                q.alpha
                    .iter()
                    .zip(&p.alpha)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    < eps
            })
            .map(|q| q.tau_star)
            .fold(f64::NEG_INFINITY, f64::max);
        if lhs > rhs + 0.1 {
            return Ok(CheckOutcome::fail(
                "spectrum",
                "counting-consistency",
                format!("log f / n = {lhs:.4} above ball max tau* {rhs:.4} + 0.1"),
            ));
        }
        detail = format!("ball counts at n = {n} grow no faster than tau* + 0.1");
    }
    if detail.is_empty() {
        return Ok(CheckOutcome::skip(
            "spectrum",
            "counting-consistency",
            "no balls hit the tested levels".into(),
        ));
    }
    Ok(CheckOutcome::pass("spectrum", "counting-consistency", detail))
}

// ----------------------------------------------------------- measures

fn measures_suite(spectrum: &Spectrum, seed: u64) -> Vec<CheckOutcome> {
    vec![
        wrap("measures", "stationarity", stationarity(spectrum, seed)),
        wrap(
            "measures",
            "variational-inequality",
            variational_inequality(spectrum, seed),
        ),
        wrap("measures", "gibbs-ratio", gibbs_ratio(spectrum, seed)),
        wrap(
            "measures",
            "conditional-variational",
            conditional_matches_curve(spectrum),
        ),
    ]
}

fn stationarity(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    let sft = spectrum.sft();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x71);
    let mut measures = vec![MarkovMeasure::parry(sft)?];
    if !has_cocycle(spectrum) {
        let d = spectrum.d();
        let mut coeffs = vec![1.0; d + 1];
        coeffs[d] = 0.0;
        measures.push(equilibrium_from_transfer(spectrum.transfer(), &coeffs, 0.0)?.0);
    }
    for i in 0..20 {
        measures.push(MarkovMeasure::random(sft, 1 + (i % 2), &mut rng)?);
    }
    let mut worst_pi: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    for mm in &measures {
        worst_pi = worst_pi.max(mm.stationarity_residual());
        worst_row = worst_row.max(mm.row_sum_residual());
    }
    if worst_pi > 1e-9 || worst_row > 1e-12 {
        return Ok(CheckOutcome::fail(
            "measures",
            "stationarity",
            format!("residuals pi {worst_pi:.3e}, rows {worst_row:.3e}"),
        ));
    }
    Ok(CheckOutcome::pass(
        "measures",
        "stationarity",
        format!(
            "{} chains stationary, residuals pi {worst_pi:.3e}, rows {worst_row:.3e}",
            measures.len()
        ),
    ))
}

fn variational_inequality(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    if has_cocycle(spectrum) {
        return Ok(CheckOutcome::skip(
            "measures",
            "variational-inequality",
            "cocycle averages need the thermodynamic limit".into(),
        ));
    }
    let sft = spectrum.sft();
    let bundle = spectrum.potential();
    let d = spectrum.d();
    let mut coeffs = vec![1.0; d + 1];
    coeffs[d] = 0.0;
    let p = spectrum
        .transfer()
        .log_spectral_radius(&coeffs, 0.0, &spectrum.options().spectral, None)?
        .log_rho;
    let order = bundle.window().saturating_sub(1).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x72);
    let mut best: f64 = f64::NEG_INFINITY;
    for i in 0..100 {
        let mm = MarkovMeasure::random(sft, order + (i % 2), &mut rng)?;
        let a: f64 = mm.bundle_average(bundle)?.iter().sum();
        let excess = mm.entropy() + a - p;
        if excess > best {
            best = excess;
        }
        if excess > 1e-9 {
            return Ok(CheckOutcome::fail(
                "measures",
                "variational-inequality",
                format!("h + Phi_* beats P by {excess:.3e}"),
            ));
        }
    }
    Ok(CheckOutcome::pass(
        "measures",
        "variational-inequality",
        format!("100 random measures stay under P, closest gap {:.3e}", -best),
    ))
}

fn gibbs_ratio(spectrum: &Spectrum, seed: u64) -> Result<CheckOutcome> {
    let sft = spectrum.sft();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x73);
    let kstep: Vec<(String, ScalarPotential)> = labelled_scalars(spectrum)
        .into_iter()
        .filter(|(_, p)| matches!(p, ScalarPotential::KStep(_)))
        .collect();
    if kstep.is_empty() {
        return Ok(CheckOutcome::skip(
            "measures",
            "gibbs-ratio",
            "no k-step generator to build an equilibrium from".into(),
        ));
    }
    let mut detail = String::new();
    for (label, pot) in &kstep {
        let kappa = pot.window().saturating_sub(1).max(1);
        let n_lo = (2 * kappa + sft.primitivity_exponent()).max(4);
        let n_hi = n_lo + 4;
        if sft.word_count(n_lo) > WORD_BUDGET {
            return Ok(CheckOutcome::skip(
                "measures",
                "gibbs-ratio",
                format!("length-{n_lo} enumeration over budget"),
            ));
        }
        let (mu, p) = equilibrium_state(sft, pot)?;
        let spread_at = |words: &mut dyn Iterator<Item = Vec<u8>>, n: usize| -> Result<(f64, f64)> {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for w in words {
                let r = mu.cylinder_log_mass(&w) - (pot.sup_weight_log(sft, &w)? - n as f64 * p);
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Ok((lo, hi))
        };
        let (llo, lhi) = spread_at(&mut sft.words(n_lo), n_lo)?;
        let spread_lo = lhi - llo;
        let exhaustive = sft.word_count(n_hi) <= WORD_BUDGET;
        let (hlo, hhi) = if exhaustive {
            spread_at(&mut sft.words(n_hi), n_hi)?
        } else {
            let mut sampled = (0..2000).map(|_| mu.sample_path(n_hi, None, &mut rng));
            spread_at(&mut sampled, n_hi)?
        };
        let spread_hi = hhi - hlo;
        // boundary terms saturate past 2 kappa + p0, so the spread is flat
        if spread_hi > spread_lo + 1e-6 {
            return Ok(CheckOutcome::fail(
                "measures",
                "gibbs-ratio",
                format!(
                    "{label}: ratio spread grew from {spread_lo:.6} at n = {n_lo} to {spread_hi:.6} at n = {n_hi}"
                ),
            ));
        }
        detail = format!("log-ratio spreads stable, widest {spread_lo:.4}");
    }
    Ok(CheckOutcome::pass("measures", "gibbs-ratio", detail))
}

fn conditional_matches_curve(spectrum: &Spectrum) -> Result<CheckOutcome> {
    if has_cocycle(spectrum) {
        return Ok(CheckOutcome::skip(
            "measures",
            "conditional-variational",
            "equilibrium witnesses need k-step generators".into(),
        ));
    }
    let curve = spectrum.curve()?;
    let mut interior: Vec<&crate::spectrum::SpectrumPoint> = Vec::new();
    for p in &curve.points {
        if !p.boundary && p.witness.is_some() && well_interior(spectrum, &p.alpha)? {
            interior.push(p);
        }
    }
    if interior.is_empty() {
        return Ok(CheckOutcome::skip(
            "measures",
            "conditional-variational",
            "no interior grid points with witnesses".into(),
        ));
    }
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for q in [0.25, 0.5, 0.75] {
        let p = interior[((interior.len() - 1) as f64 * q) as usize];
        let (value, _) = match conditional_variational(spectrum, &p.alpha) {
            Ok(v) => v,
            Err(Error::BoundaryAlpha { .. }) => continue,
            Err(e) => return Err(e),
        };
        let err = (value - p.tau_star).abs();
        if err > worst {
            worst = err;
        }
        if err > 1e-6 {
            return Ok(CheckOutcome::fail(
                "measures",
                "conditional-variational",
                format!("witness dimension off tau* by {err:.3e} at alpha {:?}", p.alpha),
            ));
        }
        checked += 1;
    }
    if checked == 0 {
        return Ok(CheckOutcome::skip(
            "measures",
            "conditional-variational",
            "all sampled levels sat on the boundary".into(),
        ));
    }
    Ok(CheckOutcome::pass(
        "measures",
        "conditional-variational",
        format!("{checked} interior levels reproduced within {worst:.3e}"),
    ))
}

// ----------------------------------------------------------- geometry

fn coding_recursion(ifs: &SelfSimilarIfs, seed: u64) -> Result<CheckOutcome> {
    let m = ifs.len();
    let depth = if m <= 12 { 4 } else { 3 };
    let count = m.pow(depth as u32);
    let coarse = ifs.attractor_points(depth, count + 1);
    let fine = ifs.attractor_points(depth + 1, count * m + 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x91);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let j = rng.gen_range(0..m);
        let idx = rng.gen_range(0..count);
        let parent = &coarse[idx];
        let child = &fine[j * count + idx];
        for axis in 0..ifs.dim() {
            let expect = ifs.ratio(j) * parent[axis] + ifs.shift(j)[axis];
            let err = (child[axis] - expect).abs();
            if err > worst {
                worst = err;
            }
            if err > 1e-10 {
                return Ok(CheckOutcome::fail(
                    "geometry",
                    "coding-recursion",
                    format!("map {j} violates the recursion by {err:.3e}"),
                ));
            }
        }
    }
    Ok(CheckOutcome::pass(
        "geometry",
        "coding-recursion",
        format!("100 random branches recurse exactly, worst {worst:.3e}"),
    ))
}

fn coded_spectrum(ifs: &SelfSimilarIfs, k: usize) -> Result<Spectrum> {
    let coded = ifs.coding_potential(k)?;
    Spectrum::new(&coded.sft, coded.phi, coded.metric)
}

fn attractor_dimension(ifs: &SelfSimilarIfs, k: usize, seed: u64) -> Result<CheckOutcome> {
    let sp = coded_spectrum(ifs, k)?;
    let d_psi = sp.d_psi()?;
    let mut detail = format!("D(psi) = {d_psi:.9}");
    if let Some(rho) = ifs.homogeneous_ratio() {
        let closed = (ifs.len() as f64).ln() / (1.0 / rho).ln();
        let gap = (d_psi - closed).abs();
        if gap > 1e-9 {
            return Ok(CheckOutcome::fail(
                "geometry",
                "attractor-dimension",
                format!("D(psi) = {d_psi:.9} vs log m / log(1/rho) = {closed:.9}"),
            ));
        }
        detail = format!("D(psi) matches log m / log(1/rho) within {gap:.3e}");
    }
    // the peak of the spectrum sits at the unweighted equilibrium average
    let dims = sp.d();
    let mut coeffs = vec![0.0; dims + 1];
    coeffs[dims] = d_psi;
    let (mu, _) = equilibrium_from_transfer(sp.transfer(), &coeffs, 0.0)?;
    let alpha0 = mu.bundle_average(sp.potential())?;
    let peak = sp.legendre(&alpha0)?;
    if (peak.tau_star - d_psi).abs() > 1e-6 {
        return Ok(CheckOutcome::fail(
            "geometry",
            "attractor-dimension",
            format!("peak tau* = {:.9} misses D(psi) = {d_psi:.9}", peak.tau_star),
        ));
    }
    let boxes: Vec<(f64, f64)> = sp
        .potential()
        .components()
        .iter()
        .map(|c| (c.phi1_min(), c.phi1_max()))
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x92);
    let mut tested = 0;
    for _ in 0..40 {
        if tested >= 12 {
            break;
        }
        let a: Vec<f64> = boxes.iter().map(|&(l, h)| rng.gen_range(l..h)).collect();
        match sp.legendre(&a) {
            Ok(lp) => {
                if lp.tau_star > d_psi + 1e-9 {
                    return Ok(CheckOutcome::fail(
                        "geometry",
                        "attractor-dimension",
                        format!("tau*({a:?}) = {:.9} above D(psi)", lp.tau_star),
                    ));
                }
                tested += 1;
            }
            Err(Error::NotInLPhi { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(CheckOutcome::pass(
        "geometry",
        "attractor-dimension",
        format!("{detail}; {tested} random levels stay below with equality at the peak"),
    ))
}

/// The eight isometries of the plane square as row-major matrices.
const DIHEDRAL: [[f64; 4]; 8] = [
    [1.0, 0.0, 0.0, 1.0],
    [0.0, -1.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0, -1.0],
    [0.0, 1.0, -1.0, 0.0],
    [-1.0, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0, -1.0],
    [0.0, 1.0, 1.0, 0.0],
    [0.0, -1.0, -1.0, 0.0],
];

fn apply(r: &[f64; 4], x: &[f64], ctr: &[f64]) -> [f64; 2] {
    let dx = x[0] - ctr[0];
    let dy = x[1] - ctr[1];
    [
        r[0] * dx + r[1] * dy + ctr[0],
        r[2] * dx + r[3] * dy + ctr[1],
    ]
}

/// Dihedral elements that permute the map family.
fn square_symmetries(ifs: &SelfSimilarIfs) -> Vec<&'static [f64; 4]> {
    if ifs.dim() != 2 {
        return Vec::new();
    }
    let (lo, hi) = ifs.bounding_box();
    let ctr = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let mut found = Vec::new();
    for r in DIHEDRAL.iter().skip(1) {
        let mut all = true;
        for j in 0..ifs.len() {
            // conjugated map shift: R c + (1 - rho)(ctr - R ctr)
            let rc = apply(r, ifs.shift(j), &[0.0, 0.0]);
            let rctr = apply(r, &ctr, &[0.0, 0.0]);
            let rho = ifs.ratio(j);
            let cp = [
                rc[0] + (1.0 - rho) * (ctr[0] - rctr[0]),
                rc[1] + (1.0 - rho) * (ctr[1] - rctr[1]),
            ];
            let hit = (0..ifs.len()).any(|i| {
                (ifs.ratio(i) - rho).abs() <= 1e-9
                    && (ifs.shift(i)[0] - cp[0]).abs() <= 1e-9
                    && (ifs.shift(i)[1] - cp[1]).abs() <= 1e-9
            });
            if !hit {
                all = false;
                break;
            }
        }
        if all {
            found.push(r);
        }
    }
    found
}

fn symmetry_orbit(ifs: &SelfSimilarIfs, k: usize) -> Result<CheckOutcome> {
    let syms = square_symmetries(ifs);
    if syms.is_empty() {
        return Ok(CheckOutcome::skip(
            "geometry",
            "symmetry-orbit",
            "map family has no dihedral symmetry".into(),
        ));
    }
    let sp = coded_spectrum(ifs, k)?;
    let (lo, hi) = ifs.bounding_box();
    let ctr = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let w = hi[0] - lo[0];
    let h = hi[1] - lo[1];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (ox, oy) in [(0.27, 0.13), (-0.11, 0.21)] {
        let mut scale = 1.0;
        'shrink: for _ in 0..3 {
            let alpha = [ctr[0] + scale * ox * w, ctr[1] + scale * oy * h];
            let base = match sp.legendre(&alpha) {
                Ok(lp) => lp,
                Err(Error::NotInLPhi { .. }) => {
                    scale *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for r in &syms {
                let image = apply(r, &alpha, &ctr);
                let lp = match sp.legendre(&image) {
                    Ok(lp) => lp,
                    Err(Error::NotInLPhi { .. }) => {
                        scale *= 0.5;
                        continue 'shrink;
                    }
                    Err(e) => return Err(e),
                };
                let err = (lp.tau_star - base.tau_star).abs();
                if err > worst {
                    worst = err;
                }
                if err > 1e-6 {
                    return Ok(CheckOutcome::fail(
                        "geometry",
                        "symmetry-orbit",
                        format!("tau* differs by {err:.3e} across a square symmetry"),
                    ));
                }
            }
            checked += 1;
            break;
        }
    }
    if checked == 0 {
        return Ok(CheckOutcome::skip(
            "geometry",
            "symmetry-orbit",
            "sample levels fell outside the rotation set".into(),
        ));
    }
    Ok(CheckOutcome::pass(
        "geometry",
        "symmetry-orbit",
        format!(
            "{} symmetries agree at {checked} levels within {worst:.3e}",
            syms.len()
        ),
    ))
}

/// Axis factorization of a planar cell family, if there is one.
fn product_factors(ifs: &SelfSimilarIfs) -> Option<(SelfSimilarIfs, SelfSimilarIfs)> {
    if ifs.dim() != 2 || !ifs.sosc() {
        return None;
    }
    let rho = ifs.homogeneous_ratio()?;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for j in 0..ifs.len() {
        let s = ifs.shift(j);
        if !xs.iter().any(|&x| (x - s[0]).abs() <= 1e-12) {
            xs.push(s[0]);
        }
        if !ys.iter().any(|&y| (y - s[1]).abs() <= 1e-12) {
            ys.push(s[1]);
        }
    }
    if xs.len() * ys.len() != ifs.len() {
        return None;
    }
    for &x in &xs {
        for &y in &ys {
            let hit = (0..ifs.len())
                .any(|j| (ifs.shift(j)[0] - x).abs() <= 1e-12 && (ifs.shift(j)[1] - y).abs() <= 1e-12);
            if !hit {
                return None;
            }
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let fx = SelfSimilarIfs::new(1, xs.into_iter().map(|x| (rho, vec![x])).collect(), true).ok()?;
    let fy = SelfSimilarIfs::new(1, ys.into_iter().map(|y| (rho, vec![y])).collect(), true).ok()?;
    Some((fx, fy))
}

fn product_rule(ifs: &SelfSimilarIfs, k: usize) -> Result<CheckOutcome> {
    let Some((fx, fy)) = product_factors(ifs) else {
        return Ok(CheckOutcome::skip(
            "geometry",
            "product-rule",
            "cell family is not an axis product".into(),
        ));
    };
    if fx.len() < 2 || fy.len() < 2 {
        return Ok(CheckOutcome::skip(
            "geometry",
            "product-rule",
            "a factor is a single map; nothing to compare".into(),
        ));
    }
    let depth = 4;
    let full = ifs.fixed_point_average_dimension(k, depth)?;
    let dx = fx.fixed_point_average_dimension(k, depth)?;
    let dy = fy.fixed_point_average_dimension(k, depth)?;
    let gap = (full.value - dx.value - dy.value).abs();
    if gap > 2e-3 {
        return Ok(CheckOutcome::fail(
            "geometry",
            "product-rule",
            format!(
                "product dimension {:.6} vs factor sum {:.6}",
                full.value,
                dx.value + dy.value
            ),
        ));
    }
    Ok(CheckOutcome::pass(
        "geometry",
        "product-rule",
        format!("factor dimensions add up within {gap:.3e}"),
    ))
}

// -------------------------------------------------------------- misc

fn random_word(sft: &Sft, n: usize, rng: &mut impl Rng) -> Vec<u8> {
    let m = sft.alphabet_size() as u8;
    let mut w = Vec::with_capacity(n);
    let mut cur: Option<u8> = None;
    for _ in 0..n {
        let choices: Vec<u8> = match cur {
            None => (0..m).collect(),
            Some(c) => (0..m).filter(|&j| sft.edge(c, j)).collect(),
        };
        let j = choices[rng.gen_range(0..choices.len())];
        w.push(j);
        cur = Some(j);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{KStepPotential, PotentialBundle};
    use crate::spectrum::SpectrumOptions;

    fn digit_system(sft: &Sft, psi_vals: &[f64]) -> Spectrum {
        let m = sft.alphabet_size();
        let digits: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1).max(1) as f64).collect();
        let phi = ScalarPotential::KStep(KStepPotential::from_symbol_values(sft, &digits).unwrap());
        let psi =
            ScalarPotential::KStep(KStepPotential::from_symbol_values(sft, psi_vals).unwrap());
        let mut opts = SpectrumOptions::default();
        opts.grid_1d = 61;
        Spectrum::with_options(
            sft,
            PotentialBundle::scalar(phi),
            WeakGibbsMetric::new(psi).unwrap(),
            opts,
        )
        .unwrap()
    }

    fn assert_all_green(outcomes: &[CheckOutcome]) {
        for o in outcomes {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn full_shift_battery_is_green() {
        let sft = Sft::full(2).unwrap();
        let sp = digit_system(&sft, &[-1.0, -1.0]);
        let outcomes = check_system(&sp, 7);
        assert_all_green(&outcomes);
        let ran: Vec<&CheckOutcome> = outcomes.iter().filter(|o| !o.skipped).collect();
        // constant psi is not negative-free nor cocycle, so only the
        // negativity-specific skip is absent; everything else must run
        assert!(ran.len() >= outcomes.len() - 1, "too many skips");
    }

    #[test]
    fn golden_mean_battery_is_green() {
        let sp = digit_system(&Sft::golden_mean(), &[-1.0, -2.0]);
        assert_all_green(&check_system(&sp, 11));
    }

    #[test]
    fn cocycle_battery_skips_equilibrium_checks() {
        let sft = Sft::full(2).unwrap();
        let phi = ScalarPotential::Cocycle(
            crate::potential::MatrixCocycle::new(vec![
                vec![1.0, 0.4, 0.3, 1.2],
                vec![0.8, 0.2, 0.5, 1.1],
            ])
            .unwrap(),
        );
        let psi =
            ScalarPotential::KStep(KStepPotential::from_symbol_values(&sft, &[-1.0, -1.3]).unwrap());
        let mut opts = SpectrumOptions::default();
        opts.grid_1d = 41;
        let sp = Spectrum::with_options(
            &sft,
            PotentialBundle::scalar(phi),
            WeakGibbsMetric::new(psi).unwrap(),
            opts,
        )
        .unwrap();
        let outcomes = check_system(&sp, 3);
        assert_all_green(&outcomes);
        let skipped: Vec<&&'static str> = outcomes
            .iter()
            .filter(|o| o.skipped)
            .map(|o| &o.name)
            .collect();
        assert!(skipped.contains(&&"variational-principle"), "{skipped:?}");
    }

    #[test]
    fn interval_ifs_battery_is_green() {
        let ifs = SelfSimilarIfs::grid_1d(3, &[0, 2]).unwrap();
        let outcomes = check_ifs(&ifs, 4, 5);
        assert_all_green(&outcomes);
        // a one-dimensional set has neither square symmetries nor factors
        assert!(outcomes.iter().any(|o| o.name == "symmetry-orbit" && o.skipped));
    }

    #[test]
    fn carpet_battery_exercises_symmetry_and_product() {
        let ifs = SelfSimilarIfs::grid_2d(3, &[(0, 0), (2, 0), (0, 2), (2, 2)]).unwrap();
        let outcomes = check_ifs(&ifs, 3, 5);
        assert_all_green(&outcomes);
        for name in ["symmetry-orbit", "product-rule"] {
            let o = outcomes.iter().find(|o| o.name == name).unwrap();
            assert!(!o.skipped, "{name} should run on the corner carpet");
        }
    }

    #[test]
    fn outcome_lines_render_status_first() {
        let o = CheckOutcome::pass("sft", "count-recurrence", "ok".into());
        assert_eq!(o.to_string(), "PASS sft/count-recurrence: ok");
        assert_eq!(
            CheckOutcome::skip("a", "b", "c".into()).status(),
            "SKIP"
        );
        assert_eq!(CheckOutcome::fail("a", "b", "c".into()).status(), "FAIL");
    }
}
