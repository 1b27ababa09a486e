use thermospec_core::measures::conditional_variational;
use thermospec_core::metric::WeakGibbsMetric;
use thermospec_core::potential::{KStepPotential, PotentialBundle, ScalarPotential};
use thermospec_core::sft::Sft;
use thermospec_core::spectrum::{Spectrum, SpectrumOptions};

#[test]
fn debug_conditional() {
    let sft = Sft::golden_mean();
    let digits: Vec<f64> = (0..2).map(|j| j as f64).collect();
    let phi = ScalarPotential::KStep(KStepPotential::from_symbol_values(&sft, &digits).unwrap());
    let psi = ScalarPotential::KStep(KStepPotential::from_symbol_values(&sft, &[-1.0, -2.0]).unwrap());
    let mut opts = SpectrumOptions::default();
    opts.grid_1d = 61;
    let sp = Spectrum::with_options(&sft, PotentialBundle::scalar(phi), WeakGibbsMetric::new(psi).unwrap(), opts).unwrap();
    let curve = sp.curve().unwrap();
    let mut interior: Vec<_> = Vec::new();
    for p in &curve.points {
        if !p.boundary && p.witness.is_some() {
            interior.push(p);
        }
    }
    println!("interior len {}", interior.len());
    println!("first {:?} last {:?}", interior.first().map(|p| p.alpha.clone()), interior.last().map(|p| p.alpha.clone()));
    for q in [0.25, 0.5, 0.75] {
        let p = interior[((interior.len() - 1) as f64 * q) as usize];
        println!("quantile {q}: alpha {:?}, tau* {}", p.alpha, p.tau_star);
        match conditional_variational(&sp, &p.alpha) {
            Ok((v, _)) => println!("  ok value {v}, err {:.3e}", (v - p.tau_star).abs()),
            Err(e) => println!("  ERR {e}"),
        }
    }
    for p in &interior {
        let lp = sp.legendre(&p.alpha).unwrap();
        let w = p.witness.as_ref().unwrap();
        println!(
            "alpha {:.4}  z* {:+.6e}  tau* {:.9}  wit-avg-err {:.3e}  wit-dim-err {:.3e}  lp.tau {:.9}",
            p.alpha[0],
            lp.z_star[0],
            p.tau_star,
            (w.phi_avg[0] - p.alpha[0]).abs(),
            (w.entropy / (-w.psi_avg) - p.tau_star).abs(),
            lp.tau_star
        );
    }
}
