//! Monte Carlo checks of the synthetic generators and noise channels.

use holographic::ctensor::{magnitude, wrap_angle, ComplexMatrix, C64};
use holographic::model::Target;
use holographic::synthdata::{
    apply_amplitude_noise, apply_phase_jitter, gen_phase_classification_with, gen_phasor_prediction_with, Carrier,
    PhaseClassParams, PhasorParams,
};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Per-class mean of `f(|x|)` over every entry of every sample, with its
/// standard error.
fn class_moments(params: &PhaseClassParams, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let ds = gen_phase_classification_with(2000, params, 11).unwrap();
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); params.num_classes];
    for (x, t) in ds.inputs.iter().zip(&ds.targets) {
        let Target::Class(c) = t else { unreachable!() };
        // One value per sample keeps the draws independent.
        let v = x.data().iter().map(|z| f(magnitude(*z))).sum::<f64>() / x.len() as f64;
        per_class[*c].push(v);
    }
    per_class
        .iter()
        .map(|v| {
            let (m, s) = mean_std(v);
            (m, s / (v.len() as f64).sqrt())
        })
        .collect()
}

#[test]
fn magnitudes_carry_no_class_information() {
    for params in [
        PhaseClassParams::new(16, 4, 4),
        PhaseClassParams {
            noise_std: 6.0,
            pilot_gain: 12.0,
            ..PhaseClassParams::new(16, 4, 4)
        },
        PhaseClassParams {
            carrier: Carrier::Independent,
            clutter_prob: 0.2,
            ..PhaseClassParams::new(16, 4, 4)
        },
    ] {
        for f in [|a: f64| a, |a: f64| a * a] {
            let moments = class_moments(&params, f);
            let (m0, s0) = moments[0];
            for &(m, s) in &moments[1..] {
                let z = (m - m0).abs() / (s * s + s0 * s0).sqrt();
                assert!(z < 4.5, "class moments differ: {moments:?} for {params:?}");
            }
        }
    }
}

#[test]
fn phasor_signals_have_unit_power() {
    for n_phasors in [1, 3] {
        let p = PhasorParams::new(4, n_phasors, 0.2);
        let ds = gen_phasor_prediction_with(3000, &p, 2).unwrap();
        let powers: Vec<f64> = ds
            .inputs
            .iter()
            .map(|x| x.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64)
            .collect();
        let (m, s) = mean_std(&powers);
        let se = s / (powers.len() as f64).sqrt();
        assert!((m - 1.0).abs() < 4.0 * se, "mean power {m} ± {se}");
    }
}

#[test]
fn jitter_has_requested_spread() {
    let x = ComplexMatrix::from_fn(200, 50, |r, c| C64::from_polar(1.0 + (r % 3) as f64, c as f64 * 0.1));
    for sigma in [0.05, 0.2, 0.4] {
        let y = apply_phase_jitter(&x, sigma, 99);
        let d: Vec<f64> = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| wrap_angle(b.arg() - a.arg()))
            .collect();
        let (m, s) = mean_std(&d);
        assert!(m.abs() < 4.0 * sigma / (d.len() as f64).sqrt(), "mean shift {m}");
        assert!((s / sigma - 1.0).abs() < 0.03, "spread {s} for {sigma}");
    }
}

#[test]
fn amplitude_noise_has_requested_spread() {
    let x = ComplexMatrix::from_fn(200, 50, |r, c| C64::from_polar(0.5 + r as f64 / 100.0, c as f64));
    let tau = 0.1;
    let y = apply_amplitude_noise(&x, tau, 5);
    let ratio: Vec<f64> = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| magnitude(*b) / magnitude(*a) - 1.0)
        .collect();
    let (m, s) = mean_std(&ratio);
    assert!(m.abs() < 4.0 * tau / (ratio.len() as f64).sqrt());
    assert!((s / tau - 1.0).abs() < 0.03);
}
