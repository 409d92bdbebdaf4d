use std::f64::consts::PI;

use holographic::attention::{holographic_attention, AttentionConfig};
use holographic::cli::summarize;
use holographic::ctensor::{magnitude, vec_norm, ComplexMatrix, C64};
use holographic::model::{read_checkpoint, write_checkpoint, HoloModel, ModelConfig, TaskKind};
use holographic::synthdata::{
    apply_amplitude_noise, apply_phase_jitter, gen_phase_classification, phasor_extrapolate, rotate_preserving_magnitude,
    Dataset,
};
use proptest::prelude::*;

fn cmatrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), rows * cols).prop_map(move |v| {
        ComplexMatrix::new(rows, cols, v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap()
    })
}

fn qkv() -> impl Strategy<Value = (ComplexMatrix, ComplexMatrix, ComplexMatrix)> {
    (1usize..=8, 1usize..=4).prop_flat_map(|(t, d)| (cmatrix(t, d), cmatrix(t, d), cmatrix(t, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn attention_weights_are_row_stochastic((q, k, v) in qkv(), alpha in 0.0f64..4.0) {
        let cfg = AttentionConfig { alpha, ..AttentionConfig::default() };
        let tr = holographic_attention(&q, &k, &v, &cfg).unwrap();
        for i in 0..tr.weights.rows() {
            let s: f64 = tr.weights.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(tr.weights.row(i).iter().all(|w| *w >= 0.0));
        }
        prop_assert!(tr.delta_phi.data().iter().all(|p| *p > -PI && *p <= PI));
        prop_assert!(tr.sim.data().iter().all(|s| s.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn global_rotation_is_equivariant((q, k, v) in qkv(), theta in -PI..PI) {
        let cfg = AttentionConfig::default();
        let a = holographic_attention(&q, &k, &v, &cfg).unwrap();
        let b = holographic_attention(&q.rotate(theta), &k.rotate(theta), &v.rotate(theta), &cfg).unwrap();
        for (x, y) in a.weights.data().iter().zip(b.weights.data()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
        let expect = a.output.rotate(theta);
        let scale = a.output.max_abs().max(1.0);
        prop_assert!(b.output.sub(&expect).unwrap().max_abs() <= 1e-10 * scale);
    }

    #[test]
    fn output_norm_is_bounded((q, k, v) in qkv()) {
        let tr = holographic_attention(&q, &k, &v, &AttentionConfig::default()).unwrap();
        let vmax = (0..v.rows()).map(|j| vec_norm(v.row(j))).fold(0.0, f64::max);
        for i in 0..tr.output.rows() {
            let bound: f64 = (0..v.rows()).map(|j| tr.weights.get(i, j) * vec_norm(v.row(j))).sum();
            prop_assert!(vec_norm(tr.output.row(i)) <= bound + 1e-10);
            prop_assert!(bound <= vmax + 1e-10);
        }
    }

    #[test]
    fn jitter_keeps_magnitudes_bitwise(x in cmatrix(4, 3), sigma in 0.0f64..2.0, seed in any::<u64>()) {
        let y = apply_phase_jitter(&x, sigma, seed);
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert_eq!(magnitude(*a).to_bits(), magnitude(*b).to_bits());
        }
    }

    #[test]
    fn rotation_preserves_magnitude(re in -1e3f64..1e3, im in -1e3f64..1e3, eta in -PI..PI) {
        let z = C64::new(re, im);
        let r = rotate_preserving_magnitude(z, eta);
        prop_assert_eq!(magnitude(r).to_bits(), magnitude(z).to_bits());
        if magnitude(z) > 1e-6 {
            let expected = z * C64::from_polar(1.0, eta);
            prop_assert!((r - expected).norm() <= 1e-12 * magnitude(z));
        }
    }

    #[test]
    fn amplitude_noise_keeps_phase(x in cmatrix(3, 3), tau in 0.0f64..0.2, seed in any::<u64>()) {
        let y = apply_amplitude_noise(&x, tau, seed);
        for (a, b) in x.data().iter().zip(y.data()) {
            if magnitude(*a) > 1e-9 && magnitude(*b) > 0.0 {
                let d = (a.arg() - b.arg()).abs();
                prop_assert!(d <= 1e-12 || (2.0 * PI - d) <= 1e-12);
            }
        }
    }

    #[test]
    fn phasor_oracle_continues_single_phasors(
        amps in prop::collection::vec(0.1f64..2.0, 1..4),
        w in -1.0f64..1.0,
        phase in -PI..PI,
    ) {
        let d = amps.len();
        let x = ComplexMatrix::from_fn(12, d, |t, c| C64::from_polar(amps[c], w * t as f64 + phase + c as f64));
        let y = phasor_extrapolate(&x, 5).unwrap();
        for h in 0..5 {
            for c in 0..d {
                let expected = C64::from_polar(amps[c], w * (12 + h) as f64 + phase + c as f64);
                prop_assert!((y.get(h, c) - expected).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn rauc_is_one_for_flat_curves(
        mut grid in prop::collection::vec(0.001f64..1.0, 0..5),
        value in 0.01f64..1.0,
    ) {
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid.insert(0, 0.0);
        let metric = vec![value; grid.len()];
        let (change, rauc) = summarize(&grid, &metric, true).unwrap();
        prop_assert!(change.iter().all(|c| *c == 0.0));
        prop_assert_eq!(rauc, 1.0);
    }

    #[test]
    fn rauc_decreases_with_degradation(drop in 0.0f64..0.5) {
        let (rd, rauc) = summarize(&[0.0, 0.2, 0.4], &[1.0, 1.0 - drop / 2.0, 1.0 - drop], true).unwrap();
        prop_assert!(rd[0] == 0.0 && rd[2] >= rd[1]);
        prop_assert!((rauc - (1.0 - drop / 2.0)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dataset_container_round_trips(n in 1usize..6, seed in any::<u64>()) {
        let ds = gen_phase_classification(n, 4, 3, 2, seed).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), heads in 1usize..=2) {
        let cfg = ModelConfig {
            seq_len: 3,
            d_in: 2,
            d_model: 4,
            heads,
            d_ff: 4,
            task: TaskKind::Classification { num_classes: 3 },
            ..ModelConfig::default()
        };
        let m = HoloModel::new(cfg, seed).unwrap();
        let bytes = write_checkpoint(&m).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }
}
