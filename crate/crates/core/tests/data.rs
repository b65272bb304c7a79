mod common;

use jointinv::data::synthetic::convolve_same;
use jointinv::data::*;
use jointinv::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wells_are_strictly_increasing_and_span(n_traces in 2usize..400, frac in 0.0f64..1.0) {
        let n = 2 + ((n_traces - 2) as f64 * frac) as usize;
        let w = sample_wells(n_traces, n).unwrap();
        prop_assert_eq!(w.len(), n);
        prop_assert!(w.windows(2).all(|p| p[0] < p[1]));
        prop_assert_eq!(w[0], 0);
        prop_assert_eq!(*w.last().unwrap(), n_traces - 1);
    }

    #[test]
    fn patch_center_is_the_well_trace(
        d in 1usize..12, n in 1usize..15, half in 0usize..4, seed in any::<u64>(), pick in 0.0f64..1.0,
    ) {
        let mut r = common::rng(seed);
        let g = SectionGrid::new(d, n, 1.0, common::random_tensor(&mut r, &[d * n], 1.0).data().to_vec()).unwrap();
        let m = 2 * half + 1;
        let well = ((n - 1) as f64 * pick) as usize;
        let p = extract_patch(&g, well, m).unwrap();
        prop_assert_eq!(p.shape(), &[1, d, m][..]);
        for z in 0..d {
            prop_assert_eq!(p.data()[z * m + half], g.get(z, well));
            // Columns left of the section repeat trace 0, right of it the last trace.
            for c in 0..m {
                let t = (well as isize + c as isize - half as isize).clamp(0, n as isize - 1) as usize;
                prop_assert_eq!(p.data()[z * m + c], g.get(z, t));
            }
        }
    }

    #[test]
    fn convolution_is_linear(seed in any::<u64>(), len in 1usize..40, wl in 0usize..6, a in -3.0f64..3.0) {
        let mut r = common::rng(seed);
        let x = common::random_tensor(&mut r, &[len], 1.0).data().to_vec();
        let y = common::random_tensor(&mut r, &[len], 1.0).data().to_vec();
        let w = common::random_tensor(&mut r, &[2 * wl + 1], 1.0).data().to_vec();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let lhs = convolve_same(&mix, &w);
        let (cx, cy) = (convolve_same(&x, &w), convolve_same(&y, &w));
        prop_assert_eq!(lhs.len(), len);
        for i in 0..len {
            prop_assert!((lhs[i] - (a * cx[i] + cy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn reflectivity_is_scale_invariant(seed in any::<u64>(), len in 2usize..30, s in 0.1f64..50.0) {
        let mut r = common::rng(seed);
        let z: Vec<f64> = common::random_tensor(&mut r, &[len], 1.0).data().iter().map(|v| 5000.0 + 2000.0 * v).collect();
        let zs: Vec<f64> = z.iter().map(|v| v * s).collect();
        let (a, b) = (impedance_to_reflectivity(&z).unwrap(), impedance_to_reflectivity(&zs).unwrap());
        prop_assert_eq!(a.len(), len - 1);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12 && p.abs() < 1.0);
        }
    }

    #[test]
    fn sgrd_roundtrip(d in 1usize..10, n in 1usize..10, dz in -5.0f64..50.0, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let g = SectionGrid::new(d, n, dz, common::random_tensor(&mut r, &[d * n], 1e4).data().to_vec()).unwrap();
        let mut a = Vec::new();
        g.write_to(&mut a).unwrap();
        prop_assert_eq!(a.len(), 6 + 4 + 4 + 8 + 8 * d * n);
        let back = SectionGrid::read_from(a.as_slice()).unwrap();
        prop_assert_eq!(&back, &g);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let spec = SyntheticSpec {
        n_traces: 40,
        ..Default::default()
    };
    let a = Survey::generate(&spec).unwrap();
    assert_eq!(a, Survey::generate(&spec).unwrap());
    let b = Survey::generate(&SyntheticSpec { seed: 99, ..spec.clone() }).unwrap();
    assert_ne!(a.impedance, b.impedance);
    assert_eq!((a.seismic.depth(), a.seismic.n_traces()), (64, 40));
    assert!(a.impedance.values().iter().all(|v| (4000.0..=9000.0).contains(v)));
}

#[test]
fn single_layer_gives_constant_impedance_and_noise_only_seismic() {
    let spec = SyntheticSpec {
        n_traces: 10,
        n_layers: 1,
        noise_std: 0.0,
        ..Default::default()
    };
    let s = Survey::generate(&spec).unwrap();
    let first = s.impedance.values()[0];
    assert!(s.impedance.values().iter().all(|v| *v == first));
    assert!(s.seismic.values().iter().all(|v| *v == 0.0));
    // A constant property section cannot be standardized.
    assert!(matches!(
        Dataset::from_grids(&s.seismic, &s.impedance, &[0, 5], 3),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn related_scenario_shares_statistics() {
    let s1 = SyntheticSpec {
        n_traces: 60,
        seed: 1,
        ..Default::default()
    };
    let s2 = SyntheticSpec {
        n_traces: 50,
        seed: 2,
        impedance_min: 2000.0,
        impedance_max: 4000.0,
        wavelet_freq: 15.0,
        ..Default::default()
    };
    let (a, b) = make_scenario(&s1, &s2, true).unwrap();
    let (_, c) = make_scenario(&s1, &s2, false).unwrap();
    assert_eq!(b.impedance.n_traces(), 50);
    let w_rel = wasserstein_1d(a.impedance.values(), b.impedance.values());
    let w_unrel = wasserstein_1d(a.impedance.values(), c.impedance.values());
    assert!(w_rel < w_unrel, "{w_rel} vs {w_unrel}");
    assert!(c.impedance.values().iter().all(|v| (2000.0..=4000.0).contains(v)));
}

#[test]
fn corrupt_grids_are_rejected() {
    let g = SectionGrid::new(2, 3, 1.0, vec![1.0; 6]).unwrap();
    let mut bytes = Vec::new();
    g.write_to(&mut bytes).unwrap();
    for cut in [0, 5, 13, bytes.len() - 1] {
        assert!(matches!(SectionGrid::read_from(&bytes[..cut]), Err(Error::Format { .. })));
    }
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(SectionGrid::read_from(long.as_slice()).is_err());
    let mut nan = bytes.clone();
    let end = nan.len();
    nan[end - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(SectionGrid::read_from(nan.as_slice()).is_err());
}
