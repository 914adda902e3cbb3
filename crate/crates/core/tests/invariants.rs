use chlag::nonlocal::{qp_fast, qp_reference, relative_deviation};
use chlag::peakons::{evolve_peakons, green, PeakonState};
use chlag::projection::pi;
use chlag::samples::smooth_state;
use chlag::state::{apply_relabeling, check_membership, enorm_diff, random_relabeling, Tolerances};
use chlag::toymetric::{toy_d, toy_j, toy_jbar};
use chlag::transforms::{h1_to_eulerian, to_lagrangian};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn enorm_is_a_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000, amp in 0.0..0.3f64) {
        let (a, b, c) = (smooth_state(64, s1, amp), smooth_state(64, s2, amp), smooth_state(64, s3, amp));
        let ab = enorm_diff(&a, &b).unwrap();
        prop_assert_eq!(ab, enorm_diff(&b, &a).unwrap());
        prop_assert_eq!(enorm_diff(&a, &a).unwrap(), 0.0);
        prop_assert!(enorm_diff(&a, &c).unwrap() <= ab + enorm_diff(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn relabeling_keeps_energy_and_membership(seed in 0u64..1000, amp in 0.0..0.8f64, state in 0u64..100) {
        let x = smooth_state(128, state, 0.2);
        let f = random_relabeling(128, amp, seed).unwrap();
        let y = apply_relabeling(&x, &f).unwrap();
        prop_assert!((y.h() - x.h()).abs() <= 1e-12 * (1.0 + x.h()));
        let r = check_membership(&y, &Tolerances::default());
        prop_assert!(r.in_f, "{:?}", r);
    }

    #[test]
    fn fast_kernel_matches_direct_sum(seed in 0u64..10_000, amp in 0.0..0.4f64) {
        let x = smooth_state(128, seed, amp);
        let d = relative_deviation(&qp_fast(&x).unwrap(), &qp_reference(&x).unwrap());
        prop_assert!(d <= 1e-12, "{}", d);
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000, amp in 0.0..0.2f64) {
        let p = pi(&smooth_state(128, seed, amp)).unwrap();
        let r = check_membership(&p, &Tolerances::default());
        prop_assert!(r.in_h, "{:?}", r);
        prop_assert!(enorm_diff(&pi(&p).unwrap(), &p).unwrap() < 1e-12);
    }

    #[test]
    fn lagrangian_image_keeps_energy(c1 in -0.5..0.5f64, c2 in -0.3..0.3f64, ph in 0.0..6.0f64) {
        let m = 256;
        let u: Vec<f64> = (0..m)
            .map(|k| {
                let x = std::f64::consts::TAU * k as f64 / m as f64;
                c1 * x.sin() + c2 * (2.0 * x + ph).cos()
            })
            .collect();
        let e = h1_to_eulerian(&u).unwrap();
        let x = to_lagrangian(&e, 256).unwrap();
        prop_assert!((x.h() - e.h()).abs() <= 1e-10 * (1.0 + e.h()));
        prop_assert!(check_membership(&x, &Tolerances::default()).in_h);
    }
}

proptest! {
    #![proptest_config(cfg(256))]

    #[test]
    fn toy_j_properties(x in 0.01..10.0f64, y in 0.01..10.0f64, z in 0.01..10.0f64) {
        let j = toy_j(x, y).unwrap();
        prop_assert_eq!(j, toy_j(y, x).unwrap());
        prop_assert!(j >= toy_jbar(x, y).unwrap());
        prop_assert!(toy_d(x, y, 64).unwrap() <= j + 1e-12);
        let mut v = [x, y, z];
        v.sort_by(f64::total_cmp);
        if v[1] - v[0] > 1e-6 && v[2] - v[1] > 1e-6 {
            prop_assert!(toy_j(v[0], v[1]).unwrap() + toy_j(v[1], v[2]).unwrap() < toy_j(v[0], v[2]).unwrap());
        }
    }

    #[test]
    fn green_is_even_and_periodic(x in -3.0..3.0f64) {
        prop_assert!((green(x) - green(-x)).abs() < 1e-14);
        prop_assert!((green(x) - green(x + 1.0)).abs() < 1e-13);
        prop_assert!((green(x) - green(1.0 - x)).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn peakon_momentum_and_hamiltonian(p1 in 0.2..1.5f64, p2 in -1.5..1.5f64, q1 in 0.0..0.45f64, q2 in 0.55..1.0f64) {
        let s = PeakonState::new(vec![p1, p2], vec![q1, q2]).unwrap();
        let tr = evolve_peakons(&s, 1e-3, 0.3).unwrap();
        prop_assume!(tr.near_collision.is_none());
        let e = tr.last();
        prop_assert!((e.momentum() - s.momentum()).abs() < 1e-10);
        prop_assert!((e.hamiltonian() - s.hamiltonian()).abs() < 1e-8 * s.hamiltonian().abs().max(1e-3));
    }
}
