use helmfno::experiments::crossover;
use helmfno::fdtd::{laplacian4, SourceSpec, StencilCoefficients, TimeGrid, TimeWavefield};
use helmfno::freq::{all_bins, reconstruct_time, time_to_freq};
use helmfno::nn::WidthRule;
use helmfno::velocity::{synthesize, FamilyKind, FamilySpec, Grid, V_MAX, V_MIN};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = FamilyKind> {
    prop::sample::select(FamilyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crossover_is_the_smallest_winning_count(train in 0.0f64..1e5, nn in 1e-5f64..1.0, gap in 1e-3f64..100.0) {
        let fd = nn + gap;
        let n = crossover(train, nn, fd).unwrap();
        prop_assert!(train + n as f64 * nn < n as f64 * fd);
        if n > 1 {
            let m = (n - 1) as f64;
            prop_assert!(train + m * nn >= m * fd);
        }
    }

    #[test]
    fn laplacian_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let g = Grid::new(9, 11, 7.0, 5.0).unwrap();
        let f = |k: u64| -> Vec<f64> { (0..g.len() as u64).map(|i| (((i + 1) * (seed + 3 + k) * 2654435761) % 1000) as f64 / 500.0 - 1.0).collect() };
        let (p, q) = (f(0), f(1));
        let c = StencilCoefficients::standard();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + y).collect();
        let (lp, lq, lm) = (laplacian4(&p, &g, c).unwrap(), laplacian4(&q, &g, c).unwrap(), laplacian4(&mix, &g, c).unwrap());
        for i in 0..g.len() {
            prop_assert!((lm[i] - (a * lp[i] + lq[i])).abs() <= 1e-9 * (1.0 + lm[i].abs()));
        }
    }

    #[test]
    fn laplacian_exact_on_random_quadratics(cxx in -5.0f64..5.0, czz in -5.0f64..5.0, cxz in -5.0f64..5.0, cx in -5.0f64..5.0) {
        let g = Grid::new(12, 12, 10.0, 10.0).unwrap();
        let p: Vec<f64> = (0..g.len()).map(|i| {
            let (x, z) = (g.x_of(i % g.nx), g.z_of(i / g.nx));
            cxx * x * x + czz * z * z + cxz * x * z + cx * x
        }).collect();
        let l = laplacian4(&p, &g, StencilCoefficients::standard()).unwrap();
        let want = 2.0 * (cxx + czz);
        for iz in 2..g.nz - 2 {
            for ix in 2..g.nx - 2 {
                prop_assert!((l[g.idx(iz, ix)] - want).abs() <= 1e-8 * (1.0 + want.abs()) * 1e3);
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_in_range(kind in family(), seed in any::<u64>()) {
        let g = Grid::new(20, 24, 10.0, 10.0).unwrap();
        let spec = FamilySpec::new(kind);
        let a = synthesize(&spec, &g, seed).unwrap();
        prop_assert_eq!(&a, &synthesize(&spec, &g, seed).unwrap());
        prop_assert!(a.values.iter().all(|v| (V_MIN..=V_MAX).contains(v)));
    }

    #[test]
    fn all_bin_transform_round_trips(seed in 0u64..10_000, nt in 16usize..48) {
        let g = Grid::new(5, 6, 10.0, 10.0).unwrap();
        let tg = TimeGrid::new(1e-3, nt).unwrap();
        let mut w = TimeWavefield::zeros(g, tg, SourceSpec::ricker(20.0, 20.0, 15.0));
        for (i, p) in w.p.iter_mut().enumerate() {
            *p = (((i as u64 + 7) * (seed + 11) * 40503) % 2001) as f64 / 1000.0 - 1.0;
        }
        let back = reconstruct_time(&time_to_freq(&w, &all_bins(&tg)).unwrap(), g, tg, w.source).unwrap();
        for (a, b) in back.p.iter().zip(&w.p) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn width_rule_is_nondecreasing_in_frequency(f in 1.0f64..30.0, df in 0.0f64..29.0, scale in 0.1f64..2.0) {
        let rule = WidthRule::default().scaled(scale);
        let g = (f + df).min(30.0);
        prop_assert!(rule.width_for_frequency(f).unwrap() <= rule.width_for_frequency(g).unwrap());
    }
}

#[test]
fn width_rule_bands() {
    let r = WidthRule::default();
    assert_eq!(r.width_for_frequency(1.0).unwrap(), 32);
    assert_eq!(r.width_for_frequency(15.99).unwrap(), 32);
    assert_eq!(r.width_for_frequency(16.0).unwrap(), 64);
    assert_eq!(r.width_for_frequency(26.0).unwrap(), 96);
    assert_eq!(r.width_for_frequency(30.0).unwrap(), 96);
    assert!(r.width_for_frequency(30.5).is_err());
    assert!(r.width_for_frequency(0.5).is_err());
}
