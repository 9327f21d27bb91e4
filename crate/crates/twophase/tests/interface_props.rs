//! Property tests for the interface operators: the exact-volume identity on
//! randomized polygons and motions, bilinear-form symmetry, curvature
//! convergence order, and a Monte-Carlo cross-check of the enclosed area.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase::interface::InterfaceMesh;
use twophase::Vec2;

/// Random star-shaped polygon: strictly increasing angles with jitter and
/// radii in `[rmin, rmax]`. Star-shaped about its center, hence simple.
fn star_polygon(rng: &mut ChaCha8Rng, k: usize, rmin: f64, rmax: f64) -> InterfaceMesh {
    let center = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let verts: Vec<Vec2> = (0..k)
        .map(|i| {
            let jitter: f64 = rng.random_range(-0.45..0.45);
            let th = 2.0 * std::f64::consts::PI * (i as f64 + jitter) / k as f64;
            let r = rng.random_range(rmin..rmax);
            center + r * Vec2::new(th.cos(), th.sin())
        })
        .collect();
    InterfaceMesh::new(verts).expect("star polygon is a valid interface")
}

#[test]
fn volume_identity_over_1000_random_polygon_motion_pairs() {
    let start = std::time::Instant::now();
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 8 + (seed % 40) as usize;
        let m = star_polygon(&mut rng, k, 0.4, 1.0);
        // Arbitrary vertex motion — the identity does not need the moved
        // polygon to stay simple or even non-degenerate.
        let new_pos: Vec<Vec2> = m
            .vertices()
            .iter()
            .map(|v| v + Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect();
        let res = m.volume_lemma_residual(&new_pos);
        let scale = 1.0 + m.enclosed_area().abs();
        assert!(
            res.abs() <= 1e-12 * scale,
            "seed {seed}: residual {res:.3e} exceeds 1e-12 relative"
        );
    }
    assert!(
        start.elapsed().as_secs_f64() < 1.0,
        "1000 trials took {:?}",
        start.elapsed()
    );
}

#[test]
fn curvature_converges_at_second_order() {
    // Max-norm curvature error against −1/R on inscribed polygons, fitted
    // log-log slope over K = 32..256 must sit near 2.
    let r = 0.25;
    let ks = [32usize, 64, 128, 256];
    let errs: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let m = InterfaceMesh::circle(Vec2::new(0.5, 0.5), r, k).unwrap();
            m.solve_discrete_curvature()
                .unwrap()
                .into_iter()
                .map(|v| (v + 1.0 / r).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx = xs.iter().map(|x| x * x).sum::<f64>();
    let sxy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let order = -slope;
    assert!(
        (1.8..=2.2).contains(&order),
        "curvature order {order:.3} outside [1.8, 2.2]; errors {errs:?}"
    );
}

#[test]
fn monte_carlo_area_oracle() {
    // Fixed-seed Monte-Carlo inclusion estimate agrees with the shoelace
    // area to three significant digits.
    for seed in [7u64, 19, 23, 101, 555] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 10 + (seed % 14) as usize;
        let m = star_polygon(&mut rng, k, 0.5, 1.0);
        let (lo, hi) = m.bbox();
        let ext = hi - lo;
        let n = 4_000_000usize;
        let mut hits = 0u64;
        for _ in 0..n {
            let p = Vec2::new(
                lo.x + rng.random::<f64>() * ext.x,
                lo.y + rng.random::<f64>() * ext.y,
            );
            if m.contains(p) {
                hits += 1;
            }
        }
        let mc = hits as f64 / n as f64 * ext.x * ext.y;
        let area = m.enclosed_area();
        let rel = (mc - area).abs() / area;
        assert!(
            rel <= 5e-3,
            "seed {seed}: Monte-Carlo {mc:.6} vs shoelace {area:.6} (rel {rel:.2e})"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn products_are_symmetric_and_bilinear(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(8..40);
        let m = star_polygon(&mut rng, k, 0.4, 1.0);
        let f: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scale = 1.0 + m.perimeter();
        for prod in [InterfaceMesh::lumped_inner_product, InterfaceMesh::true_inner_product] {
            let fg = prod(&m, &f, &g);
            let gf = prod(&m, &g, &f);
            prop_assert!((fg - gf).abs() <= 1e-13 * scale);
            // Bilinearity: scale one argument.
            let f3: Vec<f64> = f.iter().map(|x| 3.0 * x).collect();
            prop_assert!((prod(&m, &f3, &g) - 3.0 * fg).abs() <= 1e-12 * scale * (1.0 + fg.abs()));
        }
        // Lumped and exact rules agree on ⟨1, 1⟩ (both integrate constants).
        let ones = vec![1.0; k];
        let a = m.lumped_inner_product(&ones, &ones);
        let b = m.true_inner_product(&ones, &ones);
        prop_assert!((a - b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn star_polygons_are_simple_and_positive(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(8..40);
        let m = star_polygon(&mut rng, k, 0.4, 1.0);
        prop_assert!(m.is_simple());
        prop_assert!(m.enclosed_area() > 0.0);
        // Curvature is defined (no folded vertices) on star polygons with
        // bounded radius ratio.
        prop_assert!(m.solve_discrete_curvature().is_ok());
    }

    #[test]
    fn stiffness_is_psd_with_constant_kernel(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(8..40);
        let m = star_polygon(&mut rng, k, 0.4, 1.0);
        let x: Vec<Vec2> = (0..k)
            .map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let quad = m.surface_stiffness(&x, &x);
        prop_assert!(quad >= 0.0);
        let c = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let shifted: Vec<Vec2> = x.iter().map(|v| v + c).collect();
        let quad2 = m.surface_stiffness(&shifted, &shifted);
        prop_assert!((quad - quad2).abs() <= 1e-10 * (1.0 + quad.abs()));
    }
}
