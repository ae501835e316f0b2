use henon_core::potential::{bottcher_plus, green_minus, green_plus, log_bottcher_plus};
use henon_core::{C2Point, ComposedAutomorphism, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, r: f64) -> C2Point {
    let mut c = || C64::new(rng.random_range(-r..r), rng.random_range(-r..r));
    C2Point::new(c(), c())
}

fn maps() -> Vec<ComposedAutomorphism> {
    vec![
        ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap(),
        ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap(),
        ComposedAutomorphism::quadratic(C64::new(0.0, 0.3), C64::new(-1.0, 0.2)).unwrap(),
    ]
}

#[test]
fn green_plus_scales_by_degree_on_escaping_points() {
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for map in maps() {
        let d = map.degree() as f64;
        let mut checked = 0;
        while checked < 1000 {
            let x = random_point(&mut rng, 4.0);
            let g = green_plus(&map, &x, tol);
            if g.is_bounded() || g.value <= 0.0 {
                continue;
            }
            let Ok(fx) = map.evaluate(&x) else { continue };
            let gf = green_plus(&map, &fx, tol);
            assert!((gf.value - d * g.value).abs() <= 10.0 * tol, "{x:?}: {} vs {}", gf.value, d * g.value);
            checked += 1;
        }
    }
}

#[test]
fn green_minus_scales_under_inverse() {
    let tol = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for map in maps() {
        let d = map.degree() as f64;
        let mut checked = 0;
        while checked < 200 {
            let x = random_point(&mut rng, 4.0);
            let g = green_minus(&map, &x, tol);
            if g.is_bounded() || g.value <= 0.0 {
                continue;
            }
            let Ok(fx) = map.evaluate_inverse(&x) else { continue };
            let gf = green_minus(&map, &fx, tol);
            assert!((gf.value - d * g.value).abs() <= 10.0 * tol);
            checked += 1;
        }
    }
}

#[test]
fn green_plus_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for map in maps() {
        for _ in 0..500 {
            assert!(green_plus(&map, &random_point(&mut rng, 5.0), 1e-8).value >= 0.0);
        }
    }
}

#[test]
fn bottcher_functional_equation_and_modulus() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for map in maps() {
        let d = map.degree() as i32;
        let r = map.filtration_radius();
        let mut checked = 0;
        while checked < 100 {
            let x = random_point(&mut rng, 4.0 * r);
            if !map.in_forward_filtration(&x) {
                continue;
            }
            let phi = bottcher_plus(&map, &x).unwrap();
            let phi_f = bottcher_plus(&map, &map.evaluate(&x).unwrap()).unwrap();
            let expected = phi.powi(d);
            assert!((phi_f - expected).norm() <= 1e-8 * expected.norm(), "{phi_f} vs {expected}");
            let g = green_plus(&map, &x, 1e-12).value;
            assert!((phi.norm().ln() - g).abs() <= 1e-8 * g.max(1.0));
            let lf = log_bottcher_plus(&map, &x).unwrap();
            assert!((lf.exp() - phi).norm() <= 1e-10 * phi.norm());
            checked += 1;
        }
    }
}

#[test]
fn bottcher_far_out_is_close_to_first_coordinate() {
    let map = ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap();
    let phi = bottcher_plus(&map, &C2Point::real(1e6, 0.0)).unwrap();
    assert!((phi / C64::new(1e6, 0.0) - 1.0).norm() < 1e-5);
}

#[test]
fn saddle_lies_in_both_filled_sets() {
    let map = ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap();
    let p = C2Point::real(0.5, 0.5);
    assert_eq!(green_plus(&map, &p, 1e-8).value, 0.0);
    assert_eq!(green_minus(&map, &p, 1e-8).value, 0.0);
}
