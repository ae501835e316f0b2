use henon_core::ergodic::{
    birkhoff_averages, birkhoff_reference, birkhoff_spectrum, birkhoff_spectrum_with_rho, lyapunov_birkhoff,
    lyapunov_birkhoff_ensemble, lyapunov_gap_report, lyapunov_saddle_average, BirkhoffSeed, Schedule, TestFunction,
    TestNormalization,
};
use henon_core::periodic::{census, Census, NewtonConfig};
use henon_core::ComposedAutomorphism;
use std::sync::OnceLock;

fn horseshoe() -> &'static (ComposedAutomorphism, Census) {
    static S: OnceLock<(ComposedAutomorphism, Census)> = OnceLock::new();
    S.get_or_init(|| {
        let map = ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap();
        let c = census(&map, 7, &NewtonConfig::default()).unwrap();
        (map, c)
    })
}

#[test]
fn phi0_average_equals_orbit_exponent() {
    let (map, cen) = horseshoe();
    for n in 1..=7 {
        for o in cen.orbits(n).unwrap().iter().filter(|o| !o.lower_period) {
            let s = birkhoff_averages(map, o, &[TestFunction::Phi0]).unwrap();
            assert!((s[0] - o.chi_u()).abs() < 1e-8, "period {}: {} vs {}", o.period, s[0], o.chi_u());
        }
    }
}

#[test]
fn birkhoff_on_period_six_orbit_reproduces_its_exponent() {
    let (map, cen) = horseshoe();
    let orbits: Vec<_> = cen.orbits(6).unwrap().iter().filter(|o| o.period == 6).collect();
    assert!(!orbits.is_empty());
    for o in orbits {
        let b = lyapunov_birkhoff(map, &BirkhoffSeed::Orbit(o), 6).unwrap();
        assert!((b.estimate.value - o.chi_u()).abs() < 1e-10);
        let e = o.unstable_direction(map, 0);
        let v = b.direction;
        let cos = v.dot_conj(&e).norm() / (v.norm() * e.norm());
        assert!(1.0 - cos < 1e-6, "{cos}");
    }
}

#[test]
fn point_seeded_birkhoff_aligns_with_unstable_direction() {
    let (map, cen) = horseshoe();
    let o = cen.orbits(6).unwrap().iter().find(|o| o.period == 6).unwrap();
    let x = o.points[0];
    let v0 = henon_core::C2Point::real(0.3, 1.0);
    // Twelve steps stay within the shadowing range of the cycle; the transported
    // direction is then dominated by the unstable eigenvector.
    let b = lyapunov_birkhoff(map, &BirkhoffSeed::Point(x, v0), 12).unwrap();
    let e = o.unstable_direction(map, 0);
    let cos = b.direction.dot_conj(&e).norm() / (b.direction.norm() * e.norm());
    assert!(1.0 - cos < 1e-6, "{cos}");
}

#[test]
fn horseshoe_exponent_exceeds_log_degree() {
    let (map, cen) = horseshoe();
    let a = lyapunov_saddle_average(cen, 7).unwrap();
    assert!(a.weighted.value > 2f64.ln());
    assert!(a.count_normalized.value > 2f64.ln());
    let b = lyapunov_birkhoff_ensemble(map, cen.orbits(7).unwrap()).unwrap();
    let tol = 3.0 * (a.weighted.uncertainty + b.uncertainty) + 1e-9;
    assert!((a.weighted.value - b.value).abs() <= tol, "{} vs {}", a.weighted.value, b.value);
}

#[test]
fn normalizations_differ_by_at_most_the_saddle_deficit() {
    let map = ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap();
    let cen = census(&map, 4, &NewtonConfig::default()).unwrap();
    for n in 1..=4 {
        let row = cen.row(n).unwrap();
        let a = lyapunov_saddle_average(&cen, n).unwrap();
        let max_chi = cen.orbits(n).unwrap().iter().filter(|o| o.is_saddle()).map(|o| o.chi_u()).fold(0.0, f64::max);
        let bound = (1.0 - row.sper_count as f64 / 2f64.powi(n as i32)).abs() * max_chi;
        assert!((a.count_normalized.value - a.weighted.value).abs() <= bound + 1e-12);
    }
    let one = lyapunov_saddle_average(&cen, 1).unwrap();
    assert!((one.count_normalized.value - ((1.0 + 3f64.sqrt()) / 2.0).ln()).abs() < 1e-10);
}

#[test]
fn single_point_average_is_the_value() {
    let (map, cen) = horseshoe();
    for o in cen.orbits(1).unwrap() {
        let s = birkhoff_averages(map, o, &TestFunction::MOMENTS).unwrap();
        for (f, v) in TestFunction::MOMENTS.iter().zip(s) {
            assert_eq!(v, f.moment(&o.points[0]).unwrap());
        }
    }
}

#[test]
fn mask_never_shrinks_when_radius_grows() {
    let (map, cen) = horseshoe();
    for norm in [TestNormalization::Raw, TestNormalization::SupNorm] {
        let r = birkhoff_reference(map, cen.orbits(7).unwrap(), 7, &TestFunction::DEFAULT, norm).unwrap();
        let sch = Schedule::default();
        for n in 2..=6 {
            let mut last: Option<Vec<bool>> = None;
            for rho in [0.05, 0.1, 0.2, 0.4, 0.8, 1.6] {
                let sp = birkhoff_spectrum_with_rho(map, cen.orbits(n).unwrap(), n, &r, &sch, rho).unwrap();
                if let Some(prev) = &last {
                    assert!(prev.iter().zip(&sp.mask).all(|(a, b)| !a || *b));
                }
                last = Some(sp.mask);
            }
        }
    }
}

#[test]
fn dispersion_is_nonnegative_and_vanishes_for_constant_functions() {
    let (map, cen) = horseshoe();
    let r = birkhoff_reference(map, cen.orbits(7).unwrap(), 7, &TestFunction::DEFAULT, TestNormalization::Raw).unwrap();
    for n in 1..=7 {
        let sp = birkhoff_spectrum(map, cen.orbits(n).unwrap(), n, &r, &Schedule::default()).unwrap();
        for (i, d) in sp.dispersion.iter().enumerate() {
            assert!(*d >= 0.0);
            // Im z vanishes on the real horseshoe.
            if sp.functions[i] == TestFunction::ImZ {
                assert_eq!(*d, 0.0);
            } else if n > 1 {
                assert!(*d > 0.0);
            }
        }
    }
}

#[test]
fn gap_report_on_horseshoe_and_single_saddle() {
    let (_, cen) = horseshoe();
    let r = lyapunov_gap_report(cen, 7).unwrap();
    assert!(r.gap_81);
    assert!(r.max.chi_u > r.min.chi_u);
    let map = ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap();
    let c = census(&map, 1, &NewtonConfig::default()).unwrap();
    let r = lyapunov_gap_report(&c, 1).unwrap();
    assert_eq!(r.saddle_count, 1);
    assert!(!r.gap_81);
}
