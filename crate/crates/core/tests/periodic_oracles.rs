use henon_core::periodic::{census, find_periodic, Classification, NewtonConfig, PeriodicOrbit, Seeds};
use henon_core::{C2Point, ComposedAutomorphism, C64};
use nalgebra::{DMatrix, Schur};

type Poly = Vec<C64>;

fn add(a: &Poly, b: &Poly) -> Poly {
    let mut r = vec![C64::new(0.0, 0.0); a.len().max(b.len())];
    for (i, c) in a.iter().enumerate() {
        r[i] += c;
    }
    for (i, c) in b.iter().enumerate() {
        r[i] += c;
    }
    r
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut r = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            r[i + j] += x * y;
        }
    }
    r
}

fn scale(a: &Poly, s: C64) -> Poly {
    a.iter().map(|c| c * s).collect()
}

fn roots(p: &Poly) -> Vec<C64> {
    let mut p = p.clone();
    while p.last().is_some_and(|c| c.norm() < 1e-300) {
        p.pop();
    }
    let n = p.len() - 1;
    let lead = p[n];
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -p[i] / lead;
    }
    Schur::new(m).eigenvalues().unwrap().iter().copied().collect()
}

/// Polynomial in z₀ whose roots are the first coordinates of `Fixₙ` for
/// `z_{i+1} = a z_{i−1} + z_i² + c`, by elimination (n ≤ 3).
fn eliminated(a: C64, c: C64, n: usize) -> Poly {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match n {
        // z² + (a − 1) z + c
        1 => vec![c, a - one, one],
        // (1−a)³ z − (z² + c)² − c (1−a)²
        2 => {
            let b = one - a;
            let sq = mul(&vec![c, zero, one], &vec![c, zero, one]);
            add(&add(&vec![zero, b * b * b], &scale(&sq, -one)), &vec![-c * b * b])
        }
        // z₂ = a z₀ + z₁² + c, and z₁ is a root of Q(z₁) = a z₁² − z₁ + C(z₀)
        // with C = z₀² + a² z₀ + (1 + a) c. The closing equation
        // P(z₁) = z₀ − a z₁ − z₂² − c is reduced modulo Q to α z₁ + β and the
        // resultant a⁴·(α² C/a + α β/a + β²) is returned.
        3 => {
            let cz: Poly = vec![(one + a) * c, a * a, one];
            // P as polynomial in z₁ with coefficients in z₀.
            let s: Poly = vec![c, a]; // a z₀ + c
            let mut p: Vec<Poly> = vec![vec![zero]; 5];
            // −(s + z₁²)² = −s² − 2 s z₁² − z₁⁴
            p[0] = add(&scale(&mul(&s, &s), -one), &add(&vec![-c, one], &vec![zero]));
            p[1] = vec![-a];
            p[2] = scale(&s, C64::new(-2.0, 0.0));
            p[4] = vec![-one];
            // z₁² ≡ (z₁ − C)/a
            for k in (2..5).rev() {
                let t = std::mem::replace(&mut p[k], vec![zero]);
                p[k - 1] = add(&p[k - 1], &scale(&t, one / a));
                p[k - 2] = add(&p[k - 2], &scale(&mul(&t, &cz), -one / a));
            }
            let (alpha, beta) = (p[1].clone(), p[0].clone());
            let a2 = mul(&alpha, &alpha);
            let r = add(
                &add(&scale(&mul(&a2, &cz), one / a), &scale(&mul(&alpha, &beta), one / a)),
                &mul(&beta, &beta),
            );
            scale(&r, a.powi(4))
        }
        _ => unreachable!(),
    }
}

fn assert_matches_oracle(map: &ComposedAutomorphism, a: C64, c: C64, n: usize) {
    let search = find_periodic(map, n, &Seeds::Default, &NewtonConfig::default()).unwrap();
    let mut found: Vec<C64> = search.orbits.iter().flat_map(|o| o.points.iter().map(|p| p.z)).collect();
    let mut expected = roots(&eliminated(a, c, n));
    assert_eq!(expected.len(), 1 << n);
    assert_eq!(found.len(), 1 << n, "n={n}: {found:?} vs {expected:?}");
    for z in &found {
        let (i, d) = expected
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (e - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        assert!(d < 1e-6 * z.norm().max(1.0), "n={n}: {z} has no oracle root (nearest {d:e})");
        expected.remove(i);
    }
    found.clear();
}

#[test]
fn orbit_locations_match_eliminated_polynomial_roots() {
    for (a, c) in [
        (C64::new(0.1, 0.0), C64::new(-6.0, 0.0)),
        (C64::new(0.5, 0.0), C64::new(0.0, 0.0)),
        (C64::new(0.0, 0.3), C64::new(-1.0, 0.2)),
    ] {
        let map = ComposedAutomorphism::quadratic(a, c).unwrap();
        for n in 1..=3 {
            assert_matches_oracle(&map, a, c, n);
        }
    }
}

#[test]
fn fixed_points_and_multipliers_of_simple_map() {
    let map = ComposedAutomorphism::real_quadratic(0.5, 0.0).unwrap();
    let s = find_periodic(&map, 1, &Seeds::Default, &NewtonConfig::default()).unwrap();
    assert_eq!(s.orbits.len(), 2);
    let sink = &s.orbits[0];
    let saddle = &s.orbits[1];
    assert!(sink.points[0].dist(&C2Point::real(0.0, 0.0)) < 1e-12);
    assert!(saddle.points[0].dist(&C2Point::real(0.5, 0.5)) < 1e-12);
    assert_eq!(sink.classification, Classification::Sink);
    assert_eq!(saddle.classification, Classification::Saddle);
    let r3 = 3f64.sqrt();
    assert!((saddle.lambda_u().to_c64() - C64::new((1.0 + r3) / 2.0, 0.0)).norm() < 1e-10);
    assert!((saddle.lambda_s().to_c64() - C64::new((1.0 - r3) / 2.0, 0.0)).norm() < 1e-10);
    assert!((saddle.chi_u() - ((1.0 + r3) / 2.0).ln()).abs() < 1e-10);
    assert!((sink.lambda1.abs() - 0.5f64.sqrt()).abs() < 1e-10);
}

fn check_orbit_invariants(map: &ComposedAutomorphism, o: &PeriodicOrbit, tol: f64) {
    let n = o.period;
    let x = map.iterate(&o.points[0], n as i64).point().unwrap();
    assert!(x.dist(&o.points[0]) < tol * o.points[0].norm().max(1.0));
    assert!(o.residual_extended(map) < tol);
    let prod = o.lambda1.mul(&o.lambda2);
    let jac = henon_core::periodic::LogComplex::from_c64(map.jacobian()).powi(n as i64);
    assert!((prod.ln_abs - jac.ln_abs).abs() < 1e-8, "{prod:?} vs {jac:?}");
    let dphase = (prod.arg - jac.arg).rem_euclid(std::f64::consts::TAU);
    assert!(dphase.min(std::f64::consts::TAU - dphase) < 1e-8);
}

#[test]
fn horseshoe_census_is_complete_and_consistent() {
    let map = ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap();
    let cen = census(&map, 6, &NewtonConfig::default()).unwrap();
    for row in &cen.rows {
        assert_eq!(row.fix_count, 1 << row.n);
        assert_eq!(row.sper_count, 1 << row.n);
        assert_eq!(row.ratio, 1.0);
        assert!(!row.low_confidence);
    }
    for n in 1..=6 {
        let orbits = cen.orbits(n).unwrap();
        // Σ_{m | n} m·#(exact period m) = fix_count
        let mut total = 0;
        for m in (1..=n).filter(|m| n % m == 0) {
            let exact = cen.orbits(m).unwrap().iter().filter(|o| o.period == m).count();
            total += m * exact;
            assert_eq!(orbits.iter().filter(|o| o.period == m).count(), exact);
        }
        assert_eq!(total, cen.row(n).unwrap().fix_count);
        for o in orbits {
            check_orbit_invariants(&map, o, 1e-9);
            assert_eq!(o.lower_period, o.period < n);
            if o.lower_period {
                let own = cen.orbits(o.period).unwrap();
                assert!(own.iter().any(|p| !p.lower_period && p.cycle_distance(o) < 1e-9));
            }
        }
    }
}

#[test]
fn deduplication_is_idempotent_under_seed_union() {
    let map = ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap();
    let cfg = NewtonConfig::default();
    let first = find_periodic(&map, 4, &Seeds::Default, &cfg).unwrap();
    let seeds: Vec<Vec<C2Point>> = first
        .orbits
        .iter()
        .flat_map(|o| {
            let mut c = o.points.clone();
            while c.len() < 4 {
                c.extend_from_slice(&o.points);
            }
            c.truncate(4);
            let shifted: Vec<C2Point> = c.iter().map(|p| C2Point::new(p.z * 1.001, p.w * 0.999)).collect();
            [c, shifted]
        })
        .collect();
    let again = find_periodic(&map, 4, &Seeds::Cycles(seeds), &cfg).unwrap();
    assert_eq!(first.orbits.len(), again.orbits.len());
    for (a, b) in first.orbits.iter().zip(&again.orbits) {
        assert_eq!(a.period, b.period);
        assert!(a.cycle_distance(b) < 1e-9);
    }
}

#[test]
fn ordering_is_deterministic() {
    let map = ComposedAutomorphism::real_quadratic(0.1, -6.0).unwrap();
    let a = find_periodic(&map, 5, &Seeds::Default, &NewtonConfig::default()).unwrap();
    let b = find_periodic(&map, 5, &Seeds::Default, &NewtonConfig::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
