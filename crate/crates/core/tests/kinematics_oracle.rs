mod oracles;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use volfx_core::kinematics::{angle, area3, area4, distance, SampleWindow};
use volfx_core::Vec3;

const TOL: f64 = 1e-9;

#[test]
fn thousand_random_configurations_match_oracle() {
    let stats = oracles::kinematics_suite(0x5eed, 1000, TOL);
    for (op, s) in &stats {
        assert!(s.cases > 1000, "{op}: only {} cases", s.cases);
        assert!(s.failures.is_empty(), "{op}: {} failures, first {:?}", s.failures.len(), s.failures.first());
    }
}

#[test]
fn planar_quads_match_shoelace() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (q, want) = oracles::planar_quad(&mut rng);
        let got = area4(q[0].into(), q[1].into(), q[2].into(), q[3].into());
        assert!(oracles::rel_err(got, want) < TOL, "got {got} want {want}");
    }
}

#[test]
fn right_angle_and_degenerate_arm() {
    let o = Vec3::ZERO;
    assert!((angle(Vec3::new(1.0, 0.0, 0.0), o, Vec3::new(0.0, 2.0, 0.0)).unwrap() - 90.0).abs() < 1e-12);
    assert_eq!(angle(o, o, Vec3::new(1.0, 0.0, 0.0)), None);
    assert_eq!(angle(Vec3::new(5e-10, 0.0, 0.0), o, Vec3::new(1.0, 0.0, 0.0)), None);
}

#[test]
fn speed_needs_fifteen_consecutive_frames() {
    let mut w = SampleWindow::new();
    for f in 0..15 {
        w.push(f, Some(Vec3::new(f as f64 * 0.01, 0.0, 1.0)));
        assert!(w.speed().is_none());
    }
    w.push(15, Some(Vec3::new(0.15, 0.0, 1.0)));
    let s = w.speed().unwrap();
    assert!((s.magnitude - 0.3).abs() < 1e-12);
    // A skipped frame restarts the window.
    w.push(17, Some(Vec3::new(0.17, 0.0, 1.0)));
    assert!(w.speed().is_none());
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-3.0..3.0f64, -3.0..3.0f64, 0.2..5.0f64]
}

fn rigid() -> impl Strategy<Value = ([[f64; 3]; 3], [f64; 3])> {
    (any::<u64>(), [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64]).prop_map(|(seed, t)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (oracles::rand_rotation(&mut rng), t)
    })
}

fn v(p: [f64; 3]) -> Vec3 {
    p.into()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn measures_are_rigid_invariant(a in point(), b in point(), c in point(), d in point(), (r, t) in rigid()) {
        let m = |p| v(oracles::apply(&r, t, p));
        prop_assert!(close(distance(v(a), v(b)), distance(m(a), m(b)), 1e-9));
        prop_assert!(close(area3(v(a), v(b), v(c)), area3(m(a), m(b), m(c)), 1e-9));
        prop_assert!(close(area4(v(a), v(b), v(c), v(d)), area4(m(a), m(b), m(c), m(d)), 1e-9));
        if let (Some(x), Some(y)) = (angle(v(a), v(b), v(c)), angle(m(a), m(b), m(c))) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn angle_is_symmetric_and_bounded(a in point(), b in point(), c in point()) {
        let x = angle(v(a), v(b), v(c));
        let y = angle(v(c), v(b), v(a));
        prop_assert_eq!(x.is_some(), y.is_some());
        if let (Some(x), Some(y)) = (x, y) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&x));
        }
    }

    #[test]
    fn distance_is_a_metric(a in point(), b in point(), c in point()) {
        let (ab, bc, ac) = (distance(v(a), v(b)), distance(v(b), v(c)), distance(v(a), v(c)));
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, distance(v(b), v(a)));
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn area3_is_permutation_invariant(a in point(), b in point(), c in point()) {
        let x = area3(v(a), v(b), v(c));
        for y in [area3(v(b), v(c), v(a)), area3(v(c), v(a), v(b)), area3(v(b), v(a), v(c))] {
            prop_assert!(close(x, y, 1e-9));
        }
    }

    #[test]
    fn stationary_track_has_zero_speed(p in point(), n in 16u32..40) {
        let mut w = SampleWindow::new();
        for f in 0..n {
            w.push(f, Some(v(p)));
        }
        let s = w.speed().unwrap();
        prop_assert_eq!(s.magnitude, 0.0);
    }

    #[test]
    fn only_endpoints_decide_availability(hole in 0u32..16, n in 16u32..30) {
        // Drop one sample inside the 16-frame span ending at the last frame.
        let last = n - 1;
        let mut w = SampleWindow::new();
        for f in 0..n {
            let p = (f != last - hole).then(|| Vec3::new(f as f64, 0.0, 1.0));
            w.push(f, p);
        }
        let endpoint = hole == 0 || hole == 15;
        prop_assert_eq!(w.speed().is_none(), endpoint);
    }
}
