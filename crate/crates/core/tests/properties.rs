use proptest::prelude::*;

use mpc_kcenter::geohash::{face_hash, FaceHashParams};
use mpc_kcenter::geometry::{dist, dist_inf, min_enclosing_ball, Dataset, Point};
use mpc_kcenter::kcenter::{solve_kcenter, KCenterMode};
use mpc_kcenter::lowdim_rs::{lowdim_config, lowdim_ruling_set};
use mpc_kcenter::mpc::{MpcComputation, MpcConfig};
use mpc_kcenter::oracles::{oracle_kcenter_opt, verify_ruling_set};

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, d)
}

fn cloud(max_n: usize, d: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(point(d), 1..=max_n).prop_map(|rows| Dataset::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in point(3), b in point(3), c in point(3)) {
        let (a, b, c) = (Point::new(a).unwrap(), Point::new(b).unwrap(), Point::new(c).unwrap());
        let ab = dist(&a, &b).unwrap();
        prop_assert_eq!(ab, dist(&b, &a).unwrap());
        prop_assert!(ab <= dist(&a, &c).unwrap() + dist(&c, &b).unwrap() + 1e-9);
        let inf = dist_inf(&a, &b).unwrap();
        prop_assert!(inf <= ab + 1e-12 && ab <= 3f64.sqrt() * inf + 1e-9);
    }

    #[test]
    fn enclosing_ball_contains_its_points(p in cloud(8, 2)) {
        let ball = min_enclosing_ball(p.points()).unwrap();
        for x in p.iter() {
            prop_assert!(dist(x, &ball.center).unwrap() <= ball.radius * (1.0 + 1e-9) + 1e-9);
        }
    }

    #[test]
    fn same_level_buckets_are_separated(d in 1usize..4, beta in 0.05..1.0f64, a in point(3), b in point(3)) {
        let params = FaceHashParams::for_beta(d, beta).unwrap();
        let x = Point::new(a[..d].to_vec()).unwrap();
        // Keep the pair close so the interesting case is exercised often.
        let y = Point::new(a[..d].iter().zip(&b).map(|(u, v)| u + v * beta / 25.0).collect()).unwrap();
        let (hx, hy) = (face_hash(&x, &params), face_hash(&y, &params));
        if hx != hy && hx.level() == hy.level() {
            prop_assert!(dist_inf(&x, &y).unwrap() > beta);
        }
    }

    #[test]
    fn sort_matches_host_sort(keys in prop::collection::vec(0u64..40, 1..600), machines in 2usize..40) {
        let recs: Vec<(u64, u64)> = keys.iter().enumerate().map(|(i, &k)| (k, i as u64)).collect();
        let s = (8 * recs.len() / machines).max(64);
        let mut comp = MpcComputation::scatter(recs.clone(), MpcConfig::new(s, machines, 1).unwrap()).unwrap();
        comp.sort_by_key(|r| r.0).unwrap();
        let mut expected = recs;
        expected.sort_by_key(|r| r.0);
        prop_assert_eq!(comp.gather(), expected);
    }

    #[test]
    fn lowdim_ruling_set_is_certified(p in cloud(60, 2), tau in 0.5..20.0f64, seed in 0u64..1000) {
        let eps = 0.25;
        let cfg = lowdim_config(&p, tau, eps, 256, seed).unwrap();
        let (rs, _) = lowdim_ruling_set(&p, tau, eps, &cfg).unwrap();
        let (independent, radius) = verify_ruling_set(&p, rs.selected.points(), tau).unwrap();
        prop_assert!(independent);
        prop_assert!(radius <= (1.0 + 2.0 * eps) * tau * (1.0 + 1e-9));
        prop_assert_eq!(radius, rs.domination_radius);
    }

    #[test]
    fn ruling_set_commutes_with_doubling(p in cloud(40, 2), tau in 0.5..20.0f64) {
        let eps = 0.25;
        let cfg = lowdim_config(&p, tau, eps, 256, 5).unwrap();
        let (rs, _) = lowdim_ruling_set(&p, tau, eps, &cfg).unwrap();
        let q = Dataset::new(p.iter().map(|x| x.scale(2.0).unwrap()).collect()).unwrap();
        let (rs2, _) = lowdim_ruling_set(&q, 2.0 * tau, eps, &cfg).unwrap();
        let doubled: Vec<Point> = rs.selected.iter().map(|x| x.scale(2.0).unwrap()).collect();
        prop_assert_eq!(rs2.selected.points(), &doubled[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kcenter_solutions_are_feasible(p in cloud(10, 2), k in 1usize..4, mds in any::<bool>()) {
        let eps = 0.3;
        let mode = if mds { KCenterMode::MdsBicriteria } else { KCenterMode::RsLowdim };
        let cfg = MpcConfig::new(1 << 15, 4, 7).unwrap();
        let sol = solve_kcenter(&p, k, eps, mode, &cfg).unwrap();
        prop_assert!(sol.centers.len() <= mode.center_cap(k, eps));
        prop_assert_eq!(sol.assignment.len(), p.len());
        let cost = p
            .iter()
            .zip(&sol.assignment)
            .map(|(x, &j)| dist(x, &sol.centers[j]).unwrap())
            .fold(0.0, f64::max);
        prop_assert_eq!(cost, sol.cost);
        if mode == KCenterMode::RsLowdim {
            prop_assert!(cost >= oracle_kcenter_opt(&p, k).unwrap() * (1.0 - 1e-9));
        }
    }
}
