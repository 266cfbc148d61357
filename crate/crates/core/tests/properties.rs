//! Property tests for the geometric and algebraic building blocks.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use socp_tilt::lorentz::{self, ConePoint, Stratum};
use socp_tilt::poly::{PolyFunc, Term};
use socp_tilt::problem::{self, Tolerances};
use socp_tilt::quadmin;
use socp_tilt::subsolver::{self, LpStatus};
use socp_tilt::variational;

fn vec_strategy(len: std::ops::RangeInclusive<usize>, r: f64) -> impl Strategy<Value = DVector<f64>> {
    len.prop_flat_map(move |n| prop::collection::vec(-r..r, n)).prop_map(DVector::from_vec)
}

fn cone_tol() -> lorentz::ConeTol {
    Tolerances::default().cone_tol()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn projection_lands_in_cone_and_is_idempotent(p in vec_strategy(2..=6, 10.0)) {
        let pp = lorentz::project_vec(&p);
        prop_assert!(lorentz::cone_contains(&ConePoint::from_vec(&pp), 1e-12 * (1.0 + p.norm())));
        prop_assert!((lorentz::project_vec(&pp) - &pp).norm() <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn moreau_decomposition(p in vec_strategy(2..=6, 10.0)) {
        // Q° = -Q, so p = P_Q(p) - P_Q(-p) with orthogonal parts.
        let a = lorentz::project_vec(&p);
        let b = lorentz::project_vec(&(-&p));
        prop_assert!((&a - &b - &p).norm() <= 1e-12 * (1.0 + p.norm()));
        prop_assert!(a.dot(&b).abs() <= 1e-10 * (1.0 + p.norm_squared()));
    }

    #[test]
    fn projection_is_nonexpansive(p in vec_strategy(4..=4, 5.0), q in vec_strategy(4..=4, 5.0)) {
        let d = (lorentz::project_vec(&p) - lorentz::project_vec(&q)).norm();
        prop_assert!(d <= (&p - &q).norm() + 1e-12);
    }

    #[test]
    fn hat_is_an_involution_and_swaps_cones(p in vec_strategy(2..=5, 3.0)) {
        let q = ConePoint::from_vec(&lorentz::project_vec(&p));
        prop_assert_eq!(q.hat().hat(), q.clone());
        // q ∈ Q ⇒ q̂ ∈ Q* = -Q.
        prop_assert!(lorentz::dual_contains(&q.hat(), 1e-12 * (1.0 + q.norm())));
    }

    #[test]
    fn classification_matches_membership(p in vec_strategy(2..=5, 3.0)) {
        let q = ConePoint::from_vec(&p);
        let tol = cone_tol();
        let inside = lorentz::cone_contains(&q, 0.0);
        match q.classify(&tol) {
            Stratum::Interior => prop_assert!(inside),
            Stratum::Outside => prop_assert!(!inside),
            _ => prop_assert!(lorentz::dist_to_cone(&p) <= 1e-8 * (1.0 + q.norm())),
        }
    }

    #[test]
    fn normal_cone_elements_are_orthogonal(p in vec_strategy(2..=5, 3.0), t in 0.0f64..2.0) {
        // For q = P_Q(p), the residual p - q lies in N_Q(q).
        let q = lorentz::project_vec(&p);
        let lam = (&p - &q) * t;
        let qc = ConePoint::from_vec(&q);
        if let Ok(nc) = lorentz::normal_cone_description(&qc, &cone_tol()) {
            prop_assert!(nc.contains(&ConePoint::from_vec(&lam), 1e-9 * (1.0 + lam.norm())));
        }
        prop_assert!(lam.dot(&q).abs() <= 1e-10 * (1.0 + p.norm_squared()));
    }
}

/// Random polynomial in `n ≤ 3` variables of degree ≤ 3.
fn poly_strategy() -> impl Strategy<Value = PolyFunc> {
    (1usize..=3).prop_flat_map(|n| {
        prop::collection::vec((-2.0f64..2.0, prop::collection::vec(0u32..=2, n)), 0..8).prop_map(move |ts| {
            let terms = ts.into_iter().map(|(c, e)| Term { c, e }).collect();
            PolyFunc::new(n, terms, 6).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gradient_and_hessian_match_finite_differences(p in poly_strategy(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let x = common::rand_vec(&mut rng, p.n, 1.0);
        let h = 1e-5;
        let g = p.gradient(&x);
        let hs = p.hessian(&x);
        for i in 0..p.n {
            let mut e = DVector::zeros(p.n);
            e[i] = h;
            let fd = (p.eval(&(&x + &e)) - p.eval(&(&x - &e))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()));
            let gd = (p.gradient(&(&x + &e)) - p.gradient(&(&x - &e))) / (2.0 * h);
            for j in 0..p.n {
                prop_assert!((gd[j] - hs[(j, i)]).abs() <= 1e-6 * (1.0 + hs[(j, i)].abs()));
            }
        }
        prop_assert!((&hs - hs.transpose()).amax() == 0.0);
    }

    #[test]
    fn polynomial_arithmetic_is_pointwise(a in poly_strategy(), s in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let x = common::rand_vec(&mut rng, a.n, 1.0);
        let b = a.scaled(s);
        let sum = a.add(&b);
        prop_assert!((sum.eval(&x) - (1.0 + s) * a.eval(&x)).abs() <= 1e-12 * (1.0 + a.eval(&x).abs()));
    }

    #[test]
    fn instance_json_round_trips(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let inst = common::random_small_instance(&mut rng, seed);
        let back = problem::parse_instance(&inst.to_json()).unwrap();
        prop_assert_eq!(back.to_file(), inst.to_file());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadmin_is_feasible_and_below_samples(seed in 0u64..100_000) {
        let mut rng = common::rng(seed);
        let n = 3;
        let m = common::rand_sym(&mut rng, n, 1.0);
        let a = common::rand_vec(&mut rng, n, 1.0);
        let r = quadmin::minimize(&m, &[a.clone()], None).unwrap();
        prop_assert!(a.dot(&r.u).abs() <= 1e-10);
        prop_assert!((r.u.norm() - 1.0).abs() <= 1e-12);
        for _ in 0..50 {
            let mut u = common::rand_unit(&mut rng, n);
            u -= &a * (a.dot(&u) / a.norm_squared());
            if u.norm() < 1e-6 {
                continue;
            }
            u /= u.norm();
            prop_assert!(r.value <= u.dot(&(&m * &u)) + 1e-10);
        }
    }

    #[test]
    fn quadmin_cone_constraint_is_met(seed in 0u64..100_000) {
        let mut rng = common::rng(seed);
        let n = 4;
        let m = common::rand_sym(&mut rng, n, 1.0);
        let c = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 1.0, 1.0, 1.0]));
        let a = common::rand_vec(&mut rng, n, 1.0);
        // a^⊥ meets the light cone away from 0 iff a is not timelike.
        let timelike = a[0].abs() > a.rows(1, n - 1).norm();
        let margin = (a[0].abs() - a.rows(1, n - 1).norm()).abs();
        prop_assume!(margin > 1e-6);
        match quadmin::minimize(&m, &[a.clone()], Some(&c)) {
            None => prop_assert!(timelike),
            Some(r) => {
                prop_assert!(!timelike);
                prop_assert!(a.dot(&r.u).abs() <= 1e-9);
                prop_assert!(r.u.dot(&(&c * &r.u)).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn maximize_linear_beats_feasible_points(seed in 0u64..100_000) {
        let mut rng = common::rng(seed);
        let s = 4;
        let n = 2;
        let j = DMatrix::from_fn(s, n, |_, _| common::unif(&mut rng, -1.0, 1.0));
        let lam_star = common::rand_dual_nonzero(&mut rng, s);
        let c = j.transpose() * &lam_star;
        let d = common::rand_vec(&mut rng, s, 1.0);
        let slice = subsolver::build_slice(&j, &c, 1e-8);
        let res = subsolver::maximize_linear(&slice, &d, None);
        prop_assert!(res.status != LpStatus::Infeasible);
        if res.status == LpStatus::Optimal {
            let lam = res.argmax.unwrap();
            prop_assert!(subsolver::dual_depth(&lam) >= -1e-9 * (1.0 + lam.norm()));
            prop_assert!((j.transpose() * &lam - &c).norm() <= 1e-8 * (1.0 + c.norm()));
            prop_assert!(res.value + 1e-9 * (1.0 + res.value.abs()) >= d.dot(&lam_star));
        }
    }

    #[test]
    fn rho_is_nonnegative_and_zero_at_zero_multiplier(seed in 0u64..100_000) {
        let mut rng = common::rng(seed);
        let n = 2;
        let g: Vec<PolyFunc> = (0..3)
            .map(|_| {
                let row: Vec<f64> = common::rand_vec(&mut rng, n, 1.0).iter().cloned().collect();
                common::rand_poly(&mut rng, n, &row, 2, 1.0)
            })
            .collect();
        let inst = common::raw_instance(PolyFunc::zero(n), g, n);
        let u = common::rand_unit(&mut rng, n);
        let v = common::rand_unit(&mut rng, n);
        let lam = common::rand_dual(&mut rng, 3);
        let r = variational::rho(&inst, &u, &lam, &v).unwrap();
        prop_assert!(r.value >= 0.0);
        let zero = variational::rho(&inst, &u, &DVector::zeros(3), &v).unwrap();
        prop_assert_eq!(zero.value, 0.0);
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Wrapped(#[serde(with = "socp_tilt::extreal")] f64);

proptest! {
    #[test]
    fn extended_reals_round_trip(x in prop_oneof![
        any::<f64>(),
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
        Just(f64::NAN),
    ]) {
        let text = serde_json::to_string(&Wrapped(x)).unwrap();
        let back: Wrapped = serde_json::from_str(&text).unwrap();
        if x.is_nan() {
            prop_assert!(back.0.is_nan());
        } else {
            prop_assert_eq!(back.0.to_bits(), x.to_bits());
        }
    }
}
