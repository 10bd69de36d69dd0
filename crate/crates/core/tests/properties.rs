use ccoll::collection::{build_linear, build_quadratic, dedup_candidates, Body};
use ccoll::covering::CoveringTemplate;
use ccoll::metric::{approximation_factor, NormSpec, PointSet};
use ccoll::solve::{evaluate_objective, solve_over, ObjectiveKind, ObjectiveSpec};
use ccoll::verify::best_factor_flat;
use ccoll::wspd::{extract_wspd, validate_wspd, SplitTree};
use ccoll::Exec;
use proptest::prelude::*;

fn norms() -> impl Strategy<Value = NormSpec> {
    prop_oneof![
        Just(NormSpec::l1()),
        Just(NormSpec::l2()),
        Just(NormSpec::linf()),
        Just(NormSpec::lp(3.0).unwrap()),
    ]
}

fn coord() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn point_set(max_n: usize) -> impl Strategy<Value = PointSet> {
    (1usize..=3, 1..=max_n).prop_flat_map(|(d, n)| {
        prop::collection::vec(coord(), n * d).prop_map(move |v| PointSet::from_flat(d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(norm in norms(), a in prop::collection::vec(coord(), 3),
                           b in prop::collection::vec(coord(), 3), c in prop::collection::vec(coord(), 3)) {
        let ab = norm.dist(&a, &b);
        let bc = norm.dist(&b, &c);
        let ac = norm.dist(&a, &c);
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-12));
        prop_assert_eq!(ab, norm.dist(&b, &a));
        prop_assert_eq!(norm.dist(&a, &a), 0.0);
    }

    #[test]
    fn nearest_input_is_a_two_approximation(xs in point_set(20), norm in norms(),
                                            p in prop::collection::vec(coord(), 3)) {
        let p = &p[..xs.dim()];
        let (i, _) = xs.nearest(p, &norm);
        let f = approximation_factor(p, xs.point(i), &xs, &norm).unwrap();
        prop_assert!(f <= 2.0 * (1.0 + 1e-9), "factor {}", f);
        prop_assert_eq!(approximation_factor(p, p, &xs, &norm).unwrap(), 1.0);
    }

    #[test]
    fn templates_cover_the_unit_ball(d in 1usize..=3, sigma in 0.2..0.9f64, norm in norms(),
                                     u in prop::collection::vec(-1.0..1.0f64, 3)) {
        let t = CoveringTemplate::for_norm(&norm, d, sigma).unwrap();
        let mut u = u[..d].to_vec();
        let len = norm.norm(&u);
        if len > 1.0 {
            u.iter_mut().for_each(|x| *x /= len);
        }
        let i = t.nearest(&u).expect("unit-ball point has a nearest center");
        prop_assert!(norm.dist(t.center(i), &u) <= sigma * (1.0 + 1e-9));
        prop_assert!(t.max_center_norm() <= (1.0 + sigma) * (1.0 + 1e-9));
    }

    #[test]
    fn linf_template_size(d in 1usize..=3, sigma in 0.1..0.99f64) {
        let t = CoveringTemplate::linf_grid(d, sigma).unwrap();
        let m = (1.0 / sigma).ceil() as usize;
        prop_assert_eq!(t.len(), m.pow(d as u32));
    }

    #[test]
    fn wspd_is_valid(xs in point_set(40), norm in norms(), t in prop_oneof![Just(2.0), Just(10.0)]) {
        let tree = SplitTree::build(&xs);
        let w = extract_wspd(&tree, t, &norm);
        let r = validate_wspd(&w, &xs, t, &norm);
        prop_assert!(r.pass(), "{:?}", r);
    }

    #[test]
    fn builders_contain_inputs_and_satisfy_accounting(xs in point_set(8), norm in norms(),
                                                       eps in prop_oneof![Just(0.5), Just(0.8), Just(1.5)]) {
        for c in [
            build_linear(&xs, eps, &norm, Exec::Parallel).unwrap(),
            build_quadratic(&xs, eps, &norm, Exec::Parallel).unwrap(),
        ] {
            let n = xs.len();
            for i in 0..n {
                prop_assert_eq!(c.candidate(i), xs.point(i).to_vec());
            }
            let st = c.stats();
            let blocks = match c.body() {
                Body::Blocks { blocks, .. } => blocks.len(),
                _ => 0,
            };
            prop_assert_eq!(c.len(), n + blocks * st.template_size);
            if blocks > 0 {
                let per_pair = if st.s == n * (n - 1) { 1 } else { 2 };
                prop_assert_eq!(blocks, per_pair * st.s * st.levels);
            }
            let d = dedup_candidates(&c, 0.0).unwrap();
            prop_assert!(d.len() <= c.len());
            for i in 0..n {
                prop_assert_eq!(d.candidate(i), xs.point(i).to_vec());
            }
        }
    }

    #[test]
    fn best_factor_is_monotone_under_union(xs in point_set(6), norm in norms(),
                                           extra in prop::collection::vec(coord(), 30),
                                           p in prop::collection::vec(coord(), 3)) {
        let d = xs.dim();
        let p = &p[..d];
        let c1 = xs.coords().to_vec();
        let c2: Vec<f64> = extra[..(extra.len() / d) * d].to_vec();
        let mut both = c1.clone();
        both.extend_from_slice(&c2);
        let (f1, _) = best_factor_flat(p, &c1, &xs, &norm).unwrap();
        let (f2, _) = best_factor_flat(p, &c2, &xs, &norm).unwrap();
        let (fu, _) = best_factor_flat(p, &both, &xs, &norm).unwrap();
        prop_assert!(fu <= f1.min(f2));
    }

    #[test]
    fn solve_value_is_recomputable(xs in point_set(7), k in 1usize..=2, m_frac in 0.3..1.0f64,
                                   kind in prop_oneof![Just(ObjectiveKind::KCenter), Just(ObjectiveKind::KMedian),
                                                       Just(ObjectiveKind::KMeans), Just(ObjectiveKind::MVariance)]) {
        let norm = NormSpec::l2();
        let m = ((xs.total_weight() as f64 * m_frac).ceil() as usize).max(1);
        let spec = ObjectiveSpec::new(kind, k).with_m(m);
        prop_assume!(k <= xs.len());
        let r = solve_over(&xs, xs.coords(), &norm, &spec, Exec::Parallel).unwrap();
        let v = evaluate_objective(&xs, &r.centers, &r.assignment, &norm, &spec).unwrap();
        prop_assert!((v - r.value).abs() <= 1e-9 * r.value.abs().max(1e-300));
    }
}
