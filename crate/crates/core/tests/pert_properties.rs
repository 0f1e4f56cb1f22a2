use proptest::prelude::*;
use zeittafel_core::pert::{
    analyze, build_network, completion_probability, expected_time, normal_cdf, Activity,
    PertNetwork, ThreePointEstimate,
};

fn estimate() -> impl Strategy<Value = ThreePointEstimate> {
    (0.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64)
        .prop_map(|(o, dm, dp)| ThreePointEstimate::new(o, o + dm, o + dm + dp).unwrap())
}

/// Random DAG: activity ids `a00..`, edges only from lower to higher index.
fn dag(max: usize) -> impl Strategy<Value = (Vec<ThreePointEstimate>, Vec<(usize, usize)>)> {
    (0..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let mask = proptest::collection::vec(proptest::bool::weighted(0.3), pairs.len());
        (proptest::collection::vec(estimate(), n), mask).prop_map(move |(ests, mask)| {
            let edges = pairs
                .iter()
                .zip(mask)
                .filter(|(_, keep)| *keep)
                .map(|(p, _)| *p)
                .collect();
            (ests, edges)
        })
    })
}

fn network(ests: &[ThreePointEstimate], edges: &[(usize, usize)]) -> PertNetwork {
    let acts = ests
        .iter()
        .enumerate()
        .map(|(i, e)| Activity::new(format!("a{i:02}"), "", *e).unwrap())
        .collect();
    let edges = edges
        .iter()
        .map(|&(i, j)| (format!("a{i:02}"), format!("a{j:02}")))
        .collect();
    build_network(acts, edges).unwrap()
}

/// Every source-to-sink path as index lists, by exhaustive DFS.
fn all_paths(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let succ = |u: usize| edges.iter().filter(move |e| e.0 == u).map(|e| e.1);
    let has_pred = |v: usize| edges.iter().any(|e| e.1 == v);
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..n).filter(|&v| !has_pred(v)).map(|v| vec![v]).collect();
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        let next: Vec<usize> = succ(last).collect();
        if next.is_empty() {
            out.push(path);
        } else {
            for s in next {
                let mut p = path.clone();
                p.push(s);
                stack.push(p);
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn expected_time_within_bounds(e in estimate()) {
        let t = expected_time(&e).unwrap();
        prop_assert!(e.optimistic <= t + 1e-12 && t <= e.pessimistic + 1e-12);
    }

    #[test]
    fn degenerate_estimate_returns_mode(m in 0.0..1e4f64) {
        prop_assert_eq!(expected_time(&ThreePointEstimate::fixed(m).unwrap()).unwrap(), m);
    }

    #[test]
    fn duration_matches_longest_path((ests, edges) in dag(12)) {
        let net = network(&ests, &edges);
        let a = analyze(&net);
        let paths = all_paths(ests.len(), &edges);
        let sum = |p: &Vec<usize>| p.iter().map(|&i| ests[i].mean()).sum::<f64>();
        let longest = paths.iter().map(sum).fold(0.0, f64::max);
        prop_assert!((a.project_duration - longest).abs() <= 1e-9, "{} vs {}", a.project_duration, longest);

        let tol = 1e-9 * longest.max(1.0);
        for s in &a.activities {
            prop_assert!(s.total_float >= 0.0);
            prop_assert!((s.earliest_finish - s.earliest_start - s.expected_time).abs() <= 1e-9);
            prop_assert!((s.latest_finish - s.latest_start - s.expected_time).abs() <= 1e-9);
            if s.total_float <= tol {
                let idx: usize = s.id[1..].parse().unwrap();
                prop_assert!(
                    paths.iter().any(|p| p.contains(&idx) && (sum(p) - longest).abs() <= 1e-9),
                    "zero-float {} on no maximal path", s.id
                );
            }
        }
        for id in &a.critical_path {
            prop_assert!(a.activity(id).unwrap().total_float <= tol);
        }
        if !ests.is_empty() {
            let idx: Vec<usize> = a.critical_path.iter().map(|id| id[1..].parse().unwrap()).collect();
            prop_assert!(paths.contains(&idx), "critical path {:?} is not a source-to-sink path", idx);
            prop_assert!((sum(&idx) - longest).abs() <= 1e-9);
            let var: f64 = idx.iter().map(|&i| ests[i].spread_variance()).sum();
            prop_assert!((a.critical_variance - var).abs() <= 1e-9);
        }
    }

    #[test]
    fn scaling_preserves_probability_and_path(
        (ests, edges) in dag(8),
        c in 0.01..100.0f64,
        slack in -50.0..50.0f64,
    ) {
        let base = analyze(&network(&ests, &edges));
        let deadline = (base.project_duration + slack).max(0.0);
        let scaled_ests: Vec<_> = ests.iter().map(|e| e.scaled(c)).collect();
        let scaled = analyze(&network(&scaled_ests, &edges));
        prop_assert_eq!(&base.critical_path, &scaled.critical_path);

        let p1 = completion_probability(&base, deadline).unwrap();
        let p2 = completion_probability(&scaled, deadline * c).unwrap();
        prop_assert!((p1.probability - p2.probability).abs() <= 1e-9);
        match (p1.z_value, p2.z_value) {
            (Some(z1), Some(z2)) => prop_assert!((z1 - z2).abs() <= 1e-9 * z1.abs().max(1.0)),
            (None, None) => {}
            other => prop_assert!(false, "z mismatch {:?}", other),
        }
    }
}

#[test]
fn cdf_is_monotone_and_symmetric() {
    let mut prev = 0.0;
    for i in -600..=600 {
        let z = i as f64 / 100.0;
        let p = normal_cdf(z).unwrap();
        assert!(p >= prev, "not monotone at {z}");
        assert!(
            (p + normal_cdf(-z).unwrap() - 1.0).abs() <= 2e-7,
            "asymmetric at {z}"
        );
        prev = p;
    }
}
