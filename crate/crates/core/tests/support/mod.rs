//! Independent oracles shared by integration and acceptance tests. Nothing
//! here calls into the planner or the PERT code paths it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zeittafel_core::pert::ThreePointEstimate;
use zeittafel_core::planner::{next_permutation, PlanRequest};
use zeittafel_core::registry::{
    AvailabilityWindow, Category, CategoryKind, ServiceMatrix, ServiceOffer,
};

/// Φ(z) by the Taylor series `1/2 + φ(z) Σ z^(2n+1) / (2n+1)!!`, summed until
/// terms vanish; negative arguments use the complement of the positive side.
pub fn phi_series(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - phi_series(-z);
    }
    if z > 8.5 {
        return 1.0;
    }
    let density = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    while term > 1e-18 * sum {
        n += 1.0;
        term *= z * z / (2.0 * n + 1.0);
        sum += term;
    }
    0.5 + density * sum
}

/// Random DAG over `n <= max_n` activities with edges from lower to higher index.
pub fn random_dag(
    rng: &mut impl Rng,
    max_n: usize,
) -> (Vec<ThreePointEstimate>, Vec<(usize, usize)>) {
    let n = rng.random_range(1..=max_n);
    let ests = (0..n)
        .map(|_| {
            let o = rng.random_range(0.0..50.0);
            let m = o + rng.random_range(0.0..30.0);
            let p = m + rng.random_range(0.0..40.0);
            ThreePointEstimate::new(o, m, p).unwrap()
        })
        .collect();
    let density = rng.random_range(0.1..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    (ests, edges)
}

/// Longest source-to-sink path by enumerating every path.
pub fn longest_path_brute(ests: &[ThreePointEstimate], edges: &[(usize, usize)]) -> f64 {
    fn walk(
        u: usize,
        ests: &[ThreePointEstimate],
        edges: &[(usize, usize)],
        acc: f64,
        best: &mut f64,
    ) {
        let t = (ests[u].optimistic + 4.0 * ests[u].most_likely + ests[u].pessimistic) / 6.0;
        let here = acc + t;
        let mut leaf = true;
        for &(a, b) in edges {
            if a == u {
                leaf = false;
                walk(b, ests, edges, here, best);
            }
        }
        if leaf && here > *best {
            *best = here;
        }
    }
    let mut best = 0.0;
    for v in 0..ests.len() {
        if !edges.iter().any(|e| e.1 == v) {
            walk(v, ests, edges, 0.0, &mut best);
        }
    }
    best
}

/// A feasible plan found by exhaustive search over a serial chain.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub order: Vec<String>,
    pub services: Vec<String>,
    pub duration: f64,
    pub probability: f64,
}

/// Every feasible (order, combination) for a serial-chain request, over all
/// permutations of the free categories.
pub fn brute_force_feasible(matrix: &ServiceMatrix, request: &PlanRequest) -> Vec<OraclePlan> {
    let mut tails = request.nc_set.clone();
    tails.sort();
    let mut out = Vec::new();
    loop {
        let order: Vec<String> = request.fc_order.iter().chain(&tails).cloned().collect();
        let columns: Vec<Vec<&ServiceOffer>> = order
            .iter()
            .map(|c| {
                matrix
                    .column(c)
                    .unwrap()
                    .iter()
                    .filter(|o| {
                        request.constraints.max_cost.is_none_or(|m| o.cost <= m)
                            && o.capacity >= request.constraints.party_size
                    })
                    .collect()
            })
            .collect();
        let mut pick = vec![0usize; order.len()];
        if columns.iter().all(|c| !c.is_empty()) {
            loop {
                let chosen: Vec<&ServiceOffer> =
                    pick.iter().zip(&columns).map(|(&i, c)| c[i]).collect();
                if let Some(p) = chain_plan(&order, &chosen, request) {
                    out.push(p);
                }
                let mut k = order.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    pick[k] += 1;
                    if pick[k] < columns[k].len() {
                        break;
                    }
                    pick[k] = 0;
                }
                if pick.iter().all(|&i| i == 0) {
                    break;
                }
            }
        }
        if !next_permutation(&mut tails) {
            break;
        }
    }
    out
}

fn chain_plan(
    order: &[String],
    chosen: &[&ServiceOffer],
    request: &PlanRequest,
) -> Option<OraclePlan> {
    let mut t = request.constraints.plan_epoch;
    let mut variance = 0.0;
    for offer in chosen {
        let e = offer.estimate;
        let d = (e.optimistic + 4.0 * e.most_likely + e.pessimistic) / 6.0;
        let fits = offer
            .windows
            .iter()
            .any(|w| w.start <= t + 1e-9 && t + d <= w.end + 1e-9);
        if !fits {
            return None;
        }
        t += d;
        variance += ((e.pessimistic - e.optimistic) / 6.0).powi(2);
    }
    let duration = t - request.constraints.plan_epoch;
    if duration > request.deadline {
        return None;
    }
    let sd = variance.sqrt();
    let probability = if sd > 0.0 {
        phi_series((request.deadline - duration) / sd)
    } else if duration <= request.deadline {
        1.0
    } else {
        0.0
    };
    Some(OraclePlan {
        order: order.to_vec(),
        services: chosen.iter().map(|o| o.id.clone()).collect(),
        duration,
        probability,
    })
}

/// The winner under the documented rules: probability (1e-9), then duration,
/// then smallest service-id tuple, then smallest order.
pub fn oracle_best(feasible: &[OraclePlan]) -> Option<OraclePlan> {
    let best_p = feasible
        .iter()
        .map(|p| p.probability)
        .fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<&OraclePlan> = feasible
        .iter()
        .filter(|p| p.probability >= best_p - 1e-9)
        .collect();
    let shortest = top.iter().map(|p| p.duration).fold(f64::INFINITY, f64::min);
    top.into_iter()
        .filter(|p| p.duration <= shortest + 1e-9 * shortest.max(1.0))
        .min_by(|a, b| a.services.cmp(&b.services).then(a.order.cmp(&b.order)))
        .cloned()
}

/// A small random instance: up to 4 categories of up to 3 offers, random
/// triples and availability windows, random fixed/free split and deadline.
pub fn random_instance(seed: u64) -> (ServiceMatrix, PlanRequest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let p = rng.random_range(0..=n);
    let ids: Vec<String> = (0..n).map(|i| format!("K{i}")).collect();
    let categories = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Category {
            id: id.clone(),
            name: id.clone(),
            kind: if i < p {
                CategoryKind::Fixed
            } else {
                CategoryKind::NonFixed
            },
        })
        .collect();
    let mut offers = Vec::new();
    for cat in &ids {
        for k in 0..rng.random_range(1..=3) {
            let o = rng.random_range(5.0..40.0f64).round();
            let m = o + rng.random_range(0.0..20.0f64).round();
            let pe = if rng.random_bool(0.3) {
                m
            } else {
                m + rng.random_range(0.0..30.0f64).round()
            };
            let mut windows = Vec::new();
            let mut t = 0.0;
            while t < 300.0 {
                let gap = if t == 0.0 && rng.random_bool(0.8) {
                    0.0
                } else {
                    rng.random_range(0.0..40.0f64).round()
                };
                let len = rng.random_range(20.0..150.0f64).round();
                windows.push(AvailabilityWindow {
                    start: t + gap,
                    end: t + gap + len,
                });
                t += gap + len + 1.0;
            }
            offers.push(ServiceOffer {
                id: format!("{cat}-s{k}"),
                category_id: cat.clone(),
                name: String::new(),
                estimate: ThreePointEstimate::new(o, m, pe).unwrap(),
                cost: 0.0,
                capacity: 1,
                windows,
                attributes: Default::default(),
            });
        }
    }
    let matrix = ServiceMatrix::with_offers(categories, offers).unwrap();
    let deadline = rng.random_range(30.0..(45.0 * n as f64 + 40.0)).round();
    let request = PlanRequest::new(deadline, ids[..p].to_vec(), ids[p..].to_vec());
    (matrix, request)
}
