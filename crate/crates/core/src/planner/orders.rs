use std::collections::BTreeSet;

use super::SearchMode;

/// Rearranges `items` into the next lexicographically greater permutation.
/// Returns `false` (leaving `items` sorted ascending) after the last one.
pub fn next_permutation<T: Ord>(items: &mut [T]) -> bool {
    let n = items.len();
    if n < 2 {
        return false;
    }
    let Some(pivot) = (0..n - 1).rev().find(|&i| items[i] < items[i + 1]) else {
        items.reverse();
        return false;
    };
    let succ = (pivot + 1..n)
        .rev()
        .find(|&j| items[j] > items[pivot])
        .expect("pivot has a successor");
    items.swap(pivot, succ);
    items[pivot + 1..].reverse();
    true
}

/// Category orders to try, each the fixed prefix followed by an arrangement
/// of the free categories: the given arrangement, then its left rotations,
/// then (for [`SearchMode::AllPermutations`]) the remaining permutations in
/// lexicographic id order.
pub fn generate_category_orders(
    fc_order: &[String],
    nc_set: &[String],
    mode: SearchMode,
) -> Vec<Vec<String>> {
    let with_prefix =
        |tail: &[String]| -> Vec<String> { fc_order.iter().chain(tail).cloned().collect() };

    let mut orders = vec![with_prefix(nc_set)];
    if mode == SearchMode::NoBacktracking {
        return orders;
    }

    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    seen.insert(nc_set.to_vec());
    let mut rotated = nc_set.to_vec();
    for _ in 1..nc_set.len() {
        rotated.rotate_left(1);
        if seen.insert(rotated.clone()) {
            orders.push(with_prefix(&rotated));
        }
    }
    if mode == SearchMode::RotationsOnly {
        return orders;
    }

    let mut perm = nc_set.to_vec();
    perm.sort();
    loop {
        if seen.insert(perm.clone()) {
            orders.push(with_prefix(&perm));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    orders
}
