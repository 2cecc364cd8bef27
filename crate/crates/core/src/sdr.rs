//! Systems of distinct representatives via augmenting-path bipartite matching.

use std::collections::{HashMap, HashSet};

/// Returns one representative per set, all distinct, or `None` when no such
/// choice exists. Sets are matched in order with Kuhn's augmenting paths.
pub fn distinct_representatives<S: AsRef<[u32]>>(sets: &[S]) -> Option<Vec<u32>> {
    let mut owner: HashMap<u32, usize> = HashMap::new();
    for i in 0..sets.len() {
        let mut visited = HashSet::new();
        if !augment(i, sets, &mut owner, &mut visited) {
            return None;
        }
    }
    let mut reps = vec![0u32; sets.len()];
    for (element, set) in owner {
        reps[set] = element;
    }
    Some(reps)
}

/// Cheap necessary condition: at least as many distinct elements as sets.
pub fn union_is_large_enough<S: AsRef<[u32]>>(sets: &[S]) -> bool {
    let union: HashSet<u32> = sets.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
    union.len() >= sets.len()
}

fn augment<S: AsRef<[u32]>>(i: usize, sets: &[S], owner: &mut HashMap<u32, usize>, visited: &mut HashSet<u32>) -> bool {
    for &e in sets[i].as_ref() {
        if !visited.insert(e) {
            continue;
        }
        let free = match owner.get(&e).copied() {
            None => true,
            Some(j) => augment(j, sets, owner, visited),
        };
        if free {
            owner.insert(e, i);
            return true;
        }
    }
    false
}
