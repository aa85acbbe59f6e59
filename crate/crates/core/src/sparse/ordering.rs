//! Fill-reducing orderings.
//!
//! The minimum-degree ordering works on a quotient graph: eliminated
//! variables become *elements* (cliques stored by their member list) rather
//! than being expanded into explicit fill edges. Degrees are the usual
//! approximate external degrees, an upper bound on the true degree computed
//! from the sizes `|L_e \ L_p|` of the elements adjacent to each variable of
//! the new pivot element. Elements whose variables are all covered by the new
//! element are absorbed.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::SparseSymMatrix;

/// Ordering applied before factorisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Approximate minimum degree.
    #[default]
    Amd,
    /// Identity permutation.
    Natural,
}

impl std::str::FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "amd" => Ok(Ordering::Amd),
            "natural" => Ok(Ordering::Natural),
            other => Err(format!(
                "unknown ordering '{other}' (expected amd or natural)"
            )),
        }
    }
}

/// Returns `perm` where `perm[k]` is the original index eliminated `k`-th.
pub fn compute_ordering(q: &SparseSymMatrix, ordering: Ordering) -> Vec<usize> {
    match ordering {
        Ordering::Natural => (0..q.n()).collect(),
        Ordering::Amd => approximate_minimum_degree(&q.adjacency()),
    }
}

/// Minimum-degree ordering of the graph with the given adjacency lists.
/// Ties are broken by the smallest vertex index, so the result is
/// deterministic.
pub fn approximate_minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut var_adj: Vec<Vec<usize>> = adjacency.to_vec();
    let mut elem_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut eliminated = vec![false; n];
    let mut absorbed = vec![false; n];
    let mut degree: Vec<usize> = var_adj.iter().map(Vec::len).collect();

    let mut in_pivot = vec![usize::MAX; n];
    let mut w_stamp = vec![usize::MAX; n];
    let mut w = vec![0usize; n];

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((degree[i], i))).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some(Reverse((d, p))) = heap.pop() {
        if eliminated[p] || degree[p] != d {
            continue;
        }
        let step = perm.len();
        perm.push(p);
        eliminated[p] = true;
        in_pivot[p] = step;

        // Variables of the new element: neighbours of p plus the members of
        // every element adjacent to p (which are absorbed).
        let mut pivot_vars = Vec::new();
        for &j in &var_adj[p] {
            if !eliminated[j] && in_pivot[j] != step {
                in_pivot[j] = step;
                pivot_vars.push(j);
            }
        }
        for e in std::mem::take(&mut elem_adj[p]) {
            if absorbed[e] {
                continue;
            }
            absorbed[e] = true;
            for &j in &elem_vars[e] {
                if !eliminated[j] && in_pivot[j] != step {
                    in_pivot[j] = step;
                    pivot_vars.push(j);
                }
            }
            elem_vars[e] = Vec::new();
        }
        pivot_vars.sort_unstable();
        var_adj[p] = Vec::new();

        for &i in &pivot_vars {
            elem_adj[i].retain(|&e| !absorbed[e]);
            var_adj[i].retain(|&j| !eliminated[j] && in_pivot[j] != step);
        }

        // |L_e \ L_p| for every element touching the pivot element.
        for &i in &pivot_vars {
            for &e in &elem_adj[i] {
                if w_stamp[e] != step {
                    w_stamp[e] = step;
                    elem_vars[e].retain(|&j| !eliminated[j]);
                    w[e] = elem_vars[e].len();
                }
                w[e] -= 1;
            }
        }

        let remaining = n - perm.len();
        let lp = pivot_vars.len();
        for &i in &pivot_vars {
            // Elements fully inside the new element carry no extra degree.
            elem_adj[i].retain(|&e| {
                if w[e] == 0 {
                    absorbed[e] = true;
                    false
                } else {
                    true
                }
            });
            let external: usize = elem_adj[i].iter().map(|&e| w[e]).sum();
            let approx = var_adj[i].len() + (lp - 1) + external;
            let bound = degree[i] + (lp - 1);
            let deg = approx.min(bound).min(remaining.saturating_sub(1));
            elem_adj[i].push(p);
            degree[i] = deg;
            heap.push(Reverse((deg, i)));
        }
        // The element created by eliminating p is identified by p.
        elem_vars[p] = pivot_vars;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_permutation(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        p.iter()
            .all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
    }

    #[test]
    fn star_graph_eliminates_leaves_first() {
        // Centre 0 connected to 1..=5: the centre stays until only one leaf is left.
        let mut adj = vec![vec![1, 2, 3, 4, 5]];
        adj.extend((1..=5).map(|_| vec![0]));
        let perm = approximate_minimum_degree(&adj);
        assert!(is_permutation(&perm));
        assert!(perm.iter().position(|&v| v == 0).unwrap() >= 4);
    }

    #[test]
    fn disconnected_and_empty_graphs() {
        assert_eq!(approximate_minimum_degree(&[]), Vec::<usize>::new());
        let perm = approximate_minimum_degree(&[vec![], vec![], vec![]]);
        assert_eq!(perm, vec![0, 1, 2]);
    }

    #[test]
    fn grid_ordering_is_a_permutation() {
        let m = 12;
        let idx = |r: usize, c: usize| r * m + c;
        let mut adj = vec![Vec::new(); m * m];
        for r in 0..m {
            for c in 0..m {
                if r + 1 < m {
                    adj[idx(r, c)].push(idx(r + 1, c));
                    adj[idx(r + 1, c)].push(idx(r, c));
                }
                if c + 1 < m {
                    adj[idx(r, c)].push(idx(r, c + 1));
                    adj[idx(r, c + 1)].push(idx(r, c));
                }
            }
        }
        let perm = approximate_minimum_degree(&adj);
        assert!(is_permutation(&perm));
    }
}
