use crate::{Error, Result};

/// Node kind with its wavelet label `(k, l)`, `k` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// `v_{k,l}`, carrying the coordinate `c_{k,l}`.
    External { k: usize, l: usize },
    /// `w_{k,l}`, joining `v_{k,l}` with `v_{2k-1,l+1}` and `v_{2k,l+1}`.
    Internal { k: usize, l: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// The FHT-W tree for `2^L` cells, rooted at `v_{1,0}`.
///
/// Externals come first in `(l, k)` order, so external node `i` carries
/// coordinate `i` of the wavelet vector; internals follow in the same order.
/// Every non-root node `v` owns the edge to its parent, numbered `v - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FhtwTree {
    levels: usize,
    nodes: Vec<TreeNode>,
    post_order: Vec<usize>,
    below: Vec<Vec<usize>>,
}

impl FhtwTree {
    pub fn new(levels: usize) -> Result<Self> {
        if !(2..=20).contains(&levels) {
            return Err(Error::UnsupportedSize(format!(
                "FHT-W tree needs 2 <= L <= 20, got {levels}"
            )));
        }
        let n_ext = (1usize << levels) - 1;
        let n_int = (1usize << (levels - 1)) - 1;
        let v = |k: usize, l: usize| (1usize << l) - 1 + (k - 1);
        let w = |k: usize, l: usize| n_ext + (1usize << l) - 1 + (k - 1);

        let mut nodes = Vec::with_capacity(n_ext + n_int);
        for l in 0..levels {
            for k in 1..=(1usize << l) {
                nodes.push(TreeNode {
                    kind: NodeKind::External { k, l },
                    parent: None,
                    children: Vec::new(),
                });
            }
        }
        for l in 0..levels - 1 {
            for k in 1..=(1usize << l) {
                nodes.push(TreeNode {
                    kind: NodeKind::Internal { k, l },
                    parent: None,
                    children: Vec::new(),
                });
            }
        }
        let mut link = |parent: usize, child: usize| {
            nodes[parent].children.push(child);
            nodes[child].parent = Some(parent);
        };
        for l in 0..levels - 1 {
            for k in 1..=(1usize << l) {
                link(v(k, l), w(k, l));
                link(w(k, l), v(2 * k - 1, l + 1));
                link(w(k, l), v(2 * k, l + 1));
            }
        }

        let mut post_order = Vec::with_capacity(nodes.len());
        let mut stack = vec![(0usize, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                post_order.push(n);
            } else {
                stack.push((n, true));
                for &c in nodes[n].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }

        let mut below = vec![Vec::new(); nodes.len()];
        for &n in &post_order {
            let mut set = Vec::new();
            if n < n_ext {
                set.push(n);
            }
            for &c in &nodes[n].children {
                set.extend_from_slice(&below[c]);
            }
            set.sort_unstable();
            below[n] = set;
        }
        Ok(Self {
            levels,
            nodes,
            post_order,
            below,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of external nodes, equal to the number of coordinates.
    pub fn n_coords(&self) -> usize {
        (1 << self.levels) - 1
    }

    pub fn n_edges(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn is_external(&self, i: usize) -> bool {
        i < self.n_coords()
    }

    /// Children before parents.
    pub fn post_order(&self) -> &[usize] {
        &self.post_order
    }

    /// The edge joining `child` to its parent.
    pub fn edge_of(&self, child: usize) -> usize {
        debug_assert!(child != 0);
        child - 1
    }

    pub fn edge_child(&self, e: usize) -> usize {
        e + 1
    }

    pub fn edge_parent(&self, e: usize) -> usize {
        self.nodes[e + 1].parent.expect("non-root node has a parent")
    }

    /// Sorted coordinates in the subtree hanging below `node` (inclusive).
    pub fn coords_below(&self, node: usize) -> &[usize] {
        &self.below[node]
    }

    /// Sorted coordinates on the parent side of edge `e`.
    pub fn coords_above(&self, e: usize) -> Vec<usize> {
        let below = self.coords_below(self.edge_child(e));
        (0..self.n_coords())
            .filter(|c| below.binary_search(c).is_err())
            .collect()
    }

    /// Neighbors of `node` with the edge to each: children first, then the parent.
    pub fn neighbors(&self, node: usize) -> Vec<(usize, usize)> {
        let n = &self.nodes[node];
        let mut out: Vec<(usize, usize)> = n.children.iter().map(|&c| (c, self.edge_of(c))).collect();
        if let Some(p) = n.parent {
            out.push((p, self.edge_of(node)));
        }
        out
    }

    /// Tree distance between every pair of nodes from node `from`.
    pub fn distances_from(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[from] = 0;
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for (m, _) in self.neighbors(n) {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_tree() {
        let t = FhtwTree::new(2).unwrap();
        assert_eq!(t.n_nodes(), 4);
        assert_eq!(t.n_edges(), 3);
        assert_eq!(t.node(3).kind, NodeKind::Internal { k: 1, l: 0 });
        let mut nb: Vec<usize> = t.neighbors(3).into_iter().map(|(n, _)| n).collect();
        nb.sort();
        assert_eq!(nb, vec![0, 1, 2]);
        assert_eq!(t.coords_below(3), &[1, 2]);
        assert_eq!(t.coords_above(t.edge_of(3)), vec![0]);
        assert!(FhtwTree::new(1).is_err());
    }

    #[test]
    fn level_four_counts() {
        let t = FhtwTree::new(4).unwrap();
        assert_eq!(t.n_coords(), 15);
        assert_eq!(t.n_nodes(), 22);
        assert_eq!(t.n_edges(), 21);
        let t = FhtwTree::new(6).unwrap();
        assert_eq!((t.n_coords(), t.n_nodes() - t.n_coords(), t.n_edges()), (63, 31, 93));
    }

    #[test]
    fn structure_for_all_sizes() {
        for levels in 2..=8 {
            let t = FhtwTree::new(levels).unwrap();
            assert_eq!(t.n_nodes(), (1 << levels) - 1 + (1 << (levels - 1)) - 1);
            // connected: every node reached from the root
            assert!(t.distances_from(0).iter().all(|&d| d != usize::MAX));
            // a connected graph with n - 1 edges is acyclic
            let degree_sum: usize = (0..t.n_nodes()).map(|n| t.neighbors(n).len()).sum();
            assert_eq!(degree_sum, 2 * t.n_edges());
            assert_eq!(t.post_order().len(), t.n_nodes());
            let mut seen = vec![false; t.n_nodes()];
            for &n in t.post_order() {
                assert!(t.node(n).children.iter().all(|&c| seen[c]));
                seen[n] = true;
            }
            assert_eq!(t.coords_below(0).len(), t.n_coords());
            for e in 0..t.n_edges() {
                let c = t.edge_child(e);
                assert_eq!(t.node(c).parent, Some(t.edge_parent(e)));
                assert_eq!(t.coords_below(c).len() + t.coords_above(e).len(), t.n_coords());
            }
        }
    }

    #[test]
    fn wavelet_adjacency() {
        let t = FhtwTree::new(3).unwrap();
        // w_{2,1} (id 7 + 1 + 1 = 9) joins v_{2,1} (2) with v_{3,2} (5) and v_{4,2} (6)
        assert_eq!(t.node(9).kind, NodeKind::Internal { k: 2, l: 1 });
        assert_eq!(t.node(9).parent, Some(2));
        assert_eq!(t.node(9).children, vec![5, 6]);
    }
}
