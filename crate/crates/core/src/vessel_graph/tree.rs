use super::VesselGraph;
use crate::error::{Error, Result};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Maximum spanning tree under `weight(i, j) = min(r_i, r_j)` (Kruskal).
///
/// Among equal weights the lexicographically smaller edge is taken first.
pub fn max_spanning_tree(g: &VesselGraph) -> Result<VesselGraph> {
    max_spanning_tree_by(g, |i, j| g.edge_weight(i, j))
}

/// Maximum spanning tree under an arbitrary edge weight.
pub fn max_spanning_tree_by(
    g: &VesselGraph,
    weight: impl Fn(usize, usize) -> f64,
) -> Result<VesselGraph> {
    let mut edges: Vec<(usize, usize, f64)> =
        g.edges().map(|(i, j)| (i, j, weight(i, j))).collect();
    // edges() is already lexicographic, so a stable sort keeps that order on ties
    edges.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut uf = UnionFind::new(g.len());
    let mut kept = Vec::with_capacity(g.len().saturating_sub(1));
    for (i, j, _) in edges {
        if uf.union(i, j) {
            kept.push((i, j));
        }
    }
    if kept.len() + 1 != g.len() && !g.is_empty() {
        return Err(Error::Disconnected);
    }
    VesselGraph::with_edges(g.vessels().to_vec(), kept, g.normalize_axis())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vessel_graph::Vessel;

    fn graph(radii: &[f64], edges: &[(usize, usize)]) -> VesselGraph {
        let vs = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| Vessel {
                c: [i as f64, 0.0, 0.0],
                h: 1.0,
                r,
                o_xy: 0.0,
                o_xz: 0.0,
            })
            .collect();
        VesselGraph::with_edges(vs, edges.iter().copied(), false).unwrap()
    }

    #[test]
    fn tree_input_is_unchanged() {
        let g = graph(&[1.0, 2.0, 3.0, 4.0], &[(0, 1), (1, 2), (1, 3)]);
        let t = max_spanning_tree(&g).unwrap();
        assert_eq!(t.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn triangle_drops_lightest_edge() {
        let g = graph(&[1.0, 1.0, 1.0], &[(0, 1), (1, 2), (0, 2)]);
        let w = |i: usize, j: usize| match (i, j) {
            (0, 1) => 3.0,
            (1, 2) => 2.0,
            _ => 1.0,
        };
        let t = max_spanning_tree_by(&g, w).unwrap();
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn radius_weights_break_ties_lexicographically() {
        let g = graph(&[1.0, 1.0, 1.0], &[]);
        let g = VesselGraph::with_edges(
            vec![
                Vessel {
                    r: 3.0,
                    ..*g.vessel(0)
                },
                Vessel {
                    r: 5.0,
                    ..*g.vessel(1)
                },
                Vessel {
                    r: 2.0,
                    ..*g.vessel(2)
                },
            ],
            [(0, 1), (1, 2), (0, 2)],
            false,
        )
        .unwrap();
        assert_eq!(g.edge_weight(0, 1), 3.0);
        assert_eq!(g.edge_weight(1, 2), 2.0);
        assert_eq!(g.edge_weight(0, 2), 2.0);
        let t = max_spanning_tree(&g).unwrap();
        assert_eq!(t.total_weight(), 5.0);
        assert!(t.has_edge(0, 1));
        // (0,2) and (1,2) tie at 2.0; the lexicographically smaller one wins
        assert!(t.has_edge(0, 2));
    }

    #[test]
    fn disconnected_input_fails() {
        let g = graph(&[1.0, 1.0, 1.0, 1.0], &[(0, 1), (2, 3)]);
        assert!(matches!(max_spanning_tree(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.union(2, 3));
        assert!(uf.union(0, 3));
        assert_eq!(uf.find(2), uf.find(1));
    }
}
