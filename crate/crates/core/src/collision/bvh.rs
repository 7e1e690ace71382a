use serde::Serialize;

use super::CollisionError;
use crate::geometry::{Aabb, TriMesh, Triangle};

/// Maximum number of triangles stored in a leaf.
pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Node {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

/// Binary AABB tree over a mesh's triangles. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle ids in leaf order; leaves reference contiguous ranges.
    order: Vec<u32>,
}

impl Bvh {
    /// Top-down build splitting at the centroid median along the longest
    /// axis of the centroid bounds. Deterministic for a given mesh.
    pub fn build(mesh: &TriMesh) -> Result<Self, CollisionError> {
        if mesh.is_empty() {
            return Err(CollisionError::EmptyMesh);
        }
        let tris: Vec<Triangle> = mesh.iter_triangles().collect();
        Ok(Self::build_from_triangles(&tris))
    }

    pub(crate) fn build_from_triangles(tris: &[Triangle]) -> Self {
        let boxes: Vec<Aabb> = tris.iter().map(Aabb::of_triangle).collect();
        let centroids: Vec<_> = boxes.iter().map(|b| b.center()).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        nodes.push(Node {
            bounds: Aabb::empty(),
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });
        // (node index, start, end)
        let mut work = vec![(0usize, 0usize, order.len())];
        while let Some((node, start, end)) = work.pop() {
            let slice = &mut order[start..end];
            let bounds = slice
                .iter()
                .fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t as usize]));
            if slice.len() <= LEAF_SIZE {
                nodes[node] = Node {
                    bounds,
                    kind: NodeKind::Leaf {
                        start: start as u32,
                        count: slice.len() as u32,
                    },
                };
                continue;
            }
            let cbounds = slice
                .iter()
                .fold(Aabb::empty(), |acc, &t| acc.including(&centroids[t as usize]));
            let axis = cbounds.longest_axis();
            let mid = slice.len() / 2;
            slice.select_nth_unstable_by(mid, |&a, &b| {
                centroids[a as usize][axis]
                    .total_cmp(&centroids[b as usize][axis])
                    .then(a.cmp(&b))
            });
            let left = nodes.len();
            nodes.push(nodes[0]);
            nodes.push(nodes[0]);
            nodes[node] = Node {
                bounds,
                kind: NodeKind::Inner {
                    left: left as u32,
                    right: left as u32 + 1,
                },
            };
            work.push((left + 1, start + mid, end));
            work.push((left, start, start + mid));
        }
        Self { nodes, order }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, i: u32) -> &Node {
        &self.nodes[i as usize]
    }

    /// Triangle ids of a leaf.
    pub fn leaf_triangles(&self, start: u32, count: u32) -> &[u32] {
        &self.order[start as usize..(start + count) as usize]
    }

    pub fn depth(&self) -> usize {
        fn go(b: &Bvh, i: u32) -> usize {
            match b.node(i).kind {
                NodeKind::Leaf { .. } => 1,
                NodeKind::Inner { left, right } => 1 + go(b, left).max(go(b, right)),
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
            .count()
    }

    /// Checks the structural invariants: every triangle referenced by
    /// exactly one leaf, leaves hold at most [`LEAF_SIZE`] triangles, and
    /// every node box contains its children's boxes and its triangles.
    pub fn check_invariants(&self, mesh: &TriMesh) -> Result<(), String> {
        let mut seen = vec![0u32; mesh.triangle_count()];
        for (i, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Leaf { start, count } => {
                    if count as usize > LEAF_SIZE || count == 0 {
                        return Err(format!("leaf {i} holds {count} triangles"));
                    }
                    for &t in self.leaf_triangles(start, count) {
                        seen[t as usize] += 1;
                        if !n.bounds.contains_box(&Aabb::of_triangle(&mesh.triangle(t as usize))) {
                            return Err(format!("leaf {i} does not contain triangle {t}"));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    for c in [left, right] {
                        if !n.bounds.contains_box(&self.node(c).bounds) {
                            return Err(format!("node {i} does not contain child {c}"));
                        }
                    }
                }
            }
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {t} referenced {} times", seen[t]));
        }
        Ok(())
    }
}
