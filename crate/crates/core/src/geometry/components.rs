use super::{TriMesh, UNLABELED};

/// Vertex-to-vertex adjacency over face edges, stored as CSR.
#[derive(Clone, Debug)]
pub struct VertexAdjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl VertexAdjacency {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertices.len();
        let mut degree = vec![0usize; n + 1];
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if a != b {
                    degree[a] += 1;
                    degree[b] += 1;
                }
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n]];
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if a != b {
                    neighbors[fill[a]] = b;
                    fill[a] += 1;
                    neighbors[fill[b]] = a;
                    fill[b] += 1;
                }
            }
        }
        // sort and dedup each row, then compact
        let mut compact_offsets = vec![0usize; n + 1];
        let mut compact = Vec::with_capacity(neighbors.len() / 2);
        for v in 0..n {
            let row = &mut neighbors[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            let mut last = usize::MAX;
            for &x in row.iter() {
                if x != last {
                    compact.push(x);
                    last = x;
                }
            }
            compact_offsets[v + 1] = compact.len();
        }
        Self {
            offsets: compact_offsets,
            neighbors: compact,
        }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }
}

pub(crate) struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, which keeps the result independent of edge order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Splits every label into its edge-connected islands.
///
/// Output labels are renumbered `0..k` in order of each component's lowest
/// vertex index; unlabeled vertices stay [`UNLABELED`].
pub fn connected_components(mesh: &TriMesh, labels: &[i32]) -> Vec<i32> {
    let n = mesh.vertices.len();
    assert_eq!(labels.len(), n, "labels must cover every vertex");
    let mut sets = DisjointSet::new(n);
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if labels[a] != UNLABELED && labels[a] == labels[b] {
                sets.union(a, b);
            }
        }
    }
    let mut out = vec![UNLABELED; n];
    let mut root_label = vec![UNLABELED; n];
    let mut next = 0;
    for v in 0..n {
        if labels[v] == UNLABELED {
            continue;
        }
        let r = sets.find(v);
        if root_label[r] == UNLABELED {
            root_label[r] = next;
            next += 1;
        }
        out[v] = root_label[r];
    }
    out
}
