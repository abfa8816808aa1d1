//! Structured triangulations of the rectangle `(0, Lx) x (0, Ly)`.
//!
//! Nodes are numbered row-major: node `(i, j)` with `0 <= i <= nx`, `0 <= j <= ny`
//! has index `j * (nx + 1) + i`. Every cell is split along its lower-left to
//! upper-right diagonal.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Boundary segment of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Observed boundary `y = Ly`.
    GammaTop,
    /// Robin boundary `y = 0`.
    GammaBottom,
    /// Side `x = 0`.
    GammaLeft,
    /// Side `x = Lx`.
    GammaRight,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::GammaBottom,
        BoundaryTag::GammaRight,
        BoundaryTag::GammaTop,
        BoundaryTag::GammaLeft,
    ];

    pub fn is_side(self) -> bool {
        matches!(self, BoundaryTag::GammaLeft | BoundaryTag::GammaRight)
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            BoundaryTag::GammaTop => [0.0, 1.0],
            BoundaryTag::GammaBottom => [0.0, -1.0],
            BoundaryTag::GammaLeft => [-1.0, 0.0],
            BoundaryTag::GammaRight => [1.0, 0.0],
        }
    }
}

/// A boundary edge, stored with increasing arc-length coordinate
/// (x on top/bottom, y on the sides).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Resolution and extent of a rectangular mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
}

impl MeshSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self { nx, ny, lx, ly }
    }

    pub fn build(&self) -> Result<Mesh, Error> {
        Mesh::rectangle(self.nx, self.ny, self.lx, self.ly)
    }
}

/// Diagonal used to split each grid cell into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalSplit {
    /// Lower-left to upper-right; the default everywhere.
    #[default]
    Forward,
    /// Upper-left to lower-right: the mirror image of `Forward` under
    /// `x -> Lx - x`.
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    split: DiagonalSplit,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

/// Builds the `nx x ny` triangulation of `(0, lx) x (0, ly)`.
pub fn build_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh, Error> {
    Mesh::rectangle(nx, ny, lx, ly)
}

impl Mesh {
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh, Error> {
        Self::rectangle_with_split(nx, ny, lx, ly, DiagonalSplit::Forward)
    }

    pub fn rectangle_with_split(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        split: DiagonalSplit,
    ) -> Result<Mesh, Error> {
        if nx == 0 || ny == 0 {
            return Err(Error::ZeroElements { nx, ny });
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::BadExtent { lx, ly });
        }

        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = if j == ny { ly } else { ly * j as f64 / ny as f64 };
            for i in 0..=nx {
                let x = if i == nx { lx } else { lx * i as f64 / nx as f64 };
                nodes.push([x, y]);
            }
        }

        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = idx(i, j);
                let b = idx(i + 1, j);
                let c = idx(i + 1, j + 1);
                let d = idx(i, j + 1);
                match split {
                    DiagonalSplit::Forward => {
                        triangles.push([a, b, c]);
                        triangles.push([a, c, d]);
                    }
                    DiagonalSplit::Backward => {
                        triangles.push([a, b, d]);
                        triangles.push([b, c, d]);
                    }
                }
            }
        }

        let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(i, 0), idx(i + 1, 0)],
                tag: BoundaryTag::GammaBottom,
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(nx, j), idx(nx, j + 1)],
                tag: BoundaryTag::GammaRight,
            });
        }
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(i, ny), idx(i + 1, ny)],
                tag: BoundaryTag::GammaTop,
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(0, j), idx(0, j + 1)],
                tag: BoundaryTag::GammaLeft,
            });
        }

        Ok(Mesh {
            split,
            nodes,
            triangles,
            boundary_edges,
            nx,
            ny,
            lx,
            ly,
        })
    }

    pub fn spec(&self) -> MeshSpec {
        MeshSpec::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn split(&self) -> DiagonalSplit {
        self.split
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> + '_ {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    /// Grid coordinates `(i, j)` of a node.
    pub fn grid_position(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    /// Signed area of a triangle (positive for counter-clockwise ordering).
    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Nodes of a boundary segment sorted by arc length, corners included.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        match tag {
            BoundaryTag::GammaBottom => (0..=self.nx).map(|i| self.node_index(i, 0)).collect(),
            BoundaryTag::GammaTop => (0..=self.nx).map(|i| self.node_index(i, self.ny)).collect(),
            BoundaryTag::GammaLeft => (0..=self.ny).map(|j| self.node_index(0, j)).collect(),
            BoundaryTag::GammaRight => (0..=self.ny).map(|j| self.node_index(self.nx, j)).collect(),
        }
    }

    /// Nodes carrying the homogeneous Dirichlet condition of the Laplace
    /// model: both sides, corners included.
    pub fn is_side_node(&self, node: usize) -> bool {
        let (i, _) = self.grid_position(node);
        i == 0 || i == self.nx
    }

    /// Plain-text node/element listing, for debugging.
    pub fn to_listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes {}", self.nodes.len());
        for (k, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{k} {:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(out, "# triangles {}", self.triangles.len());
        for (k, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "{k} {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(out, "# boundary_edges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {:?}", e.nodes[0], e.nodes[1], e.tag);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn smallest_grid() {
        let m = build_rect_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.triangles().len(), 2);
        assert_eq!(m.boundary_edges().len(), 4);
    }

    #[test]
    fn full_resolution_counts() {
        let m = build_rect_mesh(400, 50, 1.0, 0.2).unwrap();
        assert_eq!(m.num_nodes(), 20451);
        assert_eq!(m.triangles().len(), 40000);
    }

    #[test]
    fn three_by_two() {
        let m = build_rect_mesh(3, 2, 1.0, 0.2).unwrap();
        assert_eq!(m.num_nodes(), 12);
        assert_eq!(m.triangles().len(), 12);
        let bottom: Vec<_> = m.edges_with_tag(BoundaryTag::GammaBottom).collect();
        assert_eq!(bottom.len(), 3);
        let mut covered = 0.0;
        for e in bottom {
            let (a, b) = (m.nodes()[e.nodes[0]], m.nodes()[e.nodes[1]]);
            assert_eq!(a[1], 0.0);
            assert_eq!(b[1], 0.0);
            covered += b[0] - a[0];
        }
        assert!((covered - 1.0).abs() < 1e-15);

        let xs: Vec<f64> = m
            .boundary_nodes(BoundaryTag::GammaBottom)
            .iter()
            .map(|&n| m.nodes()[n][0])
            .collect();
        let expect = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }

        let left = m.boundary_nodes(BoundaryTag::GammaLeft);
        let ys: Vec<f64> = left.iter().map(|&n| m.nodes()[n][1]).collect();
        assert_eq!(left.len(), 3);
        for (y, e) in ys.iter().zip([0.0, 0.1, 0.2]) {
            assert!((y - e).abs() < 1e-15);
        }
        assert!(left.iter().all(|&n| m.nodes()[n][0] == 0.0));
    }

    #[test]
    fn unit_bottom_nodes() {
        let m = build_rect_mesh(1, 1, 1.0, 1.0).unwrap();
        let b = m.boundary_nodes(BoundaryTag::GammaBottom);
        assert_eq!(m.nodes()[b[0]], [0.0, 0.0]);
        assert_eq!(m.nodes()[b[1]], [1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_rect_mesh(0, 2, 1.0, 1.0).is_err());
        assert!(build_rect_mesh(2, 0, 1.0, 1.0).is_err());
        assert!(build_rect_mesh(2, 2, 0.0, 1.0).is_err());
        assert!(build_rect_mesh(2, 2, 1.0, -1.0).is_err());
        assert!(build_rect_mesh(2, 2, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn areas_and_edge_incidence() {
        let m = build_rect_mesh(7, 3, 1.3, 0.4).unwrap();
        let mut total = 0.0;
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in 0..m.triangles().len() {
            let a = m.signed_area(t);
            assert!(a > 0.0);
            total += a;
            let tri = m.triangles()[t];
            for k in 0..3 {
                let (p, q) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        assert!((total - 1.3 * 0.4).abs() <= 1e-12 * 1.3 * 0.4);

        let boundary: HashMap<(usize, usize), BoundaryTag> = m
            .boundary_edges()
            .iter()
            .map(|e| {
                let [p, q] = e.nodes;
                ((p.min(q), p.max(q)), e.tag)
            })
            .collect();
        assert_eq!(boundary.len(), m.boundary_edges().len());
        for (edge, count) in &edges {
            if boundary.contains_key(edge) {
                assert_eq!(*count, 1);
            } else {
                assert_eq!(*count, 2);
            }
        }
        let n_boundary = edges.values().filter(|&&c| c == 1).count();
        assert_eq!(n_boundary, boundary.len());
    }

    #[test]
    fn top_and_bottom_cover_their_sides() {
        let m = build_rect_mesh(5, 2, 2.0, 0.5).unwrap();
        for (tag, y) in [(BoundaryTag::GammaBottom, 0.0), (BoundaryTag::GammaTop, 0.5)] {
            let mut len = 0.0;
            for e in m.edges_with_tag(tag) {
                let (a, b) = (m.nodes()[e.nodes[0]], m.nodes()[e.nodes[1]]);
                assert_eq!(a[1], y);
                assert_eq!(b[1], y);
                len += b[0] - a[0];
            }
            assert!((len - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_split_is_valid() {
        let m = Mesh::rectangle_with_split(5, 3, 1.0, 0.2, DiagonalSplit::Backward).unwrap();
        let total: f64 = (0..m.triangles().len()).map(|t| {
            assert!(m.signed_area(t) > 0.0);
            m.signed_area(t)
        }).sum();
        assert!((total - 0.2).abs() < 1e-14);
    }

    #[test]
    fn deterministic() {
        let a = build_rect_mesh(9, 4, 1.0, 0.2).unwrap();
        let b = build_rect_mesh(9, 4, 1.0, 0.2).unwrap();
        assert_eq!(a, b);
    }
}
