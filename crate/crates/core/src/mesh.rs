//! Structured P1 triangulations of the unit square and weighted stiffness /
//! mass assembly with homogeneous Dirichlet elimination.
//!
//! Two layouts are available. [`Layout::Diagonal`] splits every grid square
//! into two right triangles along the same diagonal. [`Layout::CrissCross`]
//! adds a node at every square centre and splits the square into four
//! triangles; the resulting mesh has the full symmetry group of the square,
//! so eigenvalues that are multiple for the continuous operator stay exactly
//! multiple after discretization.
//!
//! Element integrals use the coefficient value at the triangle centroid,
//! which for a P1 coefficient is the mean of its three vertex values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparsityPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Diagonal,
    #[default]
    CrissCross,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Diagonal => "diagonal",
            Layout::CrissCross => "criss-cross",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Layout::Diagonal),
            "criss-cross" | "crisscross" => Ok(Layout::CrissCross),
            other => Err(Error::Config(format!("unknown mesh layout '{other}'"))),
        }
    }
}

/// Local-to-global scatter positions for one element: `slot[a][b]` is the
/// index into the value array of entry `(node_a, node_b)`, if that entry is
/// kept.
type Scatter = [[Option<usize>; 3]; 3];

#[derive(Debug, Clone)]
struct Assembly {
    pattern: Arc<SparsityPattern>,
    scatter: Vec<Scatter>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    n_side: usize,
    layout: Layout,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    interior_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    h: f64,
    areas: Vec<f64>,
    /// Unit-coefficient element stiffness matrices.
    local_stiffness: Vec<[[f64; 3]; 3]>,
    free: Assembly,
    full: Assembly,
}

/// Per-node coefficient values of a piecewise linear field.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.n_nodes()],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: mesh.nodes.iter().map(|p| f(p[0], p[1])).collect(),
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Dimension(format!(
                "field has {} values, mesh has {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(Self { values })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Mesh {
    /// Builds the default (criss-cross) mesh with `n` vertices per side.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::build(n, Layout::CrissCross)
    }

    pub fn build(n: usize, layout: Layout) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 nodes per side, got {n}"
            )));
        }
        let step = 1.0 / (n - 1) as f64;
        let mut nodes = Vec::new();
        let mut triangles = Vec::new();
        match layout {
            Layout::Diagonal => {
                for j in 0..n {
                    for i in 0..n {
                        nodes.push([i as f64 * step, j as f64 * step]);
                    }
                }
                let id = |i: usize, j: usize| j * n + i;
                for j in 0..n - 1 {
                    for i in 0..n - 1 {
                        let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                        triangles.push([a, b, c]);
                        triangles.push([a, c, d]);
                    }
                }
            }
            Layout::CrissCross => {
                let stride = 2 * n - 1;
                for j in 0..n {
                    for i in 0..n {
                        nodes.push([i as f64 * step, j as f64 * step]);
                    }
                    if j + 1 < n {
                        for i in 0..n - 1 {
                            nodes.push([(i as f64 + 0.5) * step, (j as f64 + 0.5) * step]);
                        }
                    }
                }
                let vid = |i: usize, j: usize| j * stride + i;
                let cid = |i: usize, j: usize| j * stride + n + i;
                for j in 0..n - 1 {
                    for i in 0..n - 1 {
                        let (a, b, c, d) =
                            (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                        let e = cid(i, j);
                        triangles.extend([[a, b, e], [b, c, e], [c, d, e], [d, a, e]]);
                    }
                }
            }
        }
        Self::from_parts(n, layout, nodes, triangles)
    }

    fn from_parts(
        n_side: usize,
        layout: Layout,
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let eps = 1e-12;
        let mut interior_index = vec![None; nodes.len()];
        let mut free_nodes = Vec::new();
        for (k, p) in nodes.iter().enumerate() {
            if p[0] > eps && p[0] < 1.0 - eps && p[1] > eps && p[1] < 1.0 - eps {
                interior_index[k] = Some(free_nodes.len());
                free_nodes.push(k);
            }
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut local_stiffness = Vec::with_capacity(triangles.len());
        let mut h: f64 = 0.0;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let p = tri.map(|v| nodes[v]);
            let area = 0.5
                * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for a in 0..3 {
                let b = (a + 1) % 3;
                h = h.max(((p[a][0] - p[b][0]).powi(2) + (p[a][1] - p[b][1]).powi(2)).sqrt());
            }
            // grad φ_a = (y_b - y_c, x_c - x_b) / (2 area)
            let grads: [[f64; 2]; 3] = std::array::from_fn(|a| {
                let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                [
                    (p[b][1] - p[c][1]) / (2.0 * area),
                    (p[c][0] - p[b][0]) / (2.0 * area),
                ]
            });
            let k = std::array::from_fn(|a| {
                std::array::from_fn(|b| area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]))
            });
            areas.push(area);
            local_stiffness.push(k);
        }
        let total: f64 = areas.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidMesh(format!("triangle areas sum to {total}, expected 1")));
        }

        let free = Self::build_assembly(&triangles, free_nodes.len(), |v| interior_index[v]);
        let full = Self::build_assembly(&triangles, nodes.len(), Some);
        Ok(Self {
            n_side,
            layout,
            nodes,
            triangles,
            interior_index,
            free_nodes,
            h,
            areas,
            local_stiffness,
            free,
            full,
        })
    }

    fn build_assembly(
        triangles: &[[usize; 3]],
        n: usize,
        dof: impl Fn(usize) -> Option<usize>,
    ) -> Assembly {
        let mut rows = vec![Vec::new(); n];
        for tri in triangles {
            for &a in tri {
                if let Some(i) = dof(a) {
                    rows[i].extend(tri.iter().filter_map(|&b| dof(b)));
                }
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        let scatter = triangles
            .iter()
            .map(|tri| {
                std::array::from_fn(|a| {
                    std::array::from_fn(|b| match (dof(tri[a]), dof(tri[b])) {
                        (Some(i), Some(j)) => pattern.position(i, j),
                        _ => None,
                    })
                })
            })
            .collect();
        Assembly { pattern, scatter }
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Free-DOF index of a node, `None` on the Dirichlet boundary.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    /// Node index of every free DOF, in DOF order.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn free_pattern(&self) -> &Arc<SparsityPattern> {
        &self.free.pattern
    }

    pub fn full_pattern(&self) -> &Arc<SparsityPattern> {
        &self.full.pattern
    }

    fn centroid_values(&self, coeff: &NodalField) -> Vec<f64> {
        assert_eq!(
            coeff.values.len(),
            self.n_nodes(),
            "coefficient field does not match mesh"
        );
        self.triangles
            .iter()
            .map(|t| (coeff.values[t[0]] + coeff.values[t[1]] + coeff.values[t[2]]) / 3.0)
            .collect()
    }

    fn assemble(&self, target: &Assembly, coeff: &NodalField, stiffness: bool) -> CsrMatrix {
        let cvals = self.centroid_values(coeff);
        let mut m = CsrMatrix::zeros(target.pattern.clone());
        let vals = m.values_mut();
        for (e, scatter) in target.scatter.iter().enumerate() {
            let c = cvals[e];
            let local = if stiffness {
                self.local_stiffness[e]
            } else {
                element_mass(self.areas[e])
            };
            for a in 0..3 {
                for b in 0..3 {
                    if let Some(k) = scatter[a][b] {
                        vals[k] += c * local[a][b];
                    }
                }
            }
        }
        m
    }

    /// Stiffness matrix `∫ c ∇φ_i·∇φ_j` over free DOFs.
    pub fn assemble_stiffness(&self, coeff: &NodalField) -> CsrMatrix {
        self.assemble(&self.free, coeff, true)
    }

    /// Mass matrix `∫ c φ_i φ_j` over free DOFs.
    pub fn assemble_mass(&self, coeff: &NodalField) -> CsrMatrix {
        self.assemble(&self.free, coeff, false)
    }

    /// Stiffness matrix over all nodes, boundary included.
    pub fn assemble_stiffness_full(&self, coeff: &NodalField) -> CsrMatrix {
        self.assemble(&self.full, coeff, true)
    }

    /// Mass matrix over all nodes, boundary included.
    pub fn assemble_mass_full(&self, coeff: &NodalField) -> CsrMatrix {
        self.assemble(&self.full, coeff, false)
    }

    /// Restricts a nodal vector to the free DOFs.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&k| values[k]).collect()
    }

    /// Extends a free-DOF vector to all nodes with zero boundary values.
    pub fn prolong(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (d, &k) in self.free_nodes.iter().enumerate() {
            out[k] = free[d];
        }
        out
    }

    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            n: self.n_side,
            layout: Some(self.layout),
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn from_json(json: MeshJson) -> Result<Self> {
        Self::from_parts(
            json.n,
            json.layout.unwrap_or(Layout::Diagonal),
            json.nodes,
            json.triangles,
        )
    }

}

/// Exact P1 mass matrix of a triangle with unit coefficient.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Serialized mesh: `{"N": .., "nodes": [[x, y], ..], "triangles": [[i, j, k], ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshJson {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen_sorted;
    use proptest::prelude::*;

    #[test]
    fn diagonal_counts() {
        let m = Mesh::build(3, Layout::Diagonal).unwrap();
        assert_eq!((m.n_nodes(), m.triangles().len(), m.n_free()), (9, 8, 1));
        let m = Mesh::build(4, Layout::Diagonal).unwrap();
        assert_eq!((m.n_nodes(), m.triangles().len(), m.n_free()), (16, 18, 4));
        assert!((m.h() - 2f64.sqrt() / 3.0).abs() < 1e-15);
        let m = Mesh::build(24, Layout::Diagonal).unwrap();
        assert_eq!(m.n_free(), 484);
    }

    #[test]
    fn criss_cross_counts() {
        let m = Mesh::build(3, Layout::CrissCross).unwrap();
        assert_eq!((m.n_nodes(), m.triangles().len(), m.n_free()), (13, 16, 5));
        let m = Mesh::unit_square(17).unwrap();
        assert_eq!(m.n_free(), 481);
        assert!((m.h() - 1.0 / 16.0).abs() < 1e-15);
        let m = Mesh::unit_square(24).unwrap();
        assert_eq!(m.n_free(), 22 * 22 + 23 * 23);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(Mesh::build(2, Layout::Diagonal), Err(Error::InvalidMesh(_))));
        assert!(Mesh::unit_square(0).is_err());
    }

    #[test]
    fn interior_index_covers_open_square() {
        for layout in [Layout::Diagonal, Layout::CrissCross] {
            let m = Mesh::build(6, layout).unwrap();
            for (k, p) in m.nodes().iter().enumerate() {
                let inside = p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
                assert_eq!(m.interior_index(k).is_some(), inside);
            }
            let total: f64 = m.areas().iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn five_point_stencil_on_diagonal_grid() {
        let n = 6;
        let m = Mesh::build(n, Layout::Diagonal).unwrap();
        let a = m.assemble_stiffness(&NodalField::constant(&m, 1.0));
        let node = |i: usize, j: usize| m.interior_index(j * n + i).unwrap();
        let (i, j) = (2, 3);
        let c = node(i, j);
        assert!((a.get(c, c) - 4.0).abs() < 1e-14);
        for (di, dj) in [(1, 0), (0, 1)] {
            assert!((a.get(c, node(i + di, j + dj)) + 1.0).abs() < 1e-14);
            assert!((a.get(c, node(i - di, j - dj)) + 1.0).abs() < 1e-14);
        }
        assert_eq!(a.get(c, node(i + 1, j + 1)), 0.0);
        assert_eq!(a.get(c, node(i - 1, j - 1)), 0.0);
        assert_eq!(a.get(c, node(i + 1, j - 1)), 0.0);
        assert_eq!(a.get(c, node(i - 1, j + 1)), 0.0);
    }

    #[test]
    fn full_stiffness_annihilates_constants() {
        for layout in [Layout::Diagonal, Layout::CrissCross] {
            let m = Mesh::build(7, layout).unwrap();
            let a = m.assemble_stiffness_full(&NodalField::constant(&m, 1.0));
            for s in a.row_sums() {
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_mass_sums_to_area() {
        for layout in [Layout::Diagonal, Layout::CrissCross] {
            let m = Mesh::build(9, layout).unwrap();
            let mm = m.assemble_mass_full(&NodalField::constant(&m, 1.0));
            let total: f64 = mm.values().iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn element_mass_of_interior_triangle() {
        let m = Mesh::build(5, Layout::Diagonal).unwrap();
        // triangle with all three vertices interior: cell (1,1), first triangle
        let t = m
            .triangles()
            .iter()
            .position(|t| t.iter().all(|&v| m.interior_index(v).is_some()))
            .unwrap();
        let area = m.areas()[t];
        let local = element_mass(area);
        let expected = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((local[a][b] - area / 12.0 * expected[a][b]).abs() < 1e-17);
            }
        }
        // Edge-midpoint quadrature is exact for quadratics: at a midpoint two
        // hat functions equal 1/2 and the third vanishes.
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                let q: f64 = mids.iter().map(|phi| phi[a] * phi[b]).sum::<f64>() * area / 3.0;
                assert!((q - local[a][b]).abs() < 1e-17);
            }
        }
    }

    #[test]
    fn reference_operators_are_definite() {
        let m = Mesh::unit_square(6).unwrap();
        let one = NodalField::constant(&m, 1.0);
        for mat in [m.assemble_stiffness(&one), m.assemble_mass(&one)] {
            assert_eq!(mat.max_asymmetry(), 0.0);
            let (vals, _) = sym_eigen_sorted(&mat.to_dense());
            assert!(vals[0] > 0.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = Mesh::build(4, Layout::Diagonal).unwrap();
        let text = serde_json::to_string(&m.to_json()).unwrap();
        assert!(text.contains("\"N\":4"));
        let back = Mesh::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.n_free(), 4);
        assert_eq!(back.triangles(), m.triangles());
        // files without a layout field are accepted
        let bare = r#"{"N":3,"nodes":[[0,0],[0.5,0],[1,0],[0,0.5],[0.5,0.5],[1,0.5],[0,1],[0.5,1],[1,1]],
            "triangles":[[0,1,4],[0,4,3],[1,2,5],[1,5,4],[3,4,7],[3,7,6],[4,5,8],[4,8,7]]}"#;
        let m3 = Mesh::from_json(serde_json::from_str(bare).unwrap()).unwrap();
        assert_eq!(m3.n_free(), 1);
    }

    proptest! {
        #[test]
        fn assembly_is_linear_in_coefficient(
            seed in prop::collection::vec(-1.0f64..1.0, 41),
            other in prop::collection::vec(-1.0f64..1.0, 41),
            alpha in -3.0f64..3.0,
        ) {
            let m = Mesh::build(5, Layout::CrissCross).unwrap();
            prop_assert_eq!(m.n_nodes(), 41);
            let f0 = NodalField::from_values(&m, seed.clone()).unwrap();
            let f1 = NodalField::from_values(&m, other.clone()).unwrap();
            let comb = NodalField::from_values(
                &m,
                seed.iter().zip(&other).map(|(a, b)| a + alpha * b).collect(),
            ).unwrap();
            for stiff in [true, false] {
                let asm = |f: &NodalField| if stiff { m.assemble_stiffness(f) } else { m.assemble_mass(f) };
                let mut lhs = asm(&f0);
                lhs.axpy(alpha, &asm(&f1)).unwrap();
                let rhs = asm(&comb);
                let diff = lhs.values().iter().zip(rhs.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                prop_assert!(diff < 1e-13);
                prop_assert_eq!(rhs.max_asymmetry(), 0.0);
            }
        }

        #[test]
        fn constant_scaling(c in 0.01f64..100.0) {
            let m = Mesh::build(5, Layout::Diagonal).unwrap();
            let one = NodalField::constant(&m, 1.0);
            let cc = NodalField::constant(&m, c);
            let a1 = m.assemble_stiffness(&one).scaled(c);
            let ac = m.assemble_stiffness(&cc);
            let m1 = m.assemble_mass(&one).scaled(c);
            let mc = m.assemble_mass(&cc);
            for (x, y) in a1.values().iter().zip(ac.values()).chain(m1.values().iter().zip(mc.values())) {
                prop_assert!((x - y).abs() <= 1e-14 * c.max(1.0));
            }
        }
    }
}
