//! P1 finite elements for the mixed Laplace problem
//!
//! ```text
//!   -Δu = f          in O
//!   ∂_ν u = h        on Γ   (top)
//!   u = 0            on Γ_0 (sides, corners included)
//!   ∂_ν u + βu = g   on Γ_β (bottom)
//! ```
//!
//! with `f = 0` and `g = 0` in the inverse problem; the general data are used
//! by manufactured-solution checks.

use crate::error::{Error, Result};
use crate::linalg::{ordering_by_position, BandedCholesky, CsrMatrix, TripletBuilder};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{GAUSS2, TRIANGLE_DEG5};

/// Real function of the arc-length coordinate along a boundary segment.
pub type BoundaryFunction<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// Real function on the domain.
pub type DomainFunction<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

pub(crate) fn checked_beta(x: f64, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositiveBeta { x, value })
    }
}

/// `∫ β φ_a φ_b` over a bottom edge `[x0, x1]` with two-point Gauss.
pub(crate) fn robin_edge_matrix(
    beta: &dyn Fn(f64) -> f64,
    x0: f64,
    x1: f64,
) -> Result<[[f64; 2]; 2]> {
    let len = x1 - x0;
    let mut m = [[0.0; 2]; 2];
    for (t, w) in GAUSS2 {
        let x = x0 + t * len;
        let b = checked_beta(x, beta(x))?;
        let phi = [1.0 - t, t];
        for a in 0..2 {
            for c in 0..2 {
                m[a][c] += w * len * b * phi[a] * phi[c];
            }
        }
    }
    Ok(m)
}

fn edge_load(g: &dyn Fn(f64) -> f64, x0: f64, x1: f64) -> [f64; 2] {
    let len = x1 - x0;
    let mut out = [0.0; 2];
    for (t, w) in GAUSS2 {
        let v = g(x0 + t * len);
        out[0] += w * len * v * (1.0 - t);
        out[1] += w * len * v * t;
    }
    out
}

/// Gradients of the three barycentric functions and the element area.
pub(crate) fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        g[i] = [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2];
    }
    (g, 0.5 * area2)
}

/// Nodal P1 potential. Values vanish on the side nodes.
#[derive(Debug, Clone)]
pub struct ScalarField<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
}

impl<'m> ScalarField<'m> {
    pub fn zeros(mesh: &'m Mesh) -> Self {
        Self {
            mesh,
            values: vec![0.0; mesh.num_nodes()],
        }
    }

    pub fn from_values(mesh: &'m Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: mesh.num_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { mesh, values })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation along the top edge.
    pub fn trace_on_gamma(&self, points: &[f64]) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let (nx, lx) = (mesh.nx(), mesh.lx());
        points
            .iter()
            .map(|&x| {
                let (cell, t) = locate(x, nx, lx)?;
                let a = self.values[mesh.node_index(cell, mesh.ny())];
                let b = self.values[mesh.node_index(cell + 1, mesh.ny())];
                Ok((1.0 - t) * a + t * b)
            })
            .collect()
    }

    /// `‖u_h − u‖_{L²(O)}` with a degree-5 rule per element.
    pub fn l2_error(&self, exact: &dyn Fn(f64, f64) -> f64) -> f64 {
        let mut sum = 0.0;
        for tri in self.mesh.triangles() {
            let p = tri.map(|n| self.mesh.nodes()[n]);
            let (_, area) = p1_gradients(p);
            for (l, w) in TRIANGLE_DEG5 {
                let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                let uh: f64 = (0..3).map(|i| l[i] * self.values[tri[i]]).sum();
                sum += w * area * (uh - exact(x, y)).powi(2);
            }
        }
        sum.sqrt()
    }

    /// `|u_h − u|_{H¹(O)}`.
    pub fn h1_seminorm_error(&self, exact_grad: &dyn Fn(f64, f64) -> [f64; 2]) -> f64 {
        let mut sum = 0.0;
        for tri in self.mesh.triangles() {
            let p = tri.map(|n| self.mesh.nodes()[n]);
            let (g, area) = p1_gradients(p);
            let mut gh = [0.0; 2];
            for i in 0..3 {
                gh[0] += g[i][0] * self.values[tri[i]];
                gh[1] += g[i][1] * self.values[tri[i]];
            }
            for (l, w) in TRIANGLE_DEG5 {
                let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                let ge = exact_grad(x, y);
                sum += w * area * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            }
        }
        sum.sqrt()
    }
}

/// Cell index and local coordinate of `x` on a uniform partition of `[0, lx]`.
pub(crate) fn locate(x: f64, n: usize, lx: f64) -> Result<(usize, f64)> {
    if !(0.0..=lx).contains(&x) {
        return Err(Error::OutOfRange { x, lo: 0.0, hi: lx });
    }
    let s = x / lx * n as f64;
    let cell = (s.floor() as usize).min(n - 1);
    Ok((cell, s - cell as f64))
}

/// Evaluates the top-edge trace of `field` at `points`.
pub fn trace_on_gamma(field: &ScalarField<'_>, points: &[f64]) -> Result<Vec<f64>> {
    field.trace_on_gamma(points)
}

/// Data of a Laplace boundary-value problem.
#[derive(Clone, Copy)]
pub struct LaplaceProblem<'a> {
    pub beta: BoundaryFunction<'a>,
    pub flux: BoundaryFunction<'a>,
    pub source: Option<DomainFunction<'a>>,
    pub robin_rhs: Option<BoundaryFunction<'a>>,
    stiffness_fault: f64,
}

impl<'a> LaplaceProblem<'a> {
    pub fn new(beta: BoundaryFunction<'a>, flux: BoundaryFunction<'a>) -> Self {
        Self {
            beta,
            flux,
            source: None,
            robin_rhs: None,
            stiffness_fault: 0.0,
        }
    }

    pub fn with_source(mut self, f: DomainFunction<'a>) -> Self {
        self.source = Some(f);
        self
    }

    pub fn with_robin_rhs(mut self, g: BoundaryFunction<'a>) -> Self {
        self.robin_rhs = Some(g);
        self
    }

    /// Scales the first diagonal entry of every element stiffness matrix by
    /// `1 + delta`. Only used to check that the verification suite catches a
    /// broken operator.
    #[doc(hidden)]
    pub fn with_stiffness_fault(mut self, delta: f64) -> Self {
        self.stiffness_fault = delta;
        self
    }

    pub fn assemble<'m>(&self, mesh: &'m Mesh) -> Result<LaplaceSystem<'m>> {
        self.assemble_parts(mesh, true)
    }

    /// Assembly with or without the Robin mass term on the bottom edge.
    pub(crate) fn assemble_parts<'m>(
        &self,
        mesh: &'m Mesh,
        include_robin: bool,
    ) -> Result<LaplaceSystem<'m>> {
        let (free, node_to_dof) = free_nodes(mesh);
        let n = free.len();
        let mut t = TripletBuilder::with_capacity(n, 9 * mesh.triangles().len());
        let mut rhs = vec![0.0; n];

        for tri in mesh.triangles() {
            let p = tri.map(|k| mesh.nodes()[k]);
            let (g, area) = p1_gradients(p);
            let mut ke = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    ke[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
            ke[0][0] *= 1.0 + self.stiffness_fault;
            let mut fe = [0.0; 3];
            if let Some(f) = self.source {
                for (l, w) in TRIANGLE_DEG5 {
                    let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                    let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                    let v = f(x, y);
                    for a in 0..3 {
                        fe[a] += w * area * v * l[a];
                    }
                }
            }
            for a in 0..3 {
                let Some(ra) = node_to_dof[tri[a]] else { continue };
                rhs[ra] += fe[a];
                for b in 0..3 {
                    if let Some(cb) = node_to_dof[tri[b]] {
                        t.add(ra, cb, ke[a][b]);
                    }
                }
            }
        }

        for edge in mesh.boundary_edges() {
            let [na, nb] = edge.nodes;
            let (x0, x1) = (mesh.nodes()[na][0], mesh.nodes()[nb][0]);
            let dofs = [node_to_dof[na], node_to_dof[nb]];
            match edge.tag {
                BoundaryTag::GammaTop => {
                    let load = edge_load(self.flux, x0, x1);
                    for (d, v) in dofs.iter().zip(load) {
                        if let Some(d) = d {
                            rhs[*d] += v;
                        }
                    }
                }
                BoundaryTag::GammaBottom => {
                    if include_robin {
                        let m = robin_edge_matrix(self.beta, x0, x1)?;
                        for a in 0..2 {
                            let Some(ra) = dofs[a] else { continue };
                            for b in 0..2 {
                                if let Some(cb) = dofs[b] {
                                    t.add(ra, cb, m[a][b]);
                                }
                            }
                        }
                    }
                    if let Some(g) = self.robin_rhs {
                        let load = edge_load(g, x0, x1);
                        for (d, v) in dofs.iter().zip(load) {
                            if let Some(d) = d {
                                rhs[*d] += v;
                            }
                        }
                    }
                }
                BoundaryTag::GammaLeft | BoundaryTag::GammaRight => {}
            }
        }

        Ok(LaplaceSystem {
            mesh,
            matrix: t.into_csr(),
            rhs,
            free,
        })
    }

    pub fn solve<'m>(&self, mesh: &'m Mesh) -> Result<ScalarField<'m>> {
        self.assemble(mesh)?.solve()
    }
}

/// Non-side nodes in mesh order, and the inverse map.
pub(crate) fn free_nodes(mesh: &Mesh) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut free = Vec::new();
    let mut map = vec![None; mesh.num_nodes()];
    for node in 0..mesh.num_nodes() {
        if !mesh.is_side_node(node) {
            map[node] = Some(free.len());
            free.push(node);
        }
    }
    (free, map)
}

/// Assembled system after eliminating the side nodes.
#[derive(Debug, Clone)]
pub struct LaplaceSystem<'m> {
    mesh: &'m Mesh,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    free: Vec<usize>,
}

impl<'m> LaplaceSystem<'m> {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn solve(&self) -> Result<ScalarField<'m>> {
        let positions: Vec<[f64; 2]> = self.free.iter().map(|&n| self.mesh.nodes()[n]).collect();
        let chol = BandedCholesky::factor(&self.matrix, ordering_by_position(&positions))?;
        let x = chol.solve(&self.rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut values = vec![0.0; self.mesh.num_nodes()];
        for (&node, v) in self.free.iter().zip(x) {
            values[node] = v;
        }
        Ok(ScalarField {
            mesh: self.mesh,
            values,
        })
    }

    /// Max-norm of `A x − b` for the free-node values of `field`.
    pub fn residual(&self, field: &ScalarField<'_>) -> f64 {
        let x: Vec<f64> = self.free.iter().map(|&n| field.values[n]).collect();
        self.matrix
            .matvec(&x)
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves the homogeneous problem `Δu = 0`, `∂_ν u = h` on top, `u = 0` on
/// the sides and `∂_ν u + βu = 0` on the bottom.
pub fn solve_laplace<'m>(
    mesh: &'m Mesh,
    beta: BoundaryFunction<'_>,
    h: BoundaryFunction<'_>,
) -> Result<ScalarField<'m>> {
    LaplaceProblem::new(beta, h).solve(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    #[test]
    fn zero_flux_gives_zero_field() {
        let mesh = build_rect_mesh(10, 4, 1.0, 0.2).unwrap();
        let u = solve_laplace(&mesh, &|x| 1.0 + x, &|_| 0.0).unwrap();
        assert!(u.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rejects_non_positive_beta() {
        let mesh = build_rect_mesh(4, 2, 1.0, 0.2).unwrap();
        let err = solve_laplace(&mesh, &|x| x - 0.5, &|_| 1.0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveBeta { .. }));
        assert!(solve_laplace(&mesh, &|_| f64::NAN, &|_| 1.0).is_err());
    }

    #[test]
    fn dirichlet_nodes_are_exactly_zero() {
        let mesh = build_rect_mesh(8, 3, 1.0, 0.2).unwrap();
        let u = solve_laplace(&mesh, &|_| 2.0, &|x| 1.0 + x).unwrap();
        for tag in [BoundaryTag::GammaLeft, BoundaryTag::GammaRight] {
            for n in mesh.boundary_nodes(tag) {
                assert_eq!(u.values()[n], 0.0);
            }
        }
    }

    #[test]
    fn system_is_symmetric_and_solved() {
        let mesh = build_rect_mesh(12, 4, 1.0, 0.2).unwrap();
        let beta = |x: f64| (0.3 * (6.0 * x).sin()).exp();
        let h = |x: f64| 10.0 * ((12.0 * std::f64::consts::PI * x).sin() + 1.0);
        let problem = LaplaceProblem::new(&beta, &h);
        let sys = problem.assemble(&mesh).unwrap();
        assert!(sys.matrix().asymmetry() < 1e-14);
        let u = sys.solve().unwrap();
        assert!(sys.residual(&u) < 1e-10);
    }

    #[test]
    fn trace_interpolation() {
        let mesh = build_rect_mesh(4, 1, 1.0, 0.2).unwrap();
        let values: Vec<f64> = (0..mesh.num_nodes()).map(|n| n as f64).collect();
        let f = ScalarField::from_values(&mesh, values).unwrap();
        let top = mesh.boundary_nodes(BoundaryTag::GammaTop);
        let at_node = f.trace_on_gamma(&[0.25]).unwrap();
        assert_eq!(at_node[0], f.values()[top[1]]);
        let mid = f.trace_on_gamma(&[0.375]).unwrap();
        let expect = 0.5 * (f.values()[top[1]] + f.values()[top[2]]);
        assert!((mid[0] - expect).abs() < 1e-14);
        assert!(f.trace_on_gamma(&[1.0000001]).is_err());
        assert!(f.trace_on_gamma(&[-0.1]).is_err());
        let zero = ScalarField::zeros(&mesh).trace_on_gamma(&[0.0, 0.3, 1.0]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonnegative_for_nonnegative_flux() {
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let u = solve_laplace(&mesh, &|x| 0.2 + 5.0 * x * x, &|x| 10.0 * ((12.0 * std::f64::consts::PI * x).sin() + 1.0)).unwrap();
        assert!(u.values().iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn stronger_drag_lowers_the_trace() {
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let h = |x: f64| 1.0 + x;
        let weak = solve_laplace(&mesh, &|x| 0.5 + x, &h).unwrap();
        let strong = solve_laplace(&mesh, &|x| 1.5 + x + (3.0 * x).sin().abs(), &h).unwrap();
        let pts: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let a = strong.trace_on_gamma(&pts).unwrap();
        let b = weak.trace_on_gamma(&pts).unwrap();
        for (s, w) in a.iter().zip(&b) {
            assert!(*s <= w + 1e-10);
        }
    }
}
