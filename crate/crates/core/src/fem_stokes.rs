//! Taylor-Hood (P2 velocity, P1 pressure) discretization of
//!
//! ```text
//!   -Δu + ∇p = f               in O
//!    ∇·u = 0                   in O
//!   ∂_ν u − pν = h             on Γ_s (top)
//!   ∂_ν u − pν = s             on Γ_0 (sides, s = 0 in the ice model)
//!   ∂_ν u − pν + βu = g        on Γ_β (bottom, g = 0 in the ice model)
//! ```
//!
//! with unit viscosity and the full-gradient viscous form `∫∇u:∇v`. All
//! boundary conditions are natural; the Robin term makes the velocity block
//! coercive and the stress conditions fix the pressure level.
//!
//! Velocity unknowns live on the P2 grid of `(2nx + 1) x (2ny + 1)` points
//! (vertices plus edge midpoints). Unknowns are numbered `u_x` for all P2
//! nodes, then `u_y`, then one pressure per vertex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem_laplace::{checked_beta, locate, p1_gradients, BoundaryFunction};
use crate::linalg::{ordering_by_position, BandedLu, CsrMatrix, TripletBuilder};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{GAUSS3, TRIANGLE_DEG5};

pub type BoundaryVectorFunction<'a> = &'a (dyn Fn(f64) -> [f64; 2] + Sync);
pub type DomainVectorFunction<'a> = &'a (dyn Fn(f64, f64) -> [f64; 2] + Sync);
pub type SideStress<'a> = &'a (dyn Fn(BoundaryTag, f64, f64) -> [f64; 2] + Sync);

/// Constant body force `ρg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyForce(pub [f64; 2]);

impl BodyForce {
    pub fn zero() -> Self {
        Self([0.0, 0.0])
    }
}

/// Index of P2 grid point `(i, j)`, `0 <= i <= 2nx`, `0 <= j <= 2ny`.
pub(crate) fn p2_index(mesh: &Mesh, i: usize, j: usize) -> usize {
    j * (2 * mesh.nx() + 1) + i
}

pub(crate) fn num_p2_nodes(mesh: &Mesh) -> usize {
    (2 * mesh.nx() + 1) * (2 * mesh.ny() + 1)
}

fn vertex_p2_grid(mesh: &Mesh, node: usize) -> (usize, usize) {
    let (i, j) = mesh.grid_position(node);
    (2 * i, 2 * j)
}

fn midpoint_p2(mesh: &Mesh, a: usize, b: usize) -> usize {
    let (ia, ja) = vertex_p2_grid(mesh, a);
    let (ib, jb) = vertex_p2_grid(mesh, b);
    p2_index(mesh, (ia + ib) / 2, (ja + jb) / 2)
}

fn vertex_p2(mesh: &Mesh, node: usize) -> usize {
    let (i, j) = vertex_p2_grid(mesh, node);
    p2_index(mesh, i, j)
}

pub(crate) fn p2_position(mesh: &Mesh, index: usize) -> [f64; 2] {
    let cols = 2 * mesh.nx() + 1;
    let (i, j) = (index % cols, index / cols);
    let x = if i == 2 * mesh.nx() {
        mesh.lx()
    } else {
        mesh.lx() * i as f64 / (2 * mesh.nx()) as f64
    };
    let y = if j == 2 * mesh.ny() {
        mesh.ly()
    } else {
        mesh.ly() * j as f64 / (2 * mesh.ny()) as f64
    };
    [x, y]
}

/// P2 nodes of a triangle: three vertices, then midpoints of edges
/// (0,1), (1,2), (2,0).
fn element_nodes(mesh: &Mesh, tri: [usize; 3]) -> [usize; 6] {
    [
        vertex_p2(mesh, tri[0]),
        vertex_p2(mesh, tri[1]),
        vertex_p2(mesh, tri[2]),
        midpoint_p2(mesh, tri[0], tri[1]),
        midpoint_p2(mesh, tri[1], tri[2]),
        midpoint_p2(mesh, tri[2], tri[0]),
    ]
}

/// P2 shape functions and gradients at barycentric point `l`.
fn p2_basis(l: [f64; 3], g: &[[f64; 2]; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let n = [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ];
    let lin = |a: f64, ga: [f64; 2], b: f64, gb: [f64; 2]| {
        [4.0 * (a * gb[0] + b * ga[0]), 4.0 * (a * gb[1] + b * ga[1])]
    };
    let dn = [
        [(4.0 * l[0] - 1.0) * g[0][0], (4.0 * l[0] - 1.0) * g[0][1]],
        [(4.0 * l[1] - 1.0) * g[1][0], (4.0 * l[1] - 1.0) * g[1][1]],
        [(4.0 * l[2] - 1.0) * g[2][0], (4.0 * l[2] - 1.0) * g[2][1]],
        lin(l[0], g[0], l[1], g[1]),
        lin(l[1], g[1], l[2], g[2]),
        lin(l[2], g[2], l[0], g[0]),
    ];
    (n, dn)
}

/// Quadratic Lagrange basis on an edge at local coordinate `t`, for the
/// nodes (start, midpoint, end).
pub(crate) fn edge_basis(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)]
}

/// `∫ β L_a L_b` over a bottom edge `[x0, x1]` with three-point Gauss.
pub(crate) fn robin_edge_matrix_p2(
    beta: &dyn Fn(f64) -> f64,
    x0: f64,
    x1: f64,
) -> Result<[[f64; 3]; 3]> {
    let len = x1 - x0;
    let mut m = [[0.0; 3]; 3];
    for (t, w) in GAUSS3 {
        let x = x0 + t * len;
        let b = checked_beta(x, beta(x))?;
        let phi = edge_basis(t);
        for a in 0..3 {
            for c in 0..3 {
                m[a][c] += w * len * b * phi[a] * phi[c];
            }
        }
    }
    Ok(m)
}

/// P2 velocity field.
#[derive(Debug, Clone)]
pub struct VectorField<'m> {
    mesh: &'m Mesh,
    values: Vec<[f64; 2]>,
}

/// P1 pressure field on the mesh vertices.
#[derive(Debug, Clone)]
pub struct PressureField<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
}

impl<'m> VectorField<'m> {
    pub fn zeros(mesh: &'m Mesh) -> Self {
        Self {
            mesh,
            values: vec![[0.0; 2]; num_p2_nodes(mesh)],
        }
    }

    /// Interpolates `f` at the P2 nodes.
    pub fn interpolate(mesh: &'m Mesh, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Self {
        let values = (0..num_p2_nodes(mesh))
            .map(|k| {
                let [x, y] = p2_position(mesh, k);
                f(x, y)
            })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn node_position(&self, index: usize) -> [f64; 2] {
        p2_position(self.mesh, index)
    }

    /// Quadratic interpolation along the top edge.
    pub fn velocity_trace_on_gamma(&self, points: &[f64]) -> Result<Vec<[f64; 2]>> {
        let mesh = self.mesh;
        let top = 2 * mesh.ny();
        points
            .iter()
            .map(|&x| {
                let (cell, t) = locate(x, mesh.nx(), mesh.lx())?;
                let basis = edge_basis(t);
                let mut v = [0.0; 2];
                for (k, b) in basis.iter().enumerate() {
                    let node = self.values[p2_index(mesh, 2 * cell + k, top)];
                    v[0] += b * node[0];
                    v[1] += b * node[1];
                }
                Ok(v)
            })
            .collect()
    }

    pub fn l2_error(&self, exact: &dyn Fn(f64, f64) -> [f64; 2]) -> f64 {
        let mut sum = 0.0;
        for tri in self.mesh.triangles() {
            let p = tri.map(|n| self.mesh.nodes()[n]);
            let (g, area) = p1_gradients(p);
            let nodes = element_nodes(self.mesh, *tri);
            for (l, w) in TRIANGLE_DEG5 {
                let (n, _) = p2_basis(l, &g);
                let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                let mut uh = [0.0; 2];
                for a in 0..6 {
                    uh[0] += n[a] * self.values[nodes[a]][0];
                    uh[1] += n[a] * self.values[nodes[a]][1];
                }
                let ue = exact(x, y);
                sum += w * area * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            }
        }
        sum.sqrt()
    }
}

impl<'m> PressureField<'m> {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_error(&self, exact: &dyn Fn(f64, f64) -> f64) -> f64 {
        let mut sum = 0.0;
        for tri in self.mesh.triangles() {
            let p = tri.map(|n| self.mesh.nodes()[n]);
            let (_, area) = p1_gradients(p);
            for (l, w) in TRIANGLE_DEG5 {
                let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                let ph: f64 = (0..3).map(|i| l[i] * self.values[tri[i]]).sum();
                sum += w * area * (ph - exact(x, y)).powi(2);
            }
        }
        sum.sqrt()
    }
}

/// Data of a Stokes boundary-value problem.
#[derive(Clone, Copy)]
pub struct StokesProblem<'a> {
    pub beta: BoundaryFunction<'a>,
    pub surface_stress: BoundaryVectorFunction<'a>,
    pub body_force: DomainVectorFunction<'a>,
    pub side_stress: Option<SideStress<'a>>,
    pub robin_rhs: Option<BoundaryVectorFunction<'a>>,
}

impl<'a> StokesProblem<'a> {
    pub fn new(
        beta: BoundaryFunction<'a>,
        surface_stress: BoundaryVectorFunction<'a>,
        body_force: DomainVectorFunction<'a>,
    ) -> Self {
        Self {
            beta,
            surface_stress,
            body_force,
            side_stress: None,
            robin_rhs: None,
        }
    }

    pub fn with_side_stress(mut self, s: SideStress<'a>) -> Self {
        self.side_stress = Some(s);
        self
    }

    pub fn with_robin_rhs(mut self, g: BoundaryVectorFunction<'a>) -> Self {
        self.robin_rhs = Some(g);
        self
    }

    pub fn assemble<'m>(&self, mesh: &'m Mesh) -> Result<StokesSystem<'m>> {
        self.assemble_parts(mesh, true)
    }

    pub(crate) fn assemble_parts<'m>(
        &self,
        mesh: &'m Mesh,
        include_robin: bool,
    ) -> Result<StokesSystem<'m>> {
        let nv = num_p2_nodes(mesh);
        let n = 2 * nv + mesh.num_nodes();
        let mut t = TripletBuilder::with_capacity(n, 120 * mesh.triangles().len());
        let mut rhs = vec![0.0; n];

        for tri in mesh.triangles() {
            let p = tri.map(|k| mesh.nodes()[k]);
            let (g, area) = p1_gradients(p);
            let nodes = element_nodes(mesh, *tri);
            let mut ke = [[0.0; 6]; 6];
            let mut be = [[[0.0; 2]; 6]; 3];
            let mut fe = [[0.0; 2]; 6];
            for (l, w) in TRIANGLE_DEG5 {
                let (nb, dn) = p2_basis(l, &g);
                let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
                let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
                let f = (self.body_force)(x, y);
                let wa = w * area;
                for a in 0..6 {
                    for b in 0..6 {
                        ke[a][b] += wa * (dn[a][0] * dn[b][0] + dn[a][1] * dn[b][1]);
                    }
                    fe[a][0] += wa * f[0] * nb[a];
                    fe[a][1] += wa * f[1] * nb[a];
                    for q in 0..3 {
                        be[q][a][0] -= wa * l[q] * dn[a][0];
                        be[q][a][1] -= wa * l[q] * dn[a][1];
                    }
                }
            }
            for a in 0..6 {
                for d in 0..2 {
                    let row = d * nv + nodes[a];
                    rhs[row] += fe[a][d];
                    for b in 0..6 {
                        t.add(row, d * nv + nodes[b], ke[a][b]);
                    }
                    for q in 0..3 {
                        let pq = 2 * nv + tri[q];
                        t.add(row, pq, be[q][a][d]);
                        t.add(pq, row, be[q][a][d]);
                    }
                }
            }
        }

        for edge in mesh.boundary_edges() {
            let [na, nb] = edge.nodes;
            let dofs = [
                vertex_p2(mesh, na),
                midpoint_p2(mesh, na, nb),
                vertex_p2(mesh, nb),
            ];
            let (pa, pb) = (mesh.nodes()[na], mesh.nodes()[nb]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let mut load = |value: &dyn Fn(f64, f64) -> [f64; 2]| {
                for (s, w) in GAUSS3 {
                    let x = pa[0] + s * (pb[0] - pa[0]);
                    let y = pa[1] + s * (pb[1] - pa[1]);
                    let v = value(x, y);
                    let phi = edge_basis(s);
                    for k in 0..3 {
                        rhs[dofs[k]] += w * len * v[0] * phi[k];
                        rhs[nv + dofs[k]] += w * len * v[1] * phi[k];
                    }
                }
            };
            match edge.tag {
                BoundaryTag::GammaTop => load(&|x, _| (self.surface_stress)(x)),
                BoundaryTag::GammaLeft | BoundaryTag::GammaRight => {
                    if let Some(s) = self.side_stress {
                        load(&|x, y| s(edge.tag, x, y));
                    }
                }
                BoundaryTag::GammaBottom => {
                    if let Some(g) = self.robin_rhs {
                        load(&|x, _| g(x));
                    }
                    if include_robin {
                        let m = robin_edge_matrix_p2(self.beta, pa[0], pb[0])?;
                        for d in 0..2 {
                            for a in 0..3 {
                                for b in 0..3 {
                                    t.add(d * nv + dofs[a], d * nv + dofs[b], m[a][b]);
                                }
                            }
                        }
                    }
                }
            }
        }

        Ok(StokesSystem {
            mesh,
            matrix: t.into_csr(),
            rhs,
            nv,
        })
    }

    pub fn solve<'m>(&self, mesh: &'m Mesh) -> Result<(VectorField<'m>, PressureField<'m>)> {
        self.assemble(mesh)?.solve()
    }
}

/// Assembled saddle-point system
/// `[[A, Bᵀ], [B, 0]] [u; p] = [f; 0]`.
#[derive(Debug, Clone)]
pub struct StokesSystem<'m> {
    mesh: &'m Mesh,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    nv: usize,
}

impl<'m> StokesSystem<'m> {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn num_velocity_nodes(&self) -> usize {
        self.nv
    }

    /// Positions of all unknowns, used to order them for the banded solver.
    pub(crate) fn dof_positions(&self) -> Vec<[f64; 2]> {
        let mut pos = Vec::with_capacity(self.matrix.n());
        for _ in 0..2 {
            pos.extend((0..self.nv).map(|k| p2_position(self.mesh, k)));
        }
        pos.extend_from_slice(self.mesh.nodes());
        pos
    }

    pub fn solve(&self) -> Result<(VectorField<'m>, PressureField<'m>)> {
        let lu = BandedLu::factor(&self.matrix, ordering_by_position(&self.dof_positions()))?;
        let x = lu.solve(&self.rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(self.split(&x))
    }

    pub(crate) fn split(&self, x: &[f64]) -> (VectorField<'m>, PressureField<'m>) {
        let nv = self.nv;
        let values = (0..nv).map(|k| [x[k], x[nv + k]]).collect();
        (
            VectorField {
                mesh: self.mesh,
                values,
            },
            PressureField {
                mesh: self.mesh,
                values: x[2 * nv..].to_vec(),
            },
        )
    }

    fn stack(&self, u: &VectorField<'_>, p: &PressureField<'_>) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.matrix.n());
        x.extend(u.values.iter().map(|v| v[0]));
        x.extend(u.values.iter().map(|v| v[1]));
        x.extend_from_slice(&p.values);
        x
    }

    /// `A x − b` for the stacked unknowns.
    pub fn residual(&self, u: &VectorField<'_>, p: &PressureField<'_>) -> Vec<f64> {
        let x = self.stack(u, p);
        self.matrix
            .matvec(&x)
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Max-norm of the discrete divergence `B u` tested against every
    /// pressure basis function.
    pub fn divergence_residual(&self, u: &VectorField<'_>) -> f64 {
        let n = self.matrix.n();
        let mut worst = 0.0f64;
        for row in 2 * self.nv..n {
            let s: f64 = self
                .matrix
                .row(row)
                .map(|(c, v)| {
                    if c < self.nv {
                        v * u.values[c][0]
                    } else {
                        v * u.values[c - self.nv][1]
                    }
                })
                .sum();
            worst = worst.max(s.abs());
        }
        worst
    }

    /// Indices of the velocity unknowns on the bottom edge.
    pub fn bottom_velocity_dofs(&self) -> Vec<usize> {
        let cols = 2 * self.mesh.nx() + 1;
        (0..2)
            .flat_map(|d| (0..cols).map(move |i| (d, i)))
            .map(|(d, i)| d * self.nv + i)
            .collect()
    }
}

/// Solves the ice-sheet configuration: stress `h` on top, homogeneous
/// Neumann sides, homogeneous Robin bottom, constant body force.
pub fn solve_stokes<'m>(
    mesh: &'m Mesh,
    beta: BoundaryFunction<'_>,
    h: BoundaryVectorFunction<'_>,
    f: BodyForce,
) -> Result<(VectorField<'m>, PressureField<'m>)> {
    let body = move |_: f64, _: f64| f.0;
    StokesProblem::new(beta, h, &body).solve(mesh)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::mesh::{build_rect_mesh, DiagonalSplit};

    #[test]
    fn zero_data_zero_solution() {
        let mesh = build_rect_mesh(6, 2, 1.0, 0.2).unwrap();
        let (u, p) = solve_stokes(&mesh, &|_| 1.0, &|_| [0.0, 0.0], BodyForce::zero()).unwrap();
        assert!(u.values().iter().all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
        assert!(p.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rejects_non_positive_beta() {
        let mesh = build_rect_mesh(4, 2, 1.0, 0.2).unwrap();
        let err = solve_stokes(&mesh, &|_| -1.0, &|_| [1.0, 0.0], BodyForce::zero()).unwrap_err();
        assert!(matches!(err, Error::NonPositiveBeta { .. }));
    }

    #[test]
    fn solved_system_is_consistent() {
        let mesh = build_rect_mesh(10, 3, 1.0, 0.2).unwrap();
        let h = |x: f64| [10.0 * ((12.0 * PI * x).sin() + 1.0), 0.0];
        let body = |_: f64, _: f64| [5.0, 5.0];
        let beta = |x: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()).exp();
        let sys = StokesProblem::new(&beta, &h, &body).assemble(&mesh).unwrap();
        assert!(sys.matrix().asymmetry() < 1e-12);
        let (u, p) = sys.solve().unwrap();
        let r = sys.residual(&u, &p);
        let scale = sys.rhs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(r.iter().all(|v| v.abs() < 1e-10 * scale.max(1.0)));
        assert!(sys.divergence_residual(&u) < 1e-8);
        for d in sys.bottom_velocity_dofs() {
            assert!(r[d].abs() < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn quadratic_top_profile_is_reproduced() {
        let mesh = build_rect_mesh(5, 2, 1.0, 0.2).unwrap();
        let f = |x: f64, y: f64| [3.0 * x * x - x + 0.5 + y, -2.0 * x * x + 0.25];
        let u = VectorField::interpolate(&mesh, &f);
        let pts = [0.0, 0.013, 0.3, 0.5, 0.77, 0.999, 1.0];
        let tr = u.velocity_trace_on_gamma(&pts).unwrap();
        for (x, v) in pts.iter().zip(&tr) {
            let e = f(*x, 0.2);
            assert!((v[0] - e[0]).abs() < 1e-13 && (v[1] - e[1]).abs() < 1e-13);
        }
        assert!(u.velocity_trace_on_gamma(&[1.5]).is_err());
        // nodal values come back exactly
        let at_node = u.velocity_trace_on_gamma(&[0.3]).unwrap()[0];
        let k = p2_index(&mesh, 3, 4);
        assert_eq!(at_node, u.values()[k]);
    }

    #[test]
    fn mirror_symmetric_data_give_mirrored_solution() {
        let (nx, ny) = (8, 2);
        let fwd = build_rect_mesh(nx, ny, 1.0, 0.2).unwrap();
        let bwd = Mesh::rectangle_with_split(nx, ny, 1.0, 0.2, DiagonalSplit::Backward).unwrap();
        // symmetric about x = 1/2: h_x odd, h_y even; f_x odd, f_y even
        let h = |x: f64| [(2.0 * PI * x).sin(), 1.0 + (2.0 * PI * x).cos()];
        let body = |x: f64, _: f64| [(x - 0.5) * 3.0, 2.0];
        let beta = |x: f64| 1.0 + (x - 0.5).powi(2);
        let problem = StokesProblem::new(&beta, &h, &body);
        let (u1, p1) = problem.solve(&fwd).unwrap();
        let (u2, p2) = problem.solve(&bwd).unwrap();
        let cols = 2 * nx + 1;
        for (k, v) in u1.values().iter().enumerate() {
            let (i, j) = (k % cols, k / cols);
            let w = u2.values()[j * cols + (cols - 1 - i)];
            assert!((v[0] + w[0]).abs() < 1e-8, "{v:?} {w:?}");
            assert!((v[1] - w[1]).abs() < 1e-8);
        }
        for (k, v) in p1.values().iter().enumerate() {
            let (i, j) = fwd.grid_position(k);
            let w = p2.values()[fwd.node_index(nx - i, j)];
            assert!((v - w).abs() < 1e-8);
        }
    }
}
