//! Forward map, synthetic data and Gaussian likelihood.
//!
//! The forward map sends coefficients `θ` to the trace on the top edge of the
//! solution with Robin coefficient `β = m_β + exp(θ)`. [`forward`] assembles
//! and solves the full system; [`ForwardOperator`] precomputes a Schur
//! complement onto the bottom-edge unknowns, which is the only place `β`
//! enters, so repeated evaluations (as in a Markov chain) only factor a small
//! dense matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem_laplace::{self, free_nodes, locate, robin_edge_matrix, LaplaceProblem};
use crate::fem_stokes::{self, edge_basis, p2_index, robin_edge_matrix_p2, BodyForce, StokesProblem};
use crate::linalg::{ordering_by_position, BandedCholesky, BandedLu, CsrMatrix, DenseCholesky};
use crate::mesh::{Mesh, MeshSpec};
use crate::prior::CoeffVector;

/// Governing equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pde {
    Laplace,
    Stokes { body_force: BodyForce },
}

/// Boundary datum `h` on the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HProfile {
    /// `amplitude · (sin(frequency · π · x) + offset)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl HProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            HProfile::Sinusoid {
                amplitude,
                frequency,
                offset,
            } => amplitude * ((frequency * std::f64::consts::PI * x).sin() + offset),
        }
    }
}

/// Everything about the model except the mesh and the unknown coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelKind {
    pub pde: Pde,
    pub h: HProfile,
    pub m_beta: f64,
}

impl ModelKind {
    pub fn new(pde: Pde, h: HProfile, m_beta: f64) -> Result<Self> {
        if !(m_beta >= 0.0 && m_beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "m_beta must be finite and non-negative, got {m_beta}"
            )));
        }
        if let Pde::Stokes { body_force } = pde {
            if body_force.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { pde, h, m_beta })
    }

    pub fn laplace(h: HProfile) -> Self {
        Self {
            pde: Pde::Laplace,
            h,
            m_beta: 0.0,
        }
    }

    pub fn stokes(h: HProfile, body_force: BodyForce) -> Self {
        Self {
            pde: Pde::Stokes { body_force },
            h,
            m_beta: 0.0,
        }
    }

    /// Components per observation.
    pub fn dim(&self) -> usize {
        match self.pde {
            Pde::Laplace => 1,
            Pde::Stokes { .. } => 2,
        }
    }

    /// `β(x) = m_β + exp(θ(x / Lx))`; the coefficient lives on `[0, 1]`.
    fn beta<'c>(&self, coeffs: &'c CoeffVector, lx: f64) -> impl Fn(f64) -> f64 + Sync + 'c {
        let m = self.m_beta;
        move |x| m + coeffs.eval_unchecked((x / lx).clamp(0.0, 1.0)).exp()
    }
}

/// Observed or predicted values: one scalar or one 2-vector per point.
/// Stored flat, `dim` entries per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    dim: usize,
    data: Vec<f64>,
}

impl Observations {
    pub fn scalars(values: Vec<f64>) -> Self {
        Self { dim: 1, data: values }
    }

    pub fn vectors(values: &[[f64; 2]]) -> Self {
        Self {
            dim: 2,
            data: values.iter().flatten().copied().collect(),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dim == 1 || dim == 2) || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into observations of size {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ObservationsRepr {
    Scalars(Vec<f64>),
    Vectors(Vec<[f64; 2]>),
}

impl Serialize for Observations {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.dim == 1 {
            self.data.serialize(s)
        } else {
            let pairs: Vec<[f64; 2]> = self.data.chunks(2).map(|c| [c[0], c[1]]).collect();
            pairs.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Observations {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match ObservationsRepr::deserialize(d)? {
            ObservationsRepr::Scalars(v) => Observations::scalars(v),
            ObservationsRepr::Vectors(v) => Observations::vectors(&v),
        })
    }
}

fn check_points(points: &[f64], lx: f64) -> Result<()> {
    for &x in points {
        if !(0.0..=lx).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: lx });
        }
    }
    Ok(())
}

/// Solves the full system once and evaluates the top trace at `points`.
pub fn forward(
    model: &ModelKind,
    mesh: &Mesh,
    coeffs: &CoeffVector,
    points: &[f64],
) -> Result<Observations> {
    check_points(points, mesh.lx())?;
    let beta = model.beta(coeffs, mesh.lx());
    let h = model.h;
    match model.pde {
        Pde::Laplace => {
            let flux = move |x: f64| h.eval(x);
            let u = fem_laplace::solve_laplace(mesh, &beta, &flux)?;
            Ok(Observations::scalars(u.trace_on_gamma(points)?))
        }
        Pde::Stokes { body_force } => {
            let stress = move |x: f64| [h.eval(x), 0.0];
            let (u, _) = fem_stokes::solve_stokes(mesh, &beta, &stress, body_force)?;
            Ok(Observations::vectors(&u.velocity_trace_on_gamma(points)?))
        }
    }
}

enum Factor {
    Cholesky(BandedCholesky),
    Lu(BandedLu),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::Cholesky(f) => f.solve(b),
            Factor::Lu(f) => f.solve(b),
        }
    }

    fn solve_many_in_place(&self, rhs: &mut [f64], m: usize) {
        match self {
            Factor::Cholesky(f) => f.solve_many_in_place(rhs, m),
            Factor::Lu(f) => f.solve_many_in_place(rhs, m),
        }
    }
}

const COLUMN_CHUNK: usize = 32;

/// Forward map reduced onto the bottom-edge unknowns.
///
/// Writing the system as `[[A_II, A_IB], [A_BI, A_BB + R(β)]]` with `B` the
/// bottom unknowns, the precomputation stores `S = A_BB − A_BI A_II⁻¹ A_IB`,
/// `c = b_B − A_BI A_II⁻¹ b_I` and the top-edge rows of `A_II⁻¹ b_I` and
/// `A_II⁻¹ A_IB`. An evaluation assembles `R(β)`, solves
/// `(S + R) x_B = c` and recovers the top trace.
pub struct ForwardOperator {
    model: ModelKind,
    mesh: Mesh,
    m: usize,
    schur: Vec<f64>,
    c: Vec<f64>,
    /// Trace nodes per component along the top edge.
    trace_nodes: usize,
    /// Top-edge values of `A_II⁻¹ b_I`, component-major.
    top_z: Vec<f64>,
    /// Matching rows of `A_II⁻¹ A_IB`, `m` entries each.
    top_y: Vec<f64>,
}

impl std::fmt::Debug for ForwardOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOperator")
            .field("model", &self.model)
            .field("mesh", &self.mesh.spec())
            .field("bottom_unknowns", &self.m)
            .finish()
    }
}

struct Layout {
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    positions: Vec<[f64; 2]>,
    /// Bottom unknowns in system numbering.
    bottom: Vec<usize>,
    /// System index of each top trace node per component, `None` where the
    /// value is fixed at zero.
    top: Vec<Option<usize>>,
    trace_nodes: usize,
    symmetric_definite: bool,
}

fn laplace_layout(model: &ModelKind, mesh: &Mesh) -> Result<Layout> {
    let h = model.h;
    let flux = move |x: f64| h.eval(x);
    let unused = |_: f64| 1.0;
    let sys = LaplaceProblem::new(&unused, &flux).assemble_parts(mesh, false)?;
    let (free, map) = free_nodes(mesh);
    let bottom = (1..mesh.nx())
        .map(|i| map[mesh.node_index(i, 0)].expect("interior bottom node is free"))
        .collect();
    let top = (0..=mesh.nx()).map(|i| map[mesh.node_index(i, mesh.ny())]).collect();
    Ok(Layout {
        positions: free.iter().map(|&n| mesh.nodes()[n]).collect(),
        matrix: sys.matrix().clone(),
        rhs: sys.rhs().to_vec(),
        bottom,
        top,
        trace_nodes: mesh.nx() + 1,
        symmetric_definite: true,
    })
}

fn stokes_layout(model: &ModelKind, mesh: &Mesh, body_force: BodyForce) -> Result<Layout> {
    let h = model.h;
    let stress = move |x: f64| [h.eval(x), 0.0];
    let body = move |_: f64, _: f64| body_force.0;
    let unused = |_: f64| 1.0;
    let sys = StokesProblem::new(&unused, &stress, &body).assemble_parts(mesh, false)?;
    let nv = sys.num_velocity_nodes();
    let cols = 2 * mesh.nx() + 1;
    let top = (0..2)
        .flat_map(|d| (0..cols).map(move |i| Some(d * nv + p2_index(mesh, i, 2 * mesh.ny()))))
        .collect();
    Ok(Layout {
        positions: sys.dof_positions(),
        bottom: sys.bottom_velocity_dofs(),
        matrix: sys.matrix().clone(),
        rhs: sys.rhs().to_vec(),
        top,
        trace_nodes: cols,
        symmetric_definite: false,
    })
}

impl ForwardOperator {
    pub fn new(model: &ModelKind, mesh: &Mesh) -> Result<Self> {
        let layout = match model.pde {
            Pde::Laplace => laplace_layout(model, mesh)?,
            Pde::Stokes { body_force } => stokes_layout(model, mesh, body_force)?,
        };
        let n = layout.matrix.n();
        let m = layout.bottom.len();

        // Split the unknowns into interior (I) and bottom (B).
        let mut bpos = vec![usize::MAX; n];
        for (k, &d) in layout.bottom.iter().enumerate() {
            bpos[d] = k;
        }
        let interior: Vec<usize> = (0..n).filter(|&d| bpos[d] == usize::MAX).collect();
        let mut ipos = vec![usize::MAX; n];
        for (k, &d) in interior.iter().enumerate() {
            ipos[d] = k;
        }
        let ni = interior.len();

        let a_ii = layout.matrix.submatrix(&interior);
        let positions: Vec<[f64; 2]> = interior.iter().map(|&d| layout.positions[d]).collect();
        let perm = ordering_by_position(&positions);
        let factor = if layout.symmetric_definite {
            Factor::Cholesky(BandedCholesky::factor(&a_ii, perm)?)
        } else {
            Factor::Lu(BandedLu::factor(&a_ii, perm)?)
        };

        // Columns of A_IB, by bottom index.
        let mut a_ib: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        // Rows of A_BI and the dense A_BB block.
        let mut a_bi: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut schur = vec![0.0; m * m];
        for r in 0..n {
            for (c, v) in layout.matrix.row(r) {
                match (bpos[r] != usize::MAX, bpos[c] != usize::MAX) {
                    (false, true) => a_ib[bpos[c]].push((ipos[r], v)),
                    (true, false) => a_bi[bpos[r]].push((ipos[c], v)),
                    (true, true) => schur[bpos[r] * m + bpos[c]] += v,
                    (false, false) => {}
                }
            }
        }

        let b_i: Vec<f64> = interior.iter().map(|&d| layout.rhs[d]).collect();
        let z = factor.solve(&b_i);
        let c: Vec<f64> = (0..m)
            .map(|k| layout.rhs[layout.bottom[k]] - a_bi[k].iter().map(|&(i, v)| v * z[i]).sum::<f64>())
            .collect();

        let top_rows: Vec<Option<usize>> = layout.top.iter().map(|t| t.map(|d| ipos[d])).collect();
        let top_z = top_rows.iter().map(|t| t.map_or(0.0, |i| z[i])).collect();
        let mut top_y = vec![0.0; top_rows.len() * m];

        let mut block = Vec::new();
        for start in (0..m).step_by(COLUMN_CHUNK) {
            let w = COLUMN_CHUNK.min(m - start);
            block.clear();
            block.resize(ni * w, 0.0);
            for k in 0..w {
                for &(i, v) in &a_ib[start + k] {
                    block[i * w + k] = v;
                }
            }
            factor.solve_many_in_place(&mut block, w);
            for (row, entries) in a_bi.iter().enumerate() {
                for &(i, v) in entries {
                    for k in 0..w {
                        schur[row * m + start + k] -= v * block[i * w + k];
                    }
                }
            }
            for (t, row) in top_rows.iter().enumerate() {
                if let Some(i) = row {
                    top_y[t * m + start..t * m + start + w].copy_from_slice(&block[i * w..(i + 1) * w]);
                }
            }
        }
        // Remove round-off asymmetry.
        for r in 0..m {
            for c in 0..r {
                let s = 0.5 * (schur[r * m + c] + schur[c * m + r]);
                schur[r * m + c] = s;
                schur[c * m + r] = s;
            }
        }
        if schur.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }

        Ok(Self {
            model: *model,
            mesh: mesh.clone(),
            m,
            schur,
            c,
            trace_nodes: layout.trace_nodes,
            top_z,
            top_y,
        })
    }

    pub fn model(&self) -> &ModelKind {
        &self.model
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Number of bottom-edge unknowns.
    pub fn reduced_size(&self) -> usize {
        self.m
    }

    /// Adds the Robin block `R(β)` to `s` (dense, `m × m`).
    fn add_robin(&self, coeffs: &CoeffVector, s: &mut [f64]) -> Result<()> {
        let mesh = &self.mesh;
        let beta = self.model.beta(coeffs, mesh.lx());
        let m = self.m;
        let x = |i: usize| mesh.nodes()[mesh.node_index(i, 0)][0];
        match self.model.pde {
            Pde::Laplace => {
                for cell in 0..mesh.nx() {
                    let local = robin_edge_matrix(&beta, x(cell), x(cell + 1))?;
                    // bottom node i has reduced index i − 1; corners are fixed
                    let idx = [cell.checked_sub(1), (cell + 1 < mesh.nx()).then_some(cell)];
                    for a in 0..2 {
                        let Some(ra) = idx[a] else { continue };
                        for b in 0..2 {
                            if let Some(cb) = idx[b] {
                                s[ra * m + cb] += local[a][b];
                            }
                        }
                    }
                }
            }
            Pde::Stokes { .. } => {
                let cols = 2 * mesh.nx() + 1;
                for cell in 0..mesh.nx() {
                    let local = robin_edge_matrix_p2(&beta, x(cell), x(cell + 1))?;
                    for d in 0..2 {
                        let off = d * cols + 2 * cell;
                        for a in 0..3 {
                            for b in 0..3 {
                                s[(off + a) * m + off + b] += local[a][b];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Solution on the bottom-edge unknowns.
    pub fn solve_bottom(&self, coeffs: &CoeffVector) -> Result<Vec<f64>> {
        let mut s = self.schur.clone();
        self.add_robin(coeffs, &mut s)?;
        let chol = DenseCholesky::factor(&s, self.m)?;
        let x = chol.solve(&self.c);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(x)
    }

    /// Values at the top trace nodes, component-major.
    pub fn top_trace(&self, coeffs: &CoeffVector) -> Result<Vec<f64>> {
        let xb = self.solve_bottom(coeffs)?;
        Ok(self
            .top_z
            .iter()
            .enumerate()
            .map(|(t, z)| z - dot(&self.top_y[t * self.m..(t + 1) * self.m], &xb))
            .collect())
    }

    /// Interpolation weights of the trace at `x` on the trace nodes of one
    /// component.
    fn weights(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        let (cell, t) = locate(x, self.mesh.nx(), self.mesh.lx())?;
        Ok(match self.model.pde {
            Pde::Laplace => vec![(cell, 1.0 - t), (cell + 1, t)],
            Pde::Stokes { .. } => edge_basis(t)
                .iter()
                .enumerate()
                .map(|(k, &w)| (2 * cell + k, w))
                .collect(),
        })
    }

    /// Precomputes the map from bottom unknowns to the trace at `points`.
    pub fn observer(&self, points: &[f64]) -> Result<Observer<'_>> {
        check_points(points, self.mesh.lx())?;
        let dim = self.model.dim();
        let rows = points.len() * dim;
        let m = self.m;
        let mut q0 = vec![0.0; rows];
        let mut q = vec![0.0; rows * m];
        for (p, &x) in points.iter().enumerate() {
            for (node, w) in self.weights(x)? {
                for d in 0..dim {
                    let r = p * dim + d;
                    let t = d * self.trace_nodes + node;
                    q0[r] += w * self.top_z[t];
                    for (qv, yv) in q[r * m..(r + 1) * m].iter_mut().zip(&self.top_y[t * m..(t + 1) * m]) {
                        *qv += w * yv;
                    }
                }
            }
        }
        Ok(Observer { op: self, dim, q0, q })
    }

    /// Trace at `points`; agrees with [`forward`] up to round-off.
    pub fn evaluate(&self, coeffs: &CoeffVector, points: &[f64]) -> Result<Observations> {
        self.observer(points)?.predict(coeffs)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward map restricted to a fixed point set.
pub struct Observer<'a> {
    op: &'a ForwardOperator,
    dim: usize,
    q0: Vec<f64>,
    q: Vec<f64>,
}

impl Observer<'_> {
    pub fn predict(&self, coeffs: &CoeffVector) -> Result<Observations> {
        let xb = self.op.solve_bottom(coeffs)?;
        let m = self.op.m;
        let data = self
            .q0
            .iter()
            .enumerate()
            .map(|(r, q0)| q0 - dot(&self.q[r * m..(r + 1) * m], &xb))
            .collect();
        Ok(Observations { dim: self.dim, data })
    }
}

/// Synthetic observations on the top edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub model: Pde,
    pub mesh: MeshSpec,
    pub m_beta: f64,
    pub h_descriptor: HProfile,
    pub sigma_noise: f64,
    pub seed: u64,
    pub points: Vec<f64>,
    pub values: Observations,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn model_kind(&self) -> ModelKind {
        ModelKind {
            pde: self.model,
            h: self.h_descriptor,
            m_beta: self.m_beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.values.len() {
            return Err(Error::InvalidDataset(format!(
                "{} points but {} values",
                self.points.len(),
                self.values.len()
            )));
        }
        if self.points.is_empty() {
            return Err(Error::InvalidDataset("no observations".into()));
        }
        if !(self.values.dim() == self.model_kind().dim()) {
            return Err(Error::InvalidDataset("value shape does not match the model".into()));
        }
        if let Some(x) = self.points.iter().find(|&&x| !(x > 0.0 && x < self.mesh.lx)) {
            return Err(Error::InvalidDataset(format!("point {x} outside (0, Lx)")));
        }
        if self.values.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite value".into()));
        }
        if !(self.sigma_noise > 0.0 && self.sigma_noise.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "noise level must be positive, got {}",
                self.sigma_noise
            )));
        }
        Ok(())
    }
}

/// Draws `n` points uniformly on the top edge and adds Gaussian noise of
/// standard deviation `sigma_noise` to the forward values at `coeffs0`.
/// `sigma_noise = 0` gives noiseless data.
pub fn generate_data(
    model: &ModelKind,
    mesh: &Mesh,
    coeffs0: &CoeffVector,
    n: usize,
    sigma_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one observation".into()));
    }
    if !(sigma_noise >= 0.0 && sigma_noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad noise level {sigma_noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = mesh.lx();
    let points: Vec<f64> = (0..n)
        .map(|_| loop {
            let x = rng.random::<f64>() * lx;
            if x > 0.0 && x < lx {
                break x;
            }
        })
        .collect();
    let clean = forward(model, mesh, coeffs0, &points)?;
    let data = clean
        .as_flat()
        .iter()
        .map(|v| v + sigma_noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Dataset {
        model: model.pde,
        mesh: mesh.spec(),
        m_beta: model.m_beta,
        h_descriptor: model.h,
        sigma_noise,
        seed,
        points,
        values: Observations { dim: clean.dim, data },
    })
}

/// `−(1 / 2σ²) Σ |Y_i − pred_i|²`.
pub fn log_likelihood(dataset: &Dataset, predictions: &Observations) -> Result<f64> {
    gaussian_log_likelihood(dataset.values.as_flat(), predictions.as_flat(), dataset.sigma_noise)
}

pub(crate) fn gaussian_log_likelihood(values: &[f64], predictions: &[f64], sigma: f64) -> Result<f64> {
    if values.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            got: predictions.len(),
        });
    }
    let ss: f64 = values.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(-ss / (2.0 * sigma * sigma))
}

/// Likelihood of a dataset as a function of the coefficients, evaluated
/// through a reduced forward operator.
pub struct Likelihood<'a> {
    observer: Observer<'a>,
    dataset: &'a Dataset,
}

impl<'a> Likelihood<'a> {
    pub fn new(op: &'a ForwardOperator, dataset: &'a Dataset) -> Result<Self> {
        dataset.validate()?;
        if op.model() != &dataset.model_kind() {
            return Err(Error::InvalidDataset(
                "dataset was generated with a different model".into(),
            ));
        }
        Ok(Self {
            observer: op.observer(&dataset.points)?,
            dataset,
        })
    }

    pub fn eval(&self, coeffs: &CoeffVector) -> Result<f64> {
        let pred = self.observer.predict(coeffs)?;
        log_likelihood(self.dataset, &pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn reference_h() -> HProfile {
        HProfile::Sinusoid {
            amplitude: 10.0,
            frequency: 12.0,
            offset: 1.0,
        }
    }

    fn theta0() -> CoeffVector {
        CoeffVector::new(vec![-0.6, 0.7, 2.0, 0.1, -0.08]).unwrap()
    }

    fn scalar_dataset(values: Vec<f64>, sigma: f64) -> Dataset {
        Dataset {
            model: Pde::Laplace,
            mesh: MeshSpec::new(4, 2, 1.0, 0.2),
            m_beta: 0.0,
            h_descriptor: reference_h(),
            sigma_noise: sigma,
            seed: 0,
            points: (0..values.len()).map(|i| 0.1 + 0.1 * i as f64).collect(),
            values: Observations::scalars(values),
        }
    }

    #[test]
    fn likelihood_formula() {
        let d = scalar_dataset(vec![1.0], 1.0);
        let ll = log_likelihood(&d, &Observations::scalars(vec![0.0])).unwrap();
        assert_eq!(ll, -0.5);
        assert_eq!(log_likelihood(&d, &d.values).unwrap(), 0.0);
        assert!(log_likelihood(&d, &Observations::scalars(vec![0.0, 1.0])).is_err());

        let mut v = d.clone();
        v.model = Pde::Stokes {
            body_force: BodyForce::zero(),
        };
        v.points = vec![0.2, 0.4];
        v.values = Observations::vectors(&[[1.0, 0.0], [0.0, 1.0]]);
        v.sigma_noise = 0.5;
        let ll = log_likelihood(&v, &Observations::vectors(&[[0.0; 2]; 2])).unwrap();
        assert!((ll + 4.0).abs() < 1e-14);
    }

    #[test]
    fn likelihood_scales_with_inverse_variance() {
        let a = scalar_dataset(vec![1.0, -2.0, 0.5], 1.0);
        let mut b = a.clone();
        b.sigma_noise = 0.25;
        let pred = Observations::scalars(vec![0.0; 3]);
        let la = log_likelihood(&a, &pred).unwrap();
        let lb = log_likelihood(&b, &pred).unwrap();
        assert!((lb / la - 16.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_operator_matches_full_laplace_solve() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(40, 8, 1.0, 0.2).unwrap();
        let op = ForwardOperator::new(&model, &mesh).unwrap();
        let points = [0.0, 0.013, 0.25, 0.5, 0.77, 0.999, 1.0];
        for coeffs in [theta0(), CoeffVector::zeros(2), CoeffVector::new(vec![0.3, -1.0, 0.5]).unwrap()] {
            let full = forward(&model, &mesh, &coeffs, &points).unwrap();
            let fast = op.evaluate(&coeffs, &points).unwrap();
            for (a, b) in full.as_flat().iter().zip(fast.as_flat()) {
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn reduced_operator_matches_full_stokes_solve() {
        let model = ModelKind::stokes(reference_h(), BodyForce([5.0, 5.0]));
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let op = ForwardOperator::new(&model, &mesh).unwrap();
        let points = [0.0, 0.1, 0.333, 0.5, 0.9, 1.0];
        for coeffs in [theta0(), CoeffVector::zeros(1)] {
            let full = forward(&model, &mesh, &coeffs, &points).unwrap();
            let fast = op.evaluate(&coeffs, &points).unwrap();
            assert_eq!(full.dim(), 2);
            for (a, b) in full.as_flat().iter().zip(fast.as_flat()) {
                assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn stokes_without_forcing_is_at_rest() {
        let model = ModelKind::stokes(
            HProfile::Sinusoid {
                amplitude: 0.0,
                frequency: 12.0,
                offset: 1.0,
            },
            BodyForce::zero(),
        );
        let mesh = build_rect_mesh(10, 2, 1.0, 0.2).unwrap();
        let v = forward(&model, &mesh, &theta0(), &[0.1, 0.6]).unwrap();
        assert!(v.as_flat().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn single_solve_semantics() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let a = forward(&model, &mesh, &theta0(), &[0.1, 0.2]).unwrap();
        let b = forward(&model, &mesh, &theta0(), &[0.7]).unwrap();
        let ab = forward(&model, &mesh, &theta0(), &[0.1, 0.2, 0.7]).unwrap();
        assert_eq!(ab.as_flat(), [a.as_flat(), b.as_flat()].concat());
        let rev = forward(&model, &mesh, &theta0(), &[0.7, 0.2, 0.1]).unwrap();
        let mut r = rev.as_flat().to_vec();
        r.reverse();
        assert_eq!(r, ab.as_flat());
    }

    #[test]
    fn laplace_trace_is_converged() {
        let model = ModelKind::laplace(reference_h());
        let points = [0.1, 0.3, 0.5, 0.7, 0.9];
        let coarse = build_rect_mesh(200, 40, 1.0, 0.2).unwrap();
        let fine = build_rect_mesh(400, 80, 1.0, 0.2).unwrap();
        let a = forward(&model, &coarse, &theta0(), &points).unwrap();
        let b = forward(&model, &fine, &theta0(), &points).unwrap();
        for (u, v) in a.as_flat().iter().zip(b.as_flat()) {
            assert!(u.is_finite());
            assert!((u - v).abs() < 5e-3 * v.abs().max(1.0), "{u} {v}");
        }
    }

    #[test]
    fn noiseless_data_equals_forward_values() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let d = generate_data(&model, &mesh, &theta0(), 15, 0.0, 9).unwrap();
        let f = forward(&model, &mesh, &theta0(), &d.points).unwrap();
        assert_eq!(d.values, f);
        assert!(d.points.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn noise_residuals_are_centred() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(50, 10, 1.0, 0.2).unwrap();
        let (n, sigma) = (100, 0.1);
        let d = generate_data(&model, &mesh, &theta0(), n, sigma, 2024).unwrap();
        let f = forward(&model, &mesh, &theta0(), &d.points).unwrap();
        let mean = d
            .values
            .as_flat()
            .iter()
            .zip(f.as_flat())
            .map(|(y, g)| y - g)
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
        d.validate().unwrap();
    }

    #[test]
    fn datasets_are_reproducible_and_round_trip() {
        let model = ModelKind::stokes(reference_h(), BodyForce([5.0, 5.0]));
        let mesh = build_rect_mesh(10, 2, 1.0, 0.2).unwrap();
        let a = generate_data(&model, &mesh, &theta0(), 5, 0.5, 1).unwrap();
        let b = generate_data(&model, &mesh, &theta0(), 5, 0.5, 1).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: Dataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.values.dim(), 2);
        assert!(json.contains("\"kind\":\"stokes\""));
    }

    #[test]
    fn likelihood_through_reduced_operator() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(20, 4, 1.0, 0.2).unwrap();
        let d = generate_data(&model, &mesh, &theta0(), 30, 0.1, 5).unwrap();
        let op = ForwardOperator::new(&model, &mesh).unwrap();
        let lik = Likelihood::new(&op, &d).unwrap();
        let direct = log_likelihood(&d, &forward(&model, &mesh, &theta0(), &d.points).unwrap()).unwrap();
        assert!((lik.eval(&theta0()).unwrap() - direct).abs() < 1e-8 * direct.abs().max(1.0));
        assert!(lik.eval(&theta0()).unwrap() <= 0.0);
    }

    #[test]
    fn extreme_coefficients_fail_cleanly() {
        let model = ModelKind::laplace(reference_h());
        let mesh = build_rect_mesh(10, 2, 1.0, 0.2).unwrap();
        let op = ForwardOperator::new(&model, &mesh).unwrap();
        let huge = CoeffVector::new(vec![0.0, 800.0, 0.0]).unwrap();
        assert!(op.solve_bottom(&huge).is_err());
        let tiny = CoeffVector::new(vec![0.0, -800.0, 0.0]).unwrap();
        assert!(op.solve_bottom(&tiny).is_err());
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn likelihood_is_nonpositive_and_monotone_in_data(
                ys in proptest::collection::vec(-5.0f64..5.0, 1..20),
                ps in proptest::collection::vec(-5.0f64..5.0, 20),
                extra in -5.0f64..5.0, sigma in 0.01f64..3.0,
            ) {
                let n = ys.len();
                let d = scalar_dataset(ys.clone(), sigma);
                let pred = Observations::scalars(ps[..n].to_vec());
                let ll = log_likelihood(&d, &pred).unwrap();
                prop_assert!(ll <= 0.0);
                let mut ys2 = ys.clone();
                ys2.push(extra);
                let d2 = scalar_dataset(ys2, sigma);
                let mut p2 = ps[..n].to_vec();
                p2.push(ps[n.min(19)]);
                let ll2 = log_likelihood(&d2, &Observations::scalars(p2)).unwrap();
                prop_assert!(ll2 <= ll);
            }
        }
    }
}
