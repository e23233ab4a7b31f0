//! Semidefinite relaxations of the selection problem and randomized rounding.
//!
//! Two program kinds are built: the general relaxation, whose LMIs encode the
//! exact closed-form information through the covariance split `R = a I + S`,
//! and the weak-correlation relaxation built on the Hadamard-product
//! information. Both lift the Boolean structure to `(w, W)` with
//! `W >= w w^T`, `diag(W) = w`, `tr(W) <= s`, giving a lower bound on the
//! Boolean optimum. The module owns the conic-program data; solving goes
//! through a backend contract, implemented here with an interior-point conic
//! solver. Rounding draws Gaussians from the `(w, W)` moments and keeps the
//! top-`s` pattern with the best exact objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    fisher_closed_form, CovDecomposition, MeasurementModel, SelectionVector,
};

/// Which relaxation a problem encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpKind {
    /// Exact closed-form information through the covariance split.
    General,
    /// Hadamard-product (weak-correlation) information.
    Weak,
}

/// Backend-agnostic conic program in the form
/// `min q^T x  s.t.  A x + s = b, s in K`, with `K` a product of zero,
/// nonnegative and scaled-triangle PSD cones in row order.
#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// `(row, col, value)` entries of `A`.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub cones: Vec<ConeSpec>,
}

#[derive(Clone, Copy, Debug)]
pub enum ConeSpec {
    Zero(usize),
    NonNegative(usize),
    /// PSD cone of a `d x d` symmetric block in scaled upper-triangular
    /// (svec) form.
    PsdTriangle(usize),
}

/// Raw solver output for a conic program.
#[derive(Clone, Debug)]
pub struct BackendSolution {
    pub x: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub status: String,
    pub solved: bool,
}

/// Contract a conic backend must meet: return a solution whose duality gap
/// and feasibility violations are within the requested tolerance.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<BackendSolution>;
}

/// Length of the packed upper triangle of a `d x d` symmetric matrix.
fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Column-major upper-triangle index of entry `(i, j)` with `i <= j`.
fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Accumulates one PSD block `M(x) = M0 + sum_k x_k Mk >= 0` as svec rows
/// `s = svec(M0) - (-svec(Mk)) x`.
struct PsdBlock<'a> {
    row_offset: usize,
    triplets: &'a mut Vec<(usize, usize, f64)>,
    rhs: &'a mut Vec<f64>,
}

impl<'a> PsdBlock<'a> {
    fn svec_row(&self, mut i: usize, mut j: usize) -> (usize, f64) {
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let scale = if i == j { 1.0 } else { SQRT2 };
        (self.row_offset + tri_index(i, j), scale)
    }

    /// Adds `value` to entry `(i, j)` (and symmetrically `(j, i)`) of `M0`.
    fn constant(&mut self, i: usize, j: usize, value: f64) {
        let (row, scale) = self.svec_row(i, j);
        self.rhs[row] += scale * value;
    }

    /// Adds `value` to entry `(i, j)` of the coefficient matrix of `x_var`.
    fn coeff(&mut self, i: usize, j: usize, var: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let (row, scale) = self.svec_row(i, j);
        self.triplets.push((row, var, -scale * value));
    }
}

/// Relaxation data for one instance: the constant matrices of the LMIs plus
/// the budget.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    kind: SdpKind,
    m: usize,
    n: usize,
    budget: usize,
    /// General kind: `C = Sigma^-1 + H^T S^-1 H`.
    c_mat: Option<DMatrix<f64>>,
    /// General kind: `B = S^-1 H`.
    b_mat: Option<DMatrix<f64>>,
    /// General kind: `S^-1` and the shift `a`.
    s_inv: Option<DMatrix<f64>>,
    shift: Option<f64>,
    /// Weak kind: `Sigma^-1`, `R^-1` and `H`.
    prior_prec: Option<DMatrix<f64>>,
    noise_prec: Option<DMatrix<f64>>,
    obs: Option<DMatrix<f64>>,
}

impl SdpProblem {
    pub fn kind(&self) -> SdpKind {
        self.kind
    }

    pub fn sensor_count(&self) -> usize {
        self.m
    }

    pub fn param_dim(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn c_matrix(&self) -> Option<&DMatrix<f64>> {
        self.c_mat.as_ref()
    }

    pub fn b_matrix(&self) -> Option<&DMatrix<f64>> {
        self.b_mat.as_ref()
    }

    fn var_w(&self, i: usize) -> usize {
        i
    }

    fn var_w_mat(&self, i: usize, j: usize) -> usize {
        self.m + tri_index(i.min(j), i.max(j))
    }

    fn var_z(&self, i: usize, j: usize) -> usize {
        self.m + tri_len(self.m) + tri_index(i.min(j), i.max(j))
    }

    fn var_v(&self, i: usize, j: usize) -> usize {
        self.m + tri_len(self.m) + tri_len(self.n) + tri_index(i.min(j), i.max(j))
    }

    fn num_vars(&self) -> usize {
        let base = self.m + tri_len(self.m) + tri_len(self.n);
        match self.kind {
            SdpKind::General => base + tri_len(self.n),
            SdpKind::Weak => base,
        }
    }

    /// Assembles the backend-agnostic conic program.
    pub fn conic_program(&self) -> ConicProgram {
        let (m, n) = (self.m, self.n);
        let num_vars = self.num_vars();
        let mut objective = vec![0.0; num_vars];
        for i in 0..n {
            objective[self.var_z(i, i)] = 1.0;
        }
        let mut triplets = Vec::new();
        let mut rhs = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0usize;

        // diag(W) = w (zero cone)
        for i in 0..m {
            triplets.push((row, self.var_w_mat(i, i), 1.0));
            triplets.push((row, self.var_w(i), -1.0));
            rhs.push(0.0);
            row += 1;
        }
        cones.push(ConeSpec::Zero(m));

        // tr(W) <= s (nonnegative slack)
        for i in 0..m {
            triplets.push((row, self.var_w_mat(i, i), 1.0));
        }
        rhs.push(self.budget as f64);
        row += 1;
        cones.push(ConeSpec::NonNegative(1));

        match self.kind {
            SdpKind::General => {
                let c = self.c_mat.as_ref().unwrap();
                let b = self.b_mat.as_ref().unwrap();
                let s_inv = self.s_inv.as_ref().unwrap();
                let shift = self.shift.unwrap();

                // [[C - V, I], [I, Z]] >= 0, dimension 2n
                rhs.resize(row + tri_len(2 * n), 0.0);
                let mut block = PsdBlock {
                    row_offset: row,
                    triplets: &mut triplets,
                    rhs: &mut rhs,
                };
                for i in 0..n {
                    for j in i..n {
                        block.constant(i, j, c[(i, j)]);
                        block.coeff(i, j, self.var_v(i, j), -1.0);
                        block.coeff(n + i, n + j, self.var_z(i, j), 1.0);
                    }
                    block.constant(i, n + i, 1.0);
                }
                row += tri_len(2 * n);
                cones.push(ConeSpec::PsdTriangle(2 * n));

                // [[V, B^T], [B, S^-1 + a^-1 diag(w)]] >= 0, dimension n + m
                rhs.resize(row + tri_len(n + m), 0.0);
                let mut block = PsdBlock {
                    row_offset: row,
                    triplets: &mut triplets,
                    rhs: &mut rhs,
                };
                for i in 0..n {
                    for j in i..n {
                        block.coeff(i, j, self.var_v(i, j), 1.0);
                    }
                    for k in 0..m {
                        block.constant(i, n + k, b[(k, i)]);
                    }
                }
                for k in 0..m {
                    for l in k..m {
                        block.constant(n + k, n + l, s_inv[(k, l)]);
                    }
                    block.coeff(n + k, n + k, self.var_w(k), 1.0 / shift);
                }
                row += tri_len(n + m);
                cones.push(ConeSpec::PsdTriangle(n + m));
            }
            SdpKind::Weak => {
                let prior_prec = self.prior_prec.as_ref().unwrap();
                let noise_prec = self.noise_prec.as_ref().unwrap();
                let h = self.obs.as_ref().unwrap();

                // [[Sigma^-1 + H^T (W o R^-1) H, I], [I, Z]] >= 0
                rhs.resize(row + tri_len(2 * n), 0.0);
                let mut block = PsdBlock {
                    row_offset: row,
                    triplets: &mut triplets,
                    rhs: &mut rhs,
                };
                for i in 0..n {
                    for j in i..n {
                        block.constant(i, j, prior_prec[(i, j)]);
                        block.coeff(n + i, n + j, self.var_z(i, j), 1.0);
                    }
                    block.constant(i, n + i, 1.0);
                }
                for k in 0..m {
                    for l in k..m {
                        // coefficient of W_kl in the information block
                        let hk = h.row(k);
                        let hl = h.row(l);
                        let rbar = noise_prec[(k, l)];
                        if rbar == 0.0 {
                            continue;
                        }
                        for i in 0..n {
                            for j in i..n {
                                let outer = if k == l {
                                    hk[i] * hk[j]
                                } else {
                                    hk[i] * hl[j] + hl[i] * hk[j]
                                };
                                block.coeff(i, j, self.var_w_mat(k, l), rbar * outer);
                            }
                        }
                    }
                }
                row += tri_len(2 * n);
                cones.push(ConeSpec::PsdTriangle(2 * n));
            }
        }

        // [[W, w], [w^T, 1]] >= 0, dimension m + 1
        rhs.resize(row + tri_len(m + 1), 0.0);
        let mut block = PsdBlock {
            row_offset: row,
            triplets: &mut triplets,
            rhs: &mut rhs,
        };
        for i in 0..m {
            for j in i..m {
                block.coeff(i, j, self.var_w_mat(i, j), 1.0);
            }
            block.coeff(i, m, self.var_w(i), 1.0);
        }
        block.constant(m, m, 1.0);
        cones.push(ConeSpec::PsdTriangle(m + 1));

        ConicProgram {
            num_vars,
            objective,
            triplets,
            rhs,
            cones,
        }
    }

    /// Evaluates the LMI blocks at an explicit point; used for feasibility
    /// and contract checks.
    pub fn lmi_blocks(
        &self,
        w: &DVector<f64>,
        w_mat: &DMatrix<f64>,
        z: &DMatrix<f64>,
        v: Option<&DMatrix<f64>>,
    ) -> Vec<DMatrix<f64>> {
        let (m, n) = (self.m, self.n);
        let mut blocks = Vec::new();
        match self.kind {
            SdpKind::General => {
                let c = self.c_mat.as_ref().unwrap();
                let b = self.b_mat.as_ref().unwrap();
                let s_inv = self.s_inv.as_ref().unwrap();
                let shift = self.shift.unwrap();
                let v = v.expect("general kind carries V");
                let mut lmi1 = DMatrix::zeros(2 * n, 2 * n);
                lmi1.view_mut((0, 0), (n, n)).copy_from(&(c - v));
                lmi1.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
                lmi1.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                lmi1.view_mut((n, n), (n, n)).copy_from(z);
                blocks.push(lmi1);
                let mut lmi2 = DMatrix::zeros(n + m, n + m);
                lmi2.view_mut((0, 0), (n, n)).copy_from(v);
                lmi2.view_mut((0, n), (n, m)).copy_from(&b.transpose());
                lmi2.view_mut((n, 0), (m, n)).copy_from(b);
                let mut corner = s_inv.clone();
                for k in 0..m {
                    corner[(k, k)] += w[k] / shift;
                }
                lmi2.view_mut((n, n), (m, m)).copy_from(&corner);
                blocks.push(lmi2);
            }
            SdpKind::Weak => {
                let prior_prec = self.prior_prec.as_ref().unwrap();
                let noise_prec = self.noise_prec.as_ref().unwrap();
                let h = self.obs.as_ref().unwrap();
                let hadamard = DMatrix::from_fn(m, m, |i, j| w_mat[(i, j)] * noise_prec[(i, j)]);
                let info = prior_prec + h.transpose() * hadamard * h;
                let mut lmi1 = DMatrix::zeros(2 * n, 2 * n);
                lmi1.view_mut((0, 0), (n, n)).copy_from(&info);
                lmi1.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
                lmi1.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                lmi1.view_mut((n, n), (n, n)).copy_from(z);
                blocks.push(lmi1);
            }
        }
        let mut lifted = DMatrix::zeros(m + 1, m + 1);
        lifted.view_mut((0, 0), (m, m)).copy_from(w_mat);
        for i in 0..m {
            lifted[(i, m)] = w[i];
            lifted[(m, i)] = w[i];
        }
        lifted[(m, m)] = 1.0;
        blocks.push(lifted);
        blocks
    }
}

/// General relaxation: minimize `tr(Z)` subject to the two split-form LMIs
/// plus the lifted Boolean constraints.
pub fn build_sdp_general(
    model: &MeasurementModel,
    decomp: &CovDecomposition,
    budget: usize,
) -> Result<SdpProblem> {
    if budget > model.sensor_count() {
        return Err(Error::Budget(format!(
            "budget {budget} exceeds {} sensors",
            model.sensor_count()
        )));
    }
    let recon = decomp.reconstruct();
    if linalg::rel_frobenius(&recon, model.noise_cov()) > 1e-12 {
        return Err(Error::Precondition(
            "covariance split does not reconstruct the model noise covariance".into(),
        ));
    }
    let s_inv = decomp.s_inverse().clone();
    let h = model.obs_matrix();
    let c_mat = model.prior_precision() + h.transpose() * &s_inv * h;
    let b_mat = &s_inv * h;
    Ok(SdpProblem {
        kind: SdpKind::General,
        m: model.sensor_count(),
        n: model.param_dim(),
        budget,
        c_mat: Some(linalg::symmetrize(&c_mat)),
        b_mat: Some(b_mat),
        s_inv: Some(s_inv),
        shift: Some(decomp.shift()),
        prior_prec: None,
        noise_prec: None,
        obs: None,
    })
}

/// Weak-correlation relaxation: minimize `tr(Z)` with the Hadamard-product
/// information LMI plus the lifted Boolean constraints.
pub fn build_sdp_weak(model: &MeasurementModel, budget: usize) -> Result<SdpProblem> {
    if budget > model.sensor_count() {
        return Err(Error::Budget(format!(
            "budget {budget} exceeds {} sensors",
            model.sensor_count()
        )));
    }
    Ok(SdpProblem {
        kind: SdpKind::Weak,
        m: model.sensor_count(),
        n: model.param_dim(),
        budget,
        c_mat: None,
        b_mat: None,
        s_inv: None,
        shift: None,
        prior_prec: Some(model.prior_precision().clone()),
        noise_prec: Some(model.noise_precision().clone()),
        obs: Some(model.obs_matrix().clone()),
    })
}

/// Relaxed solution block.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub kind: SdpKind,
    pub w_relaxed: DVector<f64>,
    pub w_matrix: DMatrix<f64>,
    pub z_matrix: DMatrix<f64>,
    pub v_matrix: Option<DMatrix<f64>>,
    /// `tr(Z)`: a lower bound on the Boolean optimum of the corresponding
    /// objective.
    pub objective: f64,
    pub duality_gap: f64,
    pub solver_status: String,
    pub iterations: usize,
}

impl SdpSolution {
    /// Verifies the solution against the problem constraints at tolerance
    /// `tol` (PSD blocks may violate by `-tol` in minimum eigenvalue).
    pub fn check_contract(&self, problem: &SdpProblem, tol: f64) -> Result<()> {
        let m = problem.sensor_count();
        for i in 0..m {
            let gap = (self.w_matrix[(i, i)] - self.w_relaxed[i]).abs();
            if gap > tol {
                return Err(Error::SolverFailure(format!(
                    "diag(W) deviates from w by {gap:.3e} at {i}"
                )));
            }
        }
        let trace = self.w_matrix.trace();
        if trace > problem.budget() as f64 + tol {
            return Err(Error::SolverFailure(format!(
                "tr(W) = {trace:.6} exceeds budget {}",
                problem.budget()
            )));
        }
        let blocks = self.lmi_eigen_floors(problem);
        for (name, floor) in blocks {
            if floor < -tol {
                return Err(Error::SolverFailure(format!(
                    "{name} min eigenvalue {floor:.3e} below -{tol:.1e}"
                )));
            }
        }
        if self.duality_gap > tol {
            return Err(Error::SolverFailure(format!(
                "duality gap {:.3e} above {tol:.1e}",
                self.duality_gap
            )));
        }
        Ok(())
    }

    /// Minimum eigenvalue of each LMI block at the solution point.
    pub fn lmi_eigen_floors(&self, problem: &SdpProblem) -> Vec<(&'static str, f64)> {
        let blocks = problem.lmi_blocks(
            &self.w_relaxed,
            &self.w_matrix,
            &self.z_matrix,
            self.v_matrix.as_ref(),
        );
        let names: &[&'static str] = match problem.kind() {
            SdpKind::General => &["information LMI", "split LMI", "lifted block"],
            SdpKind::Weak => &["information LMI", "lifted block"],
        };
        names
            .iter()
            .zip(blocks.iter())
            .map(|(&name, block)| (name, linalg::min_eigenvalue(block)))
            .collect()
    }
}

fn unpack_symmetric(x: &[f64], offset: usize, d: usize) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let v = x[offset + tri_index(i, j)];
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    mat
}

/// Interior-point conic backend.
pub struct ClarabelBackend;

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<BackendSolution> {
        use clarabel::algebra::CscMatrix;
        use clarabel::solver::{
            DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
            SupportedConeT,
        };

        let nrows = program.rhs.len();
        let ncols = program.num_vars;
        // triplets -> CSC, summing duplicates
        let mut entries = program.triplets.clone();
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (row, col, val) in entries {
            if let Some(last) = merged.last_mut() {
                if last.0 == row && last.1 == col {
                    last.2 += val;
                    continue;
                }
            }
            merged.push((row, col, val));
        }
        let mut colptr = vec![0usize; ncols + 1];
        for &(_, col, _) in &merged {
            colptr[col + 1] += 1;
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        let rowval: Vec<usize> = merged.iter().map(|e| e.0).collect();
        let nzval: Vec<f64> = merged.iter().map(|e| e.2).collect();
        let a = CscMatrix::new(nrows, ncols, colptr, rowval, nzval);
        let p = CscMatrix::zeros((ncols, ncols));
        let cones: Vec<SupportedConeT<f64>> = program
            .cones
            .iter()
            .map(|c| match *c {
                ConeSpec::Zero(d) => SupportedConeT::ZeroConeT(d),
                ConeSpec::NonNegative(d) => SupportedConeT::NonnegativeConeT(d),
                ConeSpec::PsdTriangle(d) => SupportedConeT::PSDTriangleConeT(d),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(tol.min(1e-8))
            .tol_gap_rel(tol.min(1e-8))
            .tol_feas(tol.min(1e-8))
            .build()
            .map_err(|e| Error::SolverFailure(format!("settings: {e}")))?;
        let mut solver =
            DefaultSolver::new(&p, &program.objective, &a, &program.rhs, &cones, settings)
                .map_err(|e| Error::SolverFailure(format!("solver setup: {e:?}")))?;
        solver.solve();
        let status = solver.solution.status;
        let solved = matches!(
            status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        );
        Ok(BackendSolution {
            x: solver.solution.x.clone(),
            primal_objective: solver.solution.obj_val,
            dual_objective: solver.solution.obj_val_dual,
            iterations: solver.solution.iterations as usize,
            status: format!("{status:?}"),
            solved,
        })
    }
}

/// Solves a relaxation with the default interior-point backend.
pub fn solve_sdp(problem: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    solve_sdp_with(problem, tol, &ClarabelBackend)
}

/// Solves a relaxation with an explicit backend and verifies the returned
/// point against the problem constraints.
pub fn solve_sdp_with(
    problem: &SdpProblem,
    tol: f64,
    backend: &dyn SdpBackend,
) -> Result<SdpSolution> {
    let program = problem.conic_program();
    let raw = backend.solve(&program, tol)?;
    if !raw.solved {
        return Err(Error::SolverFailure(format!(
            "{} returned status {}",
            backend.name(),
            raw.status
        )));
    }
    let (m, n) = (problem.sensor_count(), problem.param_dim());
    let w_relaxed = DVector::from_iterator(m, raw.x[..m].iter().cloned());
    let w_matrix = unpack_symmetric(&raw.x, m, m);
    let z_matrix = unpack_symmetric(&raw.x, m + tri_len(m), n);
    let v_matrix = match problem.kind() {
        SdpKind::General => Some(unpack_symmetric(&raw.x, m + tri_len(m) + tri_len(n), n)),
        SdpKind::Weak => None,
    };
    let denom = raw.primal_objective.abs().max(1.0);
    let solution = SdpSolution {
        kind: problem.kind(),
        w_relaxed,
        w_matrix,
        z_matrix,
        v_matrix,
        objective: raw.primal_objective,
        duality_gap: (raw.primal_objective - raw.dual_objective).abs() / denom,
        solver_status: raw.status,
        iterations: raw.iterations,
    };
    solution.check_contract(problem, tol)?;
    Ok(solution)
}

/// Boolean pattern produced by rounding a relaxed solution.
#[derive(Clone, Debug)]
pub struct RoundingResult {
    pub selection: SelectionVector,
    /// Exact objective `tr(J_w^-1)` of the rounded pattern.
    pub objective: f64,
    pub sample_count: usize,
}

/// Indices of the `s` largest entries, lower index first on ties.
fn top_s_indices(values: &DVector<f64>, s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(s).collect();
    chosen.sort_unstable();
    chosen
}

/// Randomization rounding: draw `n_samples` Gaussians
/// `xi ~ N(w, W - w w^T)`, map each to the Boolean pattern of its `s`
/// largest entries, and keep the pattern with the smallest exact objective.
/// Deterministic given the seed; sample `l` uses RNG stream `l`.
pub fn randomize_round(
    solution: &SdpSolution,
    model: &MeasurementModel,
    decomp: &CovDecomposition,
    s: usize,
    n_samples: usize,
    seed: u64,
) -> Result<RoundingResult> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("rounding needs at least one sample".into()));
    }
    let m = model.sensor_count();
    if s > m {
        return Err(Error::Budget(format!("budget {s} exceeds {m} sensors")));
    }
    let cov = linalg::symmetrize(
        &(&solution.w_matrix - &solution.w_relaxed * solution.w_relaxed.transpose()),
    );
    // PSD up to solver tolerance only; sampling clips negative eigenvalues.
    let sampler = linalg::MvnSampler::new(solution.w_relaxed.clone(), &cov, 1e-7)
        .map_err(|e| Error::Precondition(format!("W - w w^T not PSD within tolerance: {e}")))?;
    let mut best: Option<(SelectionVector, f64)> = None;
    for l in 0..n_samples {
        let mut rng = crate::rng::stream(seed, l as u64);
        let xi = sampler.sample(&mut rng);
        let idx = top_s_indices(&xi, s);
        let w = SelectionVector::from_indices(m, &idx)?;
        let objective =
            fisher_closed_form(model, decomp, &w)?.trace_inverse()?;
        let better = match &best {
            None => true,
            Some((_, b)) => objective < *b,
        };
        if better {
            best = Some((w, objective));
        }
    }
    let (selection, objective) = best.unwrap();
    Ok(RoundingResult {
        selection,
        objective,
        sample_count: n_samples,
    })
}

/// Cheap rounding mode: activate the `s` sensors with the largest relaxed
/// weights, no sampling.
pub fn round_top_s(
    solution: &SdpSolution,
    model: &MeasurementModel,
    decomp: &CovDecomposition,
    s: usize,
) -> Result<RoundingResult> {
    let m = model.sensor_count();
    if s > m {
        return Err(Error::Budget(format!("budget {s} exceeds {m} sensors")));
    }
    let idx = top_s_indices(&solution.w_relaxed, s);
    let selection = SelectionVector::from_indices(m, &idx)?;
    let objective = fisher_closed_form(model, decomp, &selection)?.trace_inverse()?;
    Ok(RoundingResult {
        selection,
        objective,
        sample_count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decompose_covariance, exp_covariance, fisher_truncated, SensorGeometry};
    use crate::oracle::{exhaustive_search, ExhaustiveObjective};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn toy_model(m: usize, n: usize, rho: f64, seed: u64) -> MeasurementModel {
        let mut rng = crate::rng::stream(seed, 0);
        let geom = SensorGeometry::random_uniform(m, 50.0, 1.0, rho, &mut rng).unwrap();
        let r = exp_covariance(&geom);
        let scale = 1.0 / (n as f64).sqrt().sqrt();
        let h = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        MeasurementModel::new(DVector::zeros(n), DMatrix::identity(n, n), h, r).unwrap()
    }

    #[test]
    fn general_problem_shapes_and_data() {
        let model = toy_model(1, 1, 0.1, 81);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let prob = build_sdp_general(&model, &decomp, 1).unwrap();
        let program = prob.conic_program();
        // blocks: zero(1), nonneg(1), psd(2n=2), psd(n+m=2), psd(m+1=2)
        let dims: Vec<usize> = program
            .cones
            .iter()
            .map(|c| match *c {
                ConeSpec::Zero(d) | ConeSpec::NonNegative(d) | ConeSpec::PsdTriangle(d) => d,
            })
            .collect();
        assert_eq!(dims, vec![1, 1, 2, 2, 2]);

        let model = toy_model(5, 2, 0.1, 82);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let prob = build_sdp_general(&model, &decomp, 3).unwrap();
        let h = model.obs_matrix();
        let expect_c = model.prior_precision() + h.transpose() * decomp.s_inverse() * h;
        let expect_b = decomp.s_inverse() * h;
        assert!(linalg::rel_frobenius(prob.c_matrix().unwrap(), &expect_c) <= 1e-12);
        assert!(linalg::rel_frobenius(prob.b_matrix().unwrap(), &expect_b) <= 1e-12);
    }

    #[test]
    fn explicit_feasible_point_satisfies_all_blocks() {
        let model = toy_model(6, 2, 0.1, 83);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let s = 3usize;
        let prob = build_sdp_general(&model, &decomp, s).unwrap();
        let m = model.sensor_count();
        let frac = s as f64 / m as f64;
        let w = DVector::from_element(m, frac);
        let w_mat = &w * w.transpose()
            + DMatrix::from_diagonal(&DVector::from_element(m, frac - frac * frac));
        assert!(w_mat.trace() <= s as f64 + 1e-12);
        let h = model.obs_matrix();
        let v = h.transpose() * decomp.s_inverse() * h;
        let (_, sigma_hi) = linalg::eigen_range(model.prior_cov());
        let z = DMatrix::identity(2, 2) * (sigma_hi + 1.0);
        for block in prob.lmi_blocks(&w, &w_mat, &z, Some(&v)) {
            assert!(
                linalg::min_eigenvalue(&block) >= -1e-9,
                "block not PSD at the constructed point"
            );
        }
    }

    #[test]
    fn weak_problem_matches_hadamard_information() {
        let model = toy_model(4, 2, 0.3, 84);
        let prob = build_sdp_weak(&model, 2).unwrap();
        let mut rng = crate::rng::stream(84, 1);
        let bits: Vec<bool> = (0..4).map(|_| rng.random::<bool>()).collect();
        let w = SelectionVector::new(bits);
        let wv = w.as_vector();
        let w_mat = &wv * wv.transpose();
        let z = DMatrix::identity(2, 2);
        let blocks = prob.lmi_blocks(&wv, &w_mat, &z, None);
        let info = blocks[0].view((0, 0), (2, 2)).into_owned();
        let expect = crate::weakcorr::fisher_weak(&model, &w).unwrap();
        assert!(linalg::rel_frobenius(&info, expect.matrix()) <= 1e-12);
        // first LMI block is 2n x 2n
        assert_eq!(blocks[0].nrows(), 4);
    }

    #[test]
    fn full_budget_solution_is_near_full_information() {
        let model = toy_model(5, 2, 0.1, 85);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let prob = build_sdp_general(&model, &decomp, 5).unwrap();
        let sol = solve_sdp(&prob, 1e-6).unwrap();
        let full = fisher_truncated(&model, &SelectionVector::all_on(5))
            .unwrap()
            .trace_inverse()
            .unwrap();
        assert!(sol.objective <= full + 1e-6, "{} vs {full}", sol.objective);
        for i in 0..5 {
            assert!(sol.w_relaxed[i] >= 1.0 - 1e-4);
        }
    }

    #[test]
    fn sdp_objective_lower_bounds_boolean_optimum() {
        let model = toy_model(10, 2, 0.1, 86);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let s = 3;
        let prob = build_sdp_general(&model, &decomp, s).unwrap();
        let sol = solve_sdp(&prob, 1e-6).unwrap();
        let exh = exhaustive_search(&model, s, ExhaustiveObjective::TraceInverse, false).unwrap();
        assert!(
            sol.objective <= exh.best_value + 1e-6,
            "SDP {} vs exhaustive {}",
            sol.objective,
            exh.best_value
        );
        sol.check_contract(&prob, 1e-6).unwrap();
    }

    #[test]
    fn weak_sdp_lower_bounds_weak_boolean_optimum() {
        let model = toy_model(8, 2, 0.5, 87);
        let prob = build_sdp_weak(&model, 3).unwrap();
        let sol = solve_sdp(&prob, 1e-6).unwrap();
        let exh =
            exhaustive_search(&model, 3, ExhaustiveObjective::TraceFisherWeak, false).unwrap();
        assert!(
            sol.objective <= exh.best_value + 1e-6,
            "weak SDP {} vs exhaustive {}",
            sol.objective,
            exh.best_value
        );
    }

    #[test]
    fn rounding_is_deterministic_and_exactly_s_active() {
        let model = toy_model(12, 2, 0.1, 88);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let s = 4;
        let prob = build_sdp_general(&model, &decomp, s).unwrap();
        let sol = solve_sdp(&prob, 1e-6).unwrap();
        let a = randomize_round(&sol, &model, &decomp, s, 50, 99).unwrap();
        let b = randomize_round(&sol, &model, &decomp, s, 50, 99).unwrap();
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.selection.count_active(), s);
        // sandwich: SDP lower bound <= rounded objective
        assert!(sol.objective <= a.objective + 1e-6);
        assert!(randomize_round(&sol, &model, &decomp, s, 0, 1).is_err());
    }

    #[test]
    fn degenerate_rounding_covariance_is_top_s() {
        // W = w w^T exactly: all samples coincide with w
        let model = toy_model(6, 2, 0.1, 89);
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let w = DVector::from_vec(vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3]);
        let sol = SdpSolution {
            kind: SdpKind::General,
            w_matrix: &w * w.transpose(),
            w_relaxed: w.clone(),
            z_matrix: DMatrix::identity(2, 2),
            v_matrix: None,
            objective: 0.0,
            duality_gap: 0.0,
            solver_status: "Constructed".into(),
            iterations: 0,
        };
        let rounded = randomize_round(&sol, &model, &decomp, 3, 25, 7).unwrap();
        assert_eq!(rounded.selection.active_indices(), vec![0, 2, 4]);
        let top = round_top_s(&sol, &model, &decomp, 3).unwrap();
        assert_eq!(top.selection.active_indices(), vec![0, 2, 4]);
    }

    #[test]
    fn diagonal_noise_objective_ordering() {
        // For diagonal R the weak information is exact at Boolean points.
        // The general relaxation lower-bounds the weak relaxation, which
        // lower-bounds the exhaustive Boolean optimum.
        let mut rng = crate::rng::stream(90, 0);
        let m = 7;
        let h = DMatrix::from_fn(m, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let diag = DVector::from_iterator(m, (0..m).map(|_| 0.5 + rng.random::<f64>()));
        let model = MeasurementModel::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            h,
            DMatrix::from_diagonal(&diag),
        )
        .unwrap();
        let decomp = decompose_covariance(model.noise_cov()).unwrap();
        let s = 3;
        let general = solve_sdp(&build_sdp_general(&model, &decomp, s).unwrap(), 1e-6).unwrap();
        let weak = solve_sdp(&build_sdp_weak(&model, s).unwrap(), 1e-6).unwrap();
        let exh = exhaustive_search(&model, s, ExhaustiveObjective::TraceInverse, false).unwrap();
        assert!(general.objective <= weak.objective + 1e-6);
        assert!(weak.objective <= exh.best_value + 1e-6);
        // relaxed weights stay in the unit box (implied constraints)
        for &v in general.w_relaxed.iter() {
            assert!((-1e-6..=1.0 + 1e-6).contains(&v));
        }
    }
}
