//! Barrier interior-point solver for the Hermitian-variable programs.
//!
//! Hermitian variables are realized over the reals as packed parameter
//! vectors (diagonal entries, then real/imaginary parts of each
//! upper-triangle entry), so a dim-n variable contributes n² real
//! parameters. Partial-transpose cones act on parameters as a signed
//! permutation. Classic path following: minimize
//! `t·cᵀx − Σ log det S_k(x)` subject to `Ax = b` by Newton's method,
//! multiplying `t` by `mu` until `ν/t` reaches the gap tolerance
//! (ν = total cone dimension).

use super::{check_residuals, ConeSpec, SdpError, SdpProblem, SdpSolution, Sense, SolveOptions};
use crate::linalg::{ComplexMatrix, HermitianOperator};
use num_complex::Complex64;

// ---------------------------------------------------------------------------
// Parameter packing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Layout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0usize;
        for &d in dims {
            offsets.push(total);
            total += d * d;
        }
        Self {
            dims: dims.to_vec(),
            offsets,
            total,
        }
    }
}

/// Index of the (re) slot of upper-triangle entry `(i, j)`, `i < j`,
/// within a dim-`n` parameter block; the (im) slot follows it.
fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    n + 2 * (i * n - i * (i + 1) / 2 + (j - i - 1))
}

fn pack_into(h: &HermitianOperator, out: &mut [f64]) {
    let n = h.dim();
    let m = h.matrix();
    for i in 0..n {
        out[i] = m.get(i, i).re;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = m.get(i, j);
            let slot = pair_slot(n, i, j);
            out[slot] = z.re;
            out[slot + 1] = z.im;
        }
    }
}

fn unpack_from(params: &[f64], n: usize) -> HermitianOperator {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, Complex64::new(params[i], 0.0));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let slot = pair_slot(n, i, j);
            let z = Complex64::new(params[slot], params[slot + 1]);
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    HermitianOperator::new(m).expect("packed parameters produce Hermitian matrices")
}

/// `v[p] = Tr[G E_p]`: diagonal entries, then `2 Re G_ij, 2 Im G_ij`.
/// With this convention `Tr[P G] = Σ_p x_p v_p` for packed `x`.
fn extract_into(g: &ComplexMatrix, out: &mut [f64]) {
    let n = g.rows();
    for i in 0..n {
        out[i] = g.get(i, i).re;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = g.get(i, j);
            let slot = pair_slot(n, i, j);
            out[slot] = 2.0 * z.re;
            out[slot + 1] = 2.0 * z.im;
        }
    }
}

// ---------------------------------------------------------------------------
// Cone parameter maps
// ---------------------------------------------------------------------------

/// Signed permutation from a variable's parameters to a cone matrix's
/// parameters: `S_param[to[p]] = sign[p] · x_param[p]`.
struct ConeMap {
    var: usize,
    dim: usize,
    to: Vec<usize>,
    sign: Vec<f64>,
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Destination of matrix entry `(row, col)` under a partial transpose,
/// mirroring `linalg::partial_transpose`.
fn pt_entry_map(
    dims: &[usize],
    strides: &[usize],
    transposed: &[usize],
    row: usize,
    col: usize,
) -> (usize, usize) {
    let mut ri = vec![0usize; dims.len()];
    let mut ci = vec![0usize; dims.len()];
    let (mut r, mut c) = (row, col);
    for k in 0..dims.len() {
        ri[k] = r / strides[k];
        r %= strides[k];
        ci[k] = c / strides[k];
        c %= strides[k];
    }
    let mut r2 = 0usize;
    let mut c2 = 0usize;
    for k in 0..dims.len() {
        if transposed.contains(&k) {
            r2 += ci[k] * strides[k];
            c2 += ri[k] * strides[k];
        } else {
            r2 += ri[k] * strides[k];
            c2 += ci[k] * strides[k];
        }
    }
    (r2, c2)
}

fn cone_map(spec: &ConeSpec, dim: usize) -> Result<ConeMap, SdpError> {
    let nparams = dim * dim;
    let mut to = vec![0usize; nparams];
    let mut sign = vec![1.0f64; nparams];
    match &spec.transform {
        None => {
            for (p, slot) in to.iter_mut().enumerate() {
                *slot = p;
            }
        }
        Some((shape, transposed)) => {
            if shape.total_dim() != dim {
                return Err(SdpError::BadProblem(format!(
                    "cone '{}' shape does not factor dimension {dim}",
                    spec.label
                )));
            }
            let dims = shape.dims().to_vec();
            let strides = strides_of(&dims);
            for i in 0..dim {
                let (r2, c2) = pt_entry_map(&dims, &strides, transposed, i, i);
                debug_assert_eq!(r2, c2);
                to[i] = r2;
            }
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let (r2, c2) = pt_entry_map(&dims, &strides, transposed, i, j);
                    let src = pair_slot(dim, i, j);
                    if r2 < c2 {
                        let dst = pair_slot(dim, r2, c2);
                        to[src] = dst;
                        to[src + 1] = dst + 1;
                    } else {
                        let dst = pair_slot(dim, c2, r2);
                        to[src] = dst;
                        to[src + 1] = dst + 1;
                        sign[src + 1] = -1.0;
                    }
                }
            }
        }
    }
    Ok(ConeMap {
        var: spec.var,
        dim,
        to,
        sign,
    })
}

// ---------------------------------------------------------------------------
// Complex Cholesky
// ---------------------------------------------------------------------------

/// Lower-triangular `L` with `A = L L†`, or `None` if not positive
/// definite.
fn cholesky_complex(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j).re;
        for k in 0..j {
            d -= l.get(j, k).norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l.set(j, j, Complex64::new(djj, 0.0));
        for i in (j + 1)..n {
            let mut z = a.get(i, j);
            for k in 0..j {
                z -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, z / djj);
        }
    }
    Some(l)
}

fn log_det_from_cholesky(l: &ComplexMatrix) -> f64 {
    (0..l.rows()).map(|i| 2.0 * l.get(i, i).re.ln()).sum()
}

/// `A⁻¹ = L⁻† L⁻¹` from the Cholesky factor.
fn inverse_from_cholesky(l: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows();
    // Forward-solve L Y = I; Y is lower triangular.
    let mut y = ComplexMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut z = if i == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for k in col..i {
                z -= l.get(i, k) * y.get(k, col);
            }
            y.set(i, col, z / l.get(i, i));
        }
    }
    // W = Y† Y.
    let mut w = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut z = Complex64::new(0.0, 0.0);
            for k in j.max(i)..n {
                z += y.get(k, i).conj() * y.get(k, j);
            }
            w.set(i, j, z);
            if i != j {
                w.set(j, i, z.conj());
            }
        }
    }
    w
}

// ---------------------------------------------------------------------------
// Dense real helpers
// ---------------------------------------------------------------------------

/// Lower-triangular real Cholesky, in place on a row-major buffer.
fn cholesky_real(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let djj = d.sqrt();
        a[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / djj;
        }
    }
    true
}

/// Solve `L L^T x = b` with the factored buffer.
fn cholesky_solve_real(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

// ---------------------------------------------------------------------------
// Equality assembly and row reduction
// ---------------------------------------------------------------------------

fn functional_vector(
    problem: &SdpProblem,
    layout: &Layout,
    coeffs: &[HermitianOperator],
) -> Vec<f64> {
    let mut v = vec![0.0; layout.total];
    for (var, g) in coeffs.iter().enumerate() {
        let off = layout.offsets[var];
        let n = problem.var_dims[var];
        extract_into(g.matrix(), &mut v[off..off + n * n]);
    }
    v
}

/// Keep a maximal independent subset of rows (modified Gram-Schmidt).
fn independent_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let orig_norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = row.clone();
        for b in &basis {
            let dot: f64 = r.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            for (x, y) in r.iter_mut().zip(b.iter()) {
                *x -= dot * y;
            }
        }
        let res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res_norm > 1e-10 * (1.0 + orig_norm) {
            for x in r.iter_mut() {
                *x /= res_norm;
            }
            basis.push(r);
            kept.push(idx);
        }
    }
    kept
}

// ---------------------------------------------------------------------------
// Barrier state
// ---------------------------------------------------------------------------

struct ConeState {
    inverse: ComplexMatrix,
}

struct Workspace {
    layout: Layout,
    maps: Vec<ConeMap>,
}

impl Workspace {
    fn cone_matrix(&self, map: &ConeMap, x: &[f64]) -> ComplexMatrix {
        let off = self.layout.offsets[map.var];
        let n = map.dim;
        let nparams = n * n;
        let mut params = vec![0.0; nparams];
        for p in 0..nparams {
            params[map.to[p]] = map.sign[p] * x[off + p];
        }
        unpack_from(&params, n).matrix().clone()
    }

    /// Cholesky every cone; `None` if any is not positive definite.
    fn factor_cones(&self, x: &[f64]) -> Option<Vec<ConeState>> {
        let mut out = Vec::with_capacity(self.maps.len());
        for map in &self.maps {
            let s = self.cone_matrix(map, x);
            let l = cholesky_complex(&s)?;
            out.push(ConeState {
                inverse: inverse_from_cholesky(&l),
            });
        }
        Some(out)
    }

    fn barrier_value(&self, x: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for map in &self.maps {
            let s = self.cone_matrix(map, x);
            let l = cholesky_complex(&s)?;
            total -= log_det_from_cholesky(&l);
        }
        Some(total)
    }

    /// Gradient of `-Σ log det` and per-variable Hessian blocks.
    fn barrier_derivatives(&self, states: &[ConeState]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut grad = vec![0.0; self.layout.total];
        let mut hess: Vec<Vec<f64>> = self
            .layout
            .dims
            .iter()
            .map(|&n| vec![0.0; n * n * n * n])
            .collect();
        let mut local_grad_buf = Vec::new();
        let mut local_row_buf = Vec::new();
        for (map, state) in self.maps.iter().zip(states.iter()) {
            let n = map.dim;
            let nparams = n * n;
            let w = &state.inverse;
            local_grad_buf.resize(nparams, 0.0);
            extract_into(w, &mut local_grad_buf);
            let off = self.layout.offsets[map.var];
            for p in 0..nparams {
                grad[off + p] -= map.sign[p] * local_grad_buf[map.to[p]];
            }

            // Columns of W for the rank-structured second derivatives.
            let cols: Vec<Vec<Complex64>> = (0..n)
                .map(|i| (0..n).map(|r| w.get(r, i)).collect())
                .collect();
            let hmat = &mut hess[map.var];
            local_row_buf.resize(nparams, 0.0);
            let mut g = ComplexMatrix::zeros(n, n);
            for q1 in 0..nparams {
                // Build G = W E_{q1} W from one or two column outer
                // products.
                if q1 < n {
                    let u = &cols[q1];
                    for r in 0..n {
                        for c in 0..n {
                            g.set(r, c, u[r] * u[c].conj());
                        }
                    }
                } else {
                    let pair_index = (q1 - n) / 2;
                    let is_im = (q1 - n) % 2 == 1;
                    let (i, j) = pair_from_slot(n, pair_index);
                    let (ui, uj) = (&cols[i], &cols[j]);
                    for r in 0..n {
                        for c in 0..n {
                            let z = ui[r] * uj[c].conj();
                            let zt = uj[r] * ui[c].conj();
                            let val = if is_im {
                                Complex64::new(0.0, 1.0) * (z - zt)
                            } else {
                                z + zt
                            };
                            g.set(r, c, val);
                        }
                    }
                }
                extract_into(&g, &mut local_row_buf);
                // Scatter H_local[q1][q2] into var coordinates.
                let p1 = map_from(map, q1);
                for q2 in 0..nparams {
                    let p2 = map_from(map, q2);
                    hmat[p1.0 * nparams + p2.0] +=
                        p1.1 * p2.1 * local_row_buf[q2];
                }
            }
        }
        (grad, hess)
    }
}

/// Inverse lookup of the signed permutation: cone param `q` comes from var
/// param `p` with sign `s`.
fn map_from(map: &ConeMap, q: usize) -> (usize, f64) {
    // `to` is a bijection; invert lazily. For the identity map this is
    // free; for PT maps the permutation is an involution on slots, so a
    // linear scan is avoided by applying `to` again.
    let p = map.to[q];
    debug_assert_eq!(map.to[p], q, "partial transpose maps are involutions");
    (p, map.sign[p])
}

fn pair_from_slot(n: usize, pair_index: usize) -> (usize, usize) {
    // Inverse of pair_slot's pair enumeration.
    let mut i = 0usize;
    let mut remaining = pair_index;
    loop {
        let row_len = n - i - 1;
        if remaining < row_len {
            return (i, i + 1 + remaining);
        }
        remaining -= row_len;
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

/// Barrier path-following solve. Deterministic given options; errors on
/// iteration-cap overrun or numerical breakdown with diagnostics.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    let layout = Layout::new(&problem.var_dims);
    let mut maps = Vec::new();
    for cone in &problem.cones {
        let dim = problem.var_dims[cone.var];
        maps.push(cone_map(cone, dim)?);
    }
    let ws = Workspace {
        layout: layout.clone(),
        maps,
    };

    // Starting point.
    if problem.interior_point.len() != problem.var_dims.len() {
        return Err(SdpError::BadProblem(
            "interior point must provide one operator per variable".into(),
        ));
    }
    let mut x = vec![0.0; layout.total];
    for (v, h) in problem.interior_point.iter().enumerate() {
        if h.dim() != problem.var_dims[v] {
            return Err(SdpError::BadProblem(format!(
                "interior point variable {v} has dim {} (expected {})",
                h.dim(),
                problem.var_dims[v]
            )));
        }
        let off = layout.offsets[v];
        let n = problem.var_dims[v];
        pack_into(h, &mut x[off..off + n * n]);
    }
    if ws.factor_cones(&x).is_none() {
        return Err(SdpError::BadProblem(
            "interior point is not strictly inside the cones".into(),
        ));
    }
    let start_res = check_residuals(problem, &problem.interior_point);
    if start_res.max_equality_violation > 1e-7 {
        return Err(SdpError::BadProblem(format!(
            "interior point violates equalities by {:.3e}",
            start_res.max_equality_violation
        )));
    }

    // Equalities, reduced to an independent subset (consistency of the
    // dropped rows is witnessed by the feasible starting point).
    let rows: Vec<Vec<f64>> = problem
        .equalities
        .iter()
        .map(|c| functional_vector(problem, &layout, &c.functional.coeffs))
        .collect();
    let kept = independent_rows(&rows);
    let a_mat: Vec<Vec<f64>> = kept.iter().map(|&i| rows[i].clone()).collect();
    let b_vec: Vec<f64> = kept.iter().map(|&i| problem.equalities[i].target).collect();
    let m = a_mat.len();

    // Internal objective: always minimized.
    let mut c_vec = functional_vector(problem, &layout, &problem.objective.coeffs);
    if problem.sense == Sense::Maximize {
        for v in c_vec.iter_mut() {
            *v = -*v;
        }
    }

    let nu: f64 = problem
        .cones
        .iter()
        .map(|cone| problem.var_dims[cone.var] as f64)
        .sum();
    let mut t = opts.t_init;
    let t_end = nu / opts.gap_tol;
    let mut newton_iterations = 0usize;
    // Barrier stage of the last tightly centered iterate; stages that end
    // through a floating-point stall don't count toward the gap estimate.
    let mut last_tight_t = f64::NAN;

    loop {
        // Center at the current barrier parameter.
        let mut centered = false;
        let mut tight = false;
        for inner in 0..128 {
            if newton_iterations >= opts.max_newton_iters {
                let vars = unpack_all(&layout, &x);
                let residuals = check_residuals(problem, &vars);
                return Err(SdpError::IterationCap {
                    objective: problem.objective_value(&vars),
                    violation: residuals.max_equality_violation,
                });
            }
            let states = ws.factor_cones(&x).ok_or_else(|| {
                SdpError::NumericalBreakdown("iterate left the cone interior".into())
            })?;
            let (bar_grad, hess) = ws.barrier_derivatives(&states);
            let mut grad: Vec<f64> = bar_grad;
            for (g, &c) in grad.iter_mut().zip(c_vec.iter()) {
                *g += t * c;
            }

            // Equality residual (kept rows).
            let mut r = vec![0.0; m];
            for (row, (a, &b)) in a_mat.iter().zip(b_vec.iter()).enumerate() {
                let ax: f64 = a.iter().zip(x.iter()).map(|(ai, xi)| ai * xi).sum();
                r[row] = b - ax;
            }

            let dx = kkt_solve(&layout, &hess, &grad, &a_mat, &r)?;
            // Newton decrement from the Hessian quadratic form.
            let mut dec = 0.0;
            for (v, &n) in layout.dims.iter().enumerate() {
                let off = layout.offsets[v];
                let np = n * n;
                let h = &hess[v];
                for i in 0..np {
                    let mut acc = 0.0;
                    for j in 0..np {
                        acc += h[i * np + j] * dx[off + j];
                    }
                    dec += dx[off + i] * acc;
                }
            }
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dec * 0.5 < 1e-9 && r_norm < 1e-9 {
                centered = true;
                tight = true;
                break;
            }

            // Backtracking line search staying inside the cones. The
            // merit decrease is evaluated as a difference of small
            // quantities (t·step·cᵀdx plus the barrier change) to avoid
            // cancellation against the large absolute merit at high t.
            let slope: f64 = grad.iter().zip(dx.iter()).map(|(g, d)| g * d).sum();
            let bar0 = ws.barrier_value(&x).unwrap();
            let c_dx = dot(&c_vec, &dx);
            let mut step = 1.0f64;
            let mut accepted = false;
            for _ in 0..70 {
                let x_try: Vec<f64> = x
                    .iter()
                    .zip(dx.iter())
                    .map(|(xi, di)| xi + step * di)
                    .collect();
                if let Some(bar) = ws.barrier_value(&x_try) {
                    let delta_phi = t * step * c_dx + (bar - bar0);
                    if delta_phi <= 0.01 * step * slope || step < 1e-12 {
                        x = x_try;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            newton_iterations += 1;
            // Progress exhausted at floating-point resolution: the
            // iterate is as centered as f64 allows. A decrement below
            // 1e-4 (λ ≈ 0.01) already keeps the duality-gap bound within
            // a fraction of a percent of ν/t.
            if accepted && step < 1e-11 {
                centered = true;
                break;
            }
            if !accepted {
                if dec < 1e-4 {
                    centered = true;
                    break;
                }
                return Err(SdpError::NumericalBreakdown(format!(
                    "line search stalled at t = {t:.3e} (decrement {dec:.3e})"
                )));
            }
            if inner >= 24 && dec < 1e-4 {
                centered = true;
                break;
            }
        }
        if !centered {
            return Err(SdpError::NumericalBreakdown(format!(
                "centering failed to converge at t = {t:.3e}"
            )));
        }
        if tight {
            last_tight_t = t;
        }
        if nu / t <= opts.gap_tol {
            break;
        }
        t = (t * opts.mu).min(t_end);
    }
    let duality_gap_estimate = if last_tight_t.is_finite() {
        nu / last_tight_t
    } else {
        f64::INFINITY
    };

    // Polish equality feasibility: project back onto the affine subspace
    // (Newton-solve noise at large t lets tiny violations creep in),
    // damping the correction if it would leave the cone interior.
    if m > 0 {
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] = dot(&a_mat[i], &a_mat[j]);
            }
        }
        if cholesky_real(&mut gram, m) {
            for _ in 0..20 {
                let mut r = vec![0.0; m];
                let mut worst = 0.0f64;
                for (row, (a, &b)) in a_mat.iter().zip(b_vec.iter()).enumerate() {
                    r[row] = b - dot(a, &x);
                    worst = worst.max(r[row].abs());
                }
                if worst <= opts.feas_tol * 0.01 {
                    break;
                }
                cholesky_solve_real(&gram, m, &mut r);
                let mut delta = vec![0.0; layout.total];
                for (i, a) in a_mat.iter().enumerate() {
                    for (d, &av) in delta.iter_mut().zip(a.iter()) {
                        *d += r[i] * av;
                    }
                }
                let mut scale = 1.0f64;
                let mut applied = false;
                for _ in 0..30 {
                    let x_try: Vec<f64> = x
                        .iter()
                        .zip(delta.iter())
                        .map(|(xi, di)| xi + scale * di)
                        .collect();
                    if ws.factor_cones(&x_try).is_some() {
                        x = x_try;
                        applied = true;
                        break;
                    }
                    scale *= 0.5;
                }
                if !applied {
                    break;
                }
            }
        }
    }

    let vars = unpack_all(&layout, &x);
    let residuals = check_residuals(problem, &vars);
    if residuals.max_equality_violation > opts.feas_tol {
        return Err(SdpError::NumericalBreakdown(format!(
            "final equality violation {:.3e} exceeds feas_tol {:.3e}",
            residuals.max_equality_violation, opts.feas_tol
        )));
    }
    Ok(SdpSolution {
        objective: problem.objective_value(&vars),
        vars,
        residuals,
        newton_iterations,
        duality_gap_estimate,
    })
}

fn unpack_all(layout: &Layout, x: &[f64]) -> Vec<HermitianOperator> {
    layout
        .dims
        .iter()
        .enumerate()
        .map(|(v, &n)| {
            let off = layout.offsets[v];
            unpack_from(&x[off..off + n * n], n)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve the equality-constrained Newton system
/// `[[H, Aᵀ],[A, 0]] [dx, y] = [-grad, r]` via per-variable Cholesky of H
/// and a Schur complement on the multipliers.
fn kkt_solve(
    layout: &Layout,
    hess: &[Vec<f64>],
    grad: &[f64],
    a_mat: &[Vec<f64>],
    r: &[f64],
) -> Result<Vec<f64>, SdpError> {
    let m = a_mat.len();
    // Factor each Hessian block, with escalating jitter on breakdown.
    let mut factors: Vec<Vec<f64>> = Vec::with_capacity(hess.len());
    for (v, h) in hess.iter().enumerate() {
        let np = layout.dims[v] * layout.dims[v];
        let mut jitter = 0.0f64;
        let scale = (0..np).map(|i| h[i * np + i]).sum::<f64>() / np as f64;
        let factored = loop {
            let mut buf = h.clone();
            if jitter > 0.0 {
                for i in 0..np {
                    buf[i * np + i] += jitter;
                }
            }
            if cholesky_real(&mut buf, np) {
                break Some(buf);
            }
            jitter = if jitter == 0.0 {
                scale.max(1.0) * 1e-13
            } else {
                jitter * 100.0
            };
            if jitter > scale.max(1.0) * 1e-4 {
                break None;
            }
        };
        factors.push(factored.ok_or_else(|| {
            SdpError::NumericalBreakdown("barrier Hessian lost positive definiteness".into())
        })?);
    }

    let solve_h = |rhs: &[f64]| -> Vec<f64> {
        let mut out = rhs.to_vec();
        for (v, &n) in layout.dims.iter().enumerate() {
            let np = n * n;
            let off = layout.offsets[v];
            let mut seg = out[off..off + np].to_vec();
            cholesky_solve_real(&factors[v], np, &mut seg);
            out[off..off + np].copy_from_slice(&seg);
        }
        out
    };

    let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
    let g1 = solve_h(&neg_grad);
    if m == 0 {
        return Ok(g1);
    }

    // Schur complement A H⁻¹ Aᵀ.
    let z: Vec<Vec<f64>> = a_mat.iter().map(|row| solve_h(row)).collect();
    let mut schur = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            schur[i * m + j] = dot(&a_mat[i], &z[j]);
        }
    }
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        rhs[i] = dot(&a_mat[i], &g1) - r[i];
    }
    if !cholesky_real(&mut schur, m) {
        return Err(SdpError::NumericalBreakdown(
            "multiplier system is singular (dependent equalities?)".into(),
        ));
    }
    cholesky_solve_real(&schur, m, &mut rhs);

    let mut dx = g1;
    for (i, zi) in z.iter().enumerate() {
        for (d, zv) in dx.iter_mut().zip(zi.iter()) {
            *d -= rhs[i] * zv;
        }
    }

    // Iterative refinement of the equality block: ill-conditioned barrier
    // Hessians near the boundary let `A dx = r` drift, which would
    // accumulate as equality violations of the iterates.
    for _ in 0..3 {
        let mut res = vec![0.0; m];
        let mut worst = 0.0f64;
        for i in 0..m {
            res[i] = r[i] - dot(&a_mat[i], &dx);
            worst = worst.max(res[i].abs());
        }
        if worst < 1e-14 {
            break;
        }
        for v in res.iter_mut() {
            *v = -*v;
        }
        cholesky_solve_real(&schur, m, &mut res);
        for (i, zi) in z.iter().enumerate() {
            for (d, zv) in dx.iter_mut().zip(zi.iter()) {
                *d -= res[i] * zv;
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    /// minimize Tr X s.t. Re X₀₁ = 1, Im X₀₁ = 0, X ⪰ 0 (2×2 Hermitian).
    /// Optimum 2 at X = [[1,1],[1,1]].
    fn toy_problem() -> SdpProblem {
        let mk = |entries: Vec<Complex64>| {
            HermitianOperator::new(ComplexMatrix::new(2, 2, entries).unwrap()).unwrap()
        };
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let objective = LinearFunctional {
            coeffs: vec![mk(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])],
        };
        let re01 = mk(vec![c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        let im01 = mk(vec![c(0.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(0.0, 0.0)]);
        let interior = mk(vec![c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        SdpProblem {
            var_dims: vec![2],
            cones: vec![ConeSpec {
                var: 0,
                transform: None,
                label: "psd".into(),
            }],
            equalities: vec![
                LinearConstraint {
                    functional: LinearFunctional {
                        coeffs: vec![re01],
                    },
                    target: 1.0,
                    label: "re01".into(),
                },
                LinearConstraint {
                    functional: LinearFunctional {
                        coeffs: vec![im01],
                    },
                    target: 0.0,
                    label: "im01".into(),
                },
            ],
            objective,
            sense: Sense::Minimize,
            interior_point: vec![interior],
        }
    }

    #[test]
    fn toy_program_reaches_known_optimum() {
        let problem = toy_problem();
        let opts = SolveOptions {
            gap_tol: 1e-9,
            ..Default::default()
        };
        let sol = solve(&problem, &opts).unwrap();
        assert!(
            (sol.objective - 2.0).abs() < 1e-8,
            "objective {}",
            sol.objective
        );
        assert!(sol.residuals.max_equality_violation < 1e-10);
        assert!(sol.residuals.min_cone_eigenvalue > -1e-12);
        let x = &sol.vars[0];
        assert!((x.matrix().get(0, 0).re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn toy_program_maximize_direction() {
        // maximize -(trace) has optimum -2 at the same point.
        let mut problem = toy_problem();
        problem.sense = Sense::Maximize;
        problem.objective = LinearFunctional {
            coeffs: vec![problem.objective.coeffs[0].scale(-1.0)],
        };
        let sol = solve(&problem, &SolveOptions::default()).unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-5, "{}", sol.objective);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let problem = toy_problem();
        let opts = SolveOptions {
            max_newton_iters: 2,
            ..Default::default()
        };
        match solve(&problem, &opts) {
            Err(SdpError::IterationCap { objective, .. }) => {
                assert!(objective.is_finite());
            }
            other => panic!("expected iteration cap, got {other:?}"),
        }
    }

    #[test]
    fn pair_slot_roundtrip() {
        let n = 7;
        let mut seen = std::collections::HashSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let slot = pair_slot(n, i, j);
                assert!(slot >= n && slot < n * n);
                assert!(seen.insert(slot));
                let pair_index = (slot - n) / 2;
                assert_eq!(pair_from_slot(n, pair_index), (i, j));
            }
        }
    }

    #[test]
    fn pack_unpack_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = ComplexMatrix::from_fn(5, 5, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = HermitianOperator::new((&m + &m.adjoint()).scale(Complex64::new(0.5, 0.0))).unwrap();
        let mut buf = vec![0.0; 25];
        pack_into(&h, &mut buf);
        let back = unpack_from(&buf, 5);
        assert!(back.matrix().approx_eq(h.matrix(), 0.0));
    }

    #[test]
    fn cone_map_matches_linalg_partial_transpose() {
        use crate::linalg::partial_transpose;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = ComplexMatrix::from_fn(16, 16, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = HermitianOperator::new((&m + &m.adjoint()).scale(Complex64::new(0.5, 0.0))).unwrap();
        let shape = SubsystemShape::new(vec![2, 2, 2, 2]);
        let spec = ConeSpec {
            var: 0,
            transform: Some((shape.clone(), vec![1, 3])),
            label: "ppt".into(),
        };
        let map = cone_map(&spec, 16).unwrap();
        let ws = Workspace {
            layout: Layout::new(&[16]),
            maps: vec![],
        };
        let mut x = vec![0.0; 256];
        pack_into(&h, &mut x);
        let via_map = ws.cone_matrix(&map, &x);
        let direct = partial_transpose(&h, &shape, &[1, 3]).unwrap();
        assert!(via_map.approx_eq(direct.matrix(), 0.0));
    }
}
