//! Linearized prescribed-curvature operator, Newton refinement of
//! stationary solutions, CMC foliation sweeps with ordering and
//! u̇-positivity certificates, and the mean-curvature time-function table.
//!
//! All linear solves are matrix-free MINRES in the dμ-weighted inner
//! product; no matrices are ever assembled.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ambient::AmbientModel;
use crate::curvfunc::{f_eval, f_ij_tensor, Composite, CurvError, CurvatureKind, CurvatureSpec};
use crate::flow::{run, FlowConfig, FlowError, PrescribedCurvature};
use crate::geometry::{graph_geometry, GeomError, GraphGeometry, GraphState};
use crate::grid::{BaseGrid, Field, GridError};

#[derive(Debug, Error)]
pub enum FoliationError {
    #[error("Newton entry residual {0:e} above the 1e-3 gate")]
    EntryResidual(f64),
    #[error("Newton stalled: no residual decrease over 3 damped tries (residual {0:e})")]
    NewtonStall(f64),
    #[error("linear solve failed: relative residual {0:e} after {1} iterations")]
    LinearSolveFail(f64, usize),
    #[error("zero-order coefficient not positive at node {node}: {value}")]
    IndefiniteCoefficient { node: usize, value: f64 },
    #[error("time-function table violates monotone ordering")]
    NonMonotone,
    #[error("tau = {tau} does not satisfy the gate tau > sqrt(n Lambda) = {bound}")]
    TauGate { tau: f64, bound: f64 },
    #[error("leaf tau = {tau}: {source}")]
    Leaf {
        tau: f64,
        #[source]
        source: Box<FoliationError>,
    },
    #[error("operation requires a Lorentzian model")]
    WrongSignature,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Curvature(#[from] CurvError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Matrix-free MINRES in the w-weighted inner product ⟨x, y⟩ = Σ x y w.
/// The operator must be self-adjoint with respect to that inner product.
/// Returns (solution, relative residual, iterations).
pub fn minres<A>(
    apply: A,
    b: &[f64],
    weights: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize)
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .zip(weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    };
    let beta1 = dot(b, b).sqrt();
    if beta1 == 0.0 {
        return (vec![0.0; n], 0.0, 0);
    }
    let mut v_prev = vec![0.0f64; n];
    let mut v: Vec<f64> = b.iter().map(|x| x / beta1).collect();
    let mut beta = 0.0f64;
    let mut w_old = vec![0.0f64; n];
    let mut w_cur = vec![0.0f64; n];
    let (mut c_old, mut s_old, mut c, mut s) = (1.0f64, 0.0f64, 1.0f64, 0.0f64);
    let mut eta = beta1;
    let mut x = vec![0.0f64; n];

    for iter in 1..=max_iter {
        let mut av = apply(&v);
        let alpha = dot(&av, &v);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_prev[i];
        }
        let beta_new = dot(&av, &av).sqrt();

        let rho1_hat = c * alpha - c_old * s * beta;
        let rho1 = (rho1_hat * rho1_hat + beta_new * beta_new).sqrt();
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        c_old = c;
        s_old = s;
        if rho1 == 0.0 {
            return (x, eta.abs() / beta1, iter);
        }
        c = rho1_hat / rho1;
        s = beta_new / rho1;

        let mut w_new = vec![0.0f64; n];
        for i in 0..n {
            w_new[i] = (v[i] - rho3 * w_old[i] - rho2 * w_cur[i]) / rho1;
        }
        let step = c * eta;
        for i in 0..n {
            x[i] += step * w_new[i];
        }
        eta *= -s;

        w_old = w_cur;
        w_cur = w_new;
        v_prev = v;
        if beta_new == 0.0 {
            return (x, eta.abs() / beta1, iter);
        }
        v = av.iter().map(|a| a / beta_new).collect();
        beta = beta_new;

        if eta.abs() <= rel_tol * beta1 {
            return (x, eta.abs() / beta1, iter);
        }
    }
    (x, eta.abs() / beta1, max_iter)
}

/// MINRES with iterative refinement: rounding stagnation in the Lanczos
/// recurrence is relative to each pass's right-hand side, so re-solving on
/// the true residual recovers the remaining digits on ill-conditioned
/// (near-kernel) systems.
pub fn minres_refined<A>(
    apply: A,
    b: &[f64],
    weights: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize)
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .zip(weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    };
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0, 0);
    }
    let mut x = vec![0.0f64; n];
    let mut total_iters = 0usize;
    for _pass in 0..3 {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= rel_tol {
            break;
        }
        let (dx, _, iters) = minres(&apply, &r, weights, rel_tol / rel.min(1.0), max_iter);
        for i in 0..n {
            x[i] += dx[i];
        }
        total_iters += iters;
    }
    let ax = apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let rel = dot(&r, &r).sqrt() / bnorm;
    (x, rel, total_iters)
}

/// Restarted GMRES (full Arnoldi within a restart cycle, Givens updates).
/// No symmetry assumption; plain ℓ² inner product. Returns (solution,
/// relative residual, total inner iterations).
pub fn gmres<A>(
    apply: A,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, f64, usize)
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let nrm = |x: &[f64]| -> f64 { x.iter().map(|v| v * v).sum::<f64>().sqrt() };
    let bnorm = nrm(b);
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0, 0);
    }
    let mut x = vec![0.0f64; n];
    let mut total = 0usize;
    let mut rel;
    'outer: loop {
        if total >= max_iter {
            let ax = apply(&x);
            let rr: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = nrm(&rr) / bnorm;
            break;
        }
        let ax = apply(&x);
        let r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = nrm(&r0);
        rel = beta / bnorm;
        if rel <= rel_tol {
            break;
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r0.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut w = apply(&v[k]);
            for i in 0..=k {
                let hik: f64 = w.iter().zip(&v[i]).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                for j in 0..n {
                    w[j] -= hik * v[i][j];
                }
            }
            let hkk = nrm(&w);
            h[k + 1][k] = hkk;
            // apply stored rotations
            for i in 0..k {
                let tmp = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if hkk == 0.0 {
                break;
            }
            v.push(w.iter().map(|a| a / hkk).collect());
            if g[k + 1].abs() / bnorm <= rel_tol {
                break;
            }
        }
        if k_used == 0 {
            break 'outer;
        }
        // back substitution
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for j in 0..n {
                x[j] += yi * v[i][j];
            }
        }
        let ax = apply(&x);
        let new_rel = nrm(&b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| bi - ai)
            .collect::<Vec<_>>())
            / bnorm;
        let stagnated = new_rel >= rel;
        rel = new_rel;
        if stagnated {
            break; // least-squares floor reached
        }
    }
    (x, rel, total)
}

/// Linearization of F − f at a graph in its normal Gaussian frame:
/// apply(φ) = −F^{ij} φ_{;ij} − σ{F^{ij}h_i^k h_kj + F^{ij}R̄(ν,x_i,ν,x_j) +
/// f_α ν^α} φ. The mean-curvature case routes the second-order part through
/// the divergence-form Laplacian, making it exactly self-adjoint under dμ.
pub struct LinearizedOperator {
    pub geom: GraphGeometry,
    grid: Arc<BaseGrid>,
    fij: Vec<[[f64; 2]; 2]>,
    pub c0: Vec<f64>,
    divergence_form: bool,
}

pub fn linearize(
    model: &AmbientModel,
    grid: &Arc<BaseGrid>,
    geom: GraphGeometry,
    spec: &CurvatureSpec,
    f: &PrescribedCurvature,
) -> Result<LinearizedOperator, FoliationError> {
    let n = geom.n;
    let n_nodes = grid.node_count();
    let sigma = model.signature();
    let mut fij = vec![[[0.0f64; 2]; 2]; n_nodes];
    let mut c0 = vec![0.0f64; n_nodes];
    let fgrad = f.grad();
    for idx in 0..n_nodes {
        let kap = &geom.kappa[idx][..n];
        let t = f_ij_tensor(spec, &geom.g[idx], &geom.h[idx], kap, n)?;
        fij[idx] = t;
        // F^{ij} h_i^k h_kj
        let mut h2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut hik_hkj = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        hik_hkj += geom.h[idx][i][k] * geom.g_inv[idx][k][l] * geom.h[idx][l][j];
                    }
                }
                h2 += t[i][j] * hik_hkj;
            }
        }
        // F^{ij} R̄(ν, x_i, ν, x_j)
        let amb = &geom.ambient[idx];
        let mut rterm = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut r = 0.0;
                for a in 0..=n {
                    for b in 0..=n {
                        for cc in 0..=n {
                            for d in 0..=n {
                                r += amb.riemann[a][b][cc][d]
                                    * geom.nu[idx][a]
                                    * geom.tangents[idx][i][b]
                                    * geom.nu[idx][cc]
                                    * geom.tangents[idx][j][d];
                            }
                        }
                    }
                }
                rterm += t[i][j] * r;
            }
        }
        let mut fnu = 0.0;
        for a in 0..=n {
            fnu += fgrad[a] * geom.nu[idx][a];
        }
        c0[idx] = sigma * (h2 + rterm + fnu);
    }
    Ok(LinearizedOperator {
        geom,
        grid: grid.clone(),
        fij,
        c0,
        divergence_form: spec.kind == CurvatureKind::MeanH,
    })
}

impl LinearizedOperator {
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let n_nodes = self.grid.node_count();
        let n = self.geom.n;
        let mut out = vec![0.0f64; n_nodes];
        if self.divergence_form {
            let lap = self
                .grid
                .laplace_beltrami(phi, &self.geom.metric_rows(), &self.geom.sqrt_det_g)
                .expect("metric validated at construction");
            for idx in 0..n_nodes {
                out[idx] = -lap[idx] - self.c0[idx] * phi[idx];
            }
        } else {
            let hess = self.geom.covariant_hessian(&self.grid, phi);
            for idx in 0..n_nodes {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.fij[idx][i][j] * hess[idx][i][j];
                    }
                }
                out[idx] = -s - self.c0[idx] * phi[idx];
            }
        }
        out
    }

    /// dμ weights for the inner product the operator is self-adjoint under.
    pub fn weights(&self) -> &[f64] {
        &self.geom.sqrt_det_g
    }
}

/// F(κ(u)) − f per node.
fn residual_field(
    model: &Arc<AmbientModel>,
    u: &Field,
    spec: &CurvatureSpec,
    f: &PrescribedCurvature,
) -> Result<(GraphGeometry, Vec<f64>, f64), FoliationError> {
    let geom = graph_geometry(model, u)?;
    let grid = u.grid();
    let n = geom.n;
    let mut res = vec![0.0f64; grid.node_count()];
    let mut sup = 0.0f64;
    for idx in 0..grid.node_count() {
        let (fv, _) = f_eval(spec, &geom.kappa[idx][..n])?;
        let fval = f.value(u.values()[idx], grid.coords(idx), geom.vtilde[idx]);
        res[idx] = fv - fval;
        sup = sup.max(res[idx].abs());
    }
    Ok((geom, res, sup))
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
}

/// Damped Jacobian-free Newton–Krylov refinement of a near-stationary
/// graph: each step solves J δ = −(F(u) − f) with restarted GMRES
/// (relative tolerance 1e−10, at most 500 inner iterations), the Jacobian
/// action applied matrix-free by directional differencing of the discrete
/// residual map. Enters only below the 1e−3 residual gate.
pub fn newton_polish(
    model: &Arc<AmbientModel>,
    u0: &Field,
    spec: &CurvatureSpec,
    f: &PrescribedCurvature,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, NewtonReport), FoliationError> {
    let grid = u0.grid().clone();
    let (_, mut res, mut sup) = residual_field(model, u0, spec, f)?;
    if sup >= 1e-3 {
        return Err(FoliationError::EntryResidual(sup));
    }
    let mut u = u0.clone();
    let mut iterations = 0usize;
    while sup > tol && iterations < max_iter {
        let u_vals = u.values().to_vec();
        let res_base = res.clone();
        let jac_action = |v: &[f64]| -> Vec<f64> {
            let vmax = v.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            if vmax == 0.0 {
                return vec![0.0; v.len()];
            }
            let eps = 1e-7 / vmax;
            let shifted: Vec<f64> = u_vals.iter().zip(v).map(|(a, b)| a + eps * b).collect();
            let field = match Field::new(grid.clone(), shifted) {
                Ok(fld) => fld,
                Err(_) => return vec![f64::NAN; v.len()],
            };
            match residual_field(model, &field, spec, f) {
                Ok((_, r2, _)) => r2
                    .iter()
                    .zip(&res_base)
                    .map(|(a, b)| (a - b) / eps)
                    .collect(),
                Err(_) => vec![f64::NAN; v.len()],
            }
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        // a least-squares direction from a stagnated solve (translation
        // near-kernels) is still a valid inexact-Newton step; the damped
        // line search below judges it
        let (delta, lin_res, iters) = gmres(jac_action, &rhs, 1e-10, 120, 500);
        if !lin_res.is_finite() || lin_res > 0.5 {
            return Err(FoliationError::LinearSolveFail(lin_res, iters));
        }
        let mut accepted = false;
        let mut damping = 1.0;
        for _try in 0..3 {
            let trial: Vec<f64> = u
                .values()
                .iter()
                .zip(&delta)
                .map(|(ui, di)| ui + damping * di)
                .collect();
            let trial_field = Field::new(grid.clone(), trial)?;
            match residual_field(model, &trial_field, spec, f) {
                Ok((_, r2, s2)) if s2 < sup => {
                    u = trial_field;
                    res = r2;
                    sup = s2;
                    accepted = true;
                    break;
                }
                _ => damping *= 0.5,
            }
        }
        if !accepted {
            return Err(FoliationError::NewtonStall(sup));
        }
        iterations += 1;
    }
    if sup > tol {
        return Err(FoliationError::NewtonStall(sup));
    }
    Ok((
        u,
        NewtonReport {
            iterations,
            final_residual: sup,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct UdotReport {
    pub min_udot: f64,
    pub equation_residual: f64,
    pub min_coefficient: f64,
}

/// Solves −Δu̇ + (|A|² + R̄_αβν^αν^β) u̇ = 1 on a Lorentzian CMC graph and
/// returns min u̇, certifying the time-function step when positive. The
/// zero-order coefficient must be positive at every node.
pub fn udot_positivity(
    model: &Arc<AmbientModel>,
    u: &Field,
) -> Result<(Vec<f64>, UdotReport), FoliationError> {
    if !model.is_lorentzian() {
        return Err(FoliationError::WrongSignature);
    }
    let geom = graph_geometry(model, u)?;
    let grid = u.grid();
    let n = geom.n;
    let n_nodes = grid.node_count();
    let mut coeff = vec![0.0f64; n_nodes];
    let mut min_coeff = f64::INFINITY;
    for idx in 0..n_nodes {
        let amb = &geom.ambient[idx];
        let mut ricci_nn = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                ricci_nn += amb.ricci[a][b] * geom.nu[idx][a] * geom.nu[idx][b];
            }
        }
        let c = geom.a2[idx] + ricci_nn;
        if c <= 0.0 {
            return Err(FoliationError::IndefiniteCoefficient {
                node: idx,
                value: c,
            });
        }
        coeff[idx] = c;
        min_coeff = min_coeff.min(c);
    }
    let rows = geom.metric_rows();
    let sq = geom.sqrt_det_g.clone();
    let apply = |phi: &[f64]| -> Vec<f64> {
        let lap = grid.laplace_beltrami(phi, &rows, &sq).expect("validated");
        (0..n_nodes).map(|i| -lap[i] + coeff[i] * phi[i]).collect()
    };
    let rhs = vec![1.0f64; n_nodes];
    let (udot, rel_res, iters) = minres_refined(apply, &rhs, &sq, 1e-12, 2000);
    if rel_res > 1e-9 {
        return Err(FoliationError::LinearSolveFail(rel_res, iters));
    }
    // discrete equation residual in the sup norm
    let lap = grid.laplace_beltrami(&udot, &rows, &sq)?;
    let mut eq_res = 0.0f64;
    let mut min_udot = f64::INFINITY;
    for i in 0..n_nodes {
        eq_res = eq_res.max((-lap[i] + coeff[i] * udot[i] - 1.0).abs());
        min_udot = min_udot.min(udot[i]);
    }
    Ok((
        udot,
        UdotReport {
            min_udot,
            equation_residual: eq_res,
            min_coefficient: min_coeff,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct LeafRecord {
    pub tau: f64,
    pub u: Vec<f64>,
    pub residual: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_udot: f64,
    pub udot_residual: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoliationResult {
    pub taus: Vec<f64>,
    pub leaves: Vec<LeafRecord>,
    pub ordering_ok: bool,
    /// Smallest pointwise gap u(τ_{k+1}) − u(τ_k) over adjacent leaves.
    pub ordering_min_gap: f64,
    pub positivity_ok: bool,
    pub lambda: f64,
}

/// Constructs CMC leaves for each τ (descending, warm-started from the
/// previous leaf or the upper barrier), polishes them with Newton, and
/// certifies strict pointwise ordering plus u̇ > 0 per leaf. Ordering or
/// positivity failures fail the result, not the run.
pub fn cmc_sweep(
    model: &Arc<AmbientModel>,
    tau_list: &[f64],
    u_top: &Field,
    flow_cfg: &FlowConfig,
    newton_tol: f64,
) -> Result<FoliationResult, FoliationError> {
    if !model.is_lorentzian() {
        return Err(FoliationError::WrongSignature);
    }
    let n = model.base_dim() as f64;
    let lambda = model.lambda_bound().unwrap_or(0.0);
    let gate = (n * lambda).sqrt();
    for &tau in tau_list {
        if tau <= gate {
            return Err(FoliationError::TauGate { tau, bound: gate });
        }
    }
    for w in tau_list.windows(2) {
        assert!(w[1] > w[0], "tau list must be strictly ascending");
    }
    let spec = CurvatureSpec::new(CurvatureKind::MeanH);
    let comp = Composite::new(
        spec,
        crate::curvfunc::DeformSpec::new(crate::curvfunc::DeformKind::Identity),
    );

    let mut leaves: Vec<LeafRecord> = Vec::with_capacity(tau_list.len());
    let mut start = u_top.clone();
    for &tau in tau_list.iter().rev() {
        let f = PrescribedCurvature::Const { value: tau };
        let leaf = (|| -> Result<LeafRecord, FoliationError> {
            let state = GraphState::new(model.clone(), start.clone(), 0.0);
            let (flow_state, _trace, _report) = run(&state, &comp, &f, flow_cfg)?;
            let (u, newton) = newton_polish(model, &flow_state.u, &spec, &f, newton_tol, 12)?;
            let (_, udot_rep) = udot_positivity(model, &u)?;
            let (min_u, max_u) = u
                .values()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            Ok(LeafRecord {
                tau,
                u: u.values().to_vec(),
                residual: newton.final_residual,
                min_u,
                max_u,
                min_udot: udot_rep.min_udot,
                udot_residual: udot_rep.equation_residual,
                newton_iterations: newton.iterations,
            })
        })()
        .map_err(|e| FoliationError::Leaf {
            tau,
            source: Box::new(e),
        })?;
        start = Field::new(u_top.grid().clone(), leaf.u.clone())?;
        leaves.push(leaf);
    }
    leaves.reverse();

    let mut ordering_ok = true;
    let mut min_gap = f64::INFINITY;
    for w in leaves.windows(2) {
        for (a, b) in w[0].u.iter().zip(&w[1].u) {
            let gap = b - a;
            min_gap = min_gap.min(gap);
            if gap <= 0.0 {
                ordering_ok = false;
            }
        }
    }
    let positivity_ok = leaves.iter().all(|l| l.min_udot > 0.0);
    Ok(FoliationResult {
        taus: tau_list.to_vec(),
        leaves,
        ordering_ok,
        ordering_min_gap: min_gap,
        positivity_ok,
        lambda,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeFunctionTable {
    /// Strict monotonicity of τ ↦ u(τ, x) at every node.
    pub verdict: bool,
    pub min_delta_u: f64,
    /// Inverse interpolation evaluated at the tabulated leaf heights of
    /// node 0: rows (x⁰, τ̂(x⁰)).
    pub inverse_at_nodes: Vec<(f64, f64)>,
    /// Midpoint probes of the monotone cubic inverse.
    pub inverse_at_midpoints: Vec<(f64, f64)>,
}

/// Monotone cubic (Fritsch–Carlson) interpolation through (x_k, y_k).
fn pchip_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    // interval slopes
    let mut d = vec![0.0f64; n - 1];
    for k in 0..n - 1 {
        d[k] = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
    }
    // monotone node slopes
    let mut m = vec![0.0f64; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] <= 0.0 {
            m[k] = 0.0;
        } else {
            let w1 = 2.0 * (xs[k + 1] - xs[k]) + (xs[k] - xs[k - 1]);
            let w2 = (xs[k + 1] - xs[k]) + 2.0 * (xs[k] - xs[k - 1]);
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let k = match xs.iter().rposition(|&xk| xk <= x) {
        Some(p) => p.min(n - 2),
        None => 0,
    };
    let h = xs[k + 1] - xs[k];
    let t = (x - xs[k]) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    h00 * ys[k] + h10 * h * m[k] + h01 * ys[k + 1] + h11 * h * m[k + 1]
}

/// Tabulates τ ↦ u(τ, x) per node, checks strict monotonicity, and emits
/// the monotone-cubic inverse x⁰ ↦ τ as the discrete time function.
pub fn time_function(result: &FoliationResult) -> Result<TimeFunctionTable, FoliationError> {
    if !result.ordering_ok {
        return Err(FoliationError::NonMonotone);
    }
    let n_nodes = result.leaves[0].u.len();
    let mut verdict = true;
    let mut min_delta = f64::INFINITY;
    for node in 0..n_nodes {
        for w in result.leaves.windows(2) {
            let du = w[1].u[node] - w[0].u[node];
            min_delta = min_delta.min(du);
            if du <= 0.0 {
                verdict = false;
            }
        }
    }
    let xs: Vec<f64> = result.leaves.iter().map(|l| l.u[0]).collect();
    let ys: Vec<f64> = result.leaves.iter().map(|l| l.tau).collect();
    let inverse_at_nodes: Vec<(f64, f64)> =
        xs.iter().map(|&x| (x, pchip_eval(&xs, &ys, x))).collect();
    let inverse_at_midpoints: Vec<(f64, f64)> = xs
        .windows(2)
        .map(|w| {
            let x = 0.5 * (w[0] + w[1]);
            (x, pchip_eval(&xs, &ys, x))
        })
        .collect();
    Ok(TimeFunctionTable {
        verdict,
        min_delta_u: min_delta,
        inverse_at_nodes,
        inverse_at_midpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::ModelKind;

    use crate::grid::{make_grid, StencilOrder, Topology};

    fn flrw(res: usize) -> (Arc<AmbientModel>, Arc<BaseGrid>) {
        let model = Arc::new(
            AmbientModel::new(ModelKind::FlrwCollapse { t_final: 2.0 }, Topology::Torus2).unwrap(),
        );
        let grid = Arc::new(make_grid(Topology::Torus2, [res, res], StencilOrder::Four).unwrap());
        (model, grid)
    }

    #[test]
    fn minres_solves_shifted_laplacian() {
        let grid = Arc::new(make_grid(Topology::Torus2, [16, 16], StencilOrder::Two).unwrap());
        let n = grid.node_count();
        let rows = vec![[1.0, 0.0, 1.0]; n];
        let sq = vec![1.0; n];
        let apply = |phi: &[f64]| -> Vec<f64> {
            let lap = grid.laplace_beltrami(phi, &rows, &sq).unwrap();
            (0..n).map(|i| -lap[i] + 3.0 * phi[i]).collect()
        };
        // manufactured solution
        let x_true: Vec<f64> = (0..n)
            .map(|i| {
                let c = grid.coords(i);
                c[0].sin() + 0.3 * (2.0 * c[1]).cos()
            })
            .collect();
        let b = apply(&x_true);
        let (x, rel, iters) = minres(apply, &b, &sq, 1e-12, 500);
        assert!(rel < 1e-10, "rel {rel:e} after {iters}");
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "err {err:e}");
    }

    #[test]
    fn minres_handles_indefinite_diagonal() {
        let weights = vec![1.0; 8];
        let diag = [3.0, -2.0, 1.0, 4.0, -1.0, 2.0, 5.0, 0.5];
        let apply = |x: &[f64]| -> Vec<f64> { x.iter().zip(diag).map(|(v, d)| v * d).collect() };
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() + 1.2).collect();
        let (x, rel, _) = minres(apply, &b, &weights, 1e-13, 100);
        assert!(rel < 1e-12);
        for i in 0..8 {
            assert!((x[i] - b[i] / diag[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn linearize_flat_slice_is_minus_laplacian() {
        let model =
            Arc::new(AmbientModel::new(ModelKind::LorentzProduct, Topology::Torus2).unwrap());
        let grid = Arc::new(make_grid(Topology::Torus2, [32, 32], StencilOrder::Four).unwrap());
        let u = Field::constant(grid.clone(), 0.1);
        let geom = graph_geometry(&model, &u).unwrap();
        let spec = CurvatureSpec::new(CurvatureKind::MeanH);
        let f = PrescribedCurvature::Const { value: 0.0 };
        let op = linearize(&model, &grid, geom, &spec, &f).unwrap();
        // constants are annihilated (h = 0, R̄ = 0, f const)
        let out = op.apply(&vec![1.0; grid.node_count()]);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        // −Δ on an eigenfunction
        let phi: Vec<f64> = (0..grid.node_count())
            .map(|i| grid.coords(i)[0].sin())
            .collect();
        let out = op.apply(&phi);
        let err = (0..grid.node_count())
            .map(|i| (out[i] - phi[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 2e-4, "err {err}");
    }

    #[test]
    fn linearize_zero_order_coefficients() {
        // flrw CMC slice u ≡ T − n/τ: coefficient −c0 = |A|² + Ric(ν,ν) = τ²/n
        let (model, grid) = flrw(16);
        let tau = 4.0;
        let u = Field::constant(grid.clone(), 2.0 - 2.0 / tau);
        let geom = graph_geometry(&model, &u).unwrap();
        let spec = CurvatureSpec::new(CurvatureKind::MeanH);
        let f = PrescribedCurvature::Const { value: tau };
        let op = linearize(&model, &grid, geom, &spec, &f).unwrap();
        for idx in 0..grid.node_count() {
            // c0 = σ{…} = −(|A|²+Ric) in the Lorentzian case
            assert!(
                (op.c0[idx] + tau * tau / 2.0).abs() < 1e-10,
                "{}",
                op.c0[idx]
            );
        }

        // euclidean sphere r₀: coefficient −(|A|² + 0) = −n/r₀²
        let model =
            Arc::new(AmbientModel::new(ModelKind::EuclideanPolar, Topology::SphereAxisym).unwrap());
        let sgrid =
            Arc::new(make_grid(Topology::SphereAxisym, [32, 1], StencilOrder::Two).unwrap());
        let r0 = 1.5;
        let u = Field::constant(sgrid.clone(), r0);
        let geom = graph_geometry(&model, &u).unwrap();
        let f = PrescribedCurvature::Const { value: 2.0 / r0 };
        let op = linearize(&model, &sgrid, geom, &spec, &f).unwrap();
        for idx in 0..sgrid.node_count() {
            assert!(
                (op.c0[idx] - 2.0 / (r0 * r0)).abs() < 1e-9,
                "c0 = {}",
                op.c0[idx]
            );
        }
    }

    #[test]
    fn linearize_self_adjoint_under_dmu() {
        use rand::Rng;
        use rand::SeedableRng;
        let (model, grid) = flrw(16);
        let u = Field::from_fn(grid.clone(), |c| 1.2 + 0.05 * c[0].sin() * c[1].cos()).unwrap();
        let geom = graph_geometry(&model, &u).unwrap();
        let spec = CurvatureSpec::new(CurvatureKind::MeanH);
        let f = PrescribedCurvature::Const { value: 3.0 };
        let op = linearize(&model, &grid, geom, &spec, &f).unwrap();
        let w = op.weights().to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let a: [f64; 3] = rng.gen();
            let phi: Vec<f64> = (0..grid.node_count())
                .map(|i| {
                    let c = grid.coords(i);
                    a[0] * c[0].sin() + a[1] * (c[0] + 2.0 * c[1]).cos() + a[2]
                })
                .collect();
            let b: [f64; 3] = rng.gen();
            let psi: Vec<f64> = (0..grid.node_count())
                .map(|i| {
                    let c = grid.coords(i);
                    b[0] * c[1].sin() + b[1] * (2.0 * c[0]).cos() + b[2]
                })
                .collect();
            let lphi = op.apply(&phi);
            let lpsi = op.apply(&psi);
            let ip1: f64 = (0..grid.node_count())
                .map(|i| lphi[i] * psi[i] * w[i])
                .sum();
            let ip2: f64 = (0..grid.node_count())
                .map(|i| phi[i] * lpsi[i] * w[i])
                .sum();
            let scale = ip1.abs().max(ip2.abs()).max(1.0);
            assert!(
                ((ip1 - ip2) / scale).abs() < 1e-9,
                "{:e}",
                (ip1 - ip2) / scale
            );
        }
    }

    #[test]
    fn linearization_matches_directional_difference() {
        // numerical embodiment of the normal-variation derivative at a
        // slice state: (F(u+εφ) − F(u))/ε vs apply(φ), error O(ε) + O(h^p)
        let model = Arc::new(
            AmbientModel::new(ModelKind::FlrwCollapse { t_final: 2.0 }, Topology::Circle).unwrap(),
        );
        let grid = Arc::new(make_grid(Topology::Circle, [256, 1], StencilOrder::Four).unwrap());
        let u0 = Field::constant(grid.clone(), 1.3);
        let spec = CurvatureSpec::new(CurvatureKind::MeanH);
        let f = PrescribedCurvature::Const { value: 0.0 };
        let phi: Vec<f64> = (0..grid.node_count())
            .map(|i| grid.coords(i)[0].sin())
            .collect();
        let geom = graph_geometry(&model, &u0).unwrap();
        let op = linearize(&model, &grid, geom, &spec, &f).unwrap();
        let lin = op.apply(&phi);
        let err_at = |eps: f64| -> f64 {
            let up: Vec<f64> = u0
                .values()
                .iter()
                .zip(&phi)
                .map(|(u, p)| u + eps * p)
                .collect();
            let (_, rp, _) =
                residual_field(&model, &Field::new(grid.clone(), up).unwrap(), &spec, &f).unwrap();
            let (_, r0, _) = residual_field(&model, &u0, &spec, &f).unwrap();
            (0..grid.node_count())
                .map(|i| ((rp[i] - r0[i]) / eps - lin[i]).abs())
                .fold(0.0f64, f64::max)
        };
        let e4 = err_at(1e-4);
        let e5 = err_at(1e-5);
        let ratio = e4 / e5;
        assert!(
            (7.0..13.0).contains(&ratio),
            "ratio {ratio} (e4 = {e4:e}, e5 = {e5:e})"
        );
    }

    #[test]
    fn newton_polish_examples() {
        // stationary input returns unchanged
        let (model, grid) = flrw(16);
        let u = Field::constant(grid.clone(), 1.5);
        let spec = CurvatureSpec::new(CurvatureKind::MeanH);
        let f = PrescribedCurvature::Const { value: 4.0 };
        let (out, rep) = newton_polish(&model, &u, &spec, &f, 1e-12, 8).unwrap();
        assert_eq!(rep.iterations, 0);
        for (a, b) in out.values().iter().zip(u.values()) {
            assert_eq!(a, b);
        }

        // euclidean sphere: perturbed start converges back to r₀ = 1.5.
        // The perturbation is the smooth translation-free l = 2 harmonic
        // (translations are curvature-neutral, so an l = 1 component would
        // shift the limit sphere instead of decaying).
        let model =
            Arc::new(AmbientModel::new(ModelKind::EuclideanPolar, Topology::SphereAxisym).unwrap());
        let sgrid =
            Arc::new(make_grid(Topology::SphereAxisym, [48, 1], StencilOrder::Two).unwrap());
        let u = Field::from_fn(sgrid.clone(), |c| {
            let ct = c[0].cos();
            1.5 + 1e-4 * 0.5 * (3.0 * ct * ct - 1.0)
        })
        .unwrap();
        let f = PrescribedCurvature::Const { value: 2.0 / 1.5 };
        let (out, rep) = newton_polish(&model, &u, &spec, &f, 1e-12, 8).unwrap();
        assert!(rep.final_residual < 1e-12);
        for v in out.values() {
            assert!((v - 1.5).abs() < 1e-10, "{v}");
        }

        // entry gate enforced
        let far = Field::constant(sgrid, 2.0);
        assert!(matches!(
            newton_polish(&model, &far, &spec, &f, 1e-12, 8),
            Err(FoliationError::EntryResidual(_))
        ));
    }

    #[test]
    fn udot_examples() {
        // flrw CMC slice with mean curvature τ: u̇ = n/τ² exactly
        let (model, grid) = flrw(16);
        let tau = 4.0;
        let u = Field::constant(grid, 2.0 - 2.0 / tau);
        let (udot, rep) = udot_positivity(&model, &u).unwrap();
        for v in &udot {
            assert!((v - 2.0 / (tau * tau)).abs() < 1e-10, "{v}");
        }
        assert!(rep.min_udot > 0.0);
        assert!(rep.equation_residual < 1e-9);

        // de-sitter CMC slice in the contracting regime: min u̇ > 0
        let model = Arc::new(AmbientModel::new(ModelKind::DeSitter, Topology::Circle).unwrap());
        let cgrid = Arc::new(make_grid(Topology::Circle, [64, 1], StencilOrder::Four).unwrap());
        let u = Field::constant(cgrid, -0.8);
        let (_, rep) = udot_positivity(&model, &u).unwrap();
        assert!(rep.min_udot > 0.0);
        // closed form: coefficient n/sinh²(−u), so u̇ = sinh²(0.8)/1
        let expect = (0.8f64).sinh().powi(2);
        assert!(
            (rep.min_udot - expect).abs() < 1e-9,
            "{} vs {expect}",
            rep.min_udot
        );

        // indefinite coefficient rejected: lorentz-product slice has
        // |A|² + Ric(ν,ν) = 0
        let model =
            Arc::new(AmbientModel::new(ModelKind::LorentzProduct, Topology::Torus2).unwrap());
        let grid = Arc::new(make_grid(Topology::Torus2, [8, 8], StencilOrder::Two).unwrap());
        let u = Field::constant(grid, 0.0);
        assert!(matches!(
            udot_positivity(&model, &u),
            Err(FoliationError::IndefiniteCoefficient { .. })
        ));
    }

    #[test]
    fn cmc_sweep_flrw() {
        let (model, grid) = flrw(16);
        let u_top = Field::constant(grid, 1.9);
        let cfg = FlowConfig {
            tol_stationary: 1e-6,
            ..FlowConfig::default()
        };
        let result = cmc_sweep(&model, &[4.0, 8.0, 16.0], &u_top, &cfg, 1e-12).unwrap();
        assert!(result.ordering_ok);
        assert!(result.positivity_ok);
        for (leaf, expect) in result.leaves.iter().zip([1.5, 1.75, 1.875]) {
            for v in &leaf.u {
                assert!((v - expect).abs() < 1e-9, "τ={}: {v} vs {expect}", leaf.tau);
            }
            assert!(leaf.min_udot > 0.0);
        }

        // gate: τ ≤ √(nΛ) rejected up front (flrw: Λ=0, τ must be > 0)
        let (model2, grid2) = flrw(16);
        let u_top2 = Field::constant(grid2, 1.9);
        assert!(matches!(
            cmc_sweep(&model2, &[0.0, 4.0], &u_top2, &cfg, 1e-12),
            Err(FoliationError::TauGate { .. })
        ));
    }

    #[test]
    fn de_sitter_gate() {
        // de-sitter declares Λ = n: τ ≤ √(nΛ) = n is rejected
        let model = Arc::new(AmbientModel::new(ModelKind::DeSitter, Topology::Circle).unwrap());
        let grid = Arc::new(make_grid(Topology::Circle, [32, 1], StencilOrder::Four).unwrap());
        let u_top = Field::constant(grid, -0.2);
        let cfg = FlowConfig::default();
        assert!(matches!(
            cmc_sweep(&model, &[0.9, 1.5], &u_top, &cfg, 1e-12),
            Err(FoliationError::TauGate { .. })
        ));
    }

    #[test]
    fn time_function_recovers_flrw_closed_form() {
        let (model, grid) = flrw(16);
        let u_top = Field::constant(grid, 1.9);
        let cfg = FlowConfig {
            tol_stationary: 1e-6,
            ..FlowConfig::default()
        };
        let result = cmc_sweep(&model, &[4.0, 8.0, 16.0], &u_top, &cfg, 1e-12).unwrap();
        let table = time_function(&result).unwrap();
        assert!(table.verdict);
        // τ(x⁰) = n/(T−x⁰) at the tabulated leaf heights
        for &(x0, tau_hat) in &table.inverse_at_nodes {
            let expect = 2.0 / (2.0 - x0);
            assert!((tau_hat - expect).abs() < 1e-4, "{tau_hat} vs {expect}");
        }
    }

    #[test]
    fn time_function_two_leaves_linear() {
        let xs = [1.0, 2.0];
        let ys = [3.0, 5.0];
        let mid = pchip_eval(&xs, &ys, 1.5);
        assert!((mid - 4.0).abs() < 1e-14);
    }
}
