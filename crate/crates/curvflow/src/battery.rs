//! Standalone property-test battery for the structural facts behind the
//! curvature estimates: the pinch inequality of the concavity gap, the
//! second-derivative decomposition of F on symmetric tensors, and the
//! descending order of the sorted gradient. No PDE solve involved;
//! everything is seeded sampling over the cone interior.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curvfunc::{concavity_gap, Composite, Cone, CurvError};
use crate::linalg::sym_eigenvalues;

#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub comp: Composite,
    pub n: usize,
    pub samples: usize,
    /// Minimum κ_n − κ₁ of drawn samples.
    pub spread_floor: f64,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(comp: Composite, n: usize, samples: usize, spread_floor: f64, seed: u64) -> Self {
        assert!(spread_floor > 0.0, "spread floor must be positive");
        SampleSpec {
            comp,
            n,
            samples,
            spread_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavityBatteryReport {
    pub samples: usize,
    pub pass_count: usize,
    /// Worst signed gap lhs − rhs (≤ tolerance when everything passes).
    pub worst_gap: f64,
    /// Worst deviation between the eigenvalue decomposition of
    /// F^{ij,kl}η_ijη_kl and a direct second variation of F along
    /// h(s) = diag(κ) + sη.
    pub decomposition_residual: f64,
    pub seed: u64,
}

/// Draw sorted κ in the cone interior with the requested spread, staying a
/// fixed margin away from ∂Γ so that the finite-difference oracles of the
/// decomposition check resolve the (boundary-singular) derivatives of F.
fn draw_kappa(rng: &mut ChaCha8Rng, n: usize, cone: Cone, spread_floor: f64) -> Vec<f64> {
    loop {
        let mut k: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0f64)).collect();
        if cone == Cone::Gamma2 && n > 2 {
            // Γ₂ admits one mildly negative curvature in higher dimension
            if rng.gen_bool(0.3) {
                k[0] = -rng.gen_range(0.0..0.1);
            }
        }
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if k[n - 1] - k[0] < spread_floor {
            continue;
        }
        if !crate::curvfunc::admissible(&k, cone) {
            continue;
        }
        if crate::flow::margin_of(&k, cone).min(1.0) < 0.05 {
            continue;
        }
        return k;
    }
}

fn draw_eta(rng: &mut ChaCha8Rng, n: usize) -> [[f64; 4]; 4] {
    let mut eta = [[0.0f64; 4]; 4];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.gen_range(-1.0..1.0);
            eta[i][j] = v;
            eta[j][i] = v;
        }
    }
    eta
}

/// F(h) of a symmetric matrix through its eigenvalues (dense Jacobi route,
/// independent of the gradient closures).
fn f_of_matrix(comp: &Composite, m: &[[f64; 4]; 4], n: usize) -> Result<f64, CurvError> {
    let ev = sym_eigenvalues(m, n);
    let kappa: Vec<f64> = ev[..n].to_vec();
    comp.value_grad(&kappa).map(|(v, _)| v)
}

/// Seeded concavity battery: evaluates the gap inequality per sample and
/// cross-checks the second-derivative decomposition
/// Σ ∂²F/∂κ_i∂κ_j η_ii η_jj + Σ_{i≠j} (F_i−F_j)/(κ_i−κ_j) η_ij² against a
/// central second difference of s ↦ F(diag(κ) + s η).
pub fn run_concavity_battery(spec: &SampleSpec) -> Result<ConcavityBatteryReport, CurvError> {
    let n = spec.n;
    let mut pass_count = 0usize;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_decomp = 0.0f64;

    let worker = |sample_idx: u64| -> Result<(bool, f64, f64), CurvError> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(spec.seed ^ sample_idx.wrapping_mul(0x9E3779B97F4A7C15));
        let kappa = draw_kappa(&mut rng, n, spec.comp.f.cone, spec.spread_floor);
        let eta = draw_eta(&mut rng, n);
        let gap = concavity_gap(&spec.comp, &kappa, &eta)?;

        // decomposition cross-check
        let hess = spec.comp.hessian_fd(&kappa)?;
        let (_, grad) = spec.comp.value_grad(&kappa)?;
        let mut formula = 0.0;
        for i in 0..n {
            for j in 0..n {
                formula += hess[i][j] * eta[i][i] * eta[j][j];
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let dk = kappa[i] - kappa[j];
                    let q = if dk.abs() > 1e-9 {
                        (grad[i] - grad[j]) / dk
                    } else {
                        0.0
                    };
                    formula += q * eta[i][j] * eta[i][j];
                }
            }
        }
        // direct second variation along h(s) = diag(κ) + s η, with the
        // fourth-order five-point stencil: the s-expansion of eigenvalues
        // carries 1/(κ_n−κ₁)-type coefficients, so the plain three-point
        // stencil loses the target accuracy near the spread floor
        let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
        let step = 1e-4 * norm.max(1.0);
        let mut mat = [[0.0f64; 4]; 4];
        for i in 0..n {
            mat[i][i] = kappa[i];
        }
        let shift = |s: f64| -> [[f64; 4]; 4] {
            let mut m = mat;
            for i in 0..n {
                for j in 0..n {
                    m[i][j] += s * eta[i][j];
                }
            }
            m
        };
        let fp1 = f_of_matrix(&spec.comp, &shift(step), n)?;
        let fp2 = f_of_matrix(&spec.comp, &shift(2.0 * step), n)?;
        let f0 = f_of_matrix(&spec.comp, &mat, n)?;
        let fm1 = f_of_matrix(&spec.comp, &shift(-step), n)?;
        let fm2 = f_of_matrix(&spec.comp, &shift(-2.0 * step), n)?;
        let direct = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * step * step);
        let decomp_res = (direct - formula).abs();

        Ok((gap.pass, gap.lhs - gap.rhs, decomp_res))
    };

    let threads: usize = std::env::var("CURVFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1);

    if threads <= 1 {
        for s in 0..spec.samples as u64 {
            let (pass, gap, dres) = worker(s)?;
            if pass {
                pass_count += 1;
            }
            worst_gap = worst_gap.max(gap);
            worst_decomp = worst_decomp.max(dres);
        }
    } else {
        // deterministic regardless of thread count: every sample derives
        // its own stream from (seed, index)
        let results: Vec<Result<(bool, f64, f64), CurvError>> = std::thread::scope(|scope| {
            let chunk = spec.samples.div_ceil(threads);
            let mut handles = Vec::new();
            for t in 0..threads {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(spec.samples);
                let spec_ref = &spec;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(hi.saturating_sub(lo));
                    for s in lo..hi {
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            spec_ref.seed ^ (s as u64).wrapping_mul(0x9E3779B97F4A7C15),
                        );
                        let kappa = draw_kappa(
                            &mut rng,
                            spec_ref.n,
                            spec_ref.comp.f.cone,
                            spec_ref.spread_floor,
                        );
                        let eta = draw_eta(&mut rng, spec_ref.n);
                        out.push((kappa, eta));
                    }
                    out
                }));
            }
            let mut drawn = Vec::with_capacity(spec.samples);
            for h in handles {
                drawn.extend(h.join().expect("battery worker panicked"));
            }
            drawn
                .into_iter()
                .enumerate()
                .map(|(s, _)| worker(s as u64))
                .collect()
        });
        for r in results {
            let (pass, gap, dres) = r?;
            if pass {
                pass_count += 1;
            }
            worst_gap = worst_gap.max(gap);
            worst_decomp = worst_decomp.max(dres);
        }
    }

    Ok(ConcavityBatteryReport {
        samples: spec.samples,
        pass_count,
        worst_gap,
        decomposition_residual: worst_decomp,
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientOrderReport {
    pub samples: usize,
    pub pass_count: usize,
    pub worst_violation: f64,
    pub seed: u64,
}

/// Sorted-gradient battery: ascending κ must give descending gradient
/// components for a concave composite (tolerance 1e−12).
pub fn run_gradient_order_battery(spec: &SampleSpec) -> Result<GradientOrderReport, CurvError> {
    let mut pass_count = 0usize;
    let mut worst = 0.0f64;
    for s in 0..spec.samples as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ s.wrapping_mul(0x9E3779B97F4A7C15));
        let kappa = draw_kappa(&mut rng, spec.n, spec.comp.f.cone, spec.spread_floor);
        let (_, grad) = spec.comp.value_grad(&kappa)?;
        let mut ok = true;
        for w in grad.windows(2) {
            let viol = w[1] - w[0];
            worst = worst.max(viol);
            if viol > 1e-12 {
                ok = false;
            }
        }
        if ok {
            pass_count += 1;
        }
    }
    Ok(GradientOrderReport {
        samples: spec.samples,
        pass_count,
        worst_violation: worst,
        seed: spec.seed,
    })
}
