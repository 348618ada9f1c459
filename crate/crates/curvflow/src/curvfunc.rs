//! Curvature functions F(κ) with gradients, F^{ij} tensors and defining
//! cones, deformations Φ, and the concavity-structure checks behind the
//! curvature estimates.
//!
//! The flow always drives the composite Φ(F); identities that need the
//! explicit degree-1 function use H or K^{1/n}.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurvError {
    #[error("principal curvatures outside the cone of {0}")]
    OutsideCone(&'static str),
    #[error("deformation argument {0} not positive")]
    NonPositiveArgument(f64),
    #[error("curvature spread {0:e} below 1e-12, concavity gap undefined")]
    DegenerateSpread(f64),
    #[error("unknown curvature function '{0}' (expected H, K or H2)")]
    UnknownF(String),
    #[error("unknown deformation '{0}' (expected id, log, sqrt, neginv or pow:1/k)")]
    UnknownPhi(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureKind {
    /// Mean curvature H = Σ κ_i, defined on all of ℝⁿ.
    MeanH,
    /// Gauss curvature K = Π κ_i on the positive cone Γ₊.
    GaussK,
    /// Second elementary symmetric polynomial H₂ = Σ_{i<j} κ_i κ_j on Γ₂.
    ScalarH2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cone {
    All,
    GammaPlus,
    Gamma2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSpec {
    pub kind: CurvatureKind,
    pub cone: Cone,
}

impl CurvatureSpec {
    pub fn new(kind: CurvatureKind) -> Self {
        let cone = match kind {
            CurvatureKind::MeanH => Cone::All,
            CurvatureKind::GaussK => Cone::GammaPlus,
            CurvatureKind::ScalarH2 => Cone::Gamma2,
        };
        CurvatureSpec { kind, cone }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            CurvatureKind::MeanH => "H",
            CurvatureKind::GaussK => "K",
            CurvatureKind::ScalarH2 => "H2",
        }
    }

    /// Homogeneity degree d₀ in n variables.
    pub fn degree(&self, n: usize) -> u32 {
        match self.kind {
            CurvatureKind::MeanH => 1,
            CurvatureKind::GaussK => n as u32,
            CurvatureKind::ScalarH2 => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self, CurvError> {
        match s {
            "H" => Ok(CurvatureSpec::new(CurvatureKind::MeanH)),
            "K" => Ok(CurvatureSpec::new(CurvatureKind::GaussK)),
            "H2" => Ok(CurvatureSpec::new(CurvatureKind::ScalarH2)),
            other => Err(CurvError::UnknownF(other.to_string())),
        }
    }
}

/// Strict cone membership with tolerance 1e−12.
pub fn admissible(kappa: &[f64], cone: Cone) -> bool {
    const TOL: f64 = 1e-12;
    match cone {
        Cone::All => true,
        Cone::GammaPlus => kappa.iter().all(|&k| k > TOL),
        Cone::Gamma2 => {
            let h: f64 = kappa.iter().sum();
            let sq: f64 = kappa.iter().map(|k| k * k).sum();
            let h2 = 0.5 * (h * h - sq);
            h > TOL && h2 > TOL
        }
    }
}

/// Closed-form value and κ-gradient of F at sorted κ.
pub fn f_eval(spec: &CurvatureSpec, kappa: &[f64]) -> Result<(f64, Vec<f64>), CurvError> {
    if !admissible(kappa, spec.cone) {
        return Err(CurvError::OutsideCone(spec.name()));
    }
    let n = kappa.len();
    match spec.kind {
        CurvatureKind::MeanH => Ok((kappa.iter().sum(), vec![1.0; n])),
        CurvatureKind::GaussK => {
            let k: f64 = kappa.iter().product();
            Ok((k, kappa.iter().map(|&ki| k / ki).collect()))
        }
        CurvatureKind::ScalarH2 => {
            let h: f64 = kappa.iter().sum();
            let sq: f64 = kappa.iter().map(|k| k * k).sum();
            let h2 = 0.5 * (h * h - sq);
            Ok((h2, kappa.iter().map(|&ki| h - ki).collect()))
        }
    }
}

/// ∂²F/∂κ_i∂κ_j in closed form.
pub fn f_hessian(spec: &CurvatureSpec, kappa: &[f64]) -> Vec<Vec<f64>> {
    let n = kappa.len();
    let mut h = vec![vec![0.0; n]; n];
    match spec.kind {
        CurvatureKind::MeanH => {}
        CurvatureKind::GaussK => {
            let k: f64 = kappa.iter().product();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        h[i][j] = k / (kappa[i] * kappa[j]);
                    }
                }
            }
        }
        CurvatureKind::ScalarH2 => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        h[i][j] = 1.0;
                    }
                }
            }
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeformKind {
    Identity,
    Log,
    /// Φ(r) = r^{1/k}
    Power(u32),
    NegInverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformSpec {
    pub kind: DeformKind,
}

impl DeformSpec {
    pub fn new(kind: DeformKind) -> Self {
        DeformSpec { kind }
    }

    pub fn name(&self) -> String {
        match self.kind {
            DeformKind::Identity => "id".into(),
            DeformKind::Log => "log".into(),
            DeformKind::Power(2) => "sqrt".into(),
            DeformKind::Power(k) => format!("pow:1/{k}"),
            DeformKind::NegInverse => "neginv".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, CurvError> {
        let kind = match s {
            "id" => DeformKind::Identity,
            "log" => DeformKind::Log,
            "sqrt" => DeformKind::Power(2),
            "neginv" => DeformKind::NegInverse,
            other => {
                if let Some(rest) = other.strip_prefix("pow:1/") {
                    let k: u32 = rest
                        .parse()
                        .map_err(|_| CurvError::UnknownPhi(other.to_string()))?;
                    if k == 0 {
                        return Err(CurvError::UnknownPhi(other.to_string()));
                    }
                    DeformKind::Power(k)
                } else {
                    return Err(CurvError::UnknownPhi(other.to_string()));
                }
            }
        };
        Ok(DeformSpec { kind })
    }
}

/// (Φ, Φ̇, Φ̈) in closed form. All deformations except the identity require
/// a positive argument.
pub fn phi_eval(deform: &DeformSpec, r: f64) -> Result<(f64, f64, f64), CurvError> {
    if r <= 0.0 && deform.kind != DeformKind::Identity {
        return Err(CurvError::NonPositiveArgument(r));
    }
    Ok(match deform.kind {
        DeformKind::Identity => (r, 1.0, 0.0),
        DeformKind::Log => (r.ln(), 1.0 / r, -1.0 / (r * r)),
        DeformKind::Power(k) => {
            let p = 1.0 / k as f64;
            (
                r.powf(p),
                p * r.powf(p - 1.0),
                p * (p - 1.0) * r.powf(p - 2.0),
            )
        }
        DeformKind::NegInverse => {
            let r2 = r * r;
            (-1.0 / r, 1.0 / r2, -2.0 / (r2 * r))
        }
    })
}

/// The composite Φ∘F driven by the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composite {
    pub f: CurvatureSpec,
    pub phi: DeformSpec,
}

impl Composite {
    pub fn new(f: CurvatureSpec, phi: DeformSpec) -> Self {
        Composite { f, phi }
    }

    /// Whether Φ(F) is positively homogeneous of degree one in κ.
    pub fn is_degree_one(&self, n: usize) -> bool {
        let d0 = self.f.degree(n);
        match self.phi.kind {
            DeformKind::Identity => d0 == 1,
            DeformKind::Power(k) => k == d0,
            _ => false,
        }
    }

    /// G = Φ(F(κ)) and its κ-gradient G_i = Φ̇ F_i.
    pub fn value_grad(&self, kappa: &[f64]) -> Result<(f64, Vec<f64>), CurvError> {
        let (fv, fg) = f_eval(&self.f, kappa)?;
        let (phi, dphi, _) = phi_eval(&self.phi, fv)?;
        Ok((phi, fg.iter().map(|gi| dphi * gi).collect()))
    }

    /// κ-Hessian of the composite: Φ̈ F_i F_j + Φ̇ ∂²F/∂κ_i∂κ_j (closed form).
    pub fn hessian(&self, kappa: &[f64]) -> Result<Vec<Vec<f64>>, CurvError> {
        let (fv, fg) = f_eval(&self.f, kappa)?;
        let (_, dphi, ddphi) = phi_eval(&self.phi, fv)?;
        let fh = f_hessian(&self.f, kappa);
        let n = kappa.len();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                h[i][j] = ddphi * fg[i] * fg[j] + dphi * fh[i][j];
            }
        }
        Ok(h)
    }

    /// κ-Hessian by central finite differences of the gradient closure,
    /// step 1e−4·max(1, |κ|) per the calibration of the battery.
    pub fn hessian_fd(&self, kappa: &[f64]) -> Result<Vec<Vec<f64>>, CurvError> {
        let n = kappa.len();
        let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
        let step = 1e-4 * norm.max(1.0);
        let mut h = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut hi = kappa.to_vec();
            let mut lo = kappa.to_vec();
            hi[j] += step;
            lo[j] -= step;
            let (_, ghi) = self.value_grad(&hi)?;
            let (_, glo) = self.value_grad(&lo)?;
            for i in 0..n {
                h[i][j] = (ghi[i] - glo[i]) / (2.0 * step);
            }
        }
        // symmetrize
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = m;
                h[j][i] = m;
            }
        }
        Ok(h)
    }
}

/// F^{ij} = ∂F/∂h_ij in coordinate indices: diag(F_a) in the g-orthonormal
/// eigenframe of the shape operator, transformed back. Symmetric, and
/// positive definite on the cone interior.
///
/// `g`/`h` are the induced metric and second fundamental form at one node,
/// `kappa` the sorted principal curvatures. Nearly repeated eigenvalues fall
/// back to F^{ij} = F₁ g^{ij}, which is the exact limit since symmetric F
/// have equal gradient components there.
pub fn f_ij_tensor(
    spec: &CurvatureSpec,
    g: &[[f64; 2]; 2],
    h: &[[f64; 2]; 2],
    kappa: &[f64],
    n: usize,
) -> Result<[[f64; 2]; 2], CurvError> {
    let (_, grad) = f_eval(spec, kappa)?;
    let mut out = [[0.0f64; 2]; 2];
    if n == 1 {
        out[0][0] = grad[0] / g[0][0];
        return Ok(out);
    }
    let det_g = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let ginv = [
        [g[1][1] / det_g, -g[0][1] / det_g],
        [-g[1][0] / det_g, g[0][0] / det_g],
    ];
    let spread = (kappa[1] - kappa[0]).abs();
    let scale = kappa[0].abs().max(kappa[1].abs()).max(1.0);
    if spread < 1e-9 * scale {
        let fbar = 0.5 * (grad[0] + grad[1]);
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = fbar * ginv[i][j];
            }
        }
        return Ok(out);
    }
    // shape operator S = g⁻¹ h, eigenvector for κ_a from the singular rows
    let s = [
        [
            ginv[0][0] * h[0][0] + ginv[0][1] * h[1][0],
            ginv[0][0] * h[0][1] + ginv[0][1] * h[1][1],
        ],
        [
            ginv[1][0] * h[0][0] + ginv[1][1] * h[1][0],
            ginv[1][0] * h[0][1] + ginv[1][1] * h[1][1],
        ],
    ];
    for (a, &ka) in kappa.iter().enumerate().take(2) {
        // (S - κ_a) e = 0: pick the more robust row representation
        let r0 = [s[0][0] - ka, s[0][1]];
        let r1 = [s[1][0], s[1][1] - ka];
        let mut e = if r0[0].abs() + r0[1].abs() >= r1[0].abs() + r1[1].abs() {
            [-r0[1], r0[0]]
        } else {
            [-r1[1], r1[0]]
        };
        // g-normalize
        let norm2 = g[0][0] * e[0] * e[0] + 2.0 * g[0][1] * e[0] * e[1] + g[1][1] * e[1] * e[1];
        let norm = norm2.sqrt();
        e[0] /= norm;
        e[1] /= norm;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += grad[a] * e[i] * e[j];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// The load-bearing concavity inequality for a concave monotone composite:
///
/// ```text
/// Σ_{i≠j} (G_i−G_j)/(κ_i−κ_j) η_ij²  ≤  2/(κ_n−κ₁) Σ_i (G_n−G_i) η_ni²
/// ```
///
/// evaluated in an orthonormal frame (g_ij = δ_ij). Repeated interior
/// eigenvalue pairs use the limiting difference quotient computed by a
/// central finite difference with step 1e−6·|κ|.
pub fn concavity_gap(
    comp: &Composite,
    kappa: &[f64],
    eta: &[[f64; 4]; 4],
) -> Result<GapReport, CurvError> {
    let n = kappa.len();
    let spread = kappa[n - 1] - kappa[0];
    if spread < 1e-12 {
        return Err(CurvError::DegenerateSpread(spread));
    }
    let (_, grad) = comp.value_grad(kappa)?;
    let quot = |i: usize, j: usize| -> Result<f64, CurvError> {
        let dk = kappa[i] - kappa[j];
        let scale = kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if dk.abs() > 1e-12 * scale.max(1.0) {
            Ok((grad[i] - grad[j]) / dk)
        } else {
            // limit of the quotient at κ_i = κ_j: ∂(G_i - G_j)/∂(κ_i - κ_j)/2
            // by a symmetric probe of the gradient closure
            let step = 1e-6 * scale.max(1.0);
            let mut hi = kappa.to_vec();
            let mut lo = kappa.to_vec();
            hi[i] += step;
            hi[j] -= step;
            lo[i] -= step;
            lo[j] += step;
            let (_, ghi) = comp.value_grad(&hi)?;
            let (_, glo) = comp.value_grad(&lo)?;
            Ok(((ghi[i] - ghi[j]) - (glo[i] - glo[j])) / (4.0 * step))
        }
    };
    let mut lhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lhs += quot(i, j)? * eta[i][j] * eta[i][j];
            }
        }
    }
    let mut rhs = 0.0;
    for i in 0..n {
        rhs += (grad[n - 1] - grad[i]) * eta[n - 1][i] * eta[n - 1][i];
    }
    rhs *= 2.0 / spread;
    Ok(GapReport {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-10,
    })
}
