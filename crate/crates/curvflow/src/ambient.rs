//! Catalog of analytic semi-Riemannian warped-product model manifolds with
//! exact tensor closures, plus region-level geometric certificates.
//!
//! Every model in the catalog is of the form
//!
//! ```text
//! ds² = σ (dx⁰)² + w(x⁰)² σ̂_ij(x) dx^i dx^j,        σ = ±1,
//! ```
//!
//! i.e. the conformal factor ψ of the general Gaussian form
//! e^{2ψ}{σ(dx⁰)² + σ_ij dx^i dx^j} vanishes identically and the slice
//! metric splits as σ_ij(x⁰, x) = w(x⁰)² σ̂_ij(x) over a base of constant
//! curvature K̂. All tensors below are hand-derived closed forms, never
//! numerical derivatives of the metric; a finite-difference cross-check
//! lives in the test module.
//!
//! Derivation (Levi-Civita, indices 0 = x⁰, latin spatial):
//!   Γ⁰_ij = −σ w w′ σ̂_ij        Γ^i_{0j} = (w′/w) δ^i_j      Γ^i_jk = Γ̂^i_jk
//! with all other components zero, and (fully covariant Riemann)
//!   R_{0i0j} = −w w″ σ̂_ij
//!   R_{ijkl} = w² (K̂ − σ w′²)(σ̂_ik σ̂_jl − σ̂_il σ̂_jk)
//!   R_{0ijk} = 0,
//! so that
//!   Ric₀₀ = −n w″/w
//!   Ric_ij = [−σ w w″ + (n−1)(K̂ − σ w′²)] σ̂_ij.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::Topology;
use crate::linalg::min_generalized_eigenvalue;

#[derive(Debug, Error, PartialEq)]
pub enum AmbientError {
    #[error("x0 = {0} outside the admissible range ({1}, {2})")]
    OutOfRange(f64, f64, f64),
    #[error("model {0} is not a space form")]
    NotASpaceForm(&'static str),
    #[error("operation requires a {expected} model, got {found}")]
    WrongSignature {
        expected: &'static str,
        found: &'static str,
    },
    #[error("model {model} does not support base topology {topology:?}")]
    IncompatibleBase {
        model: &'static str,
        topology: Topology,
    },
}

/// Which catalog member, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// −(dx⁰)² + δ_ij dx dx over a flat base; totally geodesic slices.
    LorentzProduct,
    /// −dt² + (T−t)² δ_ij dx dx; collapsing FLRW with crushing singularity
    /// at t = T.
    FlrwCollapse { t_final: f64 },
    /// −dt² + sinh²(−t) δ dx² on a circle, t < 0: the contracting
    /// hyperbolic-slicing patch of 2-dimensional de Sitter space (K_N = 1).
    /// Slices have mean curvature n coth(−t) > n, which makes the CMC gate
    /// τ > √(nΛ) realizable.
    DeSitter,
    /// dr² + r² σ̂ dx²: Euclidean space in geodesic polar coordinates.
    EuclideanPolar,
    /// dr² + sinh²r σ̂ dx²: hyperbolic space (K_N = −1) in polar coordinates.
    HyperbolicPolar,
}

/// Constant-curvature base carrying σ̂_ij.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BaseKind {
    FlatCircle,
    FlatTorus,
    RoundSphereAxisym,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientModel {
    kind: ModelKind,
    base: BaseKind,
    base_dim: usize,
}

/// All tensors at one spacetime point; index range 0..dim with 0 = x⁰.
#[derive(Debug, Clone)]
pub struct AmbientTensors {
    pub dim: usize,
    pub metric: [[f64; 3]; 3],
    pub metric_inv: [[f64; 3]; 3],
    /// Γ^a_{bc} as christoffel[a][b][c], symmetric in (b, c).
    pub christoffel: [[[f64; 3]; 3]; 3],
    /// Fully covariant R_{abcd}.
    pub riemann: [[[[f64; 3]; 3]; 3]; 3],
    pub ricci: [[f64; 3]; 3],
}

impl AmbientModel {
    pub fn new(kind: ModelKind, topology: Topology) -> Result<Self, AmbientError> {
        let id = model_id_of(kind);
        let (base, base_dim) = match (kind, topology) {
            (ModelKind::LorentzProduct | ModelKind::FlrwCollapse { .. }, Topology::Circle) => {
                (BaseKind::FlatCircle, 1)
            }
            (ModelKind::LorentzProduct | ModelKind::FlrwCollapse { .. }, Topology::Torus2) => {
                (BaseKind::FlatTorus, 2)
            }
            (ModelKind::DeSitter, Topology::Circle) => (BaseKind::FlatCircle, 1),
            (ModelKind::EuclideanPolar | ModelKind::HyperbolicPolar, Topology::Circle) => {
                (BaseKind::FlatCircle, 1)
            }
            (ModelKind::EuclideanPolar | ModelKind::HyperbolicPolar, Topology::SphereAxisym) => {
                (BaseKind::RoundSphereAxisym, 2)
            }
            (_, topology) => {
                return Err(AmbientError::IncompatibleBase {
                    model: id,
                    topology,
                })
            }
        };
        Ok(AmbientModel {
            kind,
            base,
            base_dim,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn model_id(&self) -> &'static str {
        model_id_of(self.kind)
    }

    /// σ = ⟨ν, ν⟩: −1 Lorentzian, +1 Riemannian.
    pub fn signature(&self) -> f64 {
        match self.kind {
            ModelKind::LorentzProduct | ModelKind::FlrwCollapse { .. } | ModelKind::DeSitter => {
                -1.0
            }
            ModelKind::EuclideanPolar | ModelKind::HyperbolicPolar => 1.0,
        }
    }

    pub fn is_lorentzian(&self) -> bool {
        self.signature() < 0.0
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn dim(&self) -> usize {
        self.base_dim + 1
    }

    /// Admissible open interval of x⁰.
    pub fn range(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::LorentzProduct => (-100.0, 100.0),
            ModelKind::FlrwCollapse { t_final } => (-50.0, t_final),
            ModelKind::DeSitter => (-20.0, 0.0),
            ModelKind::EuclideanPolar => (1e-6, 1e6),
            ModelKind::HyperbolicPolar => (1e-6, 30.0),
        }
    }

    /// K_N when the model is a space of constant curvature.
    pub fn spaceform_k(&self) -> Option<f64> {
        match self.kind {
            ModelKind::LorentzProduct => Some(0.0),
            ModelKind::FlrwCollapse { .. } => None,
            ModelKind::DeSitter => Some(1.0),
            ModelKind::EuclideanPolar => Some(0.0),
            ModelKind::HyperbolicPolar => Some(-1.0),
        }
    }

    /// Declared Λ ≥ 0 with Ric(ν,ν) ≥ −Λ for all unit timelike ν
    /// (Lorentzian models only).
    pub fn lambda_bound(&self) -> Option<f64> {
        match self.kind {
            ModelKind::LorentzProduct | ModelKind::FlrwCollapse { .. } => Some(0.0),
            ModelKind::DeSitter => Some(self.base_dim as f64),
            _ => None,
        }
    }

    /// Conformal factor ψ and its first x⁰/x derivatives (identically zero
    /// across the catalog; kept so that every formula carries it).
    pub fn psi(&self, _x0: f64, _x: [f64; 2]) -> f64 {
        0.0
    }

    pub fn psi_grad(&self, _x0: f64, _x: [f64; 2]) -> [f64; 3] {
        [0.0; 3]
    }

    /// Warp factor (w, w′, w″) at x⁰.
    pub fn warp(&self, x0: f64) -> (f64, f64, f64) {
        match self.kind {
            ModelKind::LorentzProduct => (1.0, 0.0, 0.0),
            ModelKind::FlrwCollapse { t_final } => (t_final - x0, -1.0, 0.0),
            ModelKind::DeSitter => {
                let s = -x0;
                (s.sinh(), -s.cosh(), s.sinh())
            }
            ModelKind::EuclideanPolar => (x0, 1.0, 0.0),
            ModelKind::HyperbolicPolar => (x0.sinh(), x0.cosh(), x0.sinh()),
        }
    }

    fn base_curvature(&self) -> f64 {
        match self.base {
            BaseKind::FlatCircle | BaseKind::FlatTorus => 0.0,
            BaseKind::RoundSphereAxisym => 1.0,
        }
    }

    /// Base metric σ̂_ij at base point x (n×n, n = base_dim).
    pub fn base_metric(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        match self.base {
            BaseKind::FlatCircle => [[1.0, 0.0], [0.0, 0.0]],
            BaseKind::FlatTorus => [[1.0, 0.0], [0.0, 1.0]],
            BaseKind::RoundSphereAxisym => {
                let s = x[0].sin();
                [[1.0, 0.0], [0.0, s * s]]
            }
        }
    }

    /// ∂σ̂_ij/∂x^k (only the θ derivative of the round sphere is nonzero).
    pub fn base_metric_dx(&self, x: [f64; 2], k: usize) -> [[f64; 2]; 2] {
        match self.base {
            BaseKind::RoundSphereAxisym if k == 0 => {
                let two_sc = (2.0 * x[0]).sin();
                [[0.0, 0.0], [0.0, two_sc]]
            }
            _ => [[0.0; 2]; 2],
        }
    }

    /// Base Christoffel symbols Γ̂^i_{jk}.
    pub fn base_christoffel(&self, x: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let mut g = [[[0.0; 2]; 2]; 2];
        if self.base == BaseKind::RoundSphereAxisym {
            let (s, c) = (x[0].sin(), x[0].cos());
            g[0][1][1] = -s * c; // Γ̂^θ_φφ
            let cot = c / s;
            g[1][0][1] = cot; // Γ̂^φ_θφ
            g[1][1][0] = cot;
        }
        g
    }

    /// Conformal slice metric σ_ij(x⁰, x) = w² σ̂_ij.
    pub fn sigma_ij(&self, x0: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (w, _, _) = self.warp(x0);
        scale2(self.base_metric(x), w * w)
    }

    /// ∂₀ σ_ij = 2 w w′ σ̂.
    pub fn sigma_dt(&self, x0: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (w, w1, _) = self.warp(x0);
        scale2(self.base_metric(x), 2.0 * w * w1)
    }

    /// ∂₀₀ σ_ij = 2(w′² + w w″) σ̂.
    pub fn sigma_dtt(&self, x0: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (w, w1, w2) = self.warp(x0);
        scale2(self.base_metric(x), 2.0 * (w1 * w1 + w * w2))
    }

    /// ∂_k ∂₀ σ_ij = 2 w w′ ∂_k σ̂.
    pub fn sigma_dt_dx(&self, x0: f64, x: [f64; 2], k: usize) -> [[f64; 2]; 2] {
        let (w, w1, _) = self.warp(x0);
        scale2(self.base_metric_dx(x, k), 2.0 * w * w1)
    }

    pub fn check_range(&self, x0: f64) -> Result<(), AmbientError> {
        let (a, b) = self.range();
        if x0 <= a || x0 >= b {
            return Err(AmbientError::OutOfRange(x0, a, b));
        }
        Ok(())
    }

    /// Full tensor set at one spacetime point, from the closed forms in the
    /// module header.
    pub fn tensors_at(&self, x0: f64, x: [f64; 2]) -> Result<AmbientTensors, AmbientError> {
        self.check_range(x0)?;
        let n = self.base_dim;
        let d = n + 1;
        let sig = self.signature();
        let (w, w1, w2) = self.warp(x0);
        let sh = self.base_metric(x);
        let shg = self.base_christoffel(x);
        let kb = self.base_curvature();

        let mut metric = [[0.0f64; 3]; 3];
        let mut metric_inv = [[0.0f64; 3]; 3];
        metric[0][0] = sig;
        metric_inv[0][0] = sig;
        // base metrics are diagonal across the catalog
        for i in 0..n {
            metric[i + 1][i + 1] = w * w * sh[i][i];
            metric_inv[i + 1][i + 1] = 1.0 / (w * w * sh[i][i]);
        }

        let mut christoffel = [[[0.0f64; 3]; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                christoffel[0][i + 1][j + 1] = -sig * w * w1 * sh[i][j];
            }
            christoffel[i + 1][0][i + 1] = w1 / w;
            christoffel[i + 1][i + 1][0] = w1 / w;
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    christoffel[a + 1][b + 1][c + 1] = shg[a][b][c];
                }
            }
        }

        let mut riemann = [[[[0.0f64; 3]; 3]; 3]; 3];
        let t_coeff = -w * w2;
        for i in 0..n {
            for j in 0..n {
                let v = t_coeff * sh[i][j];
                riemann[0][i + 1][0][j + 1] = v;
                riemann[i + 1][0][j + 1][0] = v;
                riemann[0][i + 1][j + 1][0] = -v;
                riemann[i + 1][0][0][j + 1] = -v;
            }
        }
        let s_coeff = w * w * (kb - sig * w1 * w1);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        riemann[i + 1][j + 1][k + 1][l + 1] =
                            s_coeff * (sh[i][k] * sh[j][l] - sh[i][l] * sh[j][k]);
                    }
                }
            }
        }

        // Ric_ab = g^{cd} R_{cadb}
        let mut ricci = [[0.0f64; 3]; 3];
        for a in 0..d {
            for b in 0..d {
                let mut s = 0.0;
                for c in 0..d {
                    s += metric_inv[c][c] * riemann[c][a][c][b];
                }
                ricci[a][b] = s;
            }
        }

        Ok(AmbientTensors {
            dim: d,
            metric,
            metric_inv,
            christoffel,
            riemann,
            ricci,
        })
    }

    /// Mean curvature of the coordinate slice {x⁰ = const} with respect to
    /// the oriented normal of the catalog conventions (past directed when
    /// Lorentzian, ∂₀-directed when Riemannian):
    /// H̄ = −e^{−ψ}(n ψ̇ + ½ σ^{ij} ∂₀σ_ij) = −n w′/w here.
    pub fn slice_mean_curvature(&self, x0: f64, _x: [f64; 2]) -> f64 {
        let (w, w1, _) = self.warp(x0);
        -(self.base_dim as f64) * w1 / w
    }

    /// log det of the induced slice metric ḡ_ij = e^{2ψ} σ_ij at (x⁰, x).
    pub fn slice_log_det(&self, x0: f64, x: [f64; 2]) -> f64 {
        let s = self.sigma_ij(x0, x);
        let det = match self.base_dim {
            1 => s[0][0],
            _ => s[0][0] * s[1][1] - s[0][1] * s[1][0],
        };
        det.ln()
    }

    /// Covariant field η_α = e^ψ(−1, 0, …, 0) (Lorentzian control covector).
    pub fn eta(&self, _x0: f64, _x: [f64; 2]) -> [f64; 3] {
        [-1.0, 0.0, 0.0]
    }

    /// Ambient Hessian η_{α;β}. With ψ ≡ 0 this is η_{αβ} = Γ⁰_{αβ}, whose
    /// only nonzero block is η_{ij} = −σ w w′ σ̂_ij.
    pub fn eta_hessian(&self, x0: f64, x: [f64; 2]) -> [[f64; 3]; 3] {
        let n = self.base_dim;
        let sig = self.signature();
        let (w, w1, _) = self.warp(x0);
        let sh = self.base_metric(x);
        let mut h = [[0.0f64; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                h[i + 1][j + 1] = -sig * w * w1 * sh[i][j];
            }
        }
        h
    }

    /// Second ambient covariant derivative η_{α;βγ} as third[α][β][γ].
    ///
    /// With m(x⁰) = −σ w w′ (the η_{ij} coefficient) the nonzero blocks are
    ///   η_{ij;0} = (m′ − 2 m w′/w) σ̂_ij,
    ///   η_{0j;l} = η_{j0;l} = −(w′/w) m σ̂_lj,
    /// and the purely spatial derivative vanishes because σ̂ is covariantly
    /// constant with respect to its own connection.
    pub fn eta_third(&self, x0: f64, x: [f64; 2]) -> [[[f64; 3]; 3]; 3] {
        let n = self.base_dim;
        let sig = self.signature();
        let (w, w1, w2) = self.warp(x0);
        let sh = self.base_metric(x);
        let m = -sig * w * w1;
        let m1 = -sig * (w1 * w1 + w * w2);
        let mut t = [[[0.0f64; 3]; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                t[i + 1][j + 1][0] = (m1 - 2.0 * m * w1 / w) * sh[i][j];
            }
        }
        for j in 0..n {
            for l in 0..n {
                let v = -(w1 / w) * m * sh[l][j];
                t[0][j + 1][l + 1] = v;
                t[j + 1][0][l + 1] = v;
            }
        }
        t
    }
}

fn scale2(m: [[f64; 2]; 2], s: f64) -> [[f64; 2]; 2] {
    let mut out = m;
    for r in &mut out {
        for v in r {
            *v *= s;
        }
    }
    out
}

fn model_id_of(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::LorentzProduct => "lorentz-product",
        ModelKind::FlrwCollapse { .. } => "flrw-collapse",
        ModelKind::DeSitter => "de-sitter",
        ModelKind::EuclideanPolar => "euclidean-polar",
        ModelKind::HyperbolicPolar => "hyperbolic-polar",
    }
}

/// Compact region of the ambient manifold: an x⁰ interval strictly inside
/// the model range and a list of base sample points.
#[derive(Debug, Clone)]
pub struct Region {
    pub x0_interval: (f64, f64),
    pub base_points: Vec<[f64; 2]>,
}

impl Region {
    pub fn new(
        model: &AmbientModel,
        x0_interval: (f64, f64),
        base_points: Vec<[f64; 2]>,
    ) -> Result<Self, AmbientError> {
        let (a, b) = model.range();
        if x0_interval.0 <= a || x0_interval.1 >= b || x0_interval.0 > x0_interval.1 {
            return Err(AmbientError::OutOfRange(x0_interval.0, a, b));
        }
        Ok(Region {
            x0_interval,
            base_points,
        })
    }

    fn sample_points(&self, n_x0: usize) -> Vec<(f64, [f64; 2])> {
        let (lo, hi) = self.x0_interval;
        let mut pts = Vec::new();
        let m = n_x0.max(1);
        for i in 0..m {
            let x0 = if m == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (m - 1) as f64
            };
            for &x in &self.base_points {
                pts.push((x0, x));
            }
        }
        pts
    }
}

/// Max over samples of the relative deviation of R from the space-form law
/// R_{abcd} = K_N (g_ac g_bd − g_ad g_bc).
pub fn spaceform_residual(
    model: &AmbientModel,
    samples: &[(f64, [f64; 2])],
) -> Result<f64, AmbientError> {
    let k_n = model
        .spaceform_k()
        .ok_or(AmbientError::NotASpaceForm(model.model_id()))?;
    let d = model.dim();
    let mut worst = 0.0f64;
    for &(x0, x) in samples {
        let t = model.tensors_at(x0, x)?;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let form = k_n
                            * (t.metric[a][c] * t.metric[b][e] - t.metric[a][e] * t.metric[b][c]);
                        num = num.max((t.riemann[a][b][c][e] - form).abs());
                        den = den
                            .max(form.abs())
                            .max(t.riemann[a][b][c][e].abs())
                            .max(t.metric[a][c].abs() * t.metric[b][e].abs());
                    }
                }
            }
        }
        worst = worst.max(num / den.max(1e-300));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct RicciScanReport {
    pub min_value: f64,
    pub pass: bool,
    pub lambda: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Samples unit timelike vectors (seeded pseudo-random boosts of the
/// coordinate normal) over region points and reports min Ric(ν, ν) together
/// with the verdict min ≥ −Λ − 1e−10.
pub fn ricci_timelike_scan(
    model: &AmbientModel,
    region: &Region,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RicciScanReport, AmbientError> {
    if !model.is_lorentzian() {
        return Err(AmbientError::WrongSignature {
            expected: "Lorentzian",
            found: model.model_id(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.base_dim();
    let (lo, hi) = region.x0_interval;
    let mut min_value = f64::INFINITY;
    for _ in 0..n_samples.max(1) {
        let x0 = rng.gen_range(lo..=hi);
        let x = region.base_points[rng.gen_range(0..region.base_points.len())];
        let t = model.tensors_at(x0, x)?;
        // unit timelike ν = cosh(χ) e₀ + sinh(χ) ŝ with ŝ unit spacelike
        let chi: f64 = rng.gen_range(0.0..3.0);
        let mut s = [0.0f64; 3];
        if n == 1 {
            let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s[1] = dir / t.metric[1][1].sqrt();
        } else {
            let ang: f64 = rng.gen_range(0.0..crate::grid::TWO_PI);
            let (c, sn) = (ang.cos(), ang.sin());
            let norm = (c * c * t.metric[1][1] + sn * sn * t.metric[2][2]).sqrt();
            s[1] = c / norm;
            s[2] = sn / norm;
        }
        let mut nu = [0.0f64; 3];
        nu[0] = chi.cosh(); // e₀ = (1,0,0) since ψ = 0 and g₀₀ = −1
        for i in 1..=n {
            nu[i] = chi.sinh() * s[i];
        }
        let mut val = 0.0;
        for a in 0..=n {
            for b in 0..=n {
                val += t.ricci[a][b] * nu[a] * nu[b];
            }
        }
        min_value = min_value.min(val);
    }
    Ok(RicciScanReport {
        min_value,
        pass: min_value >= -lambda - 1e-10,
        lambda,
        n_samples,
        seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityCertificate {
    /// Smallest ladder λ achieving a positive margin, when successful.
    pub lambda: Option<f64>,
    /// Margin c of the scaled Hessian e^{−λx⁰}χ_{αβ} ≥ c ĝ_{αβ} at the
    /// reported λ (best found over the ladder when unsuccessful). The
    /// unscaled certificate then holds with c·min e^{λx⁰} > 0; the scaling
    /// keeps the number finite for large λ.
    pub margin: f64,
    pub n_x0_samples: usize,
}

/// Searches λ ∈ {1, 2, 4, …, λ_max} for a strictly convex χ = e^{λ x⁰}:
/// positive definiteness of χ_{αβ} = λ²e^{λt} t_α t_β + λ e^{λt} t_{αβ}
/// is measured against the Riemannian reference metric
/// ĝ = e^{2ψ}((dx⁰)² + σ_ij dx dx).
pub fn convexity_certificate(
    model: &AmbientModel,
    region: &Region,
    lambda_max: f64,
    n_x0_samples: usize,
) -> Result<ConvexityCertificate, AmbientError> {
    let d = model.dim();
    let pts = region.sample_points(n_x0_samples);
    let mut best_margin = f64::NEG_INFINITY;
    let mut lam = 1.0f64;
    while lam <= lambda_max {
        let mut margin = f64::INFINITY;
        for &(x0, x) in &pts {
            let t = model.tensors_at(x0, x)?;
            // t_{αβ} = −Γ⁰_{αβ} for the coordinate time function t = x⁰;
            // the common factor e^{λx⁰} > 0 is scaled out of χ.
            let mut chi = [[0.0f64; 4]; 4];
            chi[0][0] = lam * lam;
            for a in 0..d {
                for b in 0..d {
                    chi[a][b] += lam * (-t.christoffel[0][a][b]);
                }
            }
            // ĝ = e^{2ψ}((dx⁰)² + σ_ij): the spatial block of ḡ is already
            // e^{2ψ}σ_ij in either signature, only ḡ₀₀ carries the sign.
            let mut gref = [[0.0f64; 4]; 4];
            gref[0][0] = 1.0;
            for i in 1..d {
                for j in 1..d {
                    gref[i][j] = t.metric[i][j];
                }
            }
            let ev = match min_generalized_eigenvalue(&chi, &gref, d) {
                Some(v) => v,
                None => return Err(AmbientError::OutOfRange(x0, 0.0, 0.0)),
            };
            margin = margin.min(ev);
        }
        if margin > 0.0 {
            return Ok(ConvexityCertificate {
                lambda: Some(lam),
                margin,
                n_x0_samples,
            });
        }
        best_margin = best_margin.max(margin);
        lam *= 2.0;
    }
    Ok(ConvexityCertificate {
        lambda: None,
        margin: best_margin,
        n_x0_samples,
    })
}
