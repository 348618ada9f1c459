//! Geometry of a graph hypersurface M = {x⁰ = u(x)} over the base manifold,
//! in the sign conventions used throughout: the normal is past directed
//! (ν⁰ < 0) in Lorentzian models and ∂₀-directed (ν⁰ > 0) in Riemannian
//! ones, and the second fundamental form comes from the Gauss formula
//! x_ij^α = −σ h_ij ν^α, i.e. h_ij = −⟨x_ij, ν⟩. With these choices
//! coordinate spheres in euclidean-polar have κ_i = 1/r > 0 and the
//! collapsing-FLRW slices have H̄ = n/(T−t) > 0; both anchors are pinned by
//! tests.

use std::sync::Arc;

use thiserror::Error;

use crate::ambient::{AmbientError, AmbientModel, AmbientTensors};
use crate::grid::{BaseGrid, Field, GridError};
use crate::linalg::generalized_eig2;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("graph not spacelike at node {node}: |Du|² = {dusq}")]
    NotSpacelike { node: usize, dusq: f64 },
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("induced metric degenerate at node {0}")]
    DegenerateMetric(usize),
    #[error("operation requires a Lorentzian model")]
    WrongSignature,
}

/// Graph function plus flow time over a fixed model and grid.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub u: Field,
    pub t: f64,
    pub model: Arc<AmbientModel>,
}

impl GraphState {
    pub fn new(model: Arc<AmbientModel>, u: Field, t: f64) -> Self {
        GraphState { u, t, model }
    }

    pub fn grid(&self) -> &Arc<BaseGrid> {
        self.u.grid()
    }
}

/// All geometric quantities of one graph, cached per node.
#[derive(Debug, Clone)]
pub struct GraphGeometry {
    pub n: usize,
    pub sigma: f64,
    /// v (Riemannian) or the Lorentzian v = √(1−|Du|²).
    pub v: Vec<f64>,
    /// ṽ = 1/v (Lorentzian C¹ control quantity); equals v when Riemannian.
    pub vtilde: Vec<f64>,
    /// Contravariant normal ν^α.
    pub nu: Vec<[f64; 3]>,
    /// Tangents x_i^α, i = 1..n stored as [i][α].
    pub tangents: Vec<[[f64; 3]; 2]>,
    /// Induced metric g_ij and inverse.
    pub g: Vec<[[f64; 2]; 2]>,
    pub g_inv: Vec<[[f64; 2]; 2]>,
    /// Second fundamental form (symmetrized) and shape operator h^i_j.
    pub h: Vec<[[f64; 2]; 2]>,
    pub shape: Vec<[[f64; 2]; 2]>,
    /// Principal curvatures sorted ascending (only the first n entries used).
    pub kappa: Vec<[f64; 2]>,
    pub mean_h: Vec<f64>,
    /// |A|² = h_ij h^{ij}.
    pub a2: Vec<f64>,
    /// Area density v·√det(ḡ_ij(u,x)) per node (slice-metric factorization).
    pub area_density: Vec<f64>,
    /// √det g_ij from the induced metric; equals `area_density` up to
    /// rounding and feeds the divergence-form Laplacian.
    pub sqrt_det_g: Vec<f64>,
    /// Gradient u_i per node (covariant base components).
    pub du: Vec<[f64; 2]>,
    /// Induced-metric Christoffels γ^k_{ij} from the discrete g field.
    pub gamma_ind: Vec<[[[f64; 2]; 2]; 2]>,
    /// Ambient tensors at (u(x), x) per node.
    pub ambient: Vec<AmbientTensors>,
    /// Largest observed h_ij asymmetry before symmetrization.
    pub h_asymmetry: f64,
}

impl GraphGeometry {
    /// Rows [g00, g01, g11] for the divergence-form Laplacian.
    pub fn metric_rows(&self) -> Vec<[f64; 3]> {
        self.g.iter().map(|g| [g[0][0], g[0][1], g[1][1]]).collect()
    }

    /// Covariant Hessian of a scalar field with respect to the induced
    /// metric: φ_{;ij} = ∂_i∂_j φ − γ^k_{ij} ∂_k φ.
    pub fn covariant_hessian(&self, grid: &BaseGrid, phi: &[f64]) -> Vec<[[f64; 2]; 2]> {
        let n_nodes = grid.node_count();
        let n = self.n;
        let dphi = gradient_fields(grid, phi);
        let ddphi = hessian_fields(grid, phi);
        let mut out = vec![[[0.0f64; 2]; 2]; n_nodes];
        for idx in 0..n_nodes {
            for i in 0..n {
                for j in 0..n {
                    let mut v = ddphi[idx][i][j];
                    for k in 0..n {
                        v -= self.gamma_ind[idx][k][i][j] * dphi[idx][k];
                    }
                    out[idx][i][j] = v;
                }
            }
        }
        out
    }

    /// Covariant gradient with upper index: φ^i = g^{ij}∂_j φ.
    pub fn gradient_upper(&self, grid: &BaseGrid, phi: &[f64]) -> Vec<[f64; 2]> {
        let dphi = gradient_fields(grid, phi);
        let mut out = vec![[0.0f64; 2]; grid.node_count()];
        for idx in 0..grid.node_count() {
            for i in 0..self.n {
                for j in 0..self.n {
                    out[idx][i] += self.g_inv[idx][i][j] * dphi[idx][j];
                }
            }
        }
        out
    }
}

/// Partial derivatives ∂_i f per node; the φ-slot of single-axis grids is 0.
pub fn gradient_fields(grid: &BaseGrid, f: &[f64]) -> Vec<[f64; 2]> {
    let n_nodes = grid.node_count();
    let mut out = vec![[0.0f64; 2]; n_nodes];
    for axis in 0..grid.storage_axes() {
        let d = grid.derivative(f, axis, 1);
        for idx in 0..n_nodes {
            out[idx][axis] = d[idx];
        }
    }
    out
}

/// Full coordinate Hessians ∂_i∂_j f per node.
pub fn hessian_fields(grid: &BaseGrid, f: &[f64]) -> Vec<[[f64; 2]; 2]> {
    let n_nodes = grid.node_count();
    let mut out = vec![[[0.0f64; 2]; 2]; n_nodes];
    let d00 = grid.derivative(f, 0, 2);
    for idx in 0..n_nodes {
        out[idx][0][0] = d00[idx];
    }
    if grid.storage_axes() == 2 {
        let d11 = grid.derivative(f, 1, 2);
        let d01 = grid.derivative_mixed(f);
        for idx in 0..n_nodes {
            out[idx][1][1] = d11[idx];
            out[idx][0][1] = d01[idx];
            out[idx][1][0] = d01[idx];
        }
    }
    out
}

/// Sorted principal curvatures from (g, h) at one node.
pub fn principal_curvatures(
    g: &[[f64; 2]; 2],
    h: &[[f64; 2]; 2],
    n: usize,
) -> Result<[f64; 2], GeomError> {
    if n == 1 {
        if g[0][0] <= 0.0 {
            return Err(GeomError::DegenerateMetric(0));
        }
        let k = h[0][0] / g[0][0];
        return Ok([k, k]);
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if g[0][0] <= 0.0 || det <= 0.0 {
        return Err(GeomError::DegenerateMetric(0));
    }
    Ok(generalized_eig2(h, g))
}

/// Full geometry of graph u. Fails when u leaves the model range or, in the
/// Lorentzian case, loses the spacelike bound σ^{ij}u_i u_j < 1.
pub fn graph_geometry(model: &Arc<AmbientModel>, u: &Field) -> Result<GraphGeometry, GeomError> {
    let grid = u.grid().clone();
    let n_nodes = grid.node_count();
    let n = grid.base_dim();
    debug_assert_eq!(n, model.base_dim());
    let sigma = model.signature();
    let uv = u.values();

    let du = gradient_fields(&grid, uv);
    let ddu = hessian_fields(&grid, uv);

    // first pass: pointwise ambient data, frame, induced metric
    let mut ambient = Vec::with_capacity(n_nodes);
    let mut v = vec![0.0f64; n_nodes];
    let mut vtilde = vec![0.0f64; n_nodes];
    let mut nu = vec![[0.0f64; 3]; n_nodes];
    let mut tangents = vec![[[0.0f64; 3]; 2]; n_nodes];
    let mut g = vec![[[0.0f64; 2]; 2]; n_nodes];
    let mut g_inv = vec![[[0.0f64; 2]; 2]; n_nodes];
    let mut area_density = vec![0.0f64; n_nodes];
    let mut sqrt_det_g = vec![0.0f64; n_nodes];

    for idx in 0..n_nodes {
        let x = grid.coords(idx);
        let x0 = uv[idx];
        let t = model.tensors_at(x0, x)?;
        let psi = model.psi(x0, x);
        let epsi = psi.exp();

        // |Du|² = σ^{ij} u_i u_j; the spatial block of g⁻¹ is e^{−2ψ}σ^{ij}
        let mut dusq = 0.0;
        let mut u_up = [0.0f64; 2]; // u^i = σ^{ij} u_j
        for i in 0..n {
            for j in 0..n {
                let sig_inv = t.metric_inv[i + 1][j + 1] * epsi * epsi;
                u_up[i] += sig_inv * du[idx][j];
                dusq += sig_inv * du[idx][i] * du[idx][j];
            }
        }
        let vi = if sigma < 0.0 {
            if dusq >= 1.0 {
                return Err(GeomError::NotSpacelike { node: idx, dusq });
            }
            (1.0 - dusq).sqrt()
        } else {
            (1.0 + dusq).sqrt()
        };
        v[idx] = vi;
        vtilde[idx] = if sigma < 0.0 { 1.0 / vi } else { vi };

        // ν^α = σ e^{−ψ} v⁻¹ (1, −σ u^i)
        let coef = sigma / (epsi * vi);
        nu[idx][0] = coef;
        for i in 0..n {
            nu[idx][i + 1] = coef * (-sigma * u_up[i]);
        }

        let mut tg = [[0.0f64; 3]; 2];
        for i in 0..n {
            tg[i][0] = du[idx][i];
            tg[i][i + 1] = 1.0;
        }
        tangents[idx] = tg;

        let mut gm = [[0.0f64; 2]; 2];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..=n {
                    for b in 0..=n {
                        s += t.metric[a][b] * tg[i][a] * tg[j][b];
                    }
                }
                gm[i][j] = s;
            }
        }
        g[idx] = gm;

        let (gi, det) = invert_small(&gm, n).ok_or(GeomError::DegenerateMetric(idx))?;
        g_inv[idx] = gi;
        sqrt_det_g[idx] = det.sqrt();
        // slice factorization: v · √det(ḡ_ij(u, x))
        let slice_det = match n {
            1 => t.metric[1][1],
            _ => t.metric[1][1] * t.metric[2][2] - t.metric[1][2] * t.metric[2][1],
        };
        area_density[idx] = vi * slice_det.sqrt();

        ambient.push(t);
    }

    // induced Christoffels from the discrete metric field
    let mut gcomp = [
        vec![0.0f64; n_nodes],
        vec![0.0f64; n_nodes],
        vec![0.0f64; n_nodes],
    ];
    for idx in 0..n_nodes {
        gcomp[0][idx] = g[idx][0][0];
        gcomp[1][idx] = g[idx][0][1];
        gcomp[2][idx] = g[idx][1][1];
    }
    let axes = grid.storage_axes();
    let mut dg = vec![[[[0.0f64; 2]; 2]; 2]; n_nodes]; // dg[l][i][j] = ∂_l g_ij
    for (comp, (ci, cj)) in [(0usize, (0usize, 0usize)), (1, (0, 1)), (2, (1, 1))] {
        for axis in 0..axes {
            let d = grid.derivative(&gcomp[comp], axis, 1);
            for idx in 0..n_nodes {
                dg[idx][axis][ci][cj] = d[idx];
                dg[idx][axis][cj][ci] = d[idx];
            }
        }
        // the azimuthal derivative of the axisymmetric sphere vanishes for
        // stored fields; the geometric θ-dependence of g_φφ is still in
        // axis-0 derivatives above
    }

    let mut gamma_ind = vec![[[[0.0f64; 2]; 2]; 2]; n_nodes];
    for idx in 0..n_nodes {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += 0.5
                            * g_inv[idx][k][l]
                            * (dg[idx][i][j][l] + dg[idx][j][i][l] - dg[idx][l][i][j]);
                    }
                    gamma_ind[idx][k][i][j] = s;
                }
            }
        }
    }

    // second pass: full Hessian of the embedding, h, shape, curvatures
    let mut h = vec![[[0.0f64; 2]; 2]; n_nodes];
    let mut shape = vec![[[0.0f64; 2]; 2]; n_nodes];
    let mut kappa = vec![[0.0f64; 2]; n_nodes];
    let mut mean_h = vec![0.0f64; n_nodes];
    let mut a2 = vec![0.0f64; n_nodes];
    let mut h_asymmetry = 0.0f64;

    for idx in 0..n_nodes {
        let t = &ambient[idx];
        let tg = &tangents[idx];
        let mut hm = [[0.0f64; 2]; 2];
        for i in 0..n {
            for j in 0..n {
                // x_ij^α = ∂_i∂_j x^α − γ^k_ij x_k^α + Γ̄^α_βγ x_i^β x_j^γ
                let mut xij = [0.0f64; 3];
                xij[0] = ddu[idx][i][j];
                for k in 0..n {
                    let gam = gamma_ind[idx][k][i][j];
                    for al in 0..=n {
                        xij[al] -= gam * tg[k][al];
                    }
                }
                for al in 0..=n {
                    let mut s = 0.0;
                    for b in 0..=n {
                        for c in 0..=n {
                            s += t.christoffel[al][b][c] * tg[i][b] * tg[j][c];
                        }
                    }
                    xij[al] += s;
                }
                // h_ij = −⟨x_ij, ν⟩
                let mut inner = 0.0;
                for a in 0..=n {
                    for b in 0..=n {
                        inner += t.metric[a][b] * xij[a] * nu[idx][b];
                    }
                }
                hm[i][j] = -inner;
            }
        }
        if n == 2 {
            h_asymmetry = h_asymmetry.max((hm[0][1] - hm[1][0]).abs());
            let m = 0.5 * (hm[0][1] + hm[1][0]);
            hm[0][1] = m;
            hm[1][0] = m;
        }
        h[idx] = hm;

        let gi = &g_inv[idx];
        let mut sm = [[0.0f64; 2]; 2];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += gi[i][k] * hm[k][j];
                }
                sm[i][j] = s;
            }
        }
        shape[idx] = sm;
        kappa[idx] = principal_curvatures(&g[idx], &hm, n)?;
        let mut tr = 0.0;
        let mut tr2 = 0.0;
        for i in 0..n {
            tr += sm[i][i];
            for j in 0..n {
                tr2 += sm[i][j] * sm[j][i];
            }
        }
        mean_h[idx] = tr;
        a2[idx] = tr2;
    }

    Ok(GraphGeometry {
        n,
        sigma,
        v,
        vtilde,
        nu,
        tangents,
        g,
        g_inv,
        h,
        shape,
        kappa,
        mean_h,
        a2,
        area_density,
        sqrt_det_g,
        du,
        gamma_ind,
        ambient,
        h_asymmetry,
    })
}

fn invert_small(g: &[[f64; 2]; 2], n: usize) -> Option<([[f64; 2]; 2], f64)> {
    let mut gi = [[0.0f64; 2]; 2];
    if n == 1 {
        if g[0][0] <= 0.0 {
            return None;
        }
        gi[0][0] = 1.0 / g[0][0];
        return Some((gi, g[0][0]));
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if g[0][0] <= 0.0 || det <= 0.0 {
        return None;
    }
    gi[0][0] = g[1][1] / det;
    gi[0][1] = -g[0][1] / det;
    gi[1][0] = -g[1][0] / det;
    gi[1][1] = g[0][0] / det;
    Some((gi, det))
}

/// Independent route to h_ij for Lorentzian graphs:
/// e^{−ψ}v⁻¹ h_ij = −u_{;ij} − Γ̄⁰₀₀ u_i u_j − Γ̄⁰_{i0} u_j − Γ̄⁰_{j0} u_i − Γ̄⁰_ij,
/// with u_{;ij} covariant in the induced metric. Returns the maximum
/// relative deviation from the Gauss-formula route.
pub fn lorentz_graph_h_crosscheck(model: &Arc<AmbientModel>, u: &Field) -> Result<f64, GeomError> {
    if !model.is_lorentzian() {
        return Err(GeomError::WrongSignature);
    }
    let geom = graph_geometry(model, u)?;
    let grid = u.grid();
    let n = geom.n;
    let u_hess = geom.covariant_hessian(grid, u.values());

    let mut scale = 1e-30f64;
    for idx in 0..grid.node_count() {
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(geom.h[idx][i][j].abs());
            }
        }
    }
    let mut worst = 0.0f64;
    for idx in 0..grid.node_count() {
        let t = &geom.ambient[idx];
        let x = grid.coords(idx);
        let psi = model.psi(u.values()[idx], x);
        let epsi = psi.exp();
        for i in 0..n {
            for j in 0..n {
                let mut rhs = -u_hess[idx][i][j];
                rhs -= t.christoffel[0][0][0] * geom.du[idx][i] * geom.du[idx][j];
                rhs -= t.christoffel[0][i + 1][0] * geom.du[idx][j];
                rhs -= t.christoffel[0][j + 1][0] * geom.du[idx][i];
                rhs -= t.christoffel[0][i + 1][j + 1];
                let h216 = rhs * epsi * geom.v[idx];
                worst = worst.max((geom.h[idx][i][j] - h216).abs() / scale);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::ModelKind;
    use crate::grid::{make_grid, StencilOrder, Topology};

    fn state(
        kind: ModelKind,
        topology: Topology,
        res: usize,
        order: StencilOrder,
        f: impl Fn([f64; 2]) -> f64,
    ) -> (Arc<AmbientModel>, Field) {
        let model = Arc::new(AmbientModel::new(kind, topology).unwrap());
        let grid = Arc::new(make_grid(topology, [res, res], order).unwrap());
        let u = Field::from_fn(grid, f).unwrap();
        (model, u)
    }

    #[test]
    fn lorentz_product_slice_is_totally_geodesic() {
        let (model, u) = state(
            ModelKind::LorentzProduct,
            Topology::Torus2,
            16,
            StencilOrder::Four,
            |_| 0.25,
        );
        let g = graph_geometry(&model, &u).unwrap();
        for idx in 0..u.grid().node_count() {
            assert_eq!(g.mean_h[idx], 0.0);
            assert_eq!(g.v[idx], 1.0);
            assert_eq!(g.vtilde[idx], 1.0);
            assert_eq!(g.nu[idx], [-1.0, 0.0, 0.0]);
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(g.h[idx][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn euclidean_circle_of_radius_two() {
        let (model, u) = state(
            ModelKind::EuclideanPolar,
            Topology::Circle,
            64,
            StencilOrder::Four,
            |_| 2.0,
        );
        let g = graph_geometry(&model, &u).unwrap();
        for idx in 0..64 {
            assert!((g.kappa[idx][0] - 0.5).abs() < 1e-13);
            assert!((g.mean_h[idx] - 0.5).abs() < 1e-13);
            assert!((g.v[idx] - 1.0).abs() < 1e-15);
            assert!((g.area_density[idx] - 2.0).abs() < 1e-13);
            assert!(g.nu[idx][0] > 0.0, "Riemannian normal has ν⁰ > 0");
        }
    }

    #[test]
    fn flrw_slice_mean_curvature_and_density() {
        let (model, u) = state(
            ModelKind::FlrwCollapse { t_final: 2.0 },
            Topology::Torus2,
            16,
            StencilOrder::Four,
            |_| 1.0,
        );
        let g = graph_geometry(&model, &u).unwrap();
        for idx in 0..u.grid().node_count() {
            assert!((g.mean_h[idx] - 2.0).abs() < 1e-13, "H̄ = n/(T−u) = 2");
            assert!((g.a2[idx] - 2.0).abs() < 1e-13, "|A|² = 2");
            assert!((g.area_density[idx] - 1.0).abs() < 1e-13, "(T−u)² = 1");
            assert!(g.nu[idx][0] < 0.0, "past directed normal");
        }
    }

    #[test]
    fn euclidean_axisym_sphere() {
        let (model, u) = state(
            ModelKind::EuclideanPolar,
            Topology::SphereAxisym,
            64,
            StencilOrder::Two,
            |_| 1.5,
        );
        let g = graph_geometry(&model, &u).unwrap();
        for idx in 0..64 {
            assert!(
                (g.kappa[idx][0] - 1.0 / 1.5).abs() < 1e-10,
                "{}",
                g.kappa[idx][0]
            );
            assert!(
                (g.kappa[idx][1] - 1.0 / 1.5).abs() < 1e-10,
                "{}",
                g.kappa[idx][1]
            );
            assert!((g.mean_h[idx] - 2.0 / 1.5).abs() < 1e-10);
        }
        // area of the sphere: 2π ∫ density dθ = 4π r₀²
        let area = u.grid().integrate(&g.area_density) * u.grid().transverse_measure();
        let expect = 4.0 * std::f64::consts::PI * 1.5 * 1.5;
        assert!(
            (area - expect).abs() / expect < 1e-3,
            "area {area} vs {expect}"
        );
    }

    #[test]
    fn frame_invariants_on_perturbed_states() {
        let cases: Vec<(Arc<AmbientModel>, Field)> = vec![
            state(
                ModelKind::DeSitter,
                Topology::Circle,
                64,
                StencilOrder::Four,
                |c| -2.0 + 0.3 * c[0].sin(),
            ),
            state(
                ModelKind::FlrwCollapse { t_final: 2.0 },
                Topology::Torus2,
                24,
                StencilOrder::Four,
                |c| 1.0 + 0.1 * c[0].sin() * c[1].cos(),
            ),
            state(
                ModelKind::EuclideanPolar,
                Topology::SphereAxisym,
                64,
                StencilOrder::Two,
                |c| 1.5 + 0.1 * c[0].sin(),
            ),
            state(
                ModelKind::HyperbolicPolar,
                Topology::Circle,
                64,
                StencilOrder::Four,
                |c| 1.0 + 0.2 * c[0].cos(),
            ),
        ];
        for (model, u) in cases {
            let geom = graph_geometry(&model, &u).unwrap();
            let n = geom.n;
            let sigma = model.signature();
            for idx in 0..u.grid().node_count() {
                let t = &geom.ambient[idx];
                // ⟨ν,ν⟩ = σ
                let mut nn = 0.0;
                for a in 0..=n {
                    for b in 0..=n {
                        nn += t.metric[a][b] * geom.nu[idx][a] * geom.nu[idx][b];
                    }
                }
                assert!(
                    (nn - sigma).abs() < 1e-10,
                    "{}: ⟨ν,ν⟩ = {nn}",
                    model.model_id()
                );
                // tangency
                for i in 0..n {
                    let mut tn = 0.0;
                    for a in 0..=n {
                        for b in 0..=n {
                            tn += t.metric[a][b] * geom.tangents[idx][i][a] * geom.nu[idx][b];
                        }
                    }
                    assert!(tn.abs() < 1e-8, "⟨ν,x_i⟩ = {tn}");
                }
                // trace identities
                let ksum: f64 = geom.kappa[idx][..n].iter().sum();
                assert!((geom.mean_h[idx] - ksum).abs() < 1e-9 * (1.0 + ksum.abs()));
                let k2: f64 = geom.kappa[idx][..n].iter().map(|k| k * k).sum();
                assert!((geom.a2[idx] - k2).abs() < 1e-9 * (1.0 + k2));
                // h_ij h^{ij} route
                let mut hij_hup = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                hij_hup += geom.h[idx][i][j]
                                    * geom.g_inv[idx][i][k]
                                    * geom.g_inv[idx][j][l]
                                    * geom.h[idx][k][l];
                            }
                        }
                    }
                }
                assert!((hij_hup - k2).abs() < 1e-9 * (1.0 + k2));
                // control quantity characterizations
                if sigma < 0.0 {
                    // ṽ = ⟨η, ν⟩
                    let x = u.grid().coords(idx);
                    let eta = model.eta(u.values()[idx], x);
                    let mut ip = 0.0;
                    for a in 0..=n {
                        ip += eta[a] * geom.nu[idx][a];
                    }
                    assert!((ip - geom.vtilde[idx]).abs() < 1e-9);
                    assert!((geom.vtilde[idx] - 1.0 / geom.v[idx]).abs() < 1e-9);
                } else {
                    // v = (r_α ν^α)⁻¹ (ψ = 0 catalog)
                    assert!((1.0 / geom.nu[idx][0] - geom.v[idx]).abs() < 1e-9);
                }
            }
            assert!(geom.h_asymmetry < 1e-8, "h asymmetry {}", geom.h_asymmetry);
        }
    }

    #[test]
    fn not_spacelike_detected() {
        let (model, u) = state(
            ModelKind::LorentzProduct,
            Topology::Circle,
            64,
            StencilOrder::Four,
            |c| 2.0 * c[0].sin(),
        );
        assert!(matches!(
            graph_geometry(&model, &u),
            Err(GeomError::NotSpacelike { .. })
        ));
    }

    #[test]
    fn out_of_range_detected() {
        let (model, u) = state(
            ModelKind::FlrwCollapse { t_final: 2.0 },
            Topology::Circle,
            64,
            StencilOrder::Four,
            |_| 2.5,
        );
        assert!(matches!(
            graph_geometry(&model, &u),
            Err(GeomError::Ambient(_))
        ));
    }

    #[test]
    fn principal_curvature_examples() {
        let g = [[1.0, 0.0], [0.0, 1.0]];
        let h = [[1.0, 0.0], [0.0, 2.0]];
        assert_eq!(principal_curvatures(&g, &h, 2).unwrap(), [1.0, 2.0]);
        let g = [[4.0, 0.0], [0.0, 1.0]];
        let h = [[4.0, 0.0], [0.0, 3.0]];
        assert_eq!(principal_curvatures(&g, &h, 2).unwrap(), [1.0, 3.0]);
        let bad = [[-1.0, 0.0], [0.0, 1.0]];
        assert!(principal_curvatures(&bad, &h, 2).is_err());
    }

    #[test]
    fn h_crosscheck_on_slices() {
        let (model, u) = state(
            ModelKind::LorentzProduct,
            Topology::Torus2,
            16,
            StencilOrder::Four,
            |_| 0.0,
        );
        assert!(lorentz_graph_h_crosscheck(&model, &u).unwrap() < 1e-12);

        let (model, u) = state(
            ModelKind::FlrwCollapse { t_final: 2.0 },
            Topology::Torus2,
            16,
            StencilOrder::Four,
            |_| 1.3,
        );
        assert!(lorentz_graph_h_crosscheck(&model, &u).unwrap() < 1e-10);
    }

    #[test]
    fn h_crosscheck_converges_at_stencil_order() {
        let dev = |res: usize| {
            let (model, u) = state(
                ModelKind::FlrwCollapse { t_final: 2.0 },
                Topology::Circle,
                res,
                StencilOrder::Four,
                |c| 1.0 + 0.1 * c[0].sin(),
            );
            lorentz_graph_h_crosscheck(&model, &u).unwrap()
        };
        let d128 = dev(128);
        let d256 = dev(256);
        assert!(d128 < 1e-6, "dev(128) = {d128:e}");
        let ratio = d128 / d256;
        assert!(ratio > 8.0, "refinement ratio {ratio}");
    }

    #[test]
    fn riemannian_crosscheck_rejected() {
        let (model, u) = state(
            ModelKind::EuclideanPolar,
            Topology::Circle,
            64,
            StencilOrder::Four,
            |_| 1.0,
        );
        assert!(matches!(
            lorentz_graph_h_crosscheck(&model, &u),
            Err(GeomError::WrongSignature)
        ));
    }
}
