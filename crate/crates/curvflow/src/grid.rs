//! Discretization of the compact base manifold and the discrete
//! differential/integral calculus used by all geometric computations.
//!
//! Three base topologies are supported: `circle` (uniform periodic grid on
//! [0, 2π), n = 1), `torus2` (uniform periodic product grid, n = 2), and
//! `sphere-axisym` (cell-centered grid on the polar angle θ ∈ (0, π) with
//! nodes θ_k = (k + ½)π/K and no node at either pole; the azimuthal
//! direction is implicit, so the base dimension is 2 while storage has a
//! single axis and fields must be rotationally symmetric).
//!
//! Derivatives are central finite differences of order 2 or 4 with periodic
//! wraparound; the axisymmetric grid uses even ghost reflection across both
//! poles, which is exact for smooth rotationally symmetric scalars.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("resolution {0} too small (minimum 8 per axis)")]
    BadResolution(usize),
    #[error("metric not positive definite at node {0}")]
    DegenerateMetric(usize),
    #[error("field length {found} does not match node count {expected}")]
    LengthMismatch { found: usize, expected: usize },
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Circle,
    Torus2,
    SphereAxisym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilOrder {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "4")]
    Four,
}

impl StencilOrder {
    pub fn as_u32(self) -> u32 {
        match self {
            StencilOrder::Two => 2,
            StencilOrder::Four => 4,
        }
    }

    /// Sharp bound on the second-difference symbol: max_k |D2(e^{ikx})| · h².
    /// 4 for the 3-point stencil, 16/3 for the 5-point fourth-order stencil.
    pub fn second_diff_symbol_max(self) -> f64 {
        match self {
            StencilOrder::Two => 4.0,
            StencilOrder::Four => 16.0 / 3.0,
        }
    }
}

/// Discretized compact base manifold S₀.
#[derive(Debug, Clone)]
pub struct BaseGrid {
    topology: Topology,
    /// Nodes per storage axis; `res[1] == 1` for single-axis topologies.
    res: [usize; 2],
    /// Spacing per storage axis.
    h: [f64; 2],
    order: StencilOrder,
}

/// Default stencil order: 4 on fully periodic grids, 2 on the axisymmetric
/// grid (ghost reflection near the poles is only second-order clean).
pub fn default_order(topology: Topology) -> StencilOrder {
    match topology {
        Topology::Circle | Topology::Torus2 => StencilOrder::Four,
        Topology::SphereAxisym => StencilOrder::Two,
    }
}

pub fn make_grid(
    topology: Topology,
    resolution: [usize; 2],
    order: StencilOrder,
) -> Result<BaseGrid, GridError> {
    let res = match topology {
        Topology::Circle | Topology::SphereAxisym => [resolution[0], 1],
        Topology::Torus2 => resolution,
    };
    if res[0] < 8 {
        return Err(GridError::BadResolution(res[0]));
    }
    if topology == Topology::Torus2 && res[1] < 8 {
        return Err(GridError::BadResolution(res[1]));
    }
    let h = match topology {
        Topology::Circle => [TWO_PI / res[0] as f64, 0.0],
        Topology::Torus2 => [TWO_PI / res[0] as f64, TWO_PI / res[1] as f64],
        Topology::SphereAxisym => [std::f64::consts::PI / res[0] as f64, 0.0],
    };
    Ok(BaseGrid {
        topology,
        res,
        h,
        order,
    })
}

impl BaseGrid {
    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    pub fn resolution(&self) -> [usize; 2] {
        self.res
    }

    pub fn node_count(&self) -> usize {
        self.res[0] * self.res[1]
    }

    /// Dimension n of the base manifold (the azimuthal direction of the
    /// axisymmetric sphere counts even though it is not stored).
    pub fn base_dim(&self) -> usize {
        match self.topology {
            Topology::Circle => 1,
            Topology::Torus2 | Topology::SphereAxisym => 2,
        }
    }

    /// Number of stored coordinate axes (along which finite differences run).
    pub fn storage_axes(&self) -> usize {
        match self.topology {
            Topology::Torus2 => 2,
            _ => 1,
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.storage_axes())
            .map(|a| self.h[a])
            .fold(f64::INFINITY, f64::min)
    }

    /// Base coordinates of a node. Axis 1 is zero for single-axis grids
    /// (the azimuthal angle of the axisymmetric sphere is symmetric).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        match self.topology {
            Topology::Circle => [idx as f64 * self.h[0], 0.0],
            Topology::Torus2 => {
                let i0 = idx / self.res[1];
                let i1 = idx % self.res[1];
                [i0 as f64 * self.h[0], i1 as f64 * self.h[1]]
            }
            Topology::SphereAxisym => [(idx as f64 + 0.5) * self.h[0], 0.0],
        }
    }

    /// Measure of the unstored symmetric direction: 2π for the axisymmetric
    /// sphere (the azimuthal circle), 1 otherwise. Volume integrals over the
    /// full base manifold carry this factor.
    pub fn transverse_measure(&self) -> f64 {
        match self.topology {
            Topology::SphereAxisym => TWO_PI,
            _ => 1.0,
        }
    }

    fn line_len(&self, axis: usize) -> usize {
        self.res[axis]
    }

    /// Line position of the neighbor at offset within one axis, with
    /// periodic wrap or even pole reflection.
    fn line_neighbor(&self, i: isize, len: isize) -> usize {
        match self.topology {
            Topology::Circle | Topology::Torus2 => (i.rem_euclid(len)) as usize,
            Topology::SphereAxisym => {
                let j = if i < 0 {
                    -i - 1
                } else if i >= len {
                    2 * len - 1 - i
                } else {
                    i
                };
                j as usize
            }
        }
    }

    fn node_at(&self, axis: usize, idx: usize, off: isize) -> usize {
        let len = self.line_len(axis) as isize;
        match self.topology {
            Topology::Torus2 => {
                let i0 = (idx / self.res[1]) as isize;
                let i1 = (idx % self.res[1]) as isize;
                if axis == 0 {
                    self.line_neighbor(i0 + off, len) * self.res[1] + i1 as usize
                } else {
                    i0 as usize * self.res[1] + self.line_neighbor(i1 + off, len)
                }
            }
            _ => self.line_neighbor(idx as isize + off, len),
        }
    }

    /// Central finite difference along `axis`; `deriv_order` is 1 or 2.
    pub fn derivative(&self, f: &[f64], axis: usize, deriv_order: u8) -> Vec<f64> {
        assert!(
            axis < self.storage_axes(),
            "axis {axis} invalid for topology"
        );
        assert!(deriv_order == 1 || deriv_order == 2);
        let n = self.node_count();
        assert_eq!(f.len(), n);
        let h = self.h[axis];
        let mut out = vec![0.0; n];
        match (self.order, deriv_order) {
            (StencilOrder::Two, 1) => {
                let w = 1.0 / (2.0 * h);
                for idx in 0..n {
                    let fp = f[self.node_at(axis, idx, 1)];
                    let fm = f[self.node_at(axis, idx, -1)];
                    out[idx] = (fp - fm) * w;
                }
            }
            (StencilOrder::Two, 2) => {
                let w = 1.0 / (h * h);
                for idx in 0..n {
                    let fp = f[self.node_at(axis, idx, 1)];
                    let fm = f[self.node_at(axis, idx, -1)];
                    out[idx] = (fp - 2.0 * f[idx] + fm) * w;
                }
            }
            (StencilOrder::Four, 1) => {
                let w = 1.0 / (12.0 * h);
                for idx in 0..n {
                    let fp1 = f[self.node_at(axis, idx, 1)];
                    let fm1 = f[self.node_at(axis, idx, -1)];
                    let fp2 = f[self.node_at(axis, idx, 2)];
                    let fm2 = f[self.node_at(axis, idx, -2)];
                    out[idx] = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) * w;
                }
            }
            (StencilOrder::Four, 2) => {
                let w = 1.0 / (12.0 * h * h);
                for idx in 0..n {
                    let fp1 = f[self.node_at(axis, idx, 1)];
                    let fm1 = f[self.node_at(axis, idx, -1)];
                    let fp2 = f[self.node_at(axis, idx, 2)];
                    let fm2 = f[self.node_at(axis, idx, -2)];
                    out[idx] = (-fp2 + 16.0 * fp1 - 30.0 * f[idx] + 16.0 * fm1 - fm2) * w;
                }
            }
            _ => unreachable!("deriv_order checked above"),
        }
        out
    }

    /// Mixed second derivative ∂²f/∂x⁰∂x¹ (torus only), composed axis by axis.
    pub fn derivative_mixed(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(self.storage_axes(), 2, "mixed derivative needs two axes");
        let d0 = self.derivative(f, 0, 1);
        self.derivative(&d0, 1, 1)
    }

    /// Divergence-form Laplace–Beltrami operator
    /// Δf = (1/√g) ∂_i(√g g^{ij} ∂_j f).
    ///
    /// `metric` holds the induced metric per node as [g00, g01, g11]
    /// (only g00 acts along the stored axis of single-axis grids; for the
    /// axisymmetric sphere the azimuthal block enters through `sqrt_det_g`).
    /// Exactly annihilates constants and is self-adjoint under the
    /// √g-weighted inner product on periodic grids.
    pub fn laplace_beltrami(
        &self,
        f: &[f64],
        metric: &[[f64; 3]],
        sqrt_det_g: &[f64],
    ) -> Result<Vec<f64>, GridError> {
        let n = self.node_count();
        assert_eq!(f.len(), n);
        assert_eq!(metric.len(), n);
        assert_eq!(sqrt_det_g.len(), n);
        let axes = self.storage_axes();

        let mut ginv = vec![[0.0f64; 3]; n];
        for idx in 0..n {
            let [a, b, c] = metric[idx];
            if axes == 1 {
                if a <= 0.0 {
                    return Err(GridError::DegenerateMetric(idx));
                }
                ginv[idx] = [1.0 / a, 0.0, 0.0];
            } else {
                let det = a * c - b * b;
                if a <= 0.0 || det <= 0.0 {
                    return Err(GridError::DegenerateMetric(idx));
                }
                ginv[idx] = [c / det, -b / det, a / det];
            }
        }

        let mut grads = Vec::with_capacity(axes);
        for axis in 0..axes {
            grads.push(self.derivative(f, axis, 1));
        }

        let mut result = vec![0.0; n];
        for axis in 0..axes {
            let mut flux = vec![0.0; n];
            for idx in 0..n {
                let gi = ginv[idx];
                let contr = if axes == 1 {
                    gi[0] * grads[0][idx]
                } else if axis == 0 {
                    gi[0] * grads[0][idx] + gi[1] * grads[1][idx]
                } else {
                    gi[1] * grads[0][idx] + gi[2] * grads[1][idx]
                };
                flux[idx] = sqrt_det_g[idx] * contr;
            }
            let div = self.derivative(&flux, axis, 1);
            for idx in 0..n {
                result[idx] += div[idx];
            }
        }
        for idx in 0..n {
            result[idx] /= sqrt_det_g[idx];
        }
        Ok(result)
    }

    /// Trapezoidal/midpoint quadrature h₁h₂ Σ density. Spectrally accurate
    /// for smooth periodic data; O(h²) midpoint rule on the axisymmetric
    /// grid. No symmetry factor is applied (see `transverse_measure`).
    pub fn integrate(&self, density: &[f64]) -> f64 {
        assert_eq!(density.len(), self.node_count());
        let cell = match self.topology {
            Topology::Torus2 => self.h[0] * self.h[1],
            _ => self.h[0],
        };
        let sum: f64 = density.iter().sum();
        sum * cell
    }
}

/// Real scalar field over a grid.
#[derive(Debug, Clone)]
pub struct Field {
    values: Vec<f64>,
    grid: Arc<BaseGrid>,
}

impl Field {
    pub fn new(grid: Arc<BaseGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::LengthMismatch {
                found: values.len(),
                expected: grid.node_count(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Field { values, grid })
    }

    pub fn constant(grid: Arc<BaseGrid>, value: f64) -> Self {
        let n = grid.node_count();
        Field {
            values: vec![value; n],
            grid,
        }
    }

    /// Build a field from a function of the node coordinates.
    pub fn from_fn(grid: Arc<BaseGrid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.node_count()).map(|i| f(grid.coords(i))).collect();
        Field::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> &Arc<BaseGrid> {
        &self.grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle(n: usize, order: StencilOrder) -> BaseGrid {
        make_grid(Topology::Circle, [n, 1], order).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let g = circle(64, StencilOrder::Four);
        assert_eq!(g.node_count(), 64);
        assert!((g.spacing(0) - TWO_PI / 64.0).abs() < 1e-15);

        let t = make_grid(Topology::Torus2, [32, 32], StencilOrder::Two).unwrap();
        assert_eq!(t.node_count(), 1024);

        let s = make_grid(Topology::SphereAxisym, [64, 1], StencilOrder::Two).unwrap();
        assert_eq!(s.node_count(), 64);
        let th0 = s.coords(0)[0];
        assert!((th0 - 0.5 * std::f64::consts::PI / 64.0).abs() < 1e-15);
        assert!(th0 > 0.0);
        assert!(s.coords(63)[0] < std::f64::consts::PI);
        assert_eq!(s.base_dim(), 2);
        assert_eq!(s.storage_axes(), 1);
    }

    #[test]
    fn bad_resolution_rejected() {
        assert_eq!(
            make_grid(Topology::Circle, [4, 1], StencilOrder::Two).unwrap_err(),
            GridError::BadResolution(4)
        );
        assert_eq!(
            make_grid(Topology::Torus2, [16, 6], StencilOrder::Two).unwrap_err(),
            GridError::BadResolution(6)
        );
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        for topo in [Topology::Circle, Topology::SphereAxisym] {
            let g = make_grid(topo, [32, 1], StencilOrder::Four).unwrap();
            let f = vec![3.25; g.node_count()];
            for d in [1u8, 2] {
                assert!(g.derivative(&f, 0, d).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn derivative_sin_matches_cos() {
        let g = circle(256, StencilOrder::Four);
        let f: Vec<f64> = (0..256).map(|i| g.coords(i)[0].sin()).collect();
        let df = g.derivative(&f, 0, 1);
        // leading error of the 5-point stencil: h⁴|f⁽⁵⁾|/30 ≈ 1.204e-8 here
        let err = (0..256)
            .map(|i| (df[i] - g.coords(i)[0].cos()).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1.3e-8, "err = {err:e}");
    }

    fn max_d1_error(n: usize, order: StencilOrder) -> f64 {
        let g = circle(n, order);
        let f: Vec<f64> = (0..n).map(|i| (2.0 * g.coords(i)[0]).sin()).collect();
        let df = g.derivative(&f, 0, 1);
        (0..n)
            .map(|i| (df[i] - 2.0 * (2.0 * g.coords(i)[0]).cos()).abs())
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn derivative_converges_at_stencil_order() {
        for order in [StencilOrder::Two, StencilOrder::Four] {
            let e64 = max_d1_error(64, order);
            let e128 = max_d1_error(128, order);
            let ratio = e64 / e128;
            let expect = (2.0f64).powi(order.as_u32() as i32);
            assert!(
                (ratio - expect).abs() < 0.15 * expect,
                "order {:?}: ratio {ratio} vs {expect}",
                order
            );
        }
    }

    #[test]
    fn discrete_leibniz_rule_converges() {
        let err_at = |n: usize| {
            let g = circle(n, StencilOrder::Two);
            let f: Vec<f64> = (0..n).map(|i| g.coords(i)[0].sin()).collect();
            let w: Vec<f64> = (0..n).map(|i| (3.0 * g.coords(i)[0]).cos()).collect();
            let fw: Vec<f64> = (0..n).map(|i| f[i] * w[i]).collect();
            let dfw = g.derivative(&fw, 0, 1);
            let df = g.derivative(&f, 0, 1);
            let dw = g.derivative(&w, 0, 1);
            (0..n)
                .map(|i| (dfw[i] - f[i] * dw[i] - w[i] * df[i]).abs())
                .fold(0.0f64, f64::max)
        };
        let ratio = err_at(64) / err_at(128);
        assert!((ratio - 4.0).abs() < 0.6, "ratio = {ratio}");
    }

    #[test]
    fn laplace_beltrami_annihilates_constants() {
        let g = circle(64, StencilOrder::Four);
        let n = g.node_count();
        let metric: Vec<[f64; 3]> = (0..n)
            .map(|i| [1.5 + 0.3 * g.coords(i)[0].sin(), 0.0, 0.0])
            .collect();
        let sqrt_det: Vec<f64> = metric.iter().map(|m| m[0].sqrt()).collect();
        let f = vec![7.0; n];
        let lap = g.laplace_beltrami(&f, &metric, &sqrt_det).unwrap();
        assert!(lap.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn laplace_circle_eigenfunction() {
        let g = circle(256, StencilOrder::Four);
        let n = g.node_count();
        let metric = vec![[1.0, 0.0, 0.0]; n];
        let sqrt_det = vec![1.0; n];
        let f: Vec<f64> = (0..n).map(|i| g.coords(i)[0].sin()).collect();
        let lap = g.laplace_beltrami(&f, &metric, &sqrt_det).unwrap();
        let err = (0..n).map(|i| (lap[i] + f[i]).abs()).fold(0.0f64, f64::max);
        assert!(err < 1e-7, "err = {err:e}");
    }

    #[test]
    fn laplace_torus_eigenfunction() {
        let g = make_grid(Topology::Torus2, [64, 64], StencilOrder::Four).unwrap();
        let n = g.node_count();
        let metric = vec![[1.0, 0.0, 1.0]; n];
        let sqrt_det = vec![1.0; n];
        let f: Vec<f64> = (0..n)
            .map(|i| {
                let c = g.coords(i);
                c[0].sin() * c[1].sin()
            })
            .collect();
        let lap = g.laplace_beltrami(&f, &metric, &sqrt_det).unwrap();
        let err = (0..n)
            .map(|i| (lap[i] + 2.0 * f[i]).abs())
            .fold(0.0f64, f64::max)
            / 2.0;
        assert!(err < 1e-5, "relative err = {err:e}");
    }

    #[test]
    fn laplace_axisym_sphere_eigenfunction() {
        // unit round sphere: Δ cosθ = -2 cosθ
        let g = make_grid(Topology::SphereAxisym, [256, 1], StencilOrder::Two).unwrap();
        let n = g.node_count();
        let metric: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let th = g.coords(i)[0];
                [1.0, 0.0, th.sin().powi(2)]
            })
            .collect();
        let sqrt_det: Vec<f64> = (0..n).map(|i| g.coords(i)[0].sin()).collect();
        let f: Vec<f64> = (0..n).map(|i| g.coords(i)[0].cos()).collect();
        let lap = g.laplace_beltrami(&f, &metric, &sqrt_det).unwrap();
        let err = (0..n)
            .map(|i| (lap[i] + 2.0 * f[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 2e-3, "err = {err:e}");
    }

    #[test]
    fn degenerate_metric_reported() {
        let g = circle(32, StencilOrder::Two);
        let n = g.node_count();
        let mut metric = vec![[1.0, 0.0, 0.0]; n];
        metric[5][0] = -1.0;
        let sq = vec![1.0; n];
        let f = vec![0.0; n];
        assert_eq!(
            g.laplace_beltrami(&f, &metric, &sq).unwrap_err(),
            GridError::DegenerateMetric(5)
        );
    }

    #[test]
    fn integrate_examples() {
        let g = circle(64, StencilOrder::Four);
        let one = vec![1.0; 64];
        assert!((g.integrate(&one) - TWO_PI).abs() < 1e-12);

        let t = make_grid(Topology::Torus2, [32, 32], StencilOrder::Two).unwrap();
        let one = vec![1.0; 1024];
        assert!((t.integrate(&one) - TWO_PI * TWO_PI).abs() < 1e-12);

        let s = make_grid(Topology::SphereAxisym, [128, 1], StencilOrder::Two).unwrap();
        let f: Vec<f64> = (0..128).map(|i| s.coords(i)[0].sin()).collect();
        let v = s.integrate(&f);
        assert!((v - 2.0).abs() < 1e-4, "∫sinθ = {v}");
        let s2 = make_grid(Topology::SphereAxisym, [256, 1], StencilOrder::Two).unwrap();
        let f2: Vec<f64> = (0..256).map(|i| s2.coords(i)[0].sin()).collect();
        let v2 = s2.integrate(&f2);
        let ratio = (v - 2.0).abs() / (v2 - 2.0).abs();
        assert!((ratio - 4.0).abs() < 0.5, "ratio = {ratio}");
    }

    #[test]
    fn summation_by_parts_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = make_grid(Topology::Torus2, [32, 32], StencilOrder::Four).unwrap();
        let n = g.node_count();
        let smooth = |rng: &mut ChaCha8Rng, grid: &BaseGrid| -> Vec<f64> {
            let a: [f64; 4] = rng.gen();
            (0..grid.node_count())
                .map(|i| {
                    let c = grid.coords(i);
                    a[0] * c[0].sin()
                        + a[1] * (2.0 * c[1]).cos()
                        + a[2] * (c[0] + c[1]).sin()
                        + a[3]
                })
                .collect()
        };
        for _ in 0..5 {
            let f = smooth(&mut rng, &g);
            let w = smooth(&mut rng, &g);
            let metric: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let c = g.coords(i);
                    let e = 1.0 + 0.2 * c[0].sin() * c[1].cos();
                    [e, 0.1 * c[1].sin(), e + 0.3]
                })
                .collect();
            let sqrt_det: Vec<f64> = metric
                .iter()
                .map(|m| (m[0] * m[2] - m[1] * m[1]).sqrt())
                .collect();
            let lf = g.laplace_beltrami(&f, &metric, &sqrt_det).unwrap();
            let lw = g.laplace_beltrami(&w, &metric, &sqrt_det).unwrap();
            let a: f64 = (0..n).map(|i| f[i] * lw[i] * sqrt_det[i]).sum::<f64>();
            let b: f64 = (0..n).map(|i| w[i] * lf[i] * sqrt_det[i]).sum::<f64>();
            let scale = a.abs().max(b.abs()).max(1.0);
            assert!(
                ((a - b) / scale).abs() < 1e-10,
                "asym = {:e}",
                (a - b) / scale
            );
        }
    }

    #[test]
    fn field_validation() {
        let g = Arc::new(circle(32, StencilOrder::Two));
        assert!(Field::new(g.clone(), vec![0.0; 31]).is_err());
        let mut v = vec![0.0; 32];
        v[3] = f64::NAN;
        assert!(matches!(
            Field::new(g.clone(), v),
            Err(GridError::NonFinite(3))
        ));
        assert!(Field::new(g, vec![0.0; 32]).is_ok());
    }
}
