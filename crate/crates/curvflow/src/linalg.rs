//! Small dense symmetric linear algebra for dimension ≤ 4: Jacobi
//! eigenvalues, Cholesky factors, and the generalized symmetric
//! eigenproblem used by the convexity certificate. Everything here is
//! allocation-light and deterministic.

/// Eigenvalues of a symmetric d×d matrix (d ≤ 4) by cyclic Jacobi
/// rotations, returned ascending.
pub fn sym_eigenvalues(m: &[[f64; 4]; 4], d: usize) -> [f64; 4] {
    let mut a = *m;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev = [0.0; 4];
    for i in 0..d {
        ev[i] = a[i][i];
    }
    ev[..d].sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Cholesky factor L (lower) of a symmetric positive definite d×d matrix.
/// Returns None when the matrix is not positive definite.
pub fn cholesky(m: &[[f64; 4]; 4], d: usize) -> Option<[[f64; 4]; 4]> {
    let mut l = [[0.0f64; 4]; 4];
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Smallest eigenvalue of the pencil (A, B) with B symmetric positive
/// definite: eigenvalues of L⁻¹ A L⁻ᵀ where B = LLᵀ. Returns None when B
/// is not positive definite.
pub fn min_generalized_eigenvalue(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4], d: usize) -> Option<f64> {
    let l = cholesky(b, d)?;
    // forward-substitute on columns, then on rows: C = L⁻¹ A L⁻ᵀ
    let mut w = [[0.0f64; 4]; 4];
    for j in 0..d {
        for i in 0..d {
            let mut s = a[i][j];
            for k in 0..i {
                s -= l[i][k] * w[k][j];
            }
            w[i][j] = s / l[i][i];
        }
    }
    let mut c = [[0.0f64; 4]; 4];
    for i in 0..d {
        for j in 0..d {
            let mut s = w[i][j];
            for k in 0..j {
                s -= l[j][k] * c[i][k];
            }
            c[i][j] = s / l[j][j];
        }
    }
    // symmetrize against roundoff
    for i in 0..d {
        for j in (i + 1)..d {
            let m = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = m;
            c[j][i] = m;
        }
    }
    Some(sym_eigenvalues(&c, d)[0])
}

/// Eigenvalues of the 2×2 generalized symmetric pencil (h, g) with g
/// positive definite, via the quadratic formula on det(h − κ g) = 0,
/// sorted ascending.
pub fn generalized_eig2(h: &[[f64; 2]; 2], g: &[[f64; 2]; 2]) -> [f64; 2] {
    let det_g = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    // shape operator S = g⁻¹ h
    let s00 = (g[1][1] * h[0][0] - g[0][1] * h[1][0]) / det_g;
    let s01 = (g[1][1] * h[0][1] - g[0][1] * h[1][1]) / det_g;
    let s10 = (-g[1][0] * h[0][0] + g[0][0] * h[1][0]) / det_g;
    let s11 = (-g[1][0] * h[0][1] + g[0][0] * h[1][1]) / det_g;
    let tr = s00 + s11;
    // tr² − 4 det rewritten cancellation-free; S01·S10 ≥ 0 for a
    // g-symmetrizable pencil
    let disc = ((s00 - s11) * (s00 - s11) + 4.0 * s01 * s10)
        .max(0.0)
        .sqrt();
    let k1 = 0.5 * (tr - disc);
    let k2 = 0.5 * (tr + disc);
    [k1, k2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 2.0;
        m[0][1] = 1.0;
        m[1][0] = 1.0;
        m[1][1] = 2.0;
        let ev = sym_eigenvalues(&m, 2);
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_eig2_examples() {
        // g = I, h = diag(1,2) -> (1,2)
        let g = [[1.0, 0.0], [0.0, 1.0]];
        let h = [[1.0, 0.0], [0.0, 2.0]];
        let k = generalized_eig2(&h, &g);
        assert!((k[0] - 1.0).abs() < 1e-14 && (k[1] - 2.0).abs() < 1e-14);
        // g = diag(4,1), h = diag(4,3) -> (1,3)
        let g = [[4.0, 0.0], [0.0, 1.0]];
        let h = [[4.0, 0.0], [0.0, 3.0]];
        let k = generalized_eig2(&h, &g);
        assert!((k[0] - 1.0).abs() < 1e-14 && (k[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn generalized_eig2_matches_dense_oracle() {
        // oracle: eigenvalues of L⁻¹ h L⁻ᵀ via Jacobi, g = LLᵀ
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.5..3.0);
            let c: f64 = rng.gen_range(0.5..3.0);
            let b: f64 = rng.gen_range(-0.4..0.4) * (a * c).sqrt();
            let g = [[a, b], [b, c]];
            let h00: f64 = rng.gen_range(-2.0..2.0);
            let h11: f64 = rng.gen_range(-2.0..2.0);
            let h01: f64 = rng.gen_range(-2.0..2.0);
            let h = [[h00, h01], [h01, h11]];
            let fast = generalized_eig2(&h, &g);

            let mut g4 = [[0.0; 4]; 4];
            let mut h4 = [[0.0; 4]; 4];
            for i in 0..2 {
                for j in 0..2 {
                    g4[i][j] = g[i][j];
                    h4[i][j] = h[i][j];
                }
            }
            let l = cholesky(&g4, 2).unwrap();
            // C = L⁻¹ H L⁻ᵀ
            let mut w = [[0.0; 4]; 4];
            for j in 0..2 {
                for i in 0..2 {
                    let mut s = h4[i][j];
                    for k in 0..i {
                        s -= l[i][k] * w[k][j];
                    }
                    w[i][j] = s / l[i][i];
                }
            }
            let mut cmat = [[0.0; 4]; 4];
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = w[i][j];
                    for k in 0..j {
                        s -= l[j][k] * cmat[i][k];
                    }
                    cmat[i][j] = s / l[j][j];
                }
            }
            let ev = sym_eigenvalues(&cmat, 2);
            assert!(
                (fast[0] - ev[0]).abs() < 1e-10 && (fast[1] - ev[1]).abs() < 1e-10,
                "fast {fast:?} vs oracle {:?}",
                &ev[..2]
            );
        }
    }

    #[test]
    fn min_generalized_eigenvalue_detects_indefiniteness() {
        let mut a = [[0.0; 4]; 4];
        let mut b = [[0.0; 4]; 4];
        for i in 0..3 {
            a[i][i] = 1.0;
            b[i][i] = 1.0;
        }
        a[2][2] = -0.5;
        let min = min_generalized_eigenvalue(&a, &b, 3).unwrap();
        assert!((min + 0.5).abs() < 1e-12);
    }
}
