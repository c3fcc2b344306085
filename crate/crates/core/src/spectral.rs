//! Symmetric eigendecomposition and eigenvalue backpropagation.
//!
//! The forward pass is a cyclic Jacobi solver: at the graph sizes used here
//! (tens of nodes) it is fast enough, fully deterministic and accurate to a
//! few ulps of the matrix norm.
//!
//! For a loss that depends on the eigenvalues only, the gradient with respect
//! to the matrix is `sum_k (dL/dlambda_k) v_k v_k^T`. At repeated eigenvalues
//! the same expression is used with whatever basis the solver returned.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Edge, WeightedLaplacian};

const MAX_SWEEPS: usize = 60;

/// Ascending eigenvalues; column `k` of `eigenvectors` pairs with eigenvalue `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn eigh(l: &WeightedLaplacian) -> Result<Spectrum> {
    eigh_symmetric(l.matrix())
}

/// Eigendecomposition of a symmetric matrix. Only the upper triangle is read.
pub fn eigh_symmetric(a: &DMatrix<f64>) -> Result<Spectrum> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
        });
    }
    // row-major working copy
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = a[(i.min(j), i.max(j))];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    let mut converged = n <= 1;
    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q].abs())
            .sum();
        if off == 0.0 {
            converged = true;
            break;
        }
        let threshold = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[p * n + q] = 0.0;
                let rotate = |m: &mut [f64], x: usize, y: usize| {
                    let (g, h) = (m[x], m[y]);
                    m[x] = g - s * (h + g * tau);
                    m[y] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rotate(&mut m, j * n + p, j * n + q);
                }
                for j in p + 1..q {
                    rotate(&mut m, p * n + j, j * n + q);
                }
                for j in q + 1..n {
                    rotate(&mut m, p * n + j, q * n + j);
                }
                for j in 0..n {
                    rotate(&mut v, j * n + p, j * n + q);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if !converged {
        let worst = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q].abs())
            .fold(0.0, f64::max);
        return Err(Error::NoConvergence {
            sweeps: MAX_SWEEPS,
            worst_off_diagonal: worst,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]).then(x.cmp(&y)));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, k| v[i * n + order[k]]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `dL/dM = sum_k g_k v_k v_k^T`, assembled symmetric.
pub fn loss_grad_wrt_laplacian(s: &Spectrum, g: &[f64]) -> Result<DMatrix<f64>> {
    let n = s.n();
    check_grad(n, g)?;
    let v = &s.eigenvectors;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x: f64 = (0..n).map(|k| g[k] * v[(i, k)] * v[(j, k)]).sum();
            out[(i, j)] = x;
            out[(j, i)] = x;
        }
    }
    Ok(out)
}

/// Per-edge gradient `dL/dw_ij = sum_k g_k (v_ki - v_kj)^2`.
///
/// This is `G_ii + G_jj - 2 G_ij` for `G = loss_grad_wrt_laplacian(s, g)`,
/// evaluated in `O(|E| n)` instead of forming `G`.
pub fn edge_weight_grads(s: &Spectrum, g: &[f64], edges: &[Edge]) -> Result<Vec<f64>> {
    let n = s.n();
    check_grad(n, g)?;
    let v = &s.eigenvectors;
    Ok(edges
        .iter()
        .map(|e| {
            (0..n)
                .map(|k| {
                    let diff = v[(e.i, k)] - v[(e.j, k)];
                    g[k] * diff * diff
                })
                .sum()
        })
        .collect())
}

fn check_grad(n: usize, g: &[f64]) -> Result<()> {
    if g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: g.len(),
        });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("non-finite eigenvalue gradient".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, AttributedGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    fn residual_ok(a: &DMatrix<f64>, s: &Spectrum, tol: f64) {
        let fro = a.norm();
        let v = &s.eigenvectors;
        for k in 0..s.n() {
            let col = v.column(k);
            let r = a * col - col * s.eigenvalues[k];
            assert!(r.norm() <= tol * fro, "residual {} for k={k}", r.norm());
        }
        let gram = v.transpose() * v - DMatrix::identity(s.n(), s.n());
        assert!(gram.norm() <= tol);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = eigh_symmetric(&a).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        // columns are the axes 1, 2, 0
        for (k, axis) in [1, 2, 0].into_iter().enumerate() {
            assert_eq!(s.eigenvectors[(axis, k)].abs(), 1.0);
        }
    }

    #[test]
    fn two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let s = eigh_symmetric(&a).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((s.eigenvalues[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_spectrum() {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]];
        let edges = [(0, 1), (1, 2), (0, 2)]
            .into_iter()
            .map(|(i, j)| Edge {
                i,
                j,
                attr: [1.0, 0.0, 1.0],
            })
            .collect();
        let g = AttributedGraph::new(pos, edges, 0, "tri").unwrap();
        let l = build_laplacian(&g, &[1.0; 3]).unwrap();
        for i in 0..3 {
            assert_eq!(l.matrix()[(i, i)], 2.0);
        }
        let s = eigh(&l).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([0.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    /// Real roots of the monic cubic `x^3 + a x^2 + b x + c` with three real
    /// roots, via the trigonometric method.
    fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let r = 2.0 * (-p / 3.0).sqrt();
        let phi = (3.0 * q / (p * r)).clamp(-1.0, 1.0).acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - a / 3.0;
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn weighted_path_matches_characteristic_cubic() {
        // path 0-1-2 with weights 2, 3: L = [[2,-2,0],[-2,5,-3],[0,-3,3]]
        // det(xI - L) = x^3 - 10 x^2 + 18 x
        let roots = cubic_roots(-10.0, 18.0, 0.0);
        let l = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -2.0, 5.0, -3.0, 0.0, -3.0, 3.0]);
        let s = eigh_symmetric(&l).unwrap();
        for (got, want) in s.eigenvalues.iter().zip(roots) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // x^2 - 10x + 18 has roots 5 -+ sqrt(7)
        assert!((s.eigenvalues[1] - (5.0 - 7f64.sqrt())).abs() < 1e-12);
        assert!((s.eigenvalues[2] - (5.0 + 7f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn random_64_residuals() {
        let a = random_symmetric(64, 11);
        let s = eigh_symmetric(&a).unwrap();
        residual_ok(&a, &s, 1e-9);
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum - a.trace()).abs() <= 1e-9 * a.trace().abs().max(1.0));
    }

    #[test]
    fn deterministic() {
        let a = random_symmetric(20, 5);
        assert_eq!(eigh_symmetric(&a).unwrap(), eigh_symmetric(&a).unwrap());
    }

    #[test]
    fn gradient_of_zero_and_ones() {
        let a = random_symmetric(6, 2);
        let s = eigh_symmetric(&a).unwrap();
        let zero = loss_grad_wrt_laplacian(&s, &[0.0; 6]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let eye = loss_grad_wrt_laplacian(&s, &[1.0; 6]).unwrap();
        assert!((eye - DMatrix::<f64>::identity(6, 6)).norm() < 1e-13);
        assert!(loss_grad_wrt_laplacian(&s, &[1.0; 5]).is_err());
    }

    fn random_graph(n: usize, seed: u64) -> (AttributedGraph, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || rng.gen_bool(0.4) {
                    edges.push(Edge {
                        i,
                        j,
                        attr: [1.0, 0.0, 1.0],
                    });
                }
            }
        }
        let w = (0..edges.len()).map(|_| rng.gen_range(0.2..2.0)).collect();
        (
            AttributedGraph::new(vec![[0.0, 0.0]; n], edges, 0, "r").unwrap(),
            w,
        )
    }

    #[test]
    fn sum_of_squares_gradient_matches_finite_differences() {
        let (g, w) = random_graph(8, 3);
        let loss = |w: &[f64]| -> f64 {
            let s = eigh(&build_laplacian(&g, w).unwrap()).unwrap();
            s.eigenvalues.iter().map(|l| l * l).sum()
        };
        let s = eigh(&build_laplacian(&g, &w).unwrap()).unwrap();
        let dl: Vec<f64> = s.eigenvalues.iter().map(|l| 2.0 * l).collect();
        let grads = edge_weight_grads(&s, &dl, g.edges()).unwrap();
        let full = loss_grad_wrt_laplacian(&s, &dl).unwrap();
        for (k, e) in g.edges().iter().enumerate() {
            let via_matrix = full[(e.i, e.i)] + full[(e.j, e.j)] - 2.0 * full[(e.i, e.j)];
            assert!((via_matrix - grads[k]).abs() < 1e-12);
            let h = 1e-6 * w[k].abs().max(1.0);
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
            let rel = (fd - grads[k]).abs() / grads[k].abs().max(fd.abs());
            assert!(rel <= 1e-5, "edge {k}: analytic {} fd {fd}", grads[k]);
        }
    }

    #[test]
    fn permutation_leaves_eigenvalues() {
        let (g, w) = random_graph(10, 9);
        let perm = [3, 7, 0, 9, 1, 4, 8, 2, 6, 5];
        let s1 = eigh(&build_laplacian(&g, &w).unwrap()).unwrap();
        let s2 = eigh(&build_laplacian(&g.permuted(&perm).unwrap(), &w).unwrap()).unwrap();
        for (a, b) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}
