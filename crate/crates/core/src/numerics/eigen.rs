//! Nonsymmetric eigenvalues by balancing, Householder reduction to upper
//! Hessenberg form and the Francis double-shift QR iteration, followed by
//! real invariant-subspace bases for clusters of nearby eigenvalues.

use num_complex::Complex64;

use super::linalg::null_space;
use super::Matrix;
use crate::error::{Error, Result};

/// Largest matrix accepted by [`eigen_decompose`].
pub const MAX_DIMENSION: usize = 64;

/// A group of eigenvalues closer than the cluster tolerance (closed under
/// conjugation) with a real orthonormal basis of the corresponding
/// invariant subspace.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub eigenvalues: Vec<Complex64>,
    /// `n x k` matrix, `k` = number of eigenvalues in the cluster.
    pub basis: Matrix,
}

impl EigenCluster {
    pub fn multiplicity(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Mean of the cluster's eigenvalues (real because the cluster is closed
    /// under conjugation whenever it holds complex members).
    pub fn center(&self) -> Complex64 {
        let k = self.eigenvalues.len() as f64;
        self.eigenvalues.iter().sum::<Complex64>() / k
    }

    pub fn mean_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).sum::<f64>() / self.eigenvalues.len() as f64
    }

    pub fn is_real(&self) -> bool {
        self.eigenvalues.iter().all(|z| z.im == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// All eigenvalues with multiplicity, sorted by real part then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Clusters sorted by mean real part.
    pub clusters: Vec<EigenCluster>,
    /// Largest `‖M V - V (Vᵀ M V)‖_F` over the cluster bases.
    pub residual: f64,
}

/// Default cluster tolerance `1e-7 * (1 + spectral radius)`.
pub fn default_cluster_tol(eigenvalues: &[Complex64]) -> f64 {
    let rho = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    1e-7 * (1.0 + rho)
}

/// Eigenvalues and clustered real invariant subspaces of a square matrix of
/// dimension at most [`MAX_DIMENSION`].
///
/// Eigenvalues within `cluster_tol` of each other (single linkage) share a
/// cluster; a cluster holding a complex eigenvalue also absorbs its
/// conjugate so that its invariant subspace is real.
pub fn eigen_decompose(m: &Matrix, cluster_tol: f64) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "eigen_decompose needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() > MAX_DIMENSION {
        return Err(Error::invalid(format!(
            "matrix dimension {} exceeds {MAX_DIMENSION}",
            m.rows()
        )));
    }
    if !(cluster_tol >= 0.0) {
        return Err(Error::invalid("cluster tolerance must be nonnegative"));
    }
    let mut eigenvalues = eigenvalues(m)?;
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let groups = cluster_indices(&eigenvalues, cluster_tol);
    let scale = m.frobenius_norm().max(1.0);
    let mut clusters: Vec<EigenCluster> = groups
        .into_iter()
        .map(|idx| {
            let members: Vec<Complex64> = idx.iter().map(|&i| eigenvalues[i]).collect();
            let basis = invariant_basis(m, &members, scale);
            EigenCluster {
                eigenvalues: members,
                basis,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.mean_real_part()
            .total_cmp(&b.mean_real_part())
            .then(a.center().im.abs().total_cmp(&b.center().im.abs()))
    });

    let residual = clusters
        .iter()
        .map(|c| {
            let mv = m.matmul(&c.basis);
            let proj = c.basis.transpose().matmul(&mv);
            mv.sub(&c.basis.matmul(&proj)).frobenius_norm()
        })
        .fold(0.0, f64::max);

    Ok(EigenDecomposition {
        eigenvalues,
        clusters,
        residual,
    })
}

/// Eigenvalues with multiplicity (unsorted).
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    assert!(m.is_square());
    let mut a = m.clone();
    balance(&mut a);
    hessenberg(&mut a);
    hqr(&mut a)
}

fn cluster_indices(eigs: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() <= tol {
                union(&mut parent, i, j);
            }
        }
        if eigs[i].im != 0.0 {
            let conj = eigs[i].conj();
            let partner = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| (eigs[a] - conj).norm().total_cmp(&(eigs[b] - conj).norm()));
            if let Some(j) = partner {
                union(&mut parent, i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

/// Null space of the real polynomial `prod (M - λ)` over the cluster (complex
/// pairs contribute one real quadratic factor), with each factor scaled to
/// keep the product well within floating-point range.
pub(crate) fn invariant_basis(m: &Matrix, members: &[Complex64], scale: f64) -> Matrix {
    let n = m.rows();
    let k = members.len();
    if k == n {
        return Matrix::identity(n);
    }
    let mut poly = Matrix::identity(n);
    let ms = m.scale(1.0 / scale);
    let ms2 = ms.matmul(&ms);
    for z in members {
        if z.im == 0.0 {
            let factor = ms.sub(&Matrix::identity(n).scale(z.re / scale));
            poly = poly.matmul(&factor);
        } else if z.im > 0.0 {
            let factor = ms2
                .sub(&ms.scale(2.0 * z.re / scale))
                .add(&Matrix::identity(n).scale(z.norm_sqr() / (scale * scale)));
            poly = poly.matmul(&factor);
        }
        let norm = poly.frobenius_norm();
        if norm > 0.0 {
            poly = poly.scale(1.0 / norm);
        }
    }
    null_space(&poly, k)
}

/// Diagonal similarity scaling by powers of two (no permutations).
fn balance(a: &mut Matrix) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.rows();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg(a: &mut Matrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let alpha_norm: f64 = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 {
            -alpha_norm
        } else {
            alpha_norm
        };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- H A with H = I - 2 v vᵀ / (vᵀ v) acting on rows k+1..n
        for j in 0..n {
            let dot: f64 = (0..v.len()).map(|r| v[r] * a[(k + 1 + r, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for r in 0..v.len() {
                a[(k + 1 + r, j)] -= f * v[r];
            }
        }
        // A <- A H on columns k+1..n
        for i in 0..n {
            let dot: f64 = (0..v.len()).map(|r| a[(i, k + 1 + r)] * v[r]).sum();
            let f = 2.0 * dot / vnorm2;
            for r in 0..v.len() {
                a[(i, k + 1 + r)] -= f * v[r];
            }
        }
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

const MAX_ITS_PER_EIGENVALUE: usize = 60;

/// Francis double-shift QR on an upper Hessenberg matrix (EISPACK `hqr`
/// ordering, 0-based). The matrix is destroyed.
fn hqr(a: &mut Matrix) -> Result<Vec<Complex64>> {
    let n = a.rows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut total_its = 0usize;
    // nn is one past the active block's last index (1-based size of the block)
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // look for a single small subdiagonal element
            let mut l = nu;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() + s == s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != 0.0 {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITS_PER_EIGENVALUE {
                return Err(Error::EigensolverFailed {
                    iterations: total_its,
                });
            }
            if its == 10 || its == 20 || its == 40 {
                // exceptional shift
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;

            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            // double QR step on rows l..nu and columns m..nu
            let mut k = m;
            while k + 1 <= nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k != nu - 1 { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k != nu - 1 {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != nu - 1 {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    let out: Vec<Complex64> = wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigensolverFailed {
            iterations: total_its,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(m: &Matrix) -> Vec<Complex64> {
        eigen_decompose(m, 1e-9).unwrap().eigenvalues
    }

    #[test]
    fn identity_is_one_cluster() {
        let d = eigen_decompose(&Matrix::identity(3), 1e-9).unwrap();
        assert_eq!(d.eigenvalues.len(), 3);
        assert!(d.eigenvalues.iter().all(|z| (z - 1.0).norm() < 1e-14));
        assert_eq!(d.clusters.len(), 1);
        assert_eq!(d.clusters[0].multiplicity(), 3);
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let e = sorted_re(&m);
        assert!((e[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((e[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
        let d = eigen_decompose(&m, 1e-9).unwrap();
        assert_eq!(d.clusters.len(), 1, "conjugates share a real subspace");
    }

    #[test]
    fn lower_triangular_lift() {
        // d = 1 lift with alpha = 0, beta = 1: [[2(a+b), 0], [2b, 2a+1]]
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let d = eigen_decompose(&m, 1e-7).unwrap();
        let re: Vec<f64> = d.eigenvalues.iter().map(|z| z.re).collect();
        assert!((re[0] - 1.0).abs() < 1e-14 && (re[1] - 2.0).abs() < 1e-14);
        assert_eq!(d.clusters.len(), 2);
        // eigenvector for 2 is proportional to (1, 2)
        let v = d.clusters[1].basis.col(0);
        assert!((v[1] / v[0] - 2.0).abs() < 1e-12);
        assert!(d.residual < 1e-12);
    }

    #[test]
    fn jordan_block_is_clustered() {
        // resonant case: double eigenvalue 1 with a nontrivial Jordan block
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let d = eigen_decompose(&m, default_cluster_tol(&eigenvalues(&m).unwrap())).unwrap();
        assert_eq!(d.clusters.len(), 1);
        assert!((d.clusters[0].center().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let m = Matrix::from_rows(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = sorted_re(&m);
        for (z, want) in e.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((z.re - want).abs() < 1e-9 && z.im.abs() < 1e-9, "{z}");
        }
        let d = eigen_decompose(&m, 1e-9).unwrap();
        assert_eq!(d.clusters.len(), 4);
        assert!(d.residual < 1e-8, "{}", d.residual);
    }

    #[test]
    fn rejects_non_square_and_oversized() {
        assert!(eigen_decompose(&Matrix::zeros(2, 3), 1e-9).is_err());
        assert!(eigen_decompose(&Matrix::identity(65), 1e-9).is_err());
    }
}
