//! Small dense complex linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// (M + M†)/2
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Rebuilds V diag(f(λ)) V† from a Hermitian eigendecomposition.
pub fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = f(v);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * vectors.adjoint()
}

/// Principal square root of a positive semidefinite matrix; small negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_fn(m, |v| v.max(0.0).sqrt())
}

/// Sum of singular values of a Hermitian matrix.
pub fn hermitian_trace_norm(m: &CMatrix) -> f64 {
    eigh(m).0.iter().map(|v| v.abs()).sum()
}

/// Euclidean projection of a real vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// Closest density matrix (unit trace, PSD) in Frobenius norm.
pub fn project_density(m: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(m);
    let projected = project_simplex(&values);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &p) in projected.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= p;
        }
    }
    &scaled * vectors.adjoint()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))² for positive semidefinite operands.
pub fn uhlmann_fidelity(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    // round-off eigenvalues near 1e-17 would each add ~1e-9 after the root
    let clip = |ev: &[f64]| 1e-13 * ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (ev, _) = eigh(rho);
    let cut = clip(&ev);
    let root = hermitian_fn(rho, |v| if v > cut { v.sqrt() } else { 0.0 });
    let inner = hermitize(&(&root * sigma * &root));
    let ev = eigh(&inner).0;
    let cut = clip(&ev);
    let s: f64 = ev.iter().filter(|&&v| v > cut).map(|v| v.sqrt()).sum();
    s * s
}

pub fn outer(ket: &CVector) -> CMatrix {
    ket * ket.adjoint()
}

pub fn basis(dim: usize, n: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[n] = cr(1.0);
    v
}

/// Natural log of n!, exact summation (small n only).
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_sums_to_one() {
        let p = project_simplex(&[0.7, 0.5, -0.1, 0.0]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = CMatrix::from_row_slice(2, 2, &[cr(2.0), c(0.5, 0.5), c(0.5, -0.5), cr(1.0)]);
        let r = psd_sqrt(&m);
        assert!(frobenius(&(&r * &r - &m)) < 1e-12);
    }

    #[test]
    fn binomial_coefficients() {
        assert!((binomial(4, 2) - 6.0).abs() < 1e-12);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
