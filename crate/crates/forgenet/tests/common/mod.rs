//! Independent reference implementations used as test oracles.
//!
//! Everything here is deliberately written against different algorithms than
//! the library: eigenvalues come from Jacobi rotations or characteristic
//! polynomials instead of power iteration, the normal quantile comes from
//! quadrature plus bisection instead of a rational fit, and gradients come
//! from central finite differences instead of the tape.

#![allow(dead_code)]

use forgenet::tensor::Tensor;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eigen(a: &Tensor) -> (Vec<f64>, Tensor) {
    let (n, m) = a.dims2().expect("jacobi oracle needs a matrix");
    assert_eq!(n, m, "jacobi oracle needs a square matrix");
    let mut a = a.clone();
    let mut v = Tensor::identity(n);

    let off = |a: &Tensor| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += a.at2(p, q) * a.at2(p, q);
                }
            }
        }
        s.sqrt()
    };
    let scale: f64 = (0..n).map(|i| a.at2(i, i).abs()).fold(1e-300, f64::max);

    for _sweep in 0..100 {
        if off(&a) <= 1e-14 * scale.max(1.0) {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.at2(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.at2(q, q) - a.at2(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rows/cols p and q of A
                for k in 0..n {
                    let akp = a.at2(k, p);
                    let akq = a.at2(k, q);
                    a.set2(k, p, c * akp - s * akq);
                    a.set2(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.at2(p, k);
                    let aqk = a.at2(q, k);
                    a.set2(p, k, c * apk - s * aqk);
                    a.set2(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.at2(k, p);
                    let vkq = v.at2(k, q);
                    v.set2(k, p, c * vkp - s * vkq);
                    v.set2(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a.at2(i, i), i)).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let eigenvalues: Vec<f64> = pairs.iter().map(|(l, _)| *l).collect();
    let mut vectors = Tensor::zeros(vec![n, n]);
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for k in 0..n {
            vectors.set2(k, new_col, v.at2(k, *old_col));
        }
    }
    (eigenvalues, vectors)
}

/// Largest eigenvalue of a symmetric matrix, by the Jacobi oracle.
pub fn lambda_max_symmetric(a: &Tensor) -> f64 {
    jacobi_eigen(a).0[0]
}

/// All (possibly complex) eigenvalues of a small square matrix via the
/// characteristic polynomial (Faddeev-LeVerrier) and Durand-Kerner root
/// iteration. Intended for n <= 8.
pub fn eigenvalues_general(a: &Tensor) -> Vec<Complex64> {
    let (n, m) = a.dims2().expect("eigen oracle needs a matrix");
    assert_eq!(n, m);
    assert!(n <= 8, "characteristic-polynomial oracle is for n <= 8");

    // monic coefficients: p(z) = z^n + c[0] z^(n-1) + ... + c[n-1]
    let mut coeffs = vec![0.0f64; n];
    let mut mk = a.clone();
    for k in 1..=n {
        let trace: f64 = (0..n).map(|i| mk.at2(i, i)).sum();
        let ck = -trace / k as f64;
        coeffs[k - 1] = ck;
        if k == n {
            break;
        }
        // M_{k+1} = A (M_k + c_k I)
        let mut shifted = mk.clone();
        for i in 0..n {
            shifted.set2(i, i, shifted.at2(i, i) + ck);
        }
        mk = forgenet::tensor::matmul(a, &shifted).unwrap();
    }

    let eval = |z: Complex64| -> Complex64 {
        let mut p = Complex64::new(1.0, 0.0);
        for &c in &coeffs {
            p = p * z + Complex64::new(c, 0.0);
        }
        p
    };

    // Durand-Kerner from the usual non-real starting points.
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32 + 1)).collect();
    let scale = coeffs
        .iter()
        .map(|c| c.abs())
        .fold(1.0f64, f64::max)
        .max(1.0);
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-13 * scale {
            break;
        }
    }
    roots
}

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut pt = x.to_vec();
    for i in 0..x.len() {
        pt[i] = x[i] + h;
        let up = f(&pt);
        pt[i] = x[i] - h;
        let down = f(&pt);
        pt[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Relative error between an analytic gradient and the finite-difference
/// oracle: max_i |a_i - fd_i| / max(1, |fd|_inf).
pub fn gradient_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale
}

/// erf by adaptive Simpson quadrature of the Gaussian integrand.
pub fn erf_quadrature(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_quadrature(-x);
    }
    let f = |t: f64| (-t * t).exp();
    2.0 / std::f64::consts::PI.sqrt() * adaptive_simpson(&f, 0.0, x, 1e-15, 60)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let simpson = |a: f64, b: f64| (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    let whole = simpson(a, b);
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let simpson = |a: f64, b: f64| (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        let left = simpson(a, m);
        let right = simpson(m, b);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    recurse(f, a, b, whole, tol, depth)
}

/// Standard normal CDF built on the quadrature erf.
pub fn normal_cdf_oracle(x: f64) -> f64 {
    0.5 * (1.0 + erf_quadrature(x / std::f64::consts::SQRT_2))
}

/// Inverse normal CDF by bisection on the quadrature-based CDF.
pub fn normal_quantile_bisect(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let mut lo = -10.0f64;
    let mut hi = 10.0f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Triple-loop matrix product oracle.
pub fn matmul_naive(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2().unwrap();
    let (k2, n) = b.dims2().unwrap();
    assert_eq!(k, k2);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at2(i, p) * b.at2(p, j);
            }
            out.set2(i, j, s);
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with standard-normal entries.
pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
    let data: Vec<f64> = (0..m * n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Tensor::matrix(m, n, data)
}

/// Random symmetric positive semidefinite matrix W^T W.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let w = random_matrix(rng, n + 2, n);
    matmul_naive(&w.transposed().unwrap(), &w)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let data: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    Tensor::vector(data)
}

/// Uniform random input in the unit box, as a `[1, ...shape]` batch row.
pub fn random_box_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut full = vec![1usize];
    full.extend_from_slice(shape);
    Tensor::new(full, data)
}
