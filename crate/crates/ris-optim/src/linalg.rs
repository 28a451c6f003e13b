//! Small complex linear-algebra helpers shared by the solver modules.
//!
//! The convention for mapping complex vectors to real ones is `[Re; Im]`:
//! a complex vector of length `n` becomes a real vector of length `2n` with
//! all real parts first. A Hermitian form `z^H H z` maps to the symmetric
//! real form with block matrix `[[Re H, -Im H], [Im H, Re H]]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// `[Re; Im]` stacking of a complex vector.
pub fn realify_vec(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`realify_vec`].
pub fn complexify_vec(x: &RVec) -> CVec {
    let n = x.len() / 2;
    assert_eq!(x.len(), 2 * n, "real vector length must be even");
    CVec::from_fn(n, |i, _| C64::new(x[i], x[n + i]))
}

/// Realify a Hermitian matrix `H` so that `z^H H z = x^T M x` with `x = [Re z; Im z]`.
pub fn realify_herm(h: &CMat) -> RMat {
    let n = h.nrows();
    assert_eq!(h.ncols(), n);
    let mut m = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let re = h[(i, j)].re;
            let im = h[(i, j)].im;
            m[(i, j)] = re;
            m[(n + i, n + j)] = re;
            m[(i, n + j)] = -im;
            m[(n + i, j)] = im;
        }
    }
    m
}

/// Realified row for `Re{c^H x}` as a function of `x = [Re z; Im z]`.
pub fn re_inner_row(c: &CVec) -> RVec {
    let n = c.len();
    RVec::from_fn(2 * n, |i, _| if i < n { c[i].re } else { c[i - n].im })
}

/// Realified row for `Im{c^H x}`.
pub fn im_inner_row(c: &CVec) -> RVec {
    let n = c.len();
    RVec::from_fn(2 * n, |i, _| if i < n { -c[i].im } else { c[i - n].re })
}

/// `c^H x` for complex vectors (nalgebra's `dotc` conjugates the callee).
pub fn cdot(c: &CVec, x: &CVec) -> C64 {
    c.dotc(x)
}

/// Hermitian symmetrization `(H + H^H)/2`, useful to clean accumulated roundoff.
pub fn hermitianize(h: &CMat) -> CMat {
    (h + h.adjoint()) * C64::new(0.5, 0.0)
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Maximum absolute entry of a real matrix.
pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_cvec(rng: &mut StdRng, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn realified_quadratic_form_matches_complex() {
        let mut rng = StdRng::seed_from_u64(3);
        let n = 5;
        let a = CMat::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = &a * a.adjoint(); // Hermitian PSD
        let z = rand_cvec(&mut rng, n);
        let x = realify_vec(&z);
        let m = realify_herm(&h);
        let complex_val = (z.adjoint() * &h * &z)[(0, 0)].re;
        let real_val = (x.transpose() * &m * &x)[(0, 0)];
        assert!((complex_val - real_val).abs() < 1e-12 * complex_val.abs().max(1.0));
    }

    #[test]
    fn inner_rows_match() {
        let mut rng = StdRng::seed_from_u64(4);
        let c = rand_cvec(&mut rng, 4);
        let z = rand_cvec(&mut rng, 4);
        let x = realify_vec(&z);
        let ip = cdot(&c, &z);
        assert!((re_inner_row(&c).dot(&x) - ip.re).abs() < 1e-14);
        assert!((im_inner_row(&c).dot(&x) - ip.im).abs() < 1e-14);
    }

    #[test]
    fn complexify_round_trip() {
        let mut rng = StdRng::seed_from_u64(5);
        let z = rand_cvec(&mut rng, 7);
        let back = complexify_vec(&realify_vec(&z));
        assert!((&back - &z).iter().all(|d| d.norm() < 1e-15));
    }
}
