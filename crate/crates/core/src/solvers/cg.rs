use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, norm2, LinearOperator};

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - M x|| / ||b||` as tracked by the recursive residual.
    pub rel_residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive (semi-)definite operator.
///
/// Iterates `x += a p`, `r -= a M p`, `p = r + b p` with step
/// `a = r.r / p.Mp` and momentum `b = r'.r' / r.r`, starting from `x0`
/// (zero when `None`). Stops after `max_iters` iterations or once
/// `||r|| / ||b|| <= tol`. Running out of iterations is not an error; the
/// outcome reports `converged = false`.
pub fn cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    b: &[f64],
    x0: Option<&[f64]>,
    max_iters: usize,
    tol: f64,
) -> Result<CgOutcome> {
    let n = op.dim();
    check_dim(n, b.len())?;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0, converged: true });
    }

    let mut x = match x0 {
        Some(x0) => {
            check_dim(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut mp = vec![0.0; n];
    let mut r = b.to_vec();
    if x0.is_some() {
        op.apply(&x, &mut mp);
        axpy(-1.0, &mp, &mut r);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut rel = rr.sqrt() / b_norm;
    let mut iterations = 0;

    while rel > tol && iterations < max_iters {
        op.apply(&p, &mut mp);
        let curvature = dot(&p, &mp);
        if !(curvature > 0.0) {
            return Err(Error::NotPositiveDefinite { iteration: iterations, curvature });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &mp, &mut r);
        let rr_next = dot(&r, &r);
        iterations += 1;
        rel = rr_next.sqrt() / b_norm;
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }

    Ok(CgOutcome { x, iterations, rel_residual: rel, converged: rel <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_err;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_identity_in_one_iteration() {
        let m = DMatrix::identity(2, 2) * 2.0;
        let out = cg_solve(&m, &[2.0, 4.0], None, 10, 1e-12).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_rhs() {
        let m = DMatrix::identity(3, 3);
        let out = cg_solve(&m, &[0.0; 3], Some(&[1.0, 2.0, 3.0]), 10, 1e-12).unwrap();
        assert_eq!(out.x, vec![0.0; 3]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &g * g.transpose() + DMatrix::identity(n, n) * (n as f64);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = cg_solve(&m, &b, None, n, 1e-12).unwrap();
        let want = m.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        assert!(rel_err(&out.x, want.as_slice()) < 1e-8);
        assert!(out.iterations <= n);
    }

    #[test]
    fn indefinite_operator_is_reported() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let err = cg_solve(&m, &[1.0, 1.0], None, 10, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn warm_start_at_solution_returns_immediately() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let out = cg_solve(&m, &[1.0, 2.0, 3.0], Some(&[1.0, 1.0, 1.0]), 10, 1e-12).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let out = cg_solve(&m, &[1.0; 4], None, 2, 1e-14).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(!out.converged);
    }
}
