use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Minimizer of `||A u - b||` on the sphere `||u|| = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSolution {
    pub u: DVector<f64>,
    /// Lagrange multiplier of the sphere constraint:
    /// `(A^T A + lambda I) u = A^T b`.
    pub lambda: f64,
    /// Achieved `||A u - b||`.
    pub objective: f64,
}

/// Least-squares angle matching under a radius constraint. Rows of `a` are
/// unit directions toward known neighbors, `b` the target projections.
pub fn solve_angle_ls(a: &DMatrix<f64>, b: &DVector<f64>, r: f64) -> Result<AngleSolution> {
    solve_angle_ls_toward(a, b, r, None)
}

/// As [`solve_angle_ls`]; when the minimizer is not unique, the component
/// added along the degenerate directions points toward `prefer`.
pub fn solve_angle_ls_toward(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    r: f64,
    prefer: Option<&DVector<f64>>,
) -> Result<AngleSolution> {
    let (q, d) = a.shape();
    if q == 0 {
        return Err(Error::NoConstraint);
    }
    if b.len() != q {
        return Err(Error::Shape(format!("{q} constraint rows but {} targets", b.len())));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Input(format!("radius must be positive and finite, got {r}")));
    }
    let m = a.transpose() * a;
    let g = a.transpose() * b;
    let eig = SymmetricEigen::new(m.clone());
    let mu = eig.eigenvalues.clone();
    let v = eig.eigenvectors.clone();
    let c = v.transpose() * &g;
    let mu_min = mu.min();
    let scale = mu.max().abs().max(1.0);
    let low: Vec<usize> = (0..d).filter(|&i| mu[i] <= mu_min + 1e-12 * scale).collect();
    let g_norm = g.norm();

    let norm_at = |lambda: f64| -> f64 {
        (0..d)
            .map(|i| {
                let den = mu[i] + lambda;
                if den <= 0.0 {
                    if c[i] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (c[i] / den).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let coords_at = |lambda: f64, skip_low: bool| -> DVector<f64> {
        DVector::from_fn(d, |i, _| {
            if skip_low && low.contains(&i) {
                0.0
            } else {
                c[i] / (mu[i] + lambda)
            }
        })
    };

    let low_weight: f64 = low.iter().map(|&i| c[i] * c[i]).sum::<f64>().sqrt();
    let hard = low_weight <= 1e-12 * g_norm.max(f64::MIN_POSITIVE) || g_norm == 0.0;
    let (coords, lambda) = if hard && {
        let rest = coords_at(-mu_min, true);
        rest.norm() <= r
    } {
        let mut coords = coords_at(-mu_min, true);
        let tau = (r * r - coords.norm_squared()).max(0.0).sqrt();
        // Direction inside the degenerate eigenspace, in eigen-coordinates.
        let mut dir = DVector::zeros(d);
        if let Some(p) = prefer {
            let pc = v.transpose() * p;
            for &i in &low {
                dir[i] = pc[i];
            }
        }
        if dir.norm() == 0.0 {
            dir[low[0]] = 1.0;
        }
        dir /= dir.norm();
        coords += dir * tau;
        (coords, -mu_min)
    } else {
        // ||u(lambda)|| decreases on (-mu_min, inf); bracket and bisect.
        let mut lo = -mu_min;
        let mut hi = -mu_min + g_norm / r + 1e-300;
        while norm_at(hi) > r {
            hi = -mu_min + 2.0 * (hi + mu_min);
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm_at(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let lambda = 0.5 * (lo + hi);
        (coords_at(lambda, false), lambda)
    };
    let mut u = &v * coords;
    let n = u.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate("angle least-squares produced a null step".into()));
    }
    u *= r / n;
    let objective = (a * &u - b).norm();
    Ok(AngleSolution { u, lambda, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_sphere_min(a: &DMatrix<f64>, b: &DVector<f64>, r: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let d = a.ncols();
        let mut best = f64::INFINITY;
        for _ in 0..samples {
            let mut u = DVector::from_fn(d, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            u *= r / u.norm();
            best = best.min((a * &u - b).norm());
        }
        best
    }

    #[test]
    fn identity_with_feasible_target() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let s = solve_angle_ls(&a, &b, 1.0).unwrap();
        assert!((s.u - &b).norm() < 1e-12);
    }

    #[test]
    fn identity_projects_radially() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        for r in [0.5, 5.0, 20.0] {
            let s = solve_angle_ls(&a, &b, r).unwrap();
            assert!((s.u - &b * (r / 5.0)).norm() < 1e-10 * r);
        }
    }

    #[test]
    fn beats_monte_carlo_sphere_search() {
        let mut rng = seeded(17);
        let a = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let s = solve_angle_ls(&a, &b, 1.0).unwrap();
        let mc = random_sphere_min(&a, &b, 1.0, 1_000_000, 18);
        assert!(s.objective <= mc + 1e-4);
        assert!((s.objective - mc).abs() <= 1e-4, "{} vs {mc}", s.objective);
    }

    #[test]
    fn constraint_and_stationarity() {
        let mut rng = seeded(5);
        for _ in 0..200 {
            let q = rng.random_range(1..6);
            let d = rng.random_range(1..4);
            let mut a = DMatrix::from_fn(q, d, |_, _| rng.random_range(-1.0..1.0));
            for mut row in a.row_iter_mut() {
                let n = row.norm();
                row /= n;
            }
            let b = DVector::from_fn(q, |_, _| rng.random_range(-2.0..2.0));
            let r = rng.random_range(0.1..3.0);
            let s = solve_angle_ls(&a, &b, r).unwrap();
            assert!((s.u.norm() - r).abs() <= 1e-10 * r);
            let resid = (a.transpose() * &a * &s.u + &s.u * s.lambda) - a.transpose() * &b;
            assert!(resid.norm() <= 1e-8 * (1.0 + (a.transpose() * &b).norm()), "{}", resid.norm());
            let mc = random_sphere_min(&a, &b, r, 64, rng.random());
            assert!(s.objective <= mc + 1e-12);
        }
    }

    #[test]
    fn hard_case_follows_preference() {
        // Single constraint orthogonal to e2; the unconstrained optimum is
        // inside the sphere so the remainder goes along +/- e2.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![0.6]);
        let up = DVector::from_vec(vec![0.0, 1.0]);
        let s = solve_angle_ls_toward(&a, &b, 1.0, Some(&up)).unwrap();
        assert!((s.u[0] - 0.6).abs() < 1e-12 && (s.u[1] - 0.8).abs() < 1e-12);
        let down = -up;
        let s = solve_angle_ls_toward(&a, &b, 1.0, Some(&down)).unwrap();
        assert!((s.u[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_constraints() {
        let a = DMatrix::<f64>::zeros(0, 2);
        let b = DVector::<f64>::zeros(0);
        assert!(matches!(solve_angle_ls(&a, &b, 1.0), Err(Error::NoConstraint)));
    }
}
