//! Small dense quadratic programs used by the projections.
//!
//! * [`project_polyhedron`] is the Goldfarb–Idnani dual active-set method specialised to
//!   the identity Hessian: it starts from the unconstrained minimiser `y`, adds the most
//!   violated constraint, and drops constraints whose multipliers would turn negative.
//! * [`min_norm_point`] is Wolfe's algorithm for the nearest point of a convex hull.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of `min ½‖x − y‖²  s.t.  ⟨a_i, x⟩ ≤ b_i`.
#[derive(Clone, Debug)]
pub struct PolyhedralProjection {
    pub point: DVector<f64>,
    /// Active constraint indices with their (nonnegative) multipliers.
    pub active: Vec<(usize, f64)>,
    pub iterations: usize,
}

pub fn project_polyhedron(
    normals: &[DVector<f64>],
    offsets: &[f64],
    y: &DVector<f64>,
) -> Result<PolyhedralProjection> {
    let m = normals.len();
    let max_iter = 50 * m.max(1) + 10;
    let mut x = y.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let scale = 1.0 + y.norm();
    let mut iterations = 0;

    let slack = |x: &DVector<f64>, i: usize| offsets[i] - normals[i].dot(x);
    let tol = |i: usize| 1e-13 * (1.0 + offsets[i].abs() + normals[i].norm() * scale);

    loop {
        // most violated inactive constraint (largest normalised violation)
        let mut worst: Option<(usize, f64)> = None;
        for (i, n) in normals.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let s = slack(&x, i);
            if s < -tol(i) {
                let score = s / n.norm();
                if worst.is_none_or(|(_, w)| score < w) {
                    worst = Some((i, score));
                }
            }
        }
        let Some((p, _)) = worst else { break };
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::QpNonConvergence {
                    iterations,
                    iterate: x.iter().copied().collect(),
                });
            }
            let np = &normals[p];
            // With constraints written as ⟨a, x⟩ ≤ b the primal direction is −P⊥ a_p and the
            // dual direction is r = (NᵀN)⁻¹Nᵀ a_p.
            let (z, r) = if active.is_empty() {
                (-np.clone(), Vec::new())
            } else {
                let q = active.len();
                let n_mat = DMatrix::from_fn(np.len(), q, |row, col| normals[active[col]][row]);
                let gram = n_mat.transpose() * &n_mat;
                let rhs = n_mat.transpose() * np;
                let r = gram
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::QpNonConvergence {
                        iterations,
                        iterate: x.iter().copied().collect(),
                    })?;
                let z = -(np - &n_mat * &r);
                (z, r.iter().copied().collect())
            };

            // partial step: first multiplier to hit zero
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let ratio = mult[j] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(j);
                    }
                }
            }
            let zn = z.norm();
            let t2 = if zn > 1e-12 * np.norm() {
                // step along z until ⟨a_p, x⟩ = b_p ; ⟨a_p, z⟩ = −‖z‖² < 0
                slack(&x, p) / np.dot(&z)
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::EmptySet);
            }
            if t2.is_finite() {
                x += &z * t;
            }
            for (j, rj) in r.iter().enumerate() {
                mult[j] -= t * rj;
            }
            u_p += t;
            if t2 <= t1 {
                active.push(p);
                mult.push(u_p);
                break;
            }
            let k = block.expect("finite partial step has a blocking constraint");
            active.remove(k);
            mult.remove(k);
        }
    }

    // Kuhn–Tucker verification
    let mut stationarity = &x - y;
    for (&i, &u) in active.iter().zip(&mult) {
        stationarity += &normals[i] * u;
    }
    let primal = (0..m).map(|i| -slack(&x, i)).fold(0.0, f64::max);
    let dual_ok = mult.iter().all(|&u| u >= -1e-12 * scale);
    if stationarity.norm() > 1e-9 * scale || primal > 1e-9 * scale || !dual_ok {
        return Err(Error::QpNonConvergence {
            iterations,
            iterate: x.iter().copied().collect(),
        });
    }
    Ok(PolyhedralProjection {
        point: x,
        active: active.into_iter().zip(mult).collect(),
        iterations,
    })
}

/// Minimum-norm point of `conv(points)` with its convex weights (Wolfe's algorithm).
pub fn min_norm_point(points: &[DVector<f64>]) -> (DVector<f64>, Vec<f64>) {
    assert!(!points.is_empty(), "min_norm_point needs at least one point");
    let m = points.len();
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let j0 = (0..m)
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap();
    let mut support = vec![j0];
    let mut weights = vec![1.0];
    let mut x = points[j0].clone();

    for _major in 0..(20 * m + 20) {
        let (j, best) = (0..m)
            .map(|j| (j, x.dot(&points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - best <= eps || support.contains(&j) {
            break;
        }
        support.push(j);
        weights.push(0.0);

        loop {
            let alpha = affine_minimizer(points, &support);
            if alpha.iter().all(|&a| a > 1e-15) {
                weights = alpha;
                x = combine(points, &support, &weights);
                break;
            }
            let mut theta = 1.0;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= 1e-15 && w - a > 0.0 {
                    theta = f64::min(theta, w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            // drop vanished weights; at least one goes
            let min_idx = (0..weights.len())
                .min_by(|&a, &b| weights[a].total_cmp(&weights[b]))
                .unwrap();
            let mut keep: Vec<bool> = weights.iter().map(|&w| w > 1e-15).collect();
            keep[min_idx] = false;
            let mut k = 0;
            support.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            let mut k = 0;
            weights.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            x = combine(points, &support, &weights);
            if support.len() == 1 {
                break;
            }
        }
    }

    let mut full = vec![0.0; m];
    for (&j, &w) in support.iter().zip(&weights) {
        full[j] = w;
    }
    (x, full)
}

fn combine(points: &[DVector<f64>], support: &[usize], weights: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points[0].len());
    for (&j, &w) in support.iter().zip(weights) {
        x.axpy(w, &points[j], 1.0);
    }
    x
}

/// Weights of the minimum-norm point of the affine hull of `points[support]`.
fn affine_minimizer(points: &[DVector<f64>], support: &[usize]) -> Vec<f64> {
    let q = support.len();
    if q == 1 {
        return vec![1.0];
    }
    let base = &points[support[0]];
    let d = DMatrix::from_fn(base.len(), q - 1, |row, col| {
        points[support[col + 1]][row] - base[row]
    });
    let svd = d.svd(true, true);
    let beta = svd
        .solve(&(-base), 1e-13 * (1.0 + base.norm()))
        .unwrap_or_else(|_| DVector::zeros(q - 1));
    let mut alpha = Vec::with_capacity(q);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter());
    alpha
}
