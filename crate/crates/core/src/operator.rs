//! Finite-dimensional generators `A`, the semigroup `S(t) = exp(tA)`, resolvents
//! `J_h = (I - hA)^{-1}` and the Duhamel convolution for piecewise-constant forcing.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{check_dim, check_finite, Error, Result};

/// Linear solves whose 1-norm condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
struct SymmetricSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Generator of a linear semigroup together with growth metadata `‖S(t)‖ ≤ M e^{ωt}`.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
    growth_m: f64,
    growth_omega: f64,
    spectrum: Option<SymmetricSpectrum>,
}

impl LinearOperator {
    /// Builds the operator with `M = 1` and `ω` equal to the logarithmic 2-norm of `A`
    /// (the largest eigenvalue of its symmetric part), which always bounds `‖exp(tA)‖`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "generator must be a nonempty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("generator has non-finite entries".into()));
        }
        let symmetric = is_symmetric(&matrix);
        let spectrum = symmetric.then(|| {
            let eig = matrix.clone().symmetric_eigen();
            SymmetricSpectrum {
                values: eig.eigenvalues,
                vectors: eig.eigenvectors,
            }
        });
        let omega = match &spectrum {
            Some(s) => s.values.max(),
            None => {
                let sym = (&matrix + matrix.transpose()) * 0.5;
                sym.symmetric_eigenvalues().max()
            }
        };
        Ok(Self {
            matrix,
            growth_m: 1.0,
            growth_omega: omega,
            spectrum,
        })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(dim, dim))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    /// `(M+1)^2 · tridiag(1, -2, 1)` on `M` interior nodes of `[0, 1]`.
    pub fn dirichlet_laplacian_1d(interior: usize) -> Result<Self> {
        if interior == 0 {
            return Err(Error::InvalidInput("laplacian needs at least one node".into()));
        }
        let scale = ((interior + 1) * (interior + 1)) as f64;
        let mut a = DMatrix::zeros(interior, interior);
        for i in 0..interior {
            a[(i, i)] = -2.0 * scale;
            if i + 1 < interior {
                a[(i, i + 1)] = scale;
                a[(i + 1, i)] = scale;
            }
        }
        Self::new(a)
    }

    /// Replaces the growth metadata. `M ≥ 1` is required and `ω` must dominate the
    /// spectral abscissa of `A`, otherwise no bound of the form `M e^{ωt}` can hold.
    pub fn with_growth(mut self, growth_m: f64, growth_omega: f64) -> Result<Self> {
        if !(growth_m >= 1.0) || !growth_omega.is_finite() {
            return Err(Error::InvalidInput(format!(
                "growth metadata needs M >= 1 and finite omega, got M = {growth_m}, omega = {growth_omega}"
            )));
        }
        let abscissa = self.spectral_abscissa();
        let slack = 1e-12 * (1.0 + abscissa.abs());
        if growth_omega < abscissa - slack {
            return Err(Error::InvalidInput(format!(
                "omega = {growth_omega} is below the spectral abscissa {abscissa}"
            )));
        }
        self.growth_m = growth_m;
        self.growth_omega = growth_omega;
        Ok(self)
    }

    /// The generator `zA`.
    pub fn scaled(&self, z: f64) -> Result<Self> {
        Self::new(&self.matrix * z)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn growth_m(&self) -> f64 {
        self.growth_m
    }

    pub fn growth_omega(&self) -> f64 {
        self.growth_omega
    }

    pub fn is_symmetric(&self) -> bool {
        self.spectrum.is_some()
    }

    /// Largest real part of the eigenvalues of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        match &self.spectrum {
            Some(s) => s.values.max(),
            None => self
                .matrix
                .complex_eigenvalues()
                .iter()
                .map(|c| c.re)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// The matrix `S(t) = exp(tA)`.
    pub fn semigroup(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("semigroup time must be finite and >= 0, got {t}")));
        }
        let n = self.dim();
        if t == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        Ok(match &self.spectrum {
            Some(s) => spectral_function(s, |lambda| (t * lambda).exp()),
            None => expm(&(&self.matrix * t)),
        })
    }

    pub fn semigroup_apply(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        check_finite(x, "state")?;
        if t == 0.0 {
            return Ok(x.clone());
        }
        Ok(self.semigroup(t)? * x)
    }

    /// Factorizes `I - hA` once for repeated resolvent applications.
    pub fn resolvent(&self, h: f64) -> Result<Resolvent> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("resolvent step must be positive, got {h}")));
        }
        if h * self.growth_omega >= 1.0 {
            return Err(Error::Domain(format!(
                "h * omega = {} must be < 1 (h = {h}, omega = {})",
                h * self.growth_omega,
                self.growth_omega
            )));
        }
        let n = self.dim();
        let system = DMatrix::identity(n, n) - &self.matrix * h;
        Resolvent::factor(h, system)
    }

    pub fn resolvent_apply(&self, h: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        check_finite(x, "state")?;
        Ok(self.resolvent(h)?.apply(x))
    }

    /// `‖J_b x − J_a((a/b)x + ((b−a)/b) J_b x)‖`, which vanishes by the resolvent identity.
    pub fn resolvent_identity_residual(&self, a: f64, b: f64, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_finite(x, "state")?;
        let ja = self.resolvent(a)?;
        let jb = self.resolvent(b)?;
        let jbx = jb.apply(x);
        let inner = x * (a / b) + &jbx * ((b - a) / b);
        Ok((jbx - ja.apply(&inner)).norm())
    }

    /// `∫_0^τ S(σ) w dσ`.
    pub fn integrated_semigroup_apply(&self, tau: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        if tau == 0.0 {
            return Ok(DVector::zeros(self.dim()));
        }
        if let Some(s) = &self.spectrum {
            let phi = spectral_function(s, |lambda| {
                let z = tau * lambda;
                if z == 0.0 {
                    tau
                } else {
                    tau * z.exp_m1() / z
                }
            });
            return Ok(phi * w);
        }
        // Closed form A^{-1}(S(τ) - I)w when A is comfortably invertible.
        let lu = self.matrix.clone().lu();
        if let Some(inv) = lu.try_inverse() {
            let cond = col_norm1(&self.matrix) * col_norm1(&inv);
            if cond < 1e8 {
                let n = self.dim();
                let diff = self.semigroup(tau)? - DMatrix::identity(n, n);
                return Ok(inv * (diff * w));
            }
        }
        // exp(τ [[A, w], [0, 0]]) carries ∫_0^τ S(σ)w dσ in its last column.
        let n = self.dim();
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&self.matrix);
        aug.view_mut((0, n), (n, 1)).copy_from(w);
        let e = expm(&(aug * tau));
        Ok(e.view((0, n), (n, 1)).column(0).into_owned())
    }

    /// Mild solution `S(t)x + ∫_0^t S(t−s)w(s)ds` for piecewise-constant `w`.
    pub fn duhamel(&self, x: &DVector<f64>, w: &ForcingSignal, t: f64) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        check_finite(x, "initial state")?;
        if w.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.dim(),
            });
        }
        if !(t >= w.start()) || t > w.end() {
            return Err(Error::Domain(format!(
                "t = {t} outside forcing span [{}, {}]",
                w.start(),
                w.end()
            )));
        }
        let mut out = self.semigroup_apply(t, x)?;
        for (k, value) in w.values.iter().enumerate() {
            let a = w.grid[k];
            if a >= t {
                break;
            }
            let b = w.grid.get(k + 1).copied().unwrap_or(w.end).min(t);
            // ∫_a^b S(t−s)w ds = Φ(t−a)w − Φ(t−b)w
            let upper = self.integrated_semigroup_apply(t - a, value)?;
            let lower = self.integrated_semigroup_apply(t - b, value)?;
            out += upper - lower;
        }
        Ok(out)
    }
}

/// A factorized `I - hA`.
#[derive(Clone, Debug)]
pub struct Resolvent {
    h: f64,
    system: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl Resolvent {
    fn factor(h: f64, system: DMatrix<f64>) -> Result<Self> {
        let lu = system.clone().lu();
        let inverse = lu.try_inverse().ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        let condition = col_norm1(&system) * col_norm1(&inverse);
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::Singular { condition });
        }
        Ok(Self {
            h,
            system,
            lu,
            condition,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Solves `(I - hA)y = x` with one step of iterative refinement.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.lu.solve(x).expect("factorization checked at construction");
        let r = x - &self.system * &y;
        if let Some(dy) = self.lu.solve(&r) {
            y += dy;
        }
        y
    }
}

/// Piecewise-constant forcing: `values[k]` holds on `[grid[k], grid[k+1])`, the last value
/// on `[grid[m], end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSignal {
    grid: Vec<f64>,
    values: Vec<DVector<f64>>,
    end: f64,
}

impl ForcingSignal {
    /// Forcing on `[0, 1]`; the grid must start at 0 and end at or before 1.
    pub fn new(grid: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        Self::with_end(grid, values, 1.0)
    }

    pub fn with_end(grid: Vec<f64>, values: Vec<DVector<f64>>, end: f64) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "forcing needs matching nonempty grid and values ({} vs {})",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::InvalidInput("forcing grid must start at 0".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("forcing grid must be strictly increasing".into()));
        }
        if !(end >= *grid.last().unwrap()) || !end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "forcing grid must end at or before {end}"
            )));
        }
        let dim = values[0].len();
        for v in &values {
            check_dim(dim, v.len())?;
            check_finite(v, "forcing value")?;
        }
        Ok(Self { grid, values, end })
    }

    pub fn constant(value: DVector<f64>) -> Result<Self> {
        Self::new(vec![0.0], vec![value])
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        let k = self.grid.partition_point(|&g| g <= t).saturating_sub(1);
        &self.values[k]
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

fn spectral_function(s: &SymmetricSpectrum, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &s.vectors;
    let mut scaled = v.clone();
    for (j, lambda) in s.values.iter().enumerate() {
        let fj = f(*lambda);
        scaled.column_mut(j).scale_mut(fj);
    }
    scaled * v.transpose()
}

fn col_norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the diagonal [13/13] Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = col_norm1(a);
    if norm == 0.0 {
        return ident;
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// Truncated Taylor series with repeated squaring, independent of the Padé path.
    fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let squarings = 10;
        let a = a / 2f64.powi(squarings);
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn semigroup_of_zero_is_identity() {
        let op = LinearOperator::zero(2).unwrap();
        assert_eq!(op.semigroup_apply(7.3, &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn semigroup_scalar_decay() {
        let op = LinearOperator::diag(&[-1.0]).unwrap();
        let y = op.semigroup_apply(LN_2, &v(&[4.0])).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn semigroup_at_zero_is_exact() {
        let op = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[0.3, -1.7, 2.1, 0.4])).unwrap();
        let x = v(&[0.1234567, -9.87654321]);
        assert_eq!(op.semigroup_apply(0.0, &x).unwrap(), x);
    }

    #[test]
    fn rotation_quarter_turn() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let op = LinearOperator::new(a.clone()).unwrap();
        let y = op.semigroup_apply(FRAC_PI_2, &v(&[1.0, 0.0])).unwrap();
        assert!((y - v(&[0.0, 1.0])).norm() < 1e-10);
        let oracle = taylor_expm(&(a * FRAC_PI_2));
        assert!((op.semigroup(FRAC_PI_2).unwrap() - oracle).norm() < 1e-10);
    }

    #[test]
    fn padé_matches_taylor_on_nonnormal_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 4.0, 0.5, 0.0, -2.0, 3.0, 0.2, 0.0, -0.5]);
        for t in [0.01, 0.3, 1.0, 2.5] {
            let e = expm(&(&a * t));
            let o = taylor_expm(&(&a * t));
            assert!((&e - &o).norm() <= 1e-10 * o.norm(), "t = {t}");
        }
    }

    #[test]
    fn non_finite_state_rejected() {
        let op = LinearOperator::zero(1).unwrap();
        assert!(matches!(
            op.semigroup_apply(1.0, &v(&[f64::NAN])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn resolvent_examples() {
        let op = LinearOperator::diag(&[-1.0]).unwrap();
        assert!((op.resolvent_apply(1.0, &v(&[2.0])).unwrap()[0] - 1.0).abs() < 1e-15);

        let op = LinearOperator::diag(&[1.0, -1.0]).unwrap();
        let y = op.resolvent_apply(0.25, &v(&[3.0, 5.0])).unwrap();
        assert!((y - v(&[4.0, 4.0])).norm() < 1e-14);
    }

    #[test]
    fn resolvent_domain_error() {
        let op = LinearOperator::diag(&[1.0, -1.0]).unwrap();
        assert!(matches!(op.resolvent(1.0), Err(Error::Domain(_))));
        assert!(matches!(op.resolvent(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn singular_resolvent_reports_condition() {
        // ω metadata deliberately permissive so the singular solve is reached.
        let op = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
            .unwrap();
        let op = LinearOperator {
            matrix: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            growth_omega: 0.0,
            ..op
        };
        match op.resolvent(0.5) {
            Err(Error::Singular { condition }) => assert!(condition > CONDITION_LIMIT),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_resolvent_preserves_unit_box() {
        let op = LinearOperator::dirichlet_laplacian_1d(31).unwrap();
        assert_eq!(op.matrix()[(0, 0)], -2.0 * 1024.0);
        let x = DVector::from_fn(31, |i, _| ((i * 7919) % 31) as f64 / 30.0);
        for h in [1e-4, 1e-2, 1.0] {
            let j = op.resolvent(h).unwrap();
            let y = j.apply(&x);
            assert!(y.iter().all(|&c| (0.0..=1.0).contains(&c)), "h = {h}");
            let residual = (&x - (DMatrix::identity(31, 31) - op.matrix() * h) * &y).norm();
            assert!(residual <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn resolvent_identity_scalar_and_trivial() {
        let op = LinearOperator::diag(&[-1.0]).unwrap();
        assert!(op.resolvent_identity_residual(0.5, 0.25, &v(&[1.0])).unwrap() <= 1e-12);
        let op = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 0.5, -2.0])).unwrap();
        assert!(op.resolvent_identity_residual(0.1, 0.1, &v(&[1.0, -4.0])).unwrap() <= 1e-12);
    }

    #[test]
    fn growth_metadata_validation() {
        let op = LinearOperator::diag(&[0.5, -2.0]).unwrap();
        assert_eq!(op.growth_m(), 1.0);
        assert_eq!(op.growth_omega(), 0.5);
        assert!(op.clone().with_growth(1.0, 0.4).is_err());
        assert!(op.clone().with_growth(0.5, 1.0).is_err());
        let op = op.with_growth(2.0, 0.7).unwrap();
        assert_eq!(op.growth_m(), 2.0);
    }

    #[test]
    fn duhamel_examples() {
        let op = LinearOperator::diag(&[-0.7, 0.2]).unwrap();
        let x = v(&[1.0, 2.0]);
        let zero = ForcingSignal::constant(v(&[0.0, 0.0])).unwrap();
        let y = op.duhamel(&x, &zero, 0.6).unwrap();
        assert!((y - op.semigroup_apply(0.6, &x).unwrap()).norm() < 1e-15);

        let op = LinearOperator::zero(2).unwrap();
        let c = ForcingSignal::new(vec![0.0, 0.5], vec![v(&[1.0, -2.0]), v(&[1.0, -2.0])]).unwrap();
        let y = op.duhamel(&x, &c, 0.8).unwrap();
        assert!((y - v(&[1.8, 0.4])).norm() < 1e-14);

        let op = LinearOperator::diag(&[-1.0]).unwrap();
        let one = ForcingSignal::constant(v(&[1.0])).unwrap();
        let y = op.duhamel(&v(&[0.0]), &one, 1.0).unwrap();
        assert!((y[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn duhamel_nonsymmetric_routes_agree_with_quadrature() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.1, -1.0, 1.0, -0.1]);
        let op = LinearOperator::new(a).unwrap();
        let w = ForcingSignal::new(vec![0.0, 0.3], vec![v(&[1.0, 0.0]), v(&[-0.5, 2.0])]).unwrap();
        let x = v(&[0.2, -0.4]);
        let t = 0.9;
        let exact = op.duhamel(&x, &w, t).unwrap();
        // composite Simpson on a fine grid
        let n = 2000;
        let ds = t / n as f64;
        let mut integral = DVector::zeros(2);
        for i in 0..=n {
            let s = i as f64 * ds;
            let weight = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let ws = if s < 0.3 { v(&[1.0, 0.0]) } else { v(&[-0.5, 2.0]) };
            integral += op.semigroup(t - s).unwrap() * ws * (weight * ds / 3.0);
        }
        let quad = op.semigroup_apply(t, &x).unwrap() + integral;
        assert!((exact - quad).norm() < 2e-3, "jump at 0.3 limits Simpson accuracy");

        // singular nonsymmetric generator goes through the augmented exponential
        let nil = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        let c = ForcingSignal::constant(v(&[0.0, 1.0])).unwrap();
        let y = nil.duhamel(&v(&[0.0, 0.0]), &c, 1.0).unwrap();
        // ẋ1 = x2, ẋ2 = 1  ⇒  x = (t²/2, t)
        assert!((y - v(&[0.5, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn duhamel_outside_span() {
        let op = LinearOperator::zero(1).unwrap();
        let w = ForcingSignal::constant(v(&[1.0])).unwrap();
        assert!(matches!(op.duhamel(&v(&[0.0]), &w, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn forcing_signal_validation() {
        assert!(ForcingSignal::new(vec![0.0, 0.0], vec![v(&[1.0]), v(&[1.0])]).is_err());
        assert!(ForcingSignal::new(vec![0.1], vec![v(&[1.0])]).is_err());
        assert!(ForcingSignal::new(vec![0.0], vec![v(&[f64::INFINITY])]).is_err());
        let w = ForcingSignal::new(vec![0.0, 0.5], vec![v(&[1.0]), v(&[2.0])]).unwrap();
        assert_eq!(w.value_at(0.49)[0], 1.0);
        assert_eq!(w.value_at(0.5)[0], 2.0);
    }
}
