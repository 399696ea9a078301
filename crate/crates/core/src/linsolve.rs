//! Symmetric positive definite linear solvers.
//!
//! All operators of the radial discretization are symmetric tridiagonal, so the
//! working path is a banded Cholesky factorization. A Jacobi-preconditioned
//! conjugate gradient solver covers general sparse SPD input.

use thiserror::Error;

/// Relative asymmetry above which a matrix is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinsolveError {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
}

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, LinsolveError> {
        let expected = diag.len().saturating_sub(1);
        if off.len() != expected {
            return Err(LinsolveError::Dimension {
                expected,
                got: off.len(),
            });
        }
        Ok(Self { diag, off })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![1.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    /// Builds from three bands, rejecting input whose sub- and super-diagonals differ.
    pub fn from_bands(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self, LinsolveError> {
        let expected = diag.len().saturating_sub(1);
        for band in [lower, upper] {
            if band.len() != expected {
                return Err(LinsolveError::Dimension {
                    expected,
                    got: band.len(),
                });
            }
        }
        let scale = diag
            .iter()
            .chain(lower)
            .chain(upper)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let asym = lower
            .iter()
            .zip(upper)
            .fold(0.0f64, |m, (l, u)| m.max((l - u).abs()));
        if scale > 0.0 && asym > SYMMETRY_TOLERANCE * scale {
            return Err(LinsolveError::NotSymmetric(asym / scale));
        }
        Ok(Self {
            diag: diag.to_vec(),
            off: lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub(crate) fn add_to_diag(&mut self, i: usize, v: f64) {
        self.diag[i] += v;
    }

    pub(crate) fn add_to_off(&mut self, i: usize, v: f64) {
        self.off[i] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `xᵀAy`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        let diagonal: f64 = self.diag.iter().zip(x).zip(y).map(|((d, a), b)| d * a * b).sum();
        let coupling: f64 = self
            .off
            .iter()
            .zip(x.windows(2).zip(y.windows(2)))
            .map(|(o, (a, b))| o * (a[0] * b[1] + a[1] * b[0]))
            .sum();
        diagonal + coupling
    }

    /// `y += alpha·A·x`.
    pub fn axpy_mul_into(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] += alpha * acc;
        }
    }

    /// Overwrites `self` with `a + alpha·b`.
    pub fn assign_scaled_sum(&mut self, a: &Self, b: &Self, alpha: f64) {
        assert_eq!(self.dim(), a.dim());
        assert_eq!(self.dim(), b.dim());
        for ((s, x), y) in self.diag.iter_mut().zip(&a.diag).zip(&b.diag) {
            *s = x + alpha * y;
        }
        for ((s, x), y) in self.off.iter_mut().zip(&a.off).zip(&b.off) {
            *s = x + alpha * y;
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `self + alpha·other`.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + alpha * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    /// Leading `m × m` block; used to eliminate trailing Dirichlet nodes.
    pub fn leading_block(&self, m: usize) -> Self {
        assert!(m <= self.dim());
        Self {
            diag: self.diag[..m].to_vec(),
            off: self.off[..m.saturating_sub(1)].to_vec(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.dim()])
    }

    /// Sum of every entry, `1ᵀA1`.
    pub fn total_sum(&self) -> f64 {
        self.diag.iter().sum::<f64>() + 2.0 * self.off.iter().sum::<f64>()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.diag.iter().chain(&self.off).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.dim();
        let mut triplets = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                triplets.push((i, i - 1, self.off[i - 1]));
            }
            triplets.push((i, i, self.diag[i]));
            if i + 1 < n {
                triplets.push((i, i + 1, self.off[i]));
            }
        }
        CsrMatrix::from_triplets(n, &triplets)
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate `(row, col)` entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .binary_search(&j)
            .map(|k| self.values[range.start + k])
            .unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// Largest `|a_ij − a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// `max |i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, k)))
            .map(|(i, k)| i.abs_diff(self.col_idx[k]))
            .max()
            .unwrap_or(0)
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn to_tridiagonal(&self) -> SymTridiagonal {
        let n = self.n;
        let lower: Vec<f64> = (1..n).map(|i| self.get(i, i - 1)).collect();
        let upper: Vec<f64> = (1..n).map(|i| self.get(i - 1, i)).collect();
        SymTridiagonal {
            diag: self.diagonal(),
            off: lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    /// `A = LDLᵀ` with `L` unit lower bidiagonal; stores `1/D` and the subdiagonal of `L`.
    Banded { inv_pivots: Vec<f64>, sub: Vec<f64> },
    Cg { matrix: CsrMatrix, inv_diag: Vec<f64> },
}

/// Reusable solver for a fixed SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    factor: Factor,
    source: Option<SymTridiagonal>,
    tolerance: f64,
    max_iterations: usize,
}

impl SpdSolver {
    pub const DEFAULT_TOLERANCE: f64 = 1e-12;

    /// Factorizes a general sparse SPD matrix, taking the banded path when it is tridiagonal.
    pub fn factorize(a: &CsrMatrix) -> Result<Self, LinsolveError> {
        let asym = a.asymmetry();
        if asym > SYMMETRY_TOLERANCE {
            return Err(LinsolveError::NotSymmetric(asym));
        }
        if a.bandwidth() <= 1 {
            return Self::factorize_tridiagonal(&a.to_tridiagonal());
        }
        let diag = a.diagonal();
        let mut inv_diag = Vec::with_capacity(diag.len());
        for (row, &d) in diag.iter().enumerate() {
            if !(d > 0.0) {
                return Err(LinsolveError::NotSpd { row, pivot: d });
            }
            inv_diag.push(1.0 / d);
        }
        Ok(Self {
            factor: Factor::Cg {
                matrix: a.clone(),
                inv_diag,
            },
            source: None,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: 10 * a.dim().max(100),
        })
    }

    pub fn factorize_tridiagonal(a: &SymTridiagonal) -> Result<Self, LinsolveError> {
        let mut inv_pivots = Vec::with_capacity(a.dim());
        let mut sub = Vec::with_capacity(a.dim().saturating_sub(1));
        ldl_tridiagonal(a, &mut inv_pivots, &mut sub)?;
        Ok(Self {
            factor: Factor::Banded { inv_pivots, sub },
            source: Some(a.clone()),
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: 0,
        })
    }

    /// Replaces the factorization by that of `a`, reusing storage when possible.
    pub fn refactorize_tridiagonal(&mut self, a: &SymTridiagonal) -> Result<(), LinsolveError> {
        match (&mut self.factor, &mut self.source) {
            (Factor::Banded { inv_pivots, sub }, Some(source)) if source.dim() == a.dim() => {
                ldl_tridiagonal(a, inv_pivots, sub)?;
                source.diag.copy_from_slice(&a.diag);
                source.off.copy_from_slice(&a.off);
                Ok(())
            }
            _ => {
                let tolerance = self.tolerance;
                *self = Self::factorize_tridiagonal(a)?.with_tolerance(tolerance);
                Ok(())
            }
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Banded { inv_pivots, .. } => inv_pivots.len(),
            Factor::Cg { matrix, .. } => matrix.dim(),
        }
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.factor, Factor::Banded { .. })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinsolveError> {
        let mut x = Vec::new();
        self.solve_into(b, &mut x)?;
        Ok(x)
    }

    /// Solves `A x = b`, writing into `x`.
    pub fn solve_into(&self, b: &[f64], x: &mut Vec<f64>) -> Result<(), LinsolveError> {
        if b.len() != self.dim() {
            return Err(LinsolveError::Dimension {
                expected: self.dim(),
                got: b.len(),
            });
        }
        match &self.factor {
            Factor::Banded { inv_pivots, sub } => {
                x.clear();
                x.extend_from_slice(b);
                banded_solve_in_place(inv_pivots, sub, x);
                // One refinement pass keeps the residual at the requested level
                // when the pivots vary over many orders of magnitude.
                if let Some(a) = &self.source {
                    if residual_norm(a, x, b) > self.tolerance * norm(b) {
                        let ax = a.mul_vec(x);
                        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                        banded_solve_in_place(inv_pivots, sub, &mut r);
                        x.iter_mut().zip(r).for_each(|(xi, di)| *xi += di);
                    }
                }
                Ok(())
            }
            Factor::Cg { matrix, inv_diag } => {
                *x = pcg(matrix, inv_diag, b, self.tolerance, self.max_iterations)?;
                Ok(())
            }
        }
    }
}

/// `A = LDLᵀ` for a symmetric tridiagonal `A`.
fn ldl_tridiagonal(a: &SymTridiagonal, inv_pivots: &mut Vec<f64>, sub: &mut Vec<f64>) -> Result<(), LinsolveError> {
    inv_pivots.clear();
    sub.clear();
    let mut previous = 0.0;
    for i in 0..a.dim() {
        let mut d = a.diag[i];
        if i > 0 {
            let off = a.off[i - 1];
            let m = off * previous;
            sub.push(m);
            d -= m * off;
        }
        if !(d > 0.0) {
            return Err(LinsolveError::NotSpd { row: i, pivot: d });
        }
        previous = 1.0 / d;
        inv_pivots.push(previous);
    }
    Ok(())
}

fn residual_norm(a: &SymTridiagonal, x: &[f64], b: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut ax = a.diag[i] * x[i];
        if i > 0 {
            ax += a.off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            ax += a.off[i] * x[i + 1];
        }
        acc += (b[i] - ax) * (b[i] - ax);
    }
    acc.sqrt()
}

fn banded_solve_in_place(inv_pivots: &[f64], sub: &[f64], y: &mut [f64]) {
    let n = inv_pivots.len();
    for i in 1..n {
        y[i] -= sub[i - 1] * y[i - 1];
    }
    for (yi, inv) in y.iter_mut().zip(inv_pivots) {
        *yi *= inv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        y[i] -= sub[i] * y[i + 1];
    }
}

fn pcg(
    a: &CsrMatrix,
    inv_diag: &[f64],
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>, LinsolveError> {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iterations {
        let ad = a.mul_vec(&dir);
        let alpha = rz / dot(&dir, &ad);
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * ad[i];
        }
        if norm(&r) <= tolerance * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    Err(LinsolveError::MaxIterations {
        iterations: max_iterations,
        residual: norm(&r) / b_norm,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        norm(&r) / norm(b)
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let solver = SpdSolver::factorize_tridiagonal(&SymTridiagonal::identity(5)).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(solver.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn two_by_two() {
        let a = SymTridiagonal::new(vec![2.0, 2.0], vec![1.0]).unwrap();
        let x = SpdSolver::factorize_tridiagonal(&a).unwrap().solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite() {
        let a = SymTridiagonal::new(vec![1.0, 1.0], vec![2.0]).unwrap();
        assert!(matches!(
            SpdSolver::factorize_tridiagonal(&a),
            Err(LinsolveError::NotSpd { row: 1, .. })
        ));
    }

    #[test]
    fn rejects_asymmetric_bands() {
        let err = SymTridiagonal::from_bands(&[1.0], &[4.0, 4.0], &[1.5]).unwrap_err();
        assert!(matches!(err, LinsolveError::NotSymmetric(_)));
        let csr = CsrMatrix::from_triplets(2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.1), (1, 1, 4.0)]);
        assert!(matches!(
            SpdSolver::factorize(&csr),
            Err(LinsolveError::NotSymmetric(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let solver = SpdSolver::factorize_tridiagonal(&SymTridiagonal::identity(3)).unwrap();
        assert!(matches!(
            solver.solve(&[1.0]),
            Err(LinsolveError::Dimension { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn tridiagonal_csr_takes_banded_path() {
        let a = SymTridiagonal::new(vec![4.0; 6], vec![-1.0; 5]).unwrap();
        let solver = SpdSolver::factorize(&a.to_csr()).unwrap();
        assert!(solver.is_direct());
    }

    #[test]
    fn cg_on_five_point_laplacian() {
        let side = 12;
        let n = side * side;
        let mut triplets = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let k = i * side + j;
                triplets.push((k, k, 4.0));
                if i > 0 {
                    triplets.push((k, k - side, -1.0));
                }
                if i + 1 < side {
                    triplets.push((k, k + side, -1.0));
                }
                if j > 0 {
                    triplets.push((k, k - 1, -1.0));
                }
                if j + 1 < side {
                    triplets.push((k, k + 1, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, &triplets);
        let solver = SpdSolver::factorize(&a).unwrap();
        assert!(!solver.is_direct());
        let b: Vec<f64> = (0..n).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let x = solver.solve(&b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-12);

        let starved = SpdSolver::factorize(&a).unwrap().with_max_iterations(2);
        assert!(matches!(
            starved.solve(&b),
            Err(LinsolveError::MaxIterations { iterations: 2, .. })
        ));
    }
}
