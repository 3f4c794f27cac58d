//! Dense matrices over a prime field.
//!
//! Entries are stored row-major as canonical residues alongside the owning
//! [`PrimeField`], so a matrix can never mix moduli.

use std::fmt;

use thiserror::Error;

use crate::field::{FieldElement, FieldError, PrimeField};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("evaluation point {0} appears more than once")]
    DuplicatePoint(u32),
    #[error("evaluation points must be nonzero")]
    ZeroPoint,
    #[error("matrix is not diagonal")]
    NotDiagonal,
    #[error("diagonal entry {0} is repeated")]
    RepeatedDiagonal(u32),
    #[error("diagonal entries must be nonzero")]
    ZeroDiagonal,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear system is inconsistent")]
    Inconsistent,
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl Matrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from integers, reducing each modulo `q`.
    pub fn from_values(field: PrimeField, rows: usize, cols: usize, values: &[u64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(MatrixError::LengthMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self {
            field,
            rows,
            cols,
            data: values.iter().map(|&v| field.element(v).value()).collect(),
        })
    }

    /// Row-slice convenience constructor; all rows must have equal length.
    pub fn from_rows<R: AsRef<[u64]>>(field: PrimeField, rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MatrixError::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_values(field, rows.len(), cols, &values)
    }

    pub fn from_elements(rows: usize, cols: usize, entries: &[FieldElement]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(MatrixError::LengthMismatch {
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        let field = entries.first().ok_or(MatrixError::Empty)?.field();
        let mut data = Vec::with_capacity(entries.len());
        for e in entries {
            if e.field() != field {
                return Err(FieldError::ModulusMismatch {
                    left: field.modulus(),
                    right: e.field().modulus(),
                }
                .into());
            }
            data.push(e.value());
        }
        Ok(Self {
            field,
            rows,
            cols,
            data,
        })
    }

    /// Square diagonal matrix with the given diagonal.
    pub fn diagonal(entries: &[FieldElement]) -> Result<Self> {
        let n = entries.len();
        let field = entries.first().ok_or(MatrixError::Empty)?.field();
        let mut m = Self::zeros(field, n, n);
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, *e)?;
        }
        Ok(m)
    }

    pub(crate) fn from_raw(field: PrimeField, rows: usize, cols: usize, data: Vec<u32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|&v| v < field.modulus()));
        Self {
            field,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> FieldElement {
        self.field.element(self.raw(i, j) as u64)
    }

    #[inline]
    pub(crate) fn raw(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set_raw(&mut self, i: usize, j: usize, v: u32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: FieldElement) -> Result<()> {
        if v.field() != self.field {
            return Err(FieldError::ModulusMismatch {
                left: self.field.modulus(),
                right: v.field().modulus(),
            }
            .into());
        }
        self.set_raw(i, j, v.value());
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<FieldElement> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub(crate) fn row_raw(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Entries as plain integers, one `Vec` per row.
    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        (0..self.rows).map(|i| self.row_raw(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.raw(i, j) == self.raw(j, i)))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set_raw(j, i, self.raw(i, j));
            }
        }
        t
    }

    fn check_field(&self, other: &Self) -> Result<()> {
        if self.field != other.field {
            return Err(FieldError::ModulusMismatch {
                left: self.field.modulus(),
                right: other.field.modulus(),
            }
            .into());
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "mul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let q = self.field.modulus() as u64;
        let mut out = Self::zeros(self.field, self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0u64;
                for t in 0..self.cols {
                    acc = (acc + self.raw(i, t) as u64 * other.raw(t, j) as u64) % q;
                }
                out.set_raw(i, j, acc as u32);
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(u32, u32) -> u32) -> Result<Self> {
        self.check_field(other)?;
        if self.shape() != other.shape() {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.field, self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let f = self.field;
        self.zip_with(other, "add", |a, b| f.add_raw(a, b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let f = self.field;
        self.zip_with(other, "sub", |a, b| f.sub_raw(a, b))
    }

    pub fn scale(&self, s: FieldElement) -> Result<Self> {
        if s.field() != self.field {
            return Err(FieldError::ModulusMismatch {
                left: self.field.modulus(),
                right: s.field().modulus(),
            }
            .into());
        }
        let f = self.field;
        let data = self.data.iter().map(|&a| f.mul_raw(a, s.value())).collect();
        Ok(Self::from_raw(self.field, self.rows, self.cols, data))
    }

    /// Copies the `nrows x ncols` block starting at `(row, col)`.
    pub fn submatrix(&self, row: usize, col: usize, nrows: usize, ncols: usize) -> Result<Self> {
        if row + nrows > self.rows || col + ncols > self.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "submatrix",
                left: self.shape(),
                right: (row + nrows, col + ncols),
            });
        }
        let mut out = Self::zeros(self.field, nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                out.set_raw(i, j, self.raw(row + i, col + j));
            }
        }
        Ok(out)
    }

    /// Writes `block` into `self` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &Self) -> Result<()> {
        self.check_field(block)?;
        if row + block.rows > self.rows || col + block.cols > self.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "set_block",
                left: self.shape(),
                right: (row + block.rows, col + block.cols),
            });
        }
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set_raw(row + i, col + j, block.raw(i, j));
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(MatrixError::DimensionMismatch {
                    op: "select_rows",
                    left: self.shape(),
                    right: (i + 1, self.cols),
                });
            }
            data.extend_from_slice(self.row_raw(i));
        }
        Ok(Self::from_raw(self.field, indices.len(), self.cols, data))
    }

    /// Gauss-Jordan inversion, taking the first nonzero entry in each column
    /// as pivot.
    pub fn invert(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if self.rows == 0 {
            return Err(MatrixError::Empty);
        }
        let n = self.rows;
        let f = self.field;
        let w = 2 * n;
        let mut aug = vec![0u32; n * w];
        for i in 0..n {
            aug[i * w..i * w + n].copy_from_slice(self.row_raw(i));
            aug[i * w + n + i] = 1;
        }
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| aug[r * w + col] != 0)
                .ok_or(MatrixError::Singular)?;
            if pivot != col {
                for j in 0..w {
                    aug.swap(pivot * w + j, col * w + j);
                }
            }
            let inv = f.inv_raw(aug[col * w + col])?;
            for j in 0..w {
                aug[col * w + j] = f.mul_raw(aug[col * w + j], inv);
            }
            for r in 0..n {
                let factor = aug[r * w + col];
                if r == col || factor == 0 {
                    continue;
                }
                for j in 0..w {
                    let t = f.mul_raw(factor, aug[col * w + j]);
                    aug[r * w + j] = f.sub_raw(aug[r * w + j], t);
                }
            }
        }
        let data = (0..n)
            .flat_map(|i| aug[i * w + n..(i + 1) * w].to_vec())
            .collect();
        Ok(Self::from_raw(f, n, n, data))
    }

    /// Row vector times matrix, on raw residues.
    pub(crate) fn left_mul_vec(&self, v: &[u32]) -> Vec<u32> {
        debug_assert_eq!(v.len(), self.rows);
        let q = self.field.modulus() as u64;
        (0..self.cols)
            .map(|j| {
                let mut acc = 0u64;
                for (i, &vi) in v.iter().enumerate() {
                    acc = (acc + vi as u64 * self.raw(i, j) as u64) % q;
                }
                acc as u32
            })
            .collect()
    }

    /// Matrix times column vector, on raw residues.
    pub(crate) fn mul_vec(&self, v: &[u32]) -> Vec<u32> {
        debug_assert_eq!(v.len(), self.cols);
        let q = self.field.modulus() as u64;
        (0..self.rows)
            .map(|i| {
                let mut acc = 0u64;
                for (&a, &b) in self.row_raw(i).iter().zip(v) {
                    acc = (acc + a as u64 * b as u64) % q;
                }
                acc as u32
            })
            .collect()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} over {}", self.rows, self.cols, self.field)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row_raw(i))?;
        }
        Ok(())
    }
}

/// Checks that `points` are pairwise distinct and nonzero.
pub(crate) fn check_points(points: &[FieldElement]) -> Result<PrimeField> {
    let field = points.first().ok_or(MatrixError::Empty)?.field();
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    for p in points {
        if p.field() != field {
            return Err(FieldError::ModulusMismatch {
                left: field.modulus(),
                right: p.field().modulus(),
            }
            .into());
        }
        if p.is_zero() {
            return Err(MatrixError::ZeroPoint);
        }
        if !seen.insert(p.value()) {
            return Err(MatrixError::DuplicatePoint(p.value()));
        }
    }
    Ok(field)
}

/// Generalized Vandermonde matrix: entry `(i, j)` is `points[i]^(start_power + j)`
/// (zero-based `j`).
pub fn build_gvm(points: &[FieldElement], start_power: u64, cols: usize) -> Result<Matrix> {
    let field = check_points(points)?;
    if cols == 0 {
        return Err(MatrixError::Empty);
    }
    let mut m = Matrix::zeros(field, points.len(), cols);
    for (i, p) in points.iter().enumerate() {
        let mut v = field.pow_raw(p.value(), start_power);
        for j in 0..cols {
            m.set_raw(i, j, v);
            v = field.mul_raw(v, p.value());
        }
    }
    Ok(m)
}

/// Solver for `X = Phi A + Delta Phi B` with unknown symmetric `A`, `B`.
///
/// `Phi` is `k x (k-1)` and every `(k-1)`-row puncture of it must be
/// invertible (true for a generalized Vandermonde on distinct nonzero
/// points); `Delta` is diagonal with distinct nonzero entries. Everything that
/// depends only on `Phi` and `Delta` is inverted once up front so repeated
/// solves (one per stripe) are just products.
#[derive(Debug, Clone)]
pub struct SymmetricPairSolver {
    k: usize,
    phi: Matrix,
    phi_t: Matrix,
    delta: Vec<u32>,
    /// `inv_diff[i * k + j] = 1 / (delta_i - delta_j)` for `i < j`.
    inv_diff: Vec<u32>,
    /// `((Phi without row i)^T)^-1` for `i < k - 1`.
    punctured_t_inv: Vec<Matrix>,
    /// `(Phi without its last row)^-1`.
    leading_inv: Matrix,
}

impl SymmetricPairSolver {
    pub fn new(phi: &Matrix, delta: &Matrix) -> Result<Self> {
        let k = phi.rows();
        if k < 2 || phi.cols() != k - 1 {
            return Err(MatrixError::InvalidInput(format!(
                "phi must be k x (k-1) with k >= 2, got {}x{}",
                phi.rows(),
                phi.cols()
            )));
        }
        phi.check_field(delta)?;
        if delta.shape() != (k, k) {
            return Err(MatrixError::DimensionMismatch {
                op: "symmetric pair delta",
                left: phi.shape(),
                right: delta.shape(),
            });
        }
        let field = phi.field();
        let mut diag = Vec::with_capacity(k);
        for i in 0..k {
            for j in 0..k {
                if i != j && delta.raw(i, j) != 0 {
                    return Err(MatrixError::NotDiagonal);
                }
            }
            let d = delta.raw(i, i);
            if d == 0 {
                return Err(MatrixError::ZeroDiagonal);
            }
            if diag.contains(&d) {
                return Err(MatrixError::RepeatedDiagonal(d));
            }
            diag.push(d);
        }
        let mut inv_diff = vec![0u32; k * k];
        for i in 0..k {
            for j in i + 1..k {
                inv_diff[i * k + j] = field.inv_raw(field.sub_raw(diag[i], diag[j]))?;
            }
        }
        let singular_puncture = |e: MatrixError| match e {
            MatrixError::Singular => MatrixError::InvalidInput(
                "phi has a singular (k-1)-row puncture; it is not a generalized Vandermonde".into(),
            ),
            other => other,
        };
        let mut punctured_t_inv = Vec::with_capacity(k - 1);
        for i in 0..k - 1 {
            let keep: Vec<usize> = (0..k).filter(|&r| r != i).collect();
            let inv = phi
                .select_rows(&keep)?
                .transpose()
                .invert()
                .map_err(singular_puncture)?;
            punctured_t_inv.push(inv);
        }
        let leading: Vec<usize> = (0..k - 1).collect();
        let leading_inv = phi
            .select_rows(&leading)?
            .invert()
            .map_err(singular_puncture)?;
        Ok(Self {
            k,
            phi: phi.clone(),
            phi_t: phi.transpose(),
            delta: diag,
            inv_diff,
            punctured_t_inv,
            leading_inv,
        })
    }

    pub fn solve(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let k = self.k;
        if x.shape() != (k, k - 1) {
            return Err(MatrixError::DimensionMismatch {
                op: "symmetric pair x",
                left: (k, k - 1),
                right: x.shape(),
            });
        }
        self.phi.check_field(x)?;
        let f = self.phi.field();

        // X Phi^T = P + Delta Q with P, Q symmetric; the off-diagonal pairs
        // (i, j), (j, i) give two equations in P_ij, Q_ij.
        let y = x.mul(&self.phi_t)?;
        let mut p = Matrix::zeros(f, k, k);
        let mut q = Matrix::zeros(f, k, k);
        for i in 0..k {
            for j in i + 1..k {
                let qij = f.mul_raw(f.sub_raw(y.raw(i, j), y.raw(j, i)), self.inv_diff[i * k + j]);
                let pij = f.sub_raw(y.raw(i, j), f.mul_raw(self.delta[i], qij));
                p.set_raw(i, j, pij);
                p.set_raw(j, i, pij);
                q.set_raw(i, j, qij);
                q.set_raw(j, i, qij);
            }
        }

        // Row i of P without its diagonal is phi_i A (Phi without row i)^T;
        // rows 0..k-1 stacked give (Phi without last row) A.
        let recover = |pq: &Matrix| -> Matrix {
            let mut stacked = Matrix::zeros(f, k - 1, k - 1);
            for i in 0..k - 1 {
                let off_diag: Vec<u32> = (0..k).filter(|&j| j != i).map(|j| pq.raw(i, j)).collect();
                let row = self.punctured_t_inv[i].left_mul_vec(&off_diag);
                for (j, v) in row.into_iter().enumerate() {
                    stacked.set_raw(i, j, v);
                }
            }
            self.leading_inv
                .mul(&stacked)
                .expect("shapes fixed at construction")
        };
        let a = recover(&p);
        let b = recover(&q);

        let mut recomposed = self.phi.mul(&a)?;
        let phi_b = self.phi.mul(&b)?;
        for i in 0..k {
            for j in 0..k - 1 {
                let v = f.add_raw(recomposed.raw(i, j), f.mul_raw(self.delta[i], phi_b.raw(i, j)));
                recomposed.set_raw(i, j, v);
            }
        }
        if &recomposed != x || !a.is_symmetric() || !b.is_symmetric() {
            return Err(MatrixError::Inconsistent);
        }
        Ok((a, b))
    }
}

/// Recovers symmetric `A`, `B` from `X = Phi A + Delta Phi B`.
pub fn solve_symmetric_pair(x: &Matrix, phi: &Matrix, delta: &Matrix) -> Result<(Matrix, Matrix)> {
    SymmetricPairSolver::new(phi, delta)?.solve(x)
}
