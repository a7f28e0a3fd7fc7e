//! Dense row-major matrices and strided GEMM views.

use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Immutable strided 2-D view into a slice.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, S> {
    data: &'a [S],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

/// Mutable strided 2-D view into a slice.
#[derive(Debug)]
pub struct ViewMut<'a, S> {
    data: &'a mut [S],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

fn span_ok(len: usize, offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> bool {
    if rows == 0 || cols == 0 {
        return offset <= len;
    }
    offset + (rows - 1) * rs + (cols - 1) * cs < len
}

impl<'a, S: Scalar> View<'a, S> {
    pub fn new(data: &'a [S], offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(span_ok(data.len(), offset, rows, cols, rs, cs), "view out of bounds");
        Self { data, offset, rows, cols, rs, cs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[self.offset + r * self.rs + c * self.cs]
    }
}

impl<'a, S: Scalar> ViewMut<'a, S> {
    pub fn new(data: &'a mut [S], offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(span_ok(data.len(), offset, rows, cols, rs, cs), "view out of bounds");
        Self { data, offset, rows, cols, rs, cs }
    }
}

/// `c ← alpha·a·b + beta·c`. When `beta` is zero, `c` is not read.
pub fn gemm<S: Scalar>(alpha: S, a: View<'_, S>, b: View<'_, S>, beta: S, c: ViewMut<'_, S>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(c.rows, a.rows, "gemm output rows");
    assert_eq!(c.cols, b.cols, "gemm output cols");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        // empty inner product: c ← beta·c
        for r in 0..c.rows {
            for col in 0..c.cols {
                let i = c.offset + r * c.rs + col * c.cs;
                c.data[i] = if beta == S::zero() { S::zero() } else { beta * c.data[i] };
            }
        }
        return;
    }
    // SAFETY: every view was bounds-checked at construction and `c` is a
    // unique borrow, so it cannot alias `a` or `b`.
    unsafe {
        S::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec length");
        Self { rows, cols, data }
    }

    pub fn try_from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Shape,
            "buffer of {} elements cannot form a {rows}x{cols} matrix",
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn view(&self) -> View<'_, S> {
        View::new(&self.data, 0, self.rows, self.cols, self.cols, 1)
    }

    pub fn view_mut(&mut self) -> ViewMut<'_, S> {
        let (rows, cols) = (self.rows, self.cols);
        ViewMut::new(&mut self.data, 0, rows, cols, cols, 1)
    }

    /// Column block `[c0, c0 + ncols)` as a strided view.
    pub fn col_block(&self, c0: usize, ncols: usize) -> View<'_, S> {
        assert!(c0 + ncols <= self.cols);
        View::new(&self.data, c0, self.rows, ncols, self.cols, 1)
    }

    pub fn col_block_mut(&mut self, c0: usize, ncols: usize) -> ViewMut<'_, S> {
        assert!(c0 + ncols <= self.cols);
        let (rows, cols) = (self.rows, self.cols);
        ViewMut::new(&mut self.data, c0, rows, ncols, cols, 1)
    }

    pub fn matmul(&self, rhs: &Mat<S>) -> Result<Mat<S>> {
        ensure!(
            self.cols == rhs.rows,
            Shape,
            "matmul {}x{} by {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        gemm(S::one(), self.view(), rhs.view(), S::zero(), out.view_mut());
        Ok(out)
    }

    pub fn transpose(&self) -> Mat<S> {
        Mat::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Mat<S> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn check_same(&self, other: &Mat<S>, what: &str) -> Result<()> {
        ensure!(
            self.shape() == other.shape(),
            Shape,
            "{what}: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        Ok(())
    }

    pub fn zip_map(&self, other: &Mat<S>, f: impl Fn(S, S) -> S) -> Result<Mat<S>> {
        self.check_same(other, "elementwise op")?;
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Mat<S>) -> Result<Mat<S>> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat<S>) -> Result<Mat<S>> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> Mat<S> {
        self.map(|x| x * k)
    }

    /// `self ← self + k·other`.
    pub fn axpy(&mut self, k: S, other: &Mat<S>) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn sum_sq(&self) -> S {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> S {
        self.sum_sq().sqrt()
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        self.data.iter().copied().sum::<S>() / S::lit(self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &Mat<S>) -> Result<S> {
        self.check_same(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |m, x| if x > m { x } else { m }))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| T::lit(x.as_f64())).collect(),
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Mat<S>]) -> Result<Mat<S>> {
        let cols = parts.first().map(|m| m.cols).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            ensure!(p.cols == cols, Shape, "vstack column mismatch: {} vs {cols}", p.cols);
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Mat { rows, cols, data })
    }

    /// Rows `[start, start + len)` copied into a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Mat<S>> {
        ensure!(
            start + len <= self.rows,
            Shape,
            "row slice {start}..{} of {} rows",
            start + len,
            self.rows
        );
        Ok(Mat {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        })
    }
}
