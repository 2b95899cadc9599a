//! Dense row-major matrices used as tape node values.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, vec![value])
    }

    /// Column vector.
    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(n, 1, data)
    }

    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(1, n, data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)?;
        if self.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Strided read-only view, used to express transposes without copying.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn of(m: &'a Mat) -> Self {
        Self::raw(&m.data, m.rows, m.cols)
    }

    pub fn raw(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn maybe_t(self, transpose: bool) -> Self {
        if transpose {
            self.t()
        } else {
            self
        }
    }
}

/// `out (m x n) = beta * out + a (m x k) * b (k x n)`.
pub(crate) fn gemm(out: &mut [f64], a: View<'_>, b: View<'_>, beta: f64) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in out.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the views borrow slices whose extents cover every strided
    // index touched for the given shapes; `out` is an exclusive m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = Mat::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::new(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.0, -2.0]);
        // a * b^T
        let mut out = vec![0.0; 4];
        gemm(&mut out, View::of(&a), View::of(&b).t(), 0.0);
        let naive: Vec<f64> = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (0..3).map(|k| a.get(i, k) * b.get(j, k)).sum())
            .collect();
        assert_eq!(out, naive);
        // a^T * b
        let mut out = vec![0.0; 9];
        gemm(&mut out, View::of(&a).t(), View::of(&b), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = (0..2).map(|k| a.get(k, i) * b.get(k, j)).sum();
                assert_eq!(out[i * 3 + j], want);
            }
        }
    }
}
