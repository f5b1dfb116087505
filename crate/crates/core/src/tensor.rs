//! Row-major dense matrices and a strided GEMM wrapper.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat({}x{})", self.rows, self.cols)
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn view(&self) -> View<'_> {
        View { data: &self.data, offset: 0, rows: self.rows, cols: self.cols, rs: self.cols as isize, cs: 1 }
    }

    pub fn view_mut(&mut self) -> ViewMut<'_> {
        let (rows, cols) = (self.rows, self.cols);
        ViewMut { data: &mut self.data, offset: 0, rows, cols, rs: cols as isize, cs: 1 }
    }

    /// Columns `[start, start + width)` as a strided view.
    pub fn cols_view(&self, start: usize, width: usize) -> View<'_> {
        assert!(start + width <= self.cols);
        View { data: &self.data, offset: start, rows: self.rows, cols: width, rs: self.cols as isize, cs: 1 }
    }

    pub fn cols_view_mut(&mut self, start: usize, width: usize) -> ViewMut<'_> {
        assert!(start + width <= self.cols);
        let (rows, rs) = (self.rows, self.cols as isize);
        ViewMut { data: &mut self.data, offset: start, rows, cols: width, rs, cs: 1 }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(1.0, self.view(), other.view(), 0.0, out.view_mut());
        out
    }
}

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub struct View<'a> {
    data: &'a [f64],
    offset: usize,
    pub rows: usize,
    pub cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> View<'a> {
    /// Row-major view over a slice.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        View { data, offset: 0, rows, cols, rs: cols as isize, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    /// Columns `[start, start + width)` of this view.
    pub fn cols(self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols);
        View { offset: (self.offset as isize + start as isize * self.cs) as usize, cols: width, ..self }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset as isize + (self.rows as isize - 1) * self.rs + (self.cols as isize - 1) * self.cs;
            assert!(last >= 0 && (last as usize) < self.data.len(), "view out of bounds");
        }
    }
}

pub struct ViewMut<'a> {
    data: &'a mut [f64],
    offset: usize,
    pub rows: usize,
    pub cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> ViewMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        ViewMut { data, offset: 0, rows, cols, rs: cols as isize, cs: 1 }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset as isize + (self.rows as isize - 1) * self.rs + (self.cols as isize - 1) * self.cs;
            assert!(last >= 0 && (last as usize) < self.data.len(), "view out of bounds");
        }
    }
}

/// `c ← alpha · a · b + beta · c`.
pub fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "gemm output shape");
    a.check();
    b.check();
    c.check();
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: all three views were bounds-checked above for every (row, col) the
    // kernel touches, and `c` is a unique borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs,
            a.cs,
            b.data.as_ptr().add(b.offset),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs,
            c.cs,
        );
    }
}

/// Softmax of one row, optionally restricted to `mask`.
pub fn softmax_in_place(row: &mut [f64], mask: Option<&[bool]>) {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = row.iter().enumerate().filter(|(i, _)| allowed(*i)).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (i, v) in row.iter_mut().enumerate() {
        if allowed(i) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Backward of a (possibly masked) softmax row: `dz = p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64], dlogits: &mut [f64]) {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    for ((z, p), d) in dlogits.iter_mut().zip(probs).zip(dprobs) {
        *z = p * (d - dot);
    }
}
