//! Dense vector/matrix containers and the element-wise nonlinearities shared
//! by every architecture.
//!
//! Matrices are row-major with explicit `(rows, cols)`, and weight matrices
//! are always oriented destination-dim x source-dim, so `y = W x` maps a
//! source vector of length `cols` to a destination vector of length `rows`.
//!
//! The batched kernels (`affine_cols`, `gemm_acc`, ...) process one column
//! per lane and accumulate in the same source-index order as the per-vector
//! kernels, so a batched result column is bitwise identical to the
//! corresponding per-vector call.

use crate::scalar::Scalar;

/// Logistic sigmoid, 1 / (1 + e^-x). Saturates smoothly at 0 and 1.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Hyperbolic tangent used for cell input and cell output activations.
pub fn tanh_act<S: Scalar>(x: S) -> S {
    x.tanh()
}

/// Dense vector of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<S> {
    data: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn zeros(n: usize) -> Self {
        Vector { data: vec![S::zero(); n] }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Vector { data }
    }

    pub fn from_f64_slice(values: &[f64]) -> Self {
        Vector { data: values.iter().map(|&v| S::from_config(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.data.iter()
    }
}

impl<S: Scalar> std::ops::Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.data[i]
    }
}

impl<S: Scalar> std::ops::IndexMut<usize> for Vector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.data[i]
    }
}

/// Dense row-major matrix, `rows x cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix from_vec: {rows}x{cols} needs {} values, got {}",
            rows * cols,
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { S::one() } else { S::zero() })
    }

    /// Every column set to `b`.
    pub fn broadcast_cols(b: &Vector<S>, cols: usize) -> Self {
        let mut m = Matrix::zeros(b.len(), cols);
        for i in 0..b.len() {
            let bi = b[i];
            for v in m.row_mut(i) {
                *v = bi;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col_to_vector(&self, j: usize) -> Vector<S> {
        assert!(j < self.cols, "column {j} out of range for {}x{}", self.rows, self.cols);
        Vector::from_vec((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn set_col(&mut self, j: usize, v: &[S]) {
        assert_eq!(v.len(), self.rows, "set_col: {} values into {} rows", v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self.set(i, j, x);
        }
    }

    pub fn transpose(&self) -> Matrix<S> {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map_inplace(&mut self, f: impl Fn(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Lossy element conversion between scalar types (f32 <-> f64).
    pub fn convert<T: Scalar>(&self) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::from_config(v.to_f64().unwrap())).collect(),
        }
    }

    /// self += w * x, accumulating over source indices in ascending order.
    pub fn gemm_acc(&mut self, w: &Matrix<S>, x: &Matrix<S>) {
        assert_eq!(
            w.cols, x.rows,
            "gemm: weight is {}x{} but input has {} rows",
            w.rows, w.cols, x.rows
        );
        assert!(
            self.rows == w.rows && self.cols == x.cols,
            "gemm: output is {}x{} but needs {}x{}",
            self.rows, self.cols, w.rows, x.cols
        );
        let lanes = self.cols;
        for i in 0..w.rows {
            let w_row = w.row(i);
            let out = &mut self.data[i * lanes..(i + 1) * lanes];
            for (j, &wij) in w_row.iter().enumerate() {
                let x_row = &x.data[j * lanes..(j + 1) * lanes];
                for (o, &xv) in out.iter_mut().zip(x_row.iter()) {
                    *o = *o + wij * xv;
                }
            }
        }
    }

    /// self += w^T * dy  (back-propagation of deltas through a weight matrix).
    pub fn gemm_t_acc(&mut self, w: &Matrix<S>, dy: &Matrix<S>) {
        assert_eq!(
            w.rows, dy.rows,
            "gemm_t: weight is {}x{} but delta has {} rows",
            w.rows, w.cols, dy.rows
        );
        assert!(
            self.rows == w.cols && self.cols == dy.cols,
            "gemm_t: output is {}x{} but needs {}x{}",
            self.rows, self.cols, w.cols, dy.cols
        );
        let lanes = self.cols;
        for i in 0..w.rows {
            let w_row = w.row(i);
            let dy_row = &dy.data[i * lanes..(i + 1) * lanes];
            for (j, &wij) in w_row.iter().enumerate() {
                let out = &mut self.data[j * lanes..(j + 1) * lanes];
                for (o, &dv) in out.iter_mut().zip(dy_row.iter()) {
                    *o = *o + wij * dv;
                }
            }
        }
    }

    /// self += dy * x^T  (weight-gradient outer product, summed over lanes).
    pub fn outer_acc(&mut self, dy: &Matrix<S>, x: &Matrix<S>) {
        assert_eq!(
            dy.cols, x.cols,
            "outer: delta has {} lanes but input has {}",
            dy.cols, x.cols
        );
        assert!(
            self.rows == dy.rows && self.cols == x.rows,
            "outer: output is {}x{} but needs {}x{}",
            self.rows, self.cols, dy.rows, x.rows
        );
        for i in 0..dy.rows {
            let dy_row = dy.row(i);
            for j in 0..x.rows {
                let x_row = x.row(j);
                let mut acc = S::zero();
                for (&d, &xv) in dy_row.iter().zip(x_row.iter()) {
                    acc = acc + d * xv;
                }
                let idx = i * self.cols + j;
                self.data[idx] = self.data[idx] + acc;
            }
        }
    }

    /// self[i, l] += v[i] * other[i, l]   (diagonal/peephole term).
    pub fn addmul_rows(&mut self, v: &Vector<S>, other: &Matrix<S>) {
        assert!(
            self.rows == v.len() && self.rows == other.rows && self.cols == other.cols,
            "addmul_rows: target {}x{}, diag {}, other {}x{}",
            self.rows, self.cols, v.len(), other.rows, other.cols
        );
        let lanes = self.cols;
        for i in 0..self.rows {
            let vi = v[i];
            let o_row = &other.data[i * lanes..(i + 1) * lanes];
            let t_row = &mut self.data[i * lanes..(i + 1) * lanes];
            for (t, &ov) in t_row.iter_mut().zip(o_row.iter()) {
                *t = *t + vi * ov;
            }
        }
    }
}

/// v[i] += sum over lanes of m[i, l]   (bias gradients).
pub fn row_sums_acc<S: Scalar>(v: &mut Vector<S>, m: &Matrix<S>) {
    assert_eq!(v.len(), m.rows(), "row_sums: vector {} vs matrix {} rows", v.len(), m.rows());
    for i in 0..m.rows() {
        let mut acc = S::zero();
        for &x in m.row(i) {
            acc = acc + x;
        }
        v[i] += acc;
    }
}

/// v[i] += sum over lanes of a[i, l] * b[i, l]   (peephole gradients).
pub fn row_dots_acc<S: Scalar>(v: &mut Vector<S>, a: &Matrix<S>, b: &Matrix<S>) {
    assert!(
        v.len() == a.rows() && a.rows() == b.rows() && a.cols() == b.cols(),
        "row_dots: vector {}, a {}x{}, b {}x{}",
        v.len(), a.rows(), a.cols(), b.rows(), b.cols()
    );
    for i in 0..a.rows() {
        let mut acc = S::zero();
        for (&av, &bv) in a.row(i).iter().zip(b.row(i).iter()) {
            acc = acc + av * bv;
        }
        v[i] += acc;
    }
}

/// y = W x + b.
pub fn affine<S: Scalar>(w: &Matrix<S>, x: &Vector<S>, b: &Vector<S>) -> Vector<S> {
    assert_eq!(
        w.cols(),
        x.len(),
        "affine: weight is {}x{} but input has length {}",
        w.rows(), w.cols(), x.len()
    );
    assert_eq!(
        w.rows(),
        b.len(),
        "affine: weight is {}x{} but bias has length {}",
        w.rows(), w.cols(), b.len()
    );
    let mut y = b.clone();
    for i in 0..w.rows() {
        let mut acc = y[i];
        for (&wij, &xj) in w.row(i).iter().zip(x.iter()) {
            acc = acc + wij * xj;
        }
        y[i] = acc;
    }
    y
}

/// Y = W X + b broadcast over columns; column `l` is bitwise identical to
/// `affine(w, X[:, l], b)`.
pub fn affine_cols<S: Scalar>(w: &Matrix<S>, x: &Matrix<S>, b: &Vector<S>) -> Matrix<S> {
    let mut y = Matrix::broadcast_cols(b, x.cols());
    y.gemm_acc(w, x);
    y
}

/// Numerically stable softmax (max-subtraction); output sums to 1.
pub fn softmax<S: Scalar>(z: &Vector<S>) -> Vector<S> {
    assert!(!z.is_empty(), "softmax of an empty vector");
    let mut max = z[0];
    for &v in z.iter() {
        if v > max {
            max = v;
        }
    }
    let mut out = Vector::zeros(z.len());
    let mut sum = S::zero();
    for k in 0..z.len() {
        let e = (z[k] - max).exp();
        out[k] = e;
        sum = sum + e;
    }
    for k in 0..z.len() {
        out[k] = out[k] / sum;
    }
    out
}
