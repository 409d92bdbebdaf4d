//! Dense complex linear algebra: scalars, row-major matrices, the
//! sesquilinear inner product, principal-branch phase, row softmax and
//! complex layer normalization.
//!
//! Every routine here is a pure function of its inputs and works in double
//! precision.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, HoloError, Result};

/// Complex scalar `re + j·im`.
pub type C64 = Complex64;

/// Modulus `sqrt(re² + im²)`.
#[inline]
pub fn magnitude(z: C64) -> f64 {
    z.re.hypot(z.im)
}

/// Principal argument in `(−π, π]`, with `angle(0) = 0`.
#[inline]
pub fn angle(z: C64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    // atan2 yields −π for a negative real with a −0.0 imaginary part.
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Maps an angle into `(−π, π]`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let two_pi = 2.0 * PI;
    let mut r = (x + PI).rem_euclid(two_pi) - PI;
    if r <= -PI {
        r += two_pi;
    }
    r
}

/// Unit phasor `exp(j·theta)`.
#[inline]
pub fn phasor(theta: f64) -> C64 {
    let (s, c) = theta.sin_cos();
    C64::new(c, s)
}

/// Complex inner product `Σ_k a_k · conj(b_k)`, conjugating the second slot.
pub fn cdot(a: &[C64], b: &[C64]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(dim_err(
            "cdot",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    if a.is_empty() {
        return Err(dim_err("cdot", "empty vectors"));
    }
    Ok(cdot_unchecked(a, b))
}

#[inline]
pub(crate) fn cdot_unchecked(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.im * y.re - x.re * y.im;
    }
    C64::new(re, im)
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(
                "RealMatrix::new",
                format!("{} values for {}x{}", data.len(), rows, cols),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dense row-major matrix of complex scalars.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(
                "ComplexMatrix::new",
                format!("{} values for {}x{}", data.len(), rows, cols),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(dim_err("ComplexMatrix::from_rows", "ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_real(m: &RealMatrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Same data viewed with a different shape.
    pub fn reshape(self, rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, self.data)
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(dim_err(
                "matmul",
                format!("{:?} x {:?}", self.shape(), rhs.shape()),
            ));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        let n = rhs.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    o.re += a.re * b.re - a.im * b.im;
                    o.im += a.re * b.im + a.im * b.re;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn check_same(&self, rhs: &ComplexMatrix, op: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(dim_err(
                op,
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same(rhs, "add")?;
        Ok(self.zip_map(rhs, |a, b| a + b))
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same(rhs, "sub")?;
        Ok(self.zip_map(rhs, |a, b| a - b))
    }

    pub fn add_assign(&mut self, rhs: &ComplexMatrix) -> Result<()> {
        self.check_same(rhs, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    fn zip_map(&self, rhs: &ComplexMatrix, f: impl Fn(C64, C64) -> C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Entrywise map in row-major order.
    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Rows `start..start + len`, clamped to the matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> ComplexMatrix {
        let start = start.min(self.rows);
        let end = (start + len).min(self.rows);
        ComplexMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        self.map(|z| z * s)
    }

    /// Multiplies every entry by `exp(j·theta)`.
    pub fn rotate(&self, theta: f64) -> ComplexMatrix {
        self.scale(phasor(theta))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row_vector(&self, v: &[C64]) -> Result<ComplexMatrix> {
        if v.len() != self.cols {
            return Err(dim_err(
                "add_row_vector",
                format!("vector {} for {} columns", v.len(), self.cols),
            ));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (z, b) in out.row_mut(i).iter_mut().zip(v) {
                *z += b;
            }
        }
        Ok(out)
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<ComplexMatrix> {
        if start + len > self.cols {
            return Err(dim_err(
                "slice_cols",
                format!("{}..{} of {}", start, start + len, self.cols),
            ));
        }
        Ok(ComplexMatrix::from_fn(self.rows, len, |i, j| {
            self.get(i, start + j)
        }))
    }

    /// Horizontal concatenation.
    pub fn concat_cols(parts: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(dim_err("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    /// Mean over rows, as a `1 × cols` matrix.
    pub fn mean_rows(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(1, self.cols);
        if self.rows == 0 {
            return out;
        }
        for i in 0..self.rows {
            for (o, z) in out.data.iter_mut().zip(self.row(i)) {
                *o += z;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for o in &mut out.data {
            *o *= inv;
        }
        out
    }

    pub fn real_part(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }

    /// Entrywise modulus as a real-valued complex matrix.
    pub fn magnitudes(&self) -> ComplexMatrix {
        self.map(|z| C64::new(magnitude(z), 0.0))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(magnitude(*z)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        vec_norm(self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn row_softmax(w: &RealMatrix) -> RealMatrix {
    let mut out = w.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Row-normalized input and per-row scale `σ_t` from complex layer norm.
pub(crate) fn normalize_rows(z: &ComplexMatrix, eps: f64) -> (ComplexMatrix, Vec<f64>) {
    let n = z.cols() as f64;
    let mut out = z.clone();
    let mut sigmas = Vec::with_capacity(z.rows());
    for t in 0..z.rows() {
        let row = out.row_mut(t);
        let mean = row.iter().sum::<C64>() / n;
        let mut ms = 0.0;
        for x in row.iter_mut() {
            *x -= mean;
            ms += x.norm_sqr();
        }
        let sigma = (ms / n + eps).sqrt();
        for x in row.iter_mut() {
            *x /= sigma;
        }
        sigmas.push(sigma);
    }
    (out, sigmas)
}

/// Complex layer normalization: per row, `gain ⊙ (z − μ)/σ + bias` with
/// `σ = sqrt(mean |z − μ|² + eps)`.
pub fn complex_layer_norm(
    z: &ComplexMatrix,
    gain: &[C64],
    bias: &[C64],
    eps: f64,
) -> Result<ComplexMatrix> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(HoloError::Config(format!(
            "layer norm eps must be positive, got {eps}"
        )));
    }
    if gain.len() != z.cols() || bias.len() != z.cols() {
        return Err(dim_err(
            "complex_layer_norm",
            format!(
                "gain {} / bias {} for {} columns",
                gain.len(),
                bias.len(),
                z.cols()
            ),
        ));
    }
    let (mut out, _) = normalize_rows(z, eps);
    for t in 0..out.rows() {
        for ((x, g), b) in out.row_mut(t).iter_mut().zip(gain).zip(bias) {
            *x = *x * g + b;
        }
    }
    Ok(out)
}
