//! Minimal dense complex linear algebra for the trajectory engine and the
//! steady-state oracle: row-major matrices, matrix exponential by scaling
//! and squaring, and Gaussian elimination.

use num_complex::Complex64;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] = value;
    }

    #[inline]
    pub fn add_to(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] += value;
    }

    pub fn dagger(&self) -> CMatrix {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * other.data[k * n + c];
                }
            }
        }
        out
    }

    /// out = self · x.
    #[inline]
    pub fn matvec(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for (r, slot) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[r * n..(r + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, v) in row.iter().zip(x) {
                acc += a * v;
            }
            *slot = acc;
        }
    }

    pub fn scaled(&self, factor: Complex64) -> CMatrix {
        CMatrix { n: self.n, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.n, other.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Maximum absolute column sum (induced 1-norm).
    pub fn norm_1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|c| (0..n).map(|r| self.data[r * n + c].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |A - A†| entry relative to the largest |A| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut max_entry = 0.0f64;
        let mut max_defect = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                max_entry = max_entry.max(self.data[r * n + c].norm());
                let defect = (self.data[r * n + c] - self.data[c * n + r].conj()).norm();
                max_defect = max_defect.max(defect);
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_defect / max_entry
        }
    }
}

/// Matrix exponential e^A by scaling and squaring with a Taylor series on
/// the scaled matrix. Accurate to machine precision for the well-scaled
/// generators used here.
pub fn expm(a: &CMatrix) -> CMatrix {
    let norm = a.norm_1();
    let scaling = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scaled = a.scaled(Complex64::new(1.0 / 2f64.powi(scaling as i32), 0.0));

    let mut result = CMatrix::identity(a.n);
    let mut term = CMatrix::identity(a.n);
    for k in 1..=64 {
        term = term.matmul(&scaled).scaled(Complex64::new(1.0 / k as f64, 0.0));
        result = result.add(&term);
        if term.norm_1() < 1e-20 * result.norm_1() {
            break;
        }
    }
    for _ in 0..scaling {
        result = result.matmul(&result);
    }
    result
}

/// Solve A·x = b by Gaussian elimination with partial pivoting. Returns
/// None when the system is numerically singular.
pub fn solve(a: &CMatrix, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m[r * n + col].norm().partial_cmp(&m[s * n + col].norm()).unwrap())?;
        if m[pivot_row * n + col].norm() < 1e-14 * scale {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let sub = f * m[col * n + k];
                m[r * n + k] -= sub;
            }
            let sub = f * rhs[col];
            rhs[r] -= sub;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    Some(x)
}

/// Number of numerically null pivots met while eliminating A; estimates the
/// nullspace dimension for the degeneracy check.
pub fn null_pivot_count(a: &CMatrix, relative_tolerance: f64) -> usize {
    let n = a.n;
    let mut m = a.data.clone();
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return n;
    }
    let tol = relative_tolerance * scale;
    let mut nulls = 0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m[r * n + col].norm().partial_cmp(&m[s * n + col].norm()).unwrap())
            .unwrap();
        if m[pivot_row * n + col].norm() < tol {
            nulls += 1;
            continue;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
        }
        let pivot = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / pivot;
            for k in col..n {
                let sub = f * m[col * n + k];
                m[r * n + k] -= sub;
            }
        }
    }
    nulls
}
