//! Small dense and banded linear algebra used by the time steppers.

/// 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

pub fn mat2_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat2_det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of a 2x2 matrix, `None` when it is singular or not finite.
pub fn mat2_inverse(m: &Mat2) -> Option<Mat2> {
    let det = mat2_det(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// LU factorization of a tridiagonal matrix (Thomas algorithm without pivoting).
///
/// Intended for the diagonally dominant operators `I - theta * D` of the implicit
/// schemes; the factorization is computed once and reused for every time step.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    // modified super-diagonal c'_i and reciprocal pivots 1 / (b_i - a_i c'_{i-1})
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    /// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` ignored), `upper[i]` multiplies
    /// `x[i+1]` (`upper[n-1]` ignored).
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        if n == 0 || lower.len() != n || upper.len() != n {
            return None;
        }
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let a = if i == 0 { 0.0 } else { lower[i] };
            let pivot = diag[i] - a * prev_c;
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            inv_pivot[i] = 1.0 / pivot;
            let c = if i + 1 < n { upper[i] } else { 0.0 };
            upper_mod[i] = c * inv_pivot[i];
            prev_c = upper_mod[i];
        }
        Some(Self {
            lower: lower.to_vec(),
            upper_mod,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solve in place: on return `rhs` holds the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "tridiagonal solve: dimension mismatch");
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}
