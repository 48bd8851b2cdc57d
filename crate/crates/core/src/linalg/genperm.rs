use super::{ensure_finite, LinalgError, RealMatrix, Result};

/// Moore–Penrose pseudo-inverse of a generalized permutation matrix: the
/// transposed pattern with reciprocal entries.
pub fn genperm_pinv(p: &RealMatrix) -> Result<RealMatrix> {
    ensure_finite(p)?;
    let (r, c) = p.shape();
    for i in 0..r {
        let count = (0..c).filter(|&j| p[(i, j)] != 0.0).count();
        if count > 1 {
            return Err(LinalgError::NotGeneralizedPermutation { reason: format!("row {i} has {count} nonzeros") });
        }
    }
    for j in 0..c {
        let count = (0..r).filter(|&i| p[(i, j)] != 0.0).count();
        if count > 1 {
            return Err(LinalgError::NotGeneralizedPermutation { reason: format!("column {j} has {count} nonzeros") });
        }
    }
    let mut out = RealMatrix::zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            if p[(i, j)] != 0.0 {
                out[(j, i)] = 1.0 / p[(i, j)];
            }
        }
    }
    Ok(out)
}
