//! Dense SVD helpers for bipartite amplitudes sampled with quadrature
//! weights.
//!
//! A continuous kernel `Γ(x, y)` sampled with weights `w` is decomposed by
//! the SVD of `diag(√w) Γ diag(√w)`; dividing the singular vectors by `√w`
//! gives modes that are orthonormal under the same quadrature.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub(crate) struct WeightedSvd {
    /// Singular values, non-increasing.
    pub singular_values: Vec<f64>,
    /// Left modes (columns), quadrature-orthonormal. Present on request.
    pub left: Option<DMatrix<Complex64>>,
    /// Right modes such that `Γ ≈ Σ σ_j left_j(x) right_j(y)`.
    pub right: Option<DMatrix<Complex64>>,
}

fn is_real(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

fn check_finite(m: &DMatrix<Complex64>) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("joint amplitude".into()))
    }
}

/// SVD of a weighted kernel. With `vectors = false` only singular values are
/// computed.
pub(crate) fn weighted_svd(values: &DMatrix<Complex64>, weights: &[f64], vectors: bool) -> Result<WeightedSvd> {
    check_finite(values)?;
    let (r, c) = values.shape();
    assert_eq!(r, weights.len());
    assert_eq!(c, weights.len());
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let (sv, u, vt): (DVector<f64>, _, _) = if is_real(values) {
        let a = DMatrix::<f64>::from_fn(r, c, |i, j| sw[i] * values[(i, j)].re * sw[j]);
        let svd = a.svd(vectors, vectors);
        let u = svd.u.map(|m| m.map(|x| Complex64::new(x, 0.0)));
        let vt = svd.v_t.map(|m| m.map(|x| Complex64::new(x, 0.0)));
        (svd.singular_values, u, vt)
    } else {
        let a = DMatrix::<Complex64>::from_fn(r, c, |i, j| values[(i, j)] * (sw[i] * sw[j]));
        let svd = a.svd(vectors, vectors);
        (svd.singular_values, svd.u, svd.v_t)
    };

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<f64> = order.iter().map(|&k| sv[k]).collect();

    let (left, right) = match (u, vt) {
        (Some(u), Some(vt)) => {
            let left = DMatrix::from_fn(r, order.len(), |i, j| u[(i, order[j])] / sw[i]);
            // Γ = U Σ Vᴴ  →  right mode j(y) = conj(V[y, j]) = Vᴴ[j, y].
            let right = DMatrix::from_fn(c, order.len(), |i, j| vt[(order[j], i)] / sw[i]);
            (Some(left), Some(right))
        }
        _ => (None, None),
    };

    Ok(WeightedSvd {
        singular_values: sorted,
        left,
        right,
    })
}
