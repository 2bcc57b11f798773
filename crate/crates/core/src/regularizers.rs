//! Constraint extensions: smoothness, fluctuation, weighted-average,
//! sparsity and spatial regularization.
//!
//! Each regularizer exposes its penalty value together with the contribution
//! it makes to the update rules. For additive steps the contribution is added
//! to the gradient. For multiplicative steps the sign convention is uniform:
//! the positive part of a contribution joins the denominator and the negative
//! part (its magnitude) joins the numerator, so both sides of the ratio stay
//! nonnegative and fixed points are preserved.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{dot, Mat};

/// Coefficients of all regularizers. A zero coefficient disables its term.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSet {
    /// 2-norm smoothness of endmembers in the input space.
    pub lambda: f64,
    /// 2-norm smoothness of endmembers in the feature space.
    pub lambda_feature: f64,
    /// Fluctuation (neighboring-band) smoothness of endmembers.
    pub gamma: f64,
    /// Weighted-average smoothness of endmembers.
    pub rho: f64,
    /// Forgetting factor of the weighted average, in `[0, 1)`.
    pub alpha: f64,
    /// Sparsity of abundances.
    pub mu: f64,
    /// Spatial regularization weights for the four neighbor directions.
    pub omega_left: f64,
    pub omega_right: f64,
    pub omega_up: f64,
    pub omega_down: f64,
    /// Forgetting factor of the spatial weighted averages, in `[0, 1)`.
    pub alpha_spatial: f64,
}

impl Default for RegularizerSet {
    fn default() -> Self {
        RegularizerSet {
            lambda: 0.0,
            lambda_feature: 0.0,
            gamma: 0.0,
            rho: 0.0,
            alpha: 0.5,
            mu: 0.0,
            omega_left: 0.0,
            omega_right: 0.0,
            omega_up: 0.0,
            omega_down: 0.0,
            alpha_spatial: 0.5,
        }
    }
}

impl RegularizerSet {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("lambda", self.lambda),
            ("lambda_feature", self.lambda_feature),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("mu", self.mu),
            ("omega_left", self.omega_left),
            ("omega_right", self.omega_right),
            ("omega_up", self.omega_up),
            ("omega_down", self.omega_down),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, a) in [("alpha", self.alpha), ("alpha_spatial", self.alpha_spatial)] {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn spatial_active(&self) -> bool {
        self.omega_left > 0.0
            || self.omega_right > 0.0
            || self.omega_up > 0.0
            || self.omega_down > 0.0
    }

    /// True when no term contributes to any update.
    pub fn all_inactive(&self) -> bool {
        self.lambda == 0.0
            && self.lambda_feature == 0.0
            && self.gamma == 0.0
            && self.rho == 0.0
            && self.mu == 0.0
            && !self.spatial_active()
    }
}

/// Lower-triangular weighted-average operator `T` and the derived
/// `Q = (1/s) (I - T)' (I - T)`.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    pub t: Mat,
    pub q: Mat,
}

/// Builds the `s x s` weighted-average operator for forgetting factor
/// `alpha`: `T(p, q) = alpha^(p-q) (1 - alpha)` for `p >= q`, zero above the
/// diagonal.
pub fn smoothing_matrix(alpha: f64, s: usize) -> Result<SmoothingOperator> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "forgetting factor must lie in [0, 1), got {alpha}"
        )));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("operator size must be >= 1".into()));
    }
    let t = Mat::from_fn(s, s, |p, q| {
        if p >= q {
            alpha.powi((p - q) as i32) * (1.0 - alpha)
        } else {
            0.0
        }
    });
    let i_minus_t = Mat::from_fn(s, s, |p, q| {
        let id = if p == q { 1.0 } else { 0.0 };
        id - t.get(p, q)
    });
    let q = i_minus_t
        .transpose()
        .matmul(&i_minus_t)
        .map(|v| v / s as f64);
    Ok(SmoothingOperator { t, q })
}

/// Per-endmember contribution of an endmember regularizer.
///
/// `grad[n]` is added to the gradient of the cost in additive steps. In
/// multiplicative steps its positive part goes to the denominator and the
/// magnitude of its negative part to the numerator.
#[derive(Debug, Clone)]
pub struct EndmemberTerms {
    pub penalty: f64,
    pub grad: Vec<Vec<f64>>,
}

/// 2-norm smoothness in the input space: penalty `(lambda/2) sum_n ||e_n||^2`,
/// contribution `lambda e_n`.
pub fn l2_input_terms(endmembers: &Mat, lambda: f64) -> EndmemberTerms {
    let mut penalty = 0.0;
    let grad = (0..endmembers.cols())
        .map(|n| {
            let e = endmembers.col(n);
            penalty += 0.5 * lambda * dot(e, e);
            e.iter().map(|&v| lambda * v).collect()
        })
        .collect();
    EndmemberTerms { penalty, grad }
}

/// 2-norm smoothness in the feature space: penalty
/// `(lambda_feature/2) sum_n k(e_n, e_n)`, contribution
/// `lambda_feature * self_grad(e_n)`.
///
/// With the linear kernel this coincides with [`l2_input_terms`]; with the
/// Gaussian kernel the contribution is identically zero because
/// `k(e, e) = 1` regardless of `e`.
pub fn l2_feature_terms(
    endmembers: &Mat,
    lambda_feature: f64,
    kernel: &KernelSpec,
) -> EndmemberTerms {
    let mut penalty = 0.0;
    let grad = (0..endmembers.cols())
        .map(|n| {
            let e = endmembers.col(n);
            penalty += 0.5 * lambda_feature * kernel.eval_unchecked(e, e);
            kernel
                .self_grad(e)
                .into_iter()
                .map(|v| lambda_feature * v)
                .collect()
        })
        .collect();
    EndmemberTerms { penalty, grad }
}

/// Subgradient of the fluctuation penalty for one endmember.
///
/// Component `l` of the result is `+gamma` where `e[l]` is a strict local
/// minimum among its two band neighbors, `-gamma` where it is a strict local
/// maximum, and zero otherwise (ties and the two boundary bands contribute
/// nothing).
pub fn fluctuation_subgradient(endmember: &[f64], gamma: f64) -> Vec<f64> {
    let l = endmember.len();
    let mut g = vec![0.0; l];
    if gamma == 0.0 || l < 3 {
        return g;
    }
    for i in 1..l - 1 {
        let (prev, cur, next) = (endmember[i - 1], endmember[i], endmember[i + 1]);
        if cur < prev && cur < next {
            g[i] = gamma;
        } else if cur > prev && cur > next {
            g[i] = -gamma;
        }
    }
    g
}

/// Fluctuation penalty value, used by the backtracking line search.
pub(crate) fn fluctuation_penalty(endmembers: &Mat, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let l = endmembers.rows();
    let mut p = 0.0;
    for n in 0..endmembers.cols() {
        let e = endmembers.col(n);
        for i in 1..l.saturating_sub(1) {
            p += (e[i] - e[i - 1]).abs();
        }
    }
    0.5 * gamma * p
}

/// Weighted-average smoothness: penalty `(rho/2L) sum_n ||(I - T) e_n||^2`,
/// contribution `rho Q e_n`.
pub fn weighted_average_terms(endmembers: &Mat, rho: f64, alpha: f64) -> Result<EndmemberTerms> {
    let l = endmembers.rows();
    let op = smoothing_matrix(alpha, l)?;
    let mut penalty = 0.0;
    let grad = (0..endmembers.cols())
        .map(|n| {
            let e = endmembers.col(n);
            let qe = op.q.mul_vec(e);
            // e' Q e = (1/L) ||(I - T) e||^2
            penalty += 0.5 * rho * dot(e, &qe);
            qe.into_iter().map(|v| rho * v).collect()
        })
        .collect();
    Ok(EndmemberTerms { penalty, grad })
}

/// Sparsity of abundances: penalty `mu * sum a_nt`, per-entry contribution
/// `mu` (both to the additive gradient and the multiplicative denominator).
#[derive(Debug, Clone, Copy)]
pub struct SparsityTerms {
    pub penalty: f64,
    pub grad: f64,
}

pub fn sparsity_terms(abundances: &Mat, mu: f64) -> SparsityTerms {
    let sum: f64 = abundances.iter().sum();
    SparsityTerms {
        penalty: mu * sum,
        grad: mu,
    }
}

// ---------------------------------------------------------------------------
// Spatial regularization on abundance maps
// ---------------------------------------------------------------------------

/// Folds one abundance row (pixel-indexed) into its `height x width` map.
///
/// Pixel `t` (0-based) lands at row `t / width`, column `t % width`,
/// matching the convention that fills the data matrix row by row of the
/// image grid.
pub fn fold_row(row: &[f64], height: usize, width: usize) -> Result<Mat> {
    if row.len() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold {} pixels into a {height}x{width} map",
            row.len()
        )));
    }
    Ok(Mat::from_fn(height, width, |i, j| row[i * width + j]))
}

/// Inverse of [`fold_row`].
pub fn unfold_map(map: &Mat) -> Vec<f64> {
    let (a, b) = (map.rows(), map.cols());
    let mut row = Vec::with_capacity(a * b);
    for i in 0..a {
        for j in 0..b {
            row.push(map.get(i, j));
        }
    }
    row
}

/// Spatial penalty of one abundance map, written exactly as the double sum
/// over pixels of the four directional smoothing residuals:
///
/// `R = 1/2 sum_i sum_j [ (wl/b)||(I-Tr) M'(i,:)||^2 + (wr/b)||(I-Tl) M'(i,:)||^2
///      + (wu/a)||(I-Td) M(:,j)||^2 + (wd/a)||(I-Tu) M(:,j)||^2 ]`
///
/// Each inner norm already covers a full row or column, so the double sum
/// weighs horizontal terms by `b` and vertical terms by `a`; the gradient
/// returned by [`spatial_g`] accounts for that.
pub fn spatial_penalty(
    map: &Mat,
    alpha: f64,
    omega_left: f64,
    omega_right: f64,
    omega_up: f64,
    omega_down: f64,
) -> Result<f64> {
    let (a, b) = (map.rows(), map.cols());
    let horiz = smoothing_matrix(alpha, b)?;
    let vert = smoothing_matrix(alpha, a)?;
    let right = &horiz.t;
    let left = right.transpose();
    let down = &vert.t;
    let up = down.transpose();

    let row_term: Vec<f64> = (0..a)
        .map(|i| {
            let r = map.row(i);
            omega_left / b as f64 * residual_sq(right, &r)
                + omega_right / b as f64 * residual_sq(&left, &r)
        })
        .collect();
    let col_term: Vec<f64> = (0..b)
        .map(|j| {
            let c: Vec<f64> = (0..a).map(|i| map.get(i, j)).collect();
            omega_up / a as f64 * residual_sq(down, &c)
                + omega_down / a as f64 * residual_sq(&up, &c)
        })
        .collect();

    let mut total = 0.0;
    for rt in &row_term {
        for ct in &col_term {
            total += rt + ct;
        }
    }
    Ok(0.5 * total)
}

/// `||(I - T) v||^2`.
fn residual_sq(t: &Mat, v: &[f64]) -> f64 {
    let tv = t.mul_vec(v);
    v.iter()
        .zip(tv.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Gradient of [`spatial_penalty`] with respect to each map entry.
///
/// In terms of the directional operators this is
/// `G = wl M S_r + wr M S_l + wu S_d M + wd S_u M` with
/// `S = (I - T)'(I - T)`; the `S` matrices absorb the `b` and `a` factors
/// coming from the double pixel sum of the penalty.
pub fn spatial_g(
    map: &Mat,
    alpha: f64,
    omega_left: f64,
    omega_right: f64,
    omega_up: f64,
    omega_down: f64,
) -> Result<Mat> {
    let (a, b) = (map.rows(), map.cols());
    let horiz = smoothing_matrix(alpha, b)?;
    let vert = smoothing_matrix(alpha, a)?;

    // s * Q = (I - T)'(I - T) for that direction; the transposed operator's
    // product is the mirror image.
    let s_right = horiz.q.map(|v| v * b as f64);
    let s_left = mirror(&s_right);
    let s_down = vert.q.map(|v| v * a as f64);
    let s_up = mirror(&s_down);

    let mut g = Mat::zeros(a, b);
    accumulate(&mut g, &map.matmul(&s_right), omega_left);
    accumulate(&mut g, &map.matmul(&s_left), omega_right);
    accumulate(&mut g, &s_down.matmul(map), omega_up);
    accumulate(&mut g, &s_up.matmul(map), omega_down);
    Ok(g)
}

/// `(I - T')'(I - T') = J S J` where `J` reverses indices: exploiting the
/// Toeplitz-like structure of `T` avoids rebuilding the operator.
fn mirror(s: &Mat) -> Mat {
    let n = s.rows();
    Mat::from_fn(n, n, |i, j| s.get(n - 1 - i, n - 1 - j))
}

fn accumulate(acc: &mut Mat, m: &Mat, w: f64) {
    if w == 0.0 {
        return;
    }
    for c in 0..acc.cols() {
        let src = m.col(c);
        for (dst, &v) in acc.col_mut(c).iter_mut().zip(src.iter()) {
            *dst += w * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn smoothing_matrix_alpha_zero_is_identity() {
        let op = smoothing_matrix(0.0, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(op.t.get(i, j), if i == j { 1.0 } else { 0.0 });
                assert_eq!(op.q.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn smoothing_matrix_known_entries() {
        let op = smoothing_matrix(0.5, 3).unwrap();
        let expected = Mat::from_rows(&[&[0.5, 0.0, 0.0], &[0.25, 0.5, 0.0], &[0.125, 0.25, 0.5]]);
        assert!(op.t.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn smoothing_q_is_symmetric_psd() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let s = 2 + rng.index(6);
            let alpha = 0.99 * rng.uniform();
            let op = smoothing_matrix(alpha, s).unwrap();
            assert!(op.q.max_abs_diff(&op.q.transpose()) < 1e-14);
            // x' Q x = (1/s)||(I-T)x||^2 >= 0 by construction; spot-check.
            for _ in 0..5 {
                let x: Vec<f64> = (0..s).map(|_| rng.uniform() - 0.5).collect();
                let qx = op.q.mul_vec(&x);
                assert!(dot(&x, &qx) >= -1e-12);
            }
        }
    }

    #[test]
    fn smoothing_matrix_rejects_bad_alpha() {
        assert!(smoothing_matrix(1.0, 3).is_err());
        assert!(smoothing_matrix(-0.1, 3).is_err());
    }

    #[test]
    fn l2_input_known_values() {
        let e = Mat::from_rows(&[&[1.0], &[2.0]]);
        let terms = l2_input_terms(&e, 2.0);
        assert_eq!(terms.penalty, 5.0);
        assert_eq!(terms.grad[0], vec![2.0, 4.0]);

        let zero = l2_input_terms(&e, 0.0);
        assert_eq!(zero.penalty, 0.0);
        assert_eq!(zero.grad[0], vec![0.0, 0.0]);
    }

    #[test]
    fn l2_feature_gaussian_contribution_vanishes() {
        let e = Mat::from_rows(&[&[0.3, 0.1], &[0.8, 0.9], &[0.2, 0.4]]);
        let k = KernelSpec::gaussian(1.7).unwrap();
        let terms = l2_feature_terms(&e, 12.5, &k);
        for g in &terms.grad {
            assert!(g.iter().all(|&v| v == 0.0));
        }
        // penalty is the constant (lambda/2) * N
        assert!((terms.penalty - 12.5).abs() < 1e-12);
    }

    #[test]
    fn l2_feature_linear_matches_input_space() {
        let mut rng = Rng::new(8);
        let e = Mat::from_fn(6, 3, |_, _| rng.uniform());
        let a = l2_input_terms(&e, 0.9);
        let b = l2_feature_terms(&e, 0.9, &KernelSpec::Linear);
        assert!((a.penalty - b.penalty).abs() < 1e-14);
        for n in 0..3 {
            for l in 0..6 {
                assert!((a.grad[n][l] - b.grad[n][l]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn l2_feature_polynomial_known_value() {
        let e = Mat::from_rows(&[&[1.0], &[0.0]]);
        let k = KernelSpec::polynomial(2, 0.0).unwrap();
        let terms = l2_feature_terms(&e, 1.0, &k);
        assert_eq!(terms.grad[0], vec![2.0, 0.0]);
    }

    #[test]
    fn fluctuation_monotone_is_zero() {
        let g = fluctuation_subgradient(&[0.1, 0.2, 0.5, 0.9], 3.0);
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn fluctuation_extrema_signs() {
        assert_eq!(
            fluctuation_subgradient(&[0.0, 1.0, 0.0], 2.0),
            vec![0.0, -2.0, 0.0]
        );
        assert_eq!(
            fluctuation_subgradient(&[1.0, 0.0, 1.0], 2.0),
            vec![0.0, 2.0, 0.0]
        );
    }

    #[test]
    fn fluctuation_ties_and_boundaries_are_zero() {
        let g = fluctuation_subgradient(&[0.5, 0.5, 0.1, 0.5, 0.5], 1.0);
        // index 2 is a strict local minimum; its neighbors tie on one side
        assert_eq!(g, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn weighted_average_alpha_zero_no_penalty() {
        let e = Mat::from_rows(&[&[0.4, 0.7], &[0.2, 0.5], &[0.6, 0.1]]);
        let terms = weighted_average_terms(&e, 3.0, 0.0).unwrap();
        assert_eq!(terms.penalty, 0.0);
        assert!(terms.grad.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn weighted_average_penalizes_constant_vectors() {
        // T under-weights the first bands, so even a flat spectrum pays.
        let e = Mat::from_fn(5, 1, |_, _| 1.0);
        let terms = weighted_average_terms(&e, 1.0, 0.5).unwrap();
        assert!(terms.penalty > 0.0);
    }

    #[test]
    fn weighted_average_grad_matches_fd() {
        let mut rng = Rng::new(31);
        let l = 6;
        let e = Mat::from_fn(l, 2, |_, _| rng.uniform());
        let (rho, alpha) = (1.3, 0.4);
        let terms = weighted_average_terms(&e, rho, alpha).unwrap();
        let h = 1e-6;
        for n in 0..2 {
            for i in 0..l {
                let mut plus = e.clone();
                plus.set(i, n, e.get(i, n) + h);
                let mut minus = e.clone();
                minus.set(i, n, e.get(i, n) - h);
                let fd = (weighted_average_terms(&plus, rho, alpha).unwrap().penalty
                    - weighted_average_terms(&minus, rho, alpha).unwrap().penalty)
                    / (2.0 * h);
                let g = terms.grad[n][i];
                let denom = fd.abs().max(g.abs()).max(1e-12);
                assert!((fd - g).abs() / denom < 1e-8, "fd {fd} vs grad {g}");
            }
        }
    }

    #[test]
    fn sparsity_known_values() {
        let a = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let t = sparsity_terms(&a, 0.5);
        assert_eq!(t.penalty, 1.0);
        assert_eq!(t.grad, 0.5);
        assert_eq!(sparsity_terms(&a, 0.0).penalty, 0.0);
    }

    #[test]
    fn fold_unfold_round_trip() {
        let row: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let m = fold_row(&row, 3, 4).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 3), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(2, 3), 11.0);
        assert_eq!(unfold_map(&m), row);
    }

    #[test]
    fn fold_rejects_wrong_size() {
        assert!(fold_row(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn spatial_zero_weights_give_zero() {
        let m = Mat::from_fn(3, 4, |i, j| (i + j) as f64);
        let g = spatial_g(&m, 0.5, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(spatial_penalty(&m, 0.5, 0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn spatial_alpha_zero_gives_zero() {
        let m = Mat::from_fn(3, 4, |i, j| (2 * i + j) as f64);
        let g = spatial_g(&m, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-15));
        assert!(spatial_penalty(&m, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap() < 1e-30);
    }

    #[test]
    fn spatial_penalty_frozen_value() {
        // Independent straight-from-formula evaluation of the 2x2 identity
        // map with alpha = 0.5 and unit weights gives 1.125.
        let m = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = spatial_penalty(&m, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((p - 1.125).abs() < 1e-12, "penalty {p}");
    }

    #[test]
    fn spatial_g_matches_fd_on_4x5_map() {
        let mut rng = Rng::new(45);
        let (a, b) = (4, 5);
        let m = Mat::from_fn(a, b, |_, _| rng.uniform());
        let alpha = 0.5;
        let w = (1.0, 1.0, 1.0, 1.0);
        let g = spatial_g(&m, alpha, w.0, w.1, w.2, w.3).unwrap();
        let h = 1e-6;
        for i in 0..a {
            for j in 0..b {
                let mut plus = m.clone();
                plus.set(i, j, m.get(i, j) + h);
                let mut minus = m.clone();
                minus.set(i, j, m.get(i, j) - h);
                let fd = (spatial_penalty(&plus, alpha, w.0, w.1, w.2, w.3).unwrap()
                    - spatial_penalty(&minus, alpha, w.0, w.1, w.2, w.3).unwrap())
                    / (2.0 * h);
                let denom = fd.abs().max(g.get(i, j).abs()).max(1e-12);
                assert!(
                    (fd - g.get(i, j)).abs() / denom < 1e-6,
                    "entry ({i},{j}): fd {fd} vs g {}",
                    g.get(i, j)
                );
            }
        }
    }

    #[test]
    fn spatial_g_interior_smaller_than_edges_on_constant_map() {
        let m = Mat::from_fn(6, 6, |_, _| 1.0);
        let g = spatial_g(&m, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        let mut max_interior: f64 = 0.0;
        let mut max_edge: f64 = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                let v = g.get(i, j).abs();
                if i == 0 || i == 5 || j == 0 || j == 5 {
                    max_edge = max_edge.max(v);
                } else {
                    max_interior = max_interior.max(v);
                }
            }
        }
        assert!(
            max_interior < max_edge,
            "interior {max_interior} vs edge {max_edge}"
        );
    }

    #[test]
    fn regularizer_set_validation() {
        let mut r = RegularizerSet::default();
        assert!(r.validate().is_ok());
        assert!(r.all_inactive());
        r.mu = -1.0;
        assert!(r.validate().is_err());
        r.mu = 0.0;
        r.alpha = 1.0;
        assert!(r.validate().is_err());
    }
}
