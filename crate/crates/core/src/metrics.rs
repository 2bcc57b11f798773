//! Evaluation metrics: reconstruction errors in input and feature space,
//! and spectral-angle matching of estimated endmembers against a reference.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{dot, norm, Mat};

/// Evaluation summary for one run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub re: f64,
    pub re_phi: f64,
    /// Euclidean residual of each pixel in the input space.
    pub per_pixel_residuals: Vec<f64>,
    /// Spectral angle (degrees) of each reference endmember against its
    /// matched estimate; present only when ground truth is supplied.
    pub sam_per_endmember: Option<Vec<f64>>,
    /// `matching[n]` is the estimated column assigned to reference column `n`.
    pub matching: Option<Vec<usize>>,
}

fn check_shapes(x: &Mat, e: &Mat, a: &Mat) -> Result<()> {
    if e.rows() != x.rows() || a.rows() != e.cols() || a.cols() != x.cols() {
        return Err(Error::DimensionMismatch(format!(
            "data {}x{}, endmembers {}x{}, abundances {}x{}",
            x.rows(),
            x.cols(),
            e.rows(),
            e.cols(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Root-mean-square reconstruction error in the input space:
/// `sqrt( (1 / T L) sum_t || x_t - sum_n a_nt e_n ||^2 )`.
pub fn reconstruction_error(x: &Mat, e: &Mat, a: &Mat) -> Result<f64> {
    Ok(per_pixel_residuals(x, e, a)?
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        .sqrt()
        / ((x.rows() * x.cols()) as f64).sqrt())
}

/// Euclidean residual of each pixel.
pub fn per_pixel_residuals(x: &Mat, e: &Mat, a: &Mat) -> Result<Vec<f64>> {
    check_shapes(x, e, a)?;
    let recon = e.matmul(a);
    Ok((0..x.cols())
        .map(|t| {
            x.col(t)
                .iter()
                .zip(recon.col(t).iter())
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Root-mean-square reconstruction error in the feature space, computed
/// entirely through kernel evaluations:
/// `sqrt( (1 / T L) sum_t || Phi(x_t) - sum_n a_nt Phi(e_n) ||^2 )`.
pub fn feature_reconstruction_error(x: &Mat, e: &Mat, a: &Mat, kernel: &KernelSpec) -> Result<f64> {
    check_shapes(x, e, a)?;
    let gram = kernel.gram(e);
    let cross = kernel.cross_gram(e, x)?;
    let n = e.cols();
    let mut total = 0.0;
    for t in 0..x.cols() {
        let xt = x.col(t);
        let at = a.col(t);
        let mut term = kernel.eval_unchecked(xt, xt);
        for p in 0..n {
            term -= 2.0 * at[p] * cross.get(p, t);
            if at[p] != 0.0 {
                for q in 0..n {
                    term += at[p] * at[q] * gram.get(p, q);
                }
            }
        }
        total += term;
    }
    // Cancellation can leave a tiny negative residue for exact fits.
    Ok((total / (x.rows() * x.cols()) as f64).max(0.0).sqrt())
}

/// Spectral angle between two spectra, in degrees.
pub fn spectral_angle_degrees(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Numeric(
            "spectral angle is undefined for a zero spectrum".into(),
        ));
    }
    let c = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Matches estimated endmembers to reference endmembers with the bijection
/// minimizing the total spectral angle, found by exhaustive search over
/// permutations (the rank never exceeds a handful in unmixing).
///
/// Returns `(matching, angles)` where `matching[n]` is the estimated column
/// paired with reference column `n` and `angles[n]` the angle in degrees.
pub fn spectral_angle_match(estimated: &Mat, reference: &Mat) -> Result<(Vec<usize>, Vec<f64>)> {
    if estimated.rows() != reference.rows() || estimated.cols() != reference.cols() {
        return Err(Error::DimensionMismatch(format!(
            "estimated {}x{} vs reference {}x{}",
            estimated.rows(),
            estimated.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let n = reference.cols();
    const MAX_EXHAUSTIVE: usize = 8;
    if n > MAX_EXHAUSTIVE {
        return Err(Error::InvalidParameter(format!(
            "exhaustive matching supports at most {MAX_EXHAUSTIVE} endmembers, got {n}"
        )));
    }
    let mut angle = vec![vec![0.0; n]; n];
    for (r, row) in angle.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = spectral_angle_degrees(reference.col(r), estimated.col(c))?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = (0..n).map(|r| angle[r][p[r]]).sum();
        match &best {
            Some((t, _)) if *t <= total => {}
            _ => best = Some((total, p.to_vec())),
        }
    });
    let (_, matching) = best.expect("at least one permutation");
    let angles = (0..n).map(|r| angle[r][matching[r]]).collect();
    Ok((matching, angles))
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Builds the full evaluation report, matching against the reference
/// endmembers when provided.
pub fn evaluate(
    x: &Mat,
    e: &Mat,
    a: &Mat,
    kernel: &KernelSpec,
    reference: Option<&Mat>,
) -> Result<EvalReport> {
    let per_pixel = per_pixel_residuals(x, e, a)?;
    let re = (per_pixel.iter().map(|r| r * r).sum::<f64>() / (x.rows() * x.cols()) as f64).sqrt();
    let re_phi = feature_reconstruction_error(x, e, a, kernel)?;
    let (matching, sam) = match reference {
        Some(truth) => {
            let (m, s) = spectral_angle_match(e, truth)?;
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        re,
        re_phi,
        per_pixel_residuals: per_pixel,
        sam_per_endmember: sam,
        matching,
    })
}
