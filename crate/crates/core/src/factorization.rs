//! Data types and alternating solvers for the factorization problem.
//!
//! The model approximates each pixel spectrum in feature space,
//! `Phi(x_t) ~ sum_n a_nt Phi(e_n)`, with the endmembers `e_n` kept in the
//! input space. Two update schemes are provided: additive gradient descent
//! with rectification, and multiplicative (split-gradient) rules that
//! preserve nonnegativity without any stepsize.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{dot, Mat};
use crate::metrics;
use crate::regularizers::{
    self, fold_row, l2_feature_terms, l2_input_terms, sparsity_terms, spatial_g, spatial_penalty,
    unfold_map, weighted_average_terms, RegularizerSet,
};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Nonnegative data matrix `X` (bands x pixels) with its spatial fold
/// dimensions. Pixel `t` (0-based) sits at grid row `t / width`, column
/// `t % width` of the `height x width` image.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    data: Mat,
    height: usize,
    width: usize,
}

impl HyperCube {
    pub fn new(data: Mat, height: usize, width: usize) -> Result<Self> {
        if data.cols() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels cannot fill a {height}x{width} grid",
                data.cols()
            )));
        }
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidParameter(
                "cube must have at least one band and one pixel".into(),
            ));
        }
        for t in 0..data.cols() {
            for (l, &v) in data.col(t).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite reflectance at band {l}, pixel {t}"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative reflectance {v} at band {l}, pixel {t}"
                    )));
                }
            }
        }
        Ok(HyperCube {
            data,
            height,
            width,
        })
    }

    /// Cube with a degenerate 1 x T spatial grid, for data without imagery.
    pub fn flat(data: Mat) -> Result<Self> {
        let w = data.cols();
        HyperCube::new(data, 1, w)
    }

    pub fn matrix(&self) -> &Mat {
        &self.data
    }

    pub fn bands(&self) -> usize {
        self.data.rows()
    }

    pub fn pixels(&self) -> usize {
        self.data.cols()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel(&self, t: usize) -> &[f64] {
        self.data.col(t)
    }
}

/// Endmember spectra, one per column of an `L x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Endmembers {
    pub matrix: Mat,
}

impl Endmembers {
    /// Wraps a matrix, enforcing nonnegative finite entries.
    pub fn new(matrix: Mat) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(Error::InvalidParameter(
                "need at least one endmember".into(),
            ));
        }
        if !matrix.is_finite() {
            return Err(Error::Numeric("non-finite endmember entry".into()));
        }
        if matrix.min() < 0.0 {
            return Err(Error::InvalidParameter(
                "endmembers must be nonnegative (use from_matrix for semi-relaxed factors)".into(),
            ));
        }
        Ok(Endmembers { matrix })
    }

    /// Wraps without the sign check, for the semi-relaxed variant where only
    /// the abundances are constrained.
    pub fn from_matrix(matrix: Mat) -> Self {
        Endmembers { matrix }
    }

    pub fn count(&self) -> usize {
        self.matrix.cols()
    }

    pub fn spectrum(&self, n: usize) -> &[f64] {
        self.matrix.col(n)
    }
}

/// Abundance fractions, entry `(n, t)` of an `N x T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Abundances {
    pub matrix: Mat,
}

impl Abundances {
    pub fn new(matrix: Mat) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::Numeric("non-finite abundance entry".into()));
        }
        if matrix.min() < 0.0 {
            return Err(Error::InvalidParameter(
                "abundances must be nonnegative".into(),
            ));
        }
        Ok(Abundances { matrix })
    }
}

/// Update scheme for both factor sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScheme {
    /// Gradient descent followed by rectification at zero.
    Additive,
    /// Split-gradient multiplicative rules.
    Multiplicative,
}

/// Factor initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// All entries i.i.d. uniform on `(eps, 1]`.
    RandomUniform,
    /// Endmembers drawn from distinct data columns plus a strictly positive
    /// uniform jitter in `(0, jitter]`; abundances uniform then normalized.
    DataColumns { jitter: f64 },
}

/// Stepsize policy of the additive scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub abundance: f64,
    pub endmember: f64,
    /// Halve the stepsize (at most [`MAX_BACKTRACK_HALVINGS`] times) until
    /// the objective stops increasing; keeps the factors when it never does.
    pub backtracking: bool,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            abundance: 1e-3,
            endmember: 1e-3,
            backtracking: false,
        }
    }
}

pub const MAX_BACKTRACK_HALVINGS: usize = 20;

/// Full solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub kernel: KernelSpec,
    pub scheme: UpdateScheme,
    pub iterations: usize,
    pub step_sizes: StepSizes,
    pub sum_to_one: bool,
    /// When sum-to-one is enabled: normalize after every abundance sweep
    /// (true) or once after the final iteration (false).
    pub normalize_every_iteration: bool,
    pub semi_relaxed: bool,
    pub regularizers: RegularizerSet,
    pub init: InitScheme,
    pub seed: u64,
    pub epsilon_guard: f64,
    /// Worker threads for the sweeps; 1 is the bit-exact reference mode.
    pub threads: usize,
}

impl SolverConfig {
    pub fn new(rank: usize, kernel: KernelSpec) -> Self {
        SolverConfig {
            rank,
            kernel,
            scheme: UpdateScheme::Multiplicative,
            iterations: 200,
            step_sizes: StepSizes::default(),
            sum_to_one: false,
            normalize_every_iteration: true,
            semi_relaxed: false,
            regularizers: RegularizerSet::default(),
            init: InitScheme::DataColumns { jitter: 1e-6 },
            seed: 0,
            epsilon_guard: 1e-12,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.regularizers.validate()?;
        if self.rank == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.step_sizes.abundance > 0.0 && self.step_sizes.endmember > 0.0) {
            return Err(Error::InvalidParameter("stepsizes must be positive".into()));
        }
        if self.epsilon_guard <= 0.0 || self.epsilon_guard.is_nan() {
            return Err(Error::InvalidParameter(
                "epsilon guard must be positive".into(),
            ));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        if self.scheme == UpdateScheme::Multiplicative {
            if let KernelSpec::Polynomial { degree, .. } = self.kernel {
                if degree != 2 {
                    return Err(Error::UnsupportedConfiguration(format!(
                        "the polynomial multiplicative rule is only derived for degree 2 \
                         (got degree {degree}); use the additive scheme for other degrees"
                    )));
                }
            }
        }
        if let InitScheme::DataColumns { jitter } = self.init {
            if !(jitter >= 0.0 && jitter.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "init jitter must be finite and nonnegative, got {jitter}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub endmembers: Endmembers,
    pub abundances: Abundances,
    /// Cost after initialization and after each full iteration
    /// (`iterations + 1` values).
    pub cost_trace: Vec<f64>,
    pub re: f64,
    pub re_phi: f64,
    pub wall_time: Duration,
    pub config: SolverConfig,
    /// Pixels whose abundance column summed to zero during normalization.
    pub zero_columns: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Cost and gradients
// ---------------------------------------------------------------------------

fn check_shapes(x: &Mat, e: &Mat, a: &Mat) -> Result<()> {
    if e.rows() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "endmembers have {} bands but data has {}",
            e.rows(),
            x.rows()
        )));
    }
    if a.rows() != e.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} abundance rows for {} endmembers",
            a.rows(),
            e.cols()
        )));
    }
    if a.cols() != x.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} abundance columns for {} pixels",
            a.cols(),
            x.cols()
        )));
    }
    Ok(())
}

/// Cost `J = 1/2 sum_t || Phi(x_t) - sum_n a_nt Phi(e_n) ||^2`, expanded
/// through kernel evaluations. The constant `k(x_t, x_t)` term is kept so
/// that `J = (T L / 2) * re_phi^2` holds exactly.
pub fn cost(x: &Mat, e: &Mat, a: &Mat, kernel: &KernelSpec) -> Result<f64> {
    check_shapes(x, e, a)?;
    let gram = kernel.gram(e);
    let cross = kernel.cross_gram(e, x)?;
    let n = e.cols();
    let mut j = 0.0;
    for t in 0..x.cols() {
        let xt = x.col(t);
        let at = a.col(t);
        let mut term = kernel.eval_unchecked(xt, xt);
        for p in 0..n {
            term -= 2.0 * at[p] * cross.get(p, t);
            let apt = at[p];
            if apt != 0.0 {
                for (q, &aqt) in at.iter().enumerate() {
                    term += apt * aqt * gram.get(p, q);
                }
            }
        }
        j += term;
    }
    Ok(0.5 * j)
}

/// Partial derivative of the cost with respect to `a[n][t]`:
/// `-k(e_n, x_t) + sum_m a_mt k(e_n, e_m)`.
pub fn grad_a(x: &Mat, e: &Mat, a: &Mat, kernel: &KernelSpec, n: usize, t: usize) -> Result<f64> {
    check_shapes(x, e, a)?;
    if n >= e.cols() || t >= x.cols() {
        return Err(Error::InvalidParameter(format!(
            "index ({n}, {t}) out of range for {} endmembers, {} pixels",
            e.cols(),
            x.cols()
        )));
    }
    let en = e.col(n);
    let mut g = -kernel.eval_unchecked(en, x.col(t));
    for m in 0..e.cols() {
        g += a.get(m, t) * kernel.eval_unchecked(en, e.col(m));
    }
    Ok(g)
}

/// Gradient of the cost with respect to endmember `n`:
/// `sum_t a_nt ( -grad k(e_n, x_t) + sum_m a_mt grad k(e_n, e_m) )`.
pub fn grad_e(x: &Mat, e: &Mat, a: &Mat, kernel: &KernelSpec, n: usize) -> Result<Vec<f64>> {
    check_shapes(x, e, a)?;
    if n >= e.cols() {
        return Err(Error::InvalidParameter(format!(
            "endmember index {n} out of range for {}",
            e.cols()
        )));
    }
    Ok(grad_e_inner(x, e, a, kernel, n))
}

fn grad_e_inner(x: &Mat, e: &Mat, a: &Mat, kernel: &KernelSpec, n: usize) -> Vec<f64> {
    let l = x.rows();
    let en = e.col(n);
    let mut g = vec![0.0; l];
    // Data part: -sum_t a_nt grad k(e_n, x_t).
    for t in 0..x.cols() {
        let ant = a.get(n, t);
        if ant == 0.0 {
            continue;
        }
        let gk = kernel.grad_unchecked(en, x.col(t));
        for (gi, gki) in g.iter_mut().zip(gk.iter()) {
            *gi -= ant * gki;
        }
    }
    // Endmember part: the weight of grad k(e_n, e_m) is sum_t a_nt a_mt.
    for m in 0..e.cols() {
        let w: f64 = (0..x.cols()).map(|t| a.get(n, t) * a.get(m, t)).sum();
        if w == 0.0 {
            continue;
        }
        let gk = kernel.grad_unchecked(en, e.col(m));
        for (gi, gki) in g.iter_mut().zip(gk.iter()) {
            *gi += w * gki;
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Update steps
// ---------------------------------------------------------------------------

/// Ratio of the multiplicative rules with the zero-denominator guard: exact
/// division when the denominator is healthy, `1` when both sides are below
/// the guard (dead components stay inert), and a damped division otherwise.
#[inline]
pub(crate) fn guarded_ratio(num: f64, den: f64, eps: f64) -> f64 {
    if den > eps {
        num / den
    } else if num <= eps {
        1.0
    } else {
        num / (den + eps)
    }
}

/// Splits a signed regularizer contribution for the multiplicative rules:
/// the positive part belongs to the denominator, the magnitude of the
/// negative part to the numerator.
#[inline]
fn split_signed(v: f64) -> (f64, f64) {
    if v >= 0.0 {
        (v, 0.0)
    } else {
        (0.0, -v)
    }
}

/// Spatial gradient maps, one unfolded row per endmember, recomputed from
/// the pre-sweep abundances.
fn spatial_rows(cube: &HyperCube, a: &Mat, regs: &RegularizerSet) -> Result<Vec<Vec<f64>>> {
    if !regs.spatial_active() {
        return Ok(Vec::new());
    }
    (0..a.rows())
        .map(|n| {
            let map = fold_row(&a.row(n), cube.height(), cube.width())?;
            let g = spatial_g(
                &map,
                regs.alpha_spatial,
                regs.omega_left,
                regs.omega_right,
                regs.omega_up,
                regs.omega_down,
            )?;
            Ok(unfold_map(&g))
        })
        .collect()
}

/// Combined endmember regularizer gradients (one vector per endmember).
fn endmember_reg_grads(
    e: &Mat,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
) -> Result<Vec<Vec<f64>>> {
    let l = e.rows();
    let n = e.cols();
    let mut grads = vec![vec![0.0; l]; n];
    if regs.lambda > 0.0 {
        let t = l2_input_terms(e, regs.lambda);
        add_into(&mut grads, &t.grad);
    }
    if regs.lambda_feature > 0.0 {
        let t = l2_feature_terms(e, regs.lambda_feature, kernel);
        add_into(&mut grads, &t.grad);
    }
    if regs.rho > 0.0 {
        let t = weighted_average_terms(e, regs.rho, regs.alpha)?;
        add_into(&mut grads, &t.grad);
    }
    if regs.gamma > 0.0 {
        for (idx, g) in grads.iter_mut().enumerate() {
            let f = regularizers::fluctuation_subgradient(e.col(idx), regs.gamma);
            for (gi, fi) in g.iter_mut().zip(f.iter()) {
                *gi += fi;
            }
        }
    }
    Ok(grads)
}

fn add_into(acc: &mut [Vec<f64>], terms: &[Vec<f64>]) {
    for (a, t) in acc.iter_mut().zip(terms.iter()) {
        for (ai, ti) in a.iter_mut().zip(t.iter()) {
            *ai += ti;
        }
    }
}

/// One additive sweep over all abundances:
/// `a_nt <- max(0, a_nt - eta (grad_a + mu + G(i, j)))`.
pub fn additive_step_a(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    step: f64,
    regs: &RegularizerSet,
) -> Result<Abundances> {
    additive_step_a_threaded(cube, e, a, kernel, step, regs, 1)
}

fn additive_step_a_threaded(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    step: f64,
    regs: &RegularizerSet,
    threads: usize,
) -> Result<Abundances> {
    let x = cube.matrix();
    check_shapes(x, &e.matrix, &a.matrix)?;
    let gram = kernel.gram(&e.matrix);
    let cross = kernel.cross_gram(&e.matrix, x)?;
    let g_rows = spatial_rows(cube, &a.matrix, regs)?;
    let n = e.count();
    let a_mat = &a.matrix;
    let mut out = Mat::zeros(n, x.cols());
    for_each_column(threads, &mut out, |t, col| {
        let at = a_mat.col(t);
        for p in 0..n {
            let mut grad = -cross.get(p, t) + regs.mu;
            for (q, &aqt) in at.iter().enumerate() {
                grad += aqt * gram.get(p, q);
            }
            if !g_rows.is_empty() {
                grad += g_rows[p][t];
            }
            col[p] = (at[p] - step * grad).max(0.0);
        }
    });
    Ok(Abundances { matrix: out })
}

/// One additive sweep over all endmembers:
/// `e_n <- max(0, e_n - eta (grad_e + regularizer terms))`, the rectification
/// being skipped for semi-relaxed runs.
pub fn additive_step_e(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    step: f64,
    regs: &RegularizerSet,
    semi_relaxed: bool,
) -> Result<Endmembers> {
    additive_step_e_threaded(cube, e, a, kernel, step, regs, semi_relaxed, 1)
}

#[allow(clippy::too_many_arguments)]
fn additive_step_e_threaded(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    step: f64,
    regs: &RegularizerSet,
    semi_relaxed: bool,
    threads: usize,
) -> Result<Endmembers> {
    let x = cube.matrix();
    check_shapes(x, &e.matrix, &a.matrix)?;
    let reg_grads = endmember_reg_grads(&e.matrix, kernel, regs)?;
    let e_mat = &e.matrix;
    let a_mat = &a.matrix;
    let mut out = Mat::zeros(e_mat.rows(), e_mat.cols());
    for_each_column(threads, &mut out, |nidx, col| {
        let g = grad_e_inner(x, e_mat, a_mat, kernel, nidx);
        let en = e_mat.col(nidx);
        for (l, dst) in col.iter_mut().enumerate() {
            let step_val = en[l] - step * (g[l] + reg_grads[nidx][l]);
            *dst = if semi_relaxed {
                step_val
            } else {
                step_val.max(0.0)
            };
        }
    });
    Ok(Endmembers::from_matrix(out))
}

/// One multiplicative sweep over all abundances:
/// `a_nt <- a_nt k(e_n, x_t) / (sum_m a_mt k(e_n, e_m) + mu + G(i, j))`,
/// negative spatial contributions moving to the numerator.
pub fn multiplicative_step_a(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
    eps: f64,
) -> Result<Abundances> {
    multiplicative_step_a_threaded(cube, e, a, kernel, regs, eps, 1)
}

fn multiplicative_step_a_threaded(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
    eps: f64,
    threads: usize,
) -> Result<Abundances> {
    let x = cube.matrix();
    check_shapes(x, &e.matrix, &a.matrix)?;
    let gram = kernel.gram(&e.matrix);
    let cross = kernel.cross_gram(&e.matrix, x)?;
    if gram.min() < 0.0 || cross.min() < 0.0 {
        return Err(Error::Numeric(
            "negative kernel value: the multiplicative rule cannot preserve signs \
             (nonnegative inputs and kernels are required)"
                .into(),
        ));
    }
    let g_rows = spatial_rows(cube, &a.matrix, regs)?;
    let n = e.count();
    let a_mat = &a.matrix;
    let mut out = Mat::zeros(n, x.cols());
    for_each_column(threads, &mut out, |t, col| {
        let at = a_mat.col(t);
        for p in 0..n {
            let mut den = regs.mu;
            for (q, &aqt) in at.iter().enumerate() {
                den += aqt * gram.get(p, q);
            }
            let mut num = cross.get(p, t);
            if !g_rows.is_empty() {
                let (pos, neg) = split_signed(g_rows[p][t]);
                den += pos;
                num += neg;
            }
            col[p] = at[p] * guarded_ratio(num, den, eps);
        }
    });
    Ok(Abundances { matrix: out })
}

/// One multiplicative sweep over all endmembers, component-wise
/// `e_n <- e_n * numerator / denominator` with the kernel-specific split of
/// the gradient. Every endmember reads the pre-sweep snapshot.
pub fn multiplicative_step_e(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
    eps: f64,
) -> Result<Endmembers> {
    multiplicative_step_e_threaded(cube, e, a, kernel, regs, eps, 1)
}

fn multiplicative_step_e_threaded(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
    eps: f64,
    threads: usize,
) -> Result<Endmembers> {
    let x = cube.matrix();
    check_shapes(x, &e.matrix, &a.matrix)?;
    if let KernelSpec::Polynomial { degree, .. } = kernel {
        if *degree != 2 {
            return Err(Error::UnsupportedConfiguration(format!(
                "the polynomial multiplicative rule is only derived for degree 2, got {degree}"
            )));
        }
    }
    let e_mat = &e.matrix;
    let a_mat = &a.matrix;
    let l = e_mat.rows();
    let n_count = e_mat.cols();
    // Pair weights sum_t a_nt a_mt, shared by every kernel's denominator.
    let pair_w = a_mat.matmul(&a_mat.transpose());
    let reg_grads = endmember_reg_grads(e_mat, kernel, regs)?;

    let mut out = Mat::zeros(l, n_count);
    let mut bad_sign = std::sync::atomic::AtomicBool::new(false);
    for_each_column(threads, &mut out, |n, col| {
        let en = e_mat.col(n);
        let mut num = vec![0.0; l];
        let mut den = vec![0.0; l];
        match *kernel {
            KernelSpec::Linear => {
                // num = sum_t a_nt x_t ; den = sum_m (sum_t a_nt a_mt) e_m
                for t in 0..x.cols() {
                    let ant = a_mat.get(n, t);
                    if ant == 0.0 {
                        continue;
                    }
                    for (ni, &xi) in num.iter_mut().zip(x.col(t).iter()) {
                        *ni += ant * xi;
                    }
                }
                for m in 0..n_count {
                    let w = pair_w.get(n, m);
                    if w == 0.0 {
                        continue;
                    }
                    for (di, &ei) in den.iter_mut().zip(e_mat.col(m).iter()) {
                        *di += w * ei;
                    }
                }
            }
            KernelSpec::Polynomial { offset, .. } => {
                // Degree 2: weights carry one power of the base (z'e + c).
                for t in 0..x.cols() {
                    let ant = a_mat.get(n, t);
                    if ant == 0.0 {
                        continue;
                    }
                    let xt = x.col(t);
                    let w = ant * (dot(xt, en) + offset);
                    for (ni, &xi) in num.iter_mut().zip(xt.iter()) {
                        *ni += w * xi;
                    }
                }
                for m in 0..n_count {
                    let em = e_mat.col(m);
                    let w = pair_w.get(n, m) * (dot(em, en) + offset);
                    if w == 0.0 {
                        continue;
                    }
                    for (di, &ei) in den.iter_mut().zip(em.iter()) {
                        *di += w * ei;
                    }
                }
            }
            KernelSpec::Gaussian { .. } => {
                // num = sum_t a_nt k(e_n, x_t) x_t + (sum_m w_nm k(e_n, e_m)) e_n
                // den = (sum_t a_nt k(e_n, x_t)) e_n + sum_m w_nm k(e_n, e_m) e_m
                let mut kx_sum = 0.0;
                for t in 0..x.cols() {
                    let ant = a_mat.get(n, t);
                    if ant == 0.0 {
                        continue;
                    }
                    let xt = x.col(t);
                    let k = kernel.eval_unchecked(en, xt);
                    kx_sum += ant * k;
                    for (ni, &xi) in num.iter_mut().zip(xt.iter()) {
                        *ni += ant * k * xi;
                    }
                }
                let mut ke_sum = 0.0;
                for m in 0..n_count {
                    let w = pair_w.get(n, m);
                    if w == 0.0 {
                        continue;
                    }
                    let em = e_mat.col(m);
                    let k = kernel.eval_unchecked(en, em);
                    ke_sum += w * k;
                    for (di, &ei) in den.iter_mut().zip(em.iter()) {
                        *di += w * k * ei;
                    }
                }
                for ((ni, di), &ei) in num.iter_mut().zip(den.iter_mut()).zip(en.iter()) {
                    *ni += ke_sum * ei;
                    *di += kx_sum * ei;
                }
            }
        }
        for li in 0..l {
            let (pos, neg) = split_signed(reg_grads[n][li]);
            den[li] += pos;
            num[li] += neg;
            if num[li] < 0.0 || den[li] < 0.0 {
                bad_sign.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            col[li] = en[li] * guarded_ratio(num[li], den[li], eps);
        }
    });
    if *bad_sign.get_mut() {
        return Err(Error::Numeric(
            "negative numerator or denominator in the multiplicative endmember rule \
             (nonnegative inputs and kernels are required)"
                .into(),
        ));
    }
    Ok(Endmembers { matrix: out })
}

/// Scales every positive column of `a` to unit 1-norm. Columns summing to
/// zero are left unchanged; their indices are returned.
pub fn normalize_columns(a: &mut Abundances) -> Vec<usize> {
    let mut flagged = Vec::new();
    for t in 0..a.matrix.cols() {
        let col = a.matrix.col_mut(t);
        let sum: f64 = col.iter().sum();
        if sum > 0.0 {
            for v in col.iter_mut() {
                *v /= sum;
            }
        } else {
            flagged.push(t);
        }
    }
    flagged
}

/// Draws the initial factors. The output is strictly positive whenever the
/// jitter is, because the multiplicative rules cannot leave exact zeros.
pub fn initialize(config: &SolverConfig, cube: &HyperCube) -> Result<(Endmembers, Abundances)> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let l = cube.bands();
    let t = cube.pixels();
    let n = config.rank;
    let eps = config.epsilon_guard;
    match config.init {
        InitScheme::RandomUniform => {
            let e = Mat::from_fn(l, n, |_, _| eps + (1.0 - eps) * rng.uniform_open_closed());
            let a = Mat::from_fn(n, t, |_, _| eps + (1.0 - eps) * rng.uniform_open_closed());
            Ok((Endmembers { matrix: e }, Abundances { matrix: a }))
        }
        InitScheme::DataColumns { jitter } => {
            if n > t {
                return Err(Error::InvalidParameter(format!(
                    "cannot draw {n} distinct data columns from {t} pixels"
                )));
            }
            let picks = rng.sample_without_replacement(t, n);
            let mut e = Mat::zeros(l, n);
            for (col, &pick) in picks.iter().enumerate() {
                let src = cube.pixel(pick);
                for (row, &v) in src.iter().enumerate() {
                    let j = if jitter > 0.0 {
                        jitter * rng.uniform_open_closed()
                    } else {
                        0.0
                    };
                    e.set(row, col, v + j);
                }
            }
            let mut a = Abundances {
                matrix: Mat::from_fn(n, t, |_, _| rng.uniform_open_closed()),
            };
            normalize_columns(&mut a);
            Ok((Endmembers { matrix: e }, a))
        }
    }
}

/// Full objective: cost plus every active penalty. Used by the backtracking
/// line search of the additive scheme.
pub(crate) fn objective(
    cube: &HyperCube,
    e: &Mat,
    a: &Mat,
    kernel: &KernelSpec,
    regs: &RegularizerSet,
) -> Result<f64> {
    let mut obj = cost(cube.matrix(), e, a, kernel)?;
    if regs.all_inactive() {
        return Ok(obj);
    }
    obj += l2_input_terms(e, regs.lambda).penalty;
    obj += l2_feature_terms(e, regs.lambda_feature, kernel).penalty;
    obj += regularizers::fluctuation_penalty(e, regs.gamma);
    if regs.rho > 0.0 {
        obj += weighted_average_terms(e, regs.rho, regs.alpha)?.penalty;
    }
    obj += sparsity_terms(a, regs.mu).penalty;
    if regs.spatial_active() {
        for n in 0..a.rows() {
            let map = fold_row(&a.row(n), cube.height(), cube.width())?;
            obj += spatial_penalty(
                &map,
                regs.alpha_spatial,
                regs.omega_left,
                regs.omega_right,
                regs.omega_up,
                regs.omega_down,
            )?;
        }
    }
    Ok(obj)
}

/// Runs the alternating solver: abundance sweep, optional normalization,
/// endmember sweep, for the configured number of iterations.
pub fn run(config: &SolverConfig, cube: &HyperCube) -> Result<RunResult> {
    let start = Instant::now();
    config.validate()?;
    let (mut e, mut a) = initialize(config, cube)?;
    let kernel = &config.kernel;
    let regs = &config.regularizers;
    let threads = config.threads;

    let mut trace = Vec::with_capacity(config.iterations + 1);
    let c0 = cost(cube.matrix(), &e.matrix, &a.matrix, kernel)?;
    if !c0.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            trace,
        });
    }
    trace.push(c0);

    let mut zero_columns = std::collections::BTreeSet::new();
    for it in 1..=config.iterations {
        match config.scheme {
            UpdateScheme::Multiplicative => {
                a = multiplicative_step_a_threaded(
                    cube,
                    &e,
                    &a,
                    kernel,
                    regs,
                    config.epsilon_guard,
                    threads,
                )?;
                if config.sum_to_one && config.normalize_every_iteration {
                    zero_columns.extend(normalize_columns(&mut a));
                }
                e = multiplicative_step_e_threaded(
                    cube,
                    &e,
                    &a,
                    kernel,
                    regs,
                    config.epsilon_guard,
                    threads,
                )?;
            }
            UpdateScheme::Additive => {
                a = additive_sweep_a_with_backtracking(cube, &e, &a, kernel, config, threads)?;
                if config.sum_to_one && config.normalize_every_iteration {
                    zero_columns.extend(normalize_columns(&mut a));
                }
                e = additive_sweep_e_with_backtracking(cube, &e, &a, kernel, config, threads)?;
            }
        }
        let c = cost(cube.matrix(), &e.matrix, &a.matrix, kernel)?;
        if !c.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                trace,
            });
        }
        trace.push(c);
    }
    if config.sum_to_one && !config.normalize_every_iteration {
        zero_columns.extend(normalize_columns(&mut a));
    }

    let re = metrics::reconstruction_error(cube.matrix(), &e.matrix, &a.matrix)?;
    let re_phi =
        metrics::feature_reconstruction_error(cube.matrix(), &e.matrix, &a.matrix, kernel)?;
    Ok(RunResult {
        endmembers: e,
        abundances: a,
        cost_trace: trace,
        re,
        re_phi,
        wall_time: start.elapsed(),
        config: config.clone(),
        zero_columns: zero_columns.into_iter().collect(),
    })
}

fn additive_sweep_a_with_backtracking(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    config: &SolverConfig,
    threads: usize,
) -> Result<Abundances> {
    let mut step = config.step_sizes.abundance;
    let candidate =
        additive_step_a_threaded(cube, e, a, kernel, step, &config.regularizers, threads)?;
    if !config.step_sizes.backtracking {
        return Ok(candidate);
    }
    let before = objective(cube, &e.matrix, &a.matrix, kernel, &config.regularizers)?;
    let mut candidate = candidate;
    for _ in 0..=MAX_BACKTRACK_HALVINGS {
        let after = objective(
            cube,
            &e.matrix,
            &candidate.matrix,
            kernel,
            &config.regularizers,
        )?;
        if after <= before {
            return Ok(candidate);
        }
        step *= 0.5;
        candidate =
            additive_step_a_threaded(cube, e, a, kernel, step, &config.regularizers, threads)?;
    }
    Ok(a.clone())
}

fn additive_sweep_e_with_backtracking(
    cube: &HyperCube,
    e: &Endmembers,
    a: &Abundances,
    kernel: &KernelSpec,
    config: &SolverConfig,
    threads: usize,
) -> Result<Endmembers> {
    let mut step = config.step_sizes.endmember;
    let regs = &config.regularizers;
    let candidate =
        additive_step_e_threaded(cube, e, a, kernel, step, regs, config.semi_relaxed, threads)?;
    if !config.step_sizes.backtracking {
        return Ok(candidate);
    }
    let before = objective(cube, &e.matrix, &a.matrix, kernel, regs)?;
    let mut candidate = candidate;
    for _ in 0..=MAX_BACKTRACK_HALVINGS {
        let after = objective(cube, &candidate.matrix, &a.matrix, kernel, regs)?;
        if after <= before {
            return Ok(candidate);
        }
        step *= 0.5;
        candidate =
            additive_step_e_threaded(cube, e, a, kernel, step, regs, config.semi_relaxed, threads)?;
    }
    Ok(e.clone())
}

/// Applies `f(column_index, column_slice)` to every column of `out`,
/// splitting the columns across `threads` workers. Each column is produced
/// by exactly one worker with sequential inner loops, so the result does not
/// depend on the thread count.
fn for_each_column<F>(threads: usize, out: &mut Mat, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let rows = out.rows();
    let cols = out.cols();
    if cols == 0 || rows == 0 {
        return;
    }
    if threads <= 1 || cols == 1 {
        for j in 0..cols {
            f(j, out.col_mut(j));
        }
        return;
    }
    let chunk_cols = cols.div_ceil(threads.min(cols));
    let data = out.as_mut_slice();
    std::thread::scope(|scope| {
        for (ci, chunk) in data.chunks_mut(chunk_cols * rows).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, col) in chunk.chunks_mut(rows).enumerate() {
                    f(ci * chunk_cols + k, col);
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn small_cube(seed: u64, l: usize, t: usize) -> HyperCube {
        let mut rng = Rng::new(seed);
        HyperCube::flat(Mat::from_fn(l, t, |_, _| 0.05 + rng.uniform())).unwrap()
    }

    fn exact_instance(
        seed: u64,
        l: usize,
        n: usize,
        t: usize,
    ) -> (HyperCube, Endmembers, Abundances) {
        let mut rng = Rng::new(seed);
        let e = Mat::from_fn(l, n, |_, _| 0.1 + rng.uniform());
        let a = Mat::from_fn(n, t, |_, _| 0.1 + rng.uniform());
        let x = e.matmul(&a);
        (
            HyperCube::flat(x).unwrap(),
            Endmembers { matrix: e },
            Abundances { matrix: a },
        )
    }

    #[test]
    fn cube_rejects_bad_shapes_and_values() {
        assert!(HyperCube::new(Mat::zeros(3, 5), 2, 3).is_err());
        let mut m = Mat::zeros(2, 4);
        m.set(1, 2, -0.5);
        assert!(HyperCube::new(m, 2, 2).is_err());
        assert!(HyperCube::new(Mat::zeros(2, 4), 2, 2).is_ok());
    }

    #[test]
    fn cost_zero_at_exact_linear_factorization() {
        let (cube, e, a) = exact_instance(1, 6, 2, 8);
        let j = cost(cube.matrix(), &e.matrix, &a.matrix, &KernelSpec::Linear).unwrap();
        assert!(j.abs() < 1e-9, "cost {j}");
    }

    #[test]
    fn cost_gaussian_empty_reconstruction() {
        let cube = small_cube(2, 4, 7);
        let e = Mat::from_fn(4, 2, |_, _| 0.3);
        let a = Mat::zeros(2, 7);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let j = cost(cube.matrix(), &e, &a, &k).unwrap();
        assert!((j - 3.5).abs() < 1e-12, "cost {j} should be T/2");
    }

    #[test]
    fn cost_scalar_example() {
        let x = Mat::from_rows(&[&[2.0]]);
        let e = Mat::from_rows(&[&[1.0]]);
        let a = Mat::from_rows(&[&[1.0]]);
        let j = cost(&x, &e, &a, &KernelSpec::Linear).unwrap();
        assert_eq!(j, 0.5);
    }

    #[test]
    fn grad_a_cases() {
        let (cube, e, a) = exact_instance(3, 5, 2, 6);
        for n in 0..2 {
            for t in 0..6 {
                let g = grad_a(
                    cube.matrix(),
                    &e.matrix,
                    &a.matrix,
                    &KernelSpec::Linear,
                    n,
                    t,
                )
                .unwrap();
                assert!(g.abs() < 1e-9, "stationary point expected, got {g}");
            }
        }
        // A = 0 leaves only the cross term.
        let zero_a = Mat::zeros(2, 6);
        let g = grad_a(cube.matrix(), &e.matrix, &zero_a, &KernelSpec::Linear, 0, 0).unwrap();
        let expected = -dot(e.matrix.col(0), cube.pixel(0));
        assert!((g - expected).abs() < 1e-12);
        // Scalar arithmetic: x = [2], e = [1], a = 3.
        let x = Mat::from_rows(&[&[2.0]]);
        let e1 = Mat::from_rows(&[&[1.0]]);
        let a1 = Mat::from_rows(&[&[3.0]]);
        assert_eq!(
            grad_a(&x, &e1, &a1, &KernelSpec::Linear, 0, 0).unwrap(),
            1.0
        );
    }

    #[test]
    fn grad_a_index_out_of_range() {
        let (cube, e, a) = exact_instance(4, 4, 2, 3);
        assert!(grad_a(
            cube.matrix(),
            &e.matrix,
            &a.matrix,
            &KernelSpec::Linear,
            2,
            0
        )
        .is_err());
        assert!(grad_a(
            cube.matrix(),
            &e.matrix,
            &a.matrix,
            &KernelSpec::Linear,
            0,
            3
        )
        .is_err());
    }

    #[test]
    fn grad_e_zero_cases() {
        let (cube, e, mut a) = exact_instance(5, 3, 2, 5);
        let g = grad_e(cube.matrix(), &e.matrix, &a.matrix, &KernelSpec::Linear, 1).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
        for t in 0..5 {
            a.matrix.set(0, t, 0.0);
        }
        let g = grad_e(cube.matrix(), &e.matrix, &a.matrix, &KernelSpec::Linear, 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences_all_kernels() {
        let kernels = [
            KernelSpec::Linear,
            KernelSpec::polynomial(2, 0.5).unwrap(),
            KernelSpec::gaussian(0.9).unwrap(),
        ];
        let mut rng = Rng::new(7);
        let (l, n, t) = (4, 3, 5);
        let h = 1e-6;
        for kernel in &kernels {
            let e = Mat::from_fn(l, n, |_, _| 0.2 + 0.8 * rng.uniform());
            let a = Mat::from_fn(n, t, |_, _| 0.2 + 0.8 * rng.uniform());
            let x = Mat::from_fn(l, t, |_, _| 0.2 + 0.8 * rng.uniform());

            for p in 0..n {
                for q in 0..t {
                    let g = grad_a(&x, &e, &a, kernel, p, q).unwrap();
                    let mut plus = a.clone();
                    plus.set(p, q, a.get(p, q) + h);
                    let mut minus = a.clone();
                    minus.set(p, q, a.get(p, q) - h);
                    let fd = (cost(&x, &e, &plus, kernel).unwrap()
                        - cost(&x, &e, &minus, kernel).unwrap())
                        / (2.0 * h);
                    let denom = fd.abs().max(g.abs()).max(1e-12);
                    assert!(
                        (fd - g).abs() / denom < 1e-6,
                        "{kernel:?} grad_a({p},{q}): fd {fd} vs {g}"
                    );
                }
            }
            for p in 0..n {
                let g = grad_e(&x, &e, &a, kernel, p).unwrap();
                for (li, &gl) in g.iter().enumerate() {
                    let mut plus = e.clone();
                    plus.set(li, p, e.get(li, p) + h);
                    let mut minus = e.clone();
                    minus.set(li, p, e.get(li, p) - h);
                    let fd = (cost(&x, &plus, &a, kernel).unwrap()
                        - cost(&x, &minus, &a, kernel).unwrap())
                        / (2.0 * h);
                    let denom = fd.abs().max(gl.abs()).max(1e-12);
                    assert!(
                        (fd - gl).abs() / denom < 1e-6,
                        "{kernel:?} grad_e({p})[{li}]: fd {fd} vs {gl}"
                    );
                }
            }
        }
    }

    #[test]
    fn additive_step_a_clamps_and_descends() {
        let x = Mat::from_rows(&[&[0.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        // grad = -k(e, x) + a k(e, e) = a for x = 0; pick values that force a
        // negative update, which must clamp at zero.
        let a = Abundances {
            matrix: Mat::from_rows(&[&[0.1]]),
        };
        let regs = RegularizerSet::default();
        // gradient = 0.1; step huge to push below zero
        let out = additive_step_a(&cube, &e, &a, &KernelSpec::Linear, 100.0, &regs).unwrap();
        assert_eq!(out.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn additive_step_a_scalar_arithmetic() {
        // grad must equal 1: x = [2], e = [1], a = 0.5 gives grad = -2 + 0.5;
        // adjust with e = [2]: k(e,x) = 4, k(e,e) = 4, a = 1.25 -> grad 1.
        let x = Mat::from_rows(&[&[2.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[2.0]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[1.25]]),
        };
        let out = additive_step_a(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            0.2,
            &RegularizerSet::default(),
        )
        .unwrap();
        assert!((out.matrix.get(0, 0) - 1.05).abs() < 1e-15);
    }

    #[test]
    fn additive_step_e_clamps_and_moves() {
        let (cube, e, a) = exact_instance(11, 3, 2, 4);
        let out = additive_step_e(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            1e-3,
            &RegularizerSet::default(),
            false,
        )
        .unwrap();
        // Exact factorization: gradient is zero, so E is unchanged.
        assert!(out.matrix.max_abs_diff(&e.matrix) < 1e-9);
    }

    #[test]
    fn additive_step_a_is_a_fixed_point_at_exact_factorizations() {
        let (cube, e, a) = exact_instance(13, 4, 2, 5);
        let out = additive_step_a(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            0.1,
            &RegularizerSet::default(),
        )
        .unwrap();
        assert!(out.matrix.max_abs_diff(&a.matrix) < 1e-9);
    }

    #[test]
    fn additive_step_e_signed_gradient_directions() {
        // One endmember over two bands, e = [1, 1]; the data is chosen so
        // the gradient is [0.5, -0.5] and a unit step lands at [0.5, 1.5].
        // grad_e = a (a e - x), so with a = 1 take x = e - [0.5, -0.5].
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[1.0], &[1.0]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        let x = Mat::from_rows(&[&[0.5], &[1.5]]);
        let cube = HyperCube::flat(x).unwrap();
        let out = additive_step_e(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            1.0,
            &RegularizerSet::default(),
            false,
        )
        .unwrap();
        assert!((out.matrix.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((out.matrix.get(1, 0) - 1.5).abs() < 1e-12);

        // A unit gradient from a small value clamps at zero: with x = 0 the
        // gradient is a^2 e, so a = sqrt(10) makes it exactly 1 at e = 0.1.
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[0.1]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[10.0f64.sqrt()]]),
        };
        let x = Mat::from_rows(&[&[0.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let out = additive_step_e(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            0.5,
            &RegularizerSet::default(),
            false,
        )
        .unwrap();
        assert_eq!(out.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn sparsity_shrinks_multiplicative_ratio_below_one() {
        let (cube, e, a) = exact_instance(29, 4, 2, 6);
        let regs = RegularizerSet {
            mu: 0.3,
            ..RegularizerSet::default()
        };
        let out = multiplicative_step_a(&cube, &e, &a, &KernelSpec::Linear, &regs, 1e-12).unwrap();
        // At the exact factorization the unregularized ratio is 1, so a
        // positive sparsity coefficient must strictly shrink every entry.
        for (new, old) in out.matrix.iter().zip(a.matrix.iter()) {
            assert!(new < old, "{new} !< {old}");
        }
    }

    #[test]
    fn runaway_additive_steps_report_divergence() {
        let cube = small_cube(131, 6, 8);
        let mut config = SolverConfig::new(3, KernelSpec::Linear);
        config.scheme = UpdateScheme::Additive;
        config.step_sizes = StepSizes {
            abundance: 1e12,
            endmember: 1e12,
            backtracking: false,
        };
        config.iterations = 50;
        match run(&config, &cube) {
            Err(Error::Diverged { iteration, trace }) => {
                assert!(iteration >= 1);
                assert_eq!(trace.len(), iteration);
                assert!(trace.iter().all(|c| c.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn multiplicative_fixed_point_linear() {
        let (cube, e, a) = exact_instance(17, 6, 3, 9);
        let regs = RegularizerSet::default();
        let a2 = multiplicative_step_a(&cube, &e, &a, &KernelSpec::Linear, &regs, 1e-12).unwrap();
        let rel = relative_diff(&a2.matrix, &a.matrix);
        assert!(rel < 1e-12, "abundance fixed point violated: {rel}");
        let e2 = multiplicative_step_e(&cube, &e, &a, &KernelSpec::Linear, &regs, 1e-12).unwrap();
        let rel = relative_diff(&e2.matrix, &e.matrix);
        assert!(rel < 1e-12, "endmember fixed point violated: {rel}");
    }

    fn relative_diff(a: &Mat, b: &Mat) -> f64 {
        let mut worst = 0.0_f64;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = (x - y).abs() / y.abs().max(1e-300);
            worst = worst.max(d);
        }
        worst
    }

    #[test]
    fn multiplicative_zero_lock_and_scalar_case() {
        let x = Mat::from_rows(&[&[2.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        let regs = RegularizerSet::default();
        let out = multiplicative_step_a(&cube, &e, &a, &KernelSpec::Linear, &regs, 1e-12).unwrap();
        assert!((out.matrix.get(0, 0) - 2.0).abs() < 1e-12);

        let a0 = Abundances {
            matrix: Mat::from_rows(&[&[0.0]]),
        };
        let out = multiplicative_step_a(&cube, &e, &a0, &KernelSpec::Linear, &regs, 1e-12).unwrap();
        assert_eq!(out.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn multiplicative_e_scalar_case() {
        // T = 1, x = [4], e = [1], a = 1: e <- e * 4 / 1.
        let x = Mat::from_rows(&[&[4.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[1.0]]),
        };
        let out = multiplicative_step_e(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            &RegularizerSet::default(),
            1e-12,
        )
        .unwrap();
        assert!((out.matrix.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn multiplicative_e_dead_row_is_inert() {
        let (cube, e, mut a) = exact_instance(19, 4, 2, 5);
        for t in 0..5 {
            a.matrix.set(1, t, 0.0);
        }
        let out = multiplicative_step_e(
            &cube,
            &e,
            &a,
            &KernelSpec::Linear,
            &RegularizerSet::default(),
            1e-12,
        )
        .unwrap();
        for l in 0..4 {
            assert_eq!(out.matrix.get(l, 1), e.matrix.get(l, 1));
        }
    }

    #[test]
    fn multiplicative_poly_rejects_degree_other_than_two() {
        let (cube, e, a) = exact_instance(23, 4, 2, 5);
        let k = KernelSpec::polynomial(3, 0.5).unwrap();
        let err = multiplicative_step_e(&cube, &e, &a, &k, &RegularizerSet::default(), 1e-12);
        assert!(matches!(err, Err(Error::UnsupportedConfiguration(_))));
    }

    #[test]
    fn normalize_columns_cases() {
        let mut a = Abundances {
            matrix: Mat::from_columns(&[vec![0.2, 0.2], vec![3.0, 1.0], vec![0.0, 0.0]]),
        };
        let flagged = normalize_columns(&mut a);
        assert_eq!(a.matrix.col(0), &[0.5, 0.5]);
        assert_eq!(a.matrix.col(1), &[0.75, 0.25]);
        assert_eq!(a.matrix.col(2), &[0.0, 0.0]);
        assert_eq!(flagged, vec![2]);
    }

    #[test]
    fn normalization_preserves_argmax() {
        let mut rng = Rng::new(41);
        let mut a = Abundances {
            matrix: Mat::from_fn(4, 10, |_, _| rng.uniform() + 1e-6),
        };
        let argmax_before: Vec<usize> = (0..10)
            .map(|t| {
                (0..4)
                    .max_by(|&i, &j| a.matrix.get(i, t).partial_cmp(&a.matrix.get(j, t)).unwrap())
                    .unwrap()
            })
            .collect();
        normalize_columns(&mut a);
        for (t, &before) in argmax_before.iter().enumerate() {
            let sum: f64 = a.matrix.col(t).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let am = (0..4)
                .max_by(|&i, &j| a.matrix.get(i, t).partial_cmp(&a.matrix.get(j, t)).unwrap())
                .unwrap();
            assert_eq!(am, before);
        }
    }

    #[test]
    fn initialize_is_deterministic_and_positive() {
        let cube = small_cube(51, 8, 12);
        let mut config = SolverConfig::new(3, KernelSpec::Linear);
        config.seed = 42;
        config.init = InitScheme::RandomUniform;
        let (e1, a1) = initialize(&config, &cube).unwrap();
        let (e2, a2) = initialize(&config, &cube).unwrap();
        assert_eq!(e1.matrix, e2.matrix);
        assert_eq!(a1.matrix, a2.matrix);
        assert!(e1.matrix.min() > 0.0 && e1.matrix.max() <= 1.0);
        assert!(a1.matrix.min() > 0.0 && a1.matrix.max() <= 1.0);
    }

    #[test]
    fn initialize_data_columns() {
        let cube = small_cube(52, 6, 10);
        let mut config = SolverConfig::new(4, KernelSpec::Linear);
        config.init = InitScheme::DataColumns { jitter: 0.0 };
        let (e, a) = initialize(&config, &cube).unwrap();
        // Every endmember must be an actual pixel with zero jitter.
        for n in 0..4 {
            let col = e.matrix.col(n);
            let found = (0..10).any(|t| cube.pixel(t).iter().zip(col.iter()).all(|(x, y)| x == y));
            assert!(found, "endmember {n} is not a data column");
        }
        for t in 0..10 {
            let sum: f64 = a.matrix.col(t).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Strict positivity with positive jitter.
        config.init = InitScheme::DataColumns { jitter: 1e-6 };
        let (e, _) = initialize(&config, &cube).unwrap();
        assert!(e.matrix.min() > 0.0);
    }

    #[test]
    fn initialize_rejects_rank_above_pixels() {
        let cube = small_cube(53, 4, 3);
        let mut config = SolverConfig::new(4, KernelSpec::Linear);
        config.init = InitScheme::DataColumns { jitter: 1e-6 };
        assert!(initialize(&config, &cube).is_err());
    }

    #[test]
    fn run_trace_contract_and_fixed_point() {
        let (cube, e0, a0) = exact_instance(61, 5, 2, 6);
        // Start the solver exactly at the solution via a custom path: linear
        // multiplicative updates keep it there, so the trace stays at zero.
        let mut config = SolverConfig::new(2, KernelSpec::Linear);
        config.iterations = 1;
        let regs = RegularizerSet::default();
        let mut e = e0.clone();
        let mut a = a0.clone();
        let mut trace = vec![cost(cube.matrix(), &e.matrix, &a.matrix, &config.kernel).unwrap()];
        for _ in 0..3 {
            a = multiplicative_step_a(&cube, &e, &a, &config.kernel, &regs, 1e-12).unwrap();
            e = multiplicative_step_e(&cube, &e, &a, &config.kernel, &regs, 1e-12).unwrap();
            trace.push(cost(cube.matrix(), &e.matrix, &a.matrix, &config.kernel).unwrap());
        }
        for c in &trace {
            assert!(c.abs() < 1e-9, "trace {trace:?}");
        }

        // Contract: iterations = 1 gives a trace of length 2.
        let result = run(&config, &cube).unwrap();
        assert_eq!(result.cost_trace.len(), 2);
        let mut bad = config.clone();
        bad.iterations = 0;
        assert!(run(&bad, &cube).is_err());
    }

    #[test]
    fn run_monotone_on_random_linear_instance() {
        let cube = small_cube(71, 10, 20);
        let mut config = SolverConfig::new(3, KernelSpec::Linear);
        config.iterations = 200;
        config.seed = 5;
        let result = run(&config, &cube).unwrap();
        assert_eq!(result.cost_trace.len(), 201);
        for w in result.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "cost increased: {} -> {}", w[0], w[1]);
        }
        assert!(result.endmembers.matrix.min() >= 0.0);
        assert!(result.abundances.matrix.min() >= 0.0);
    }

    #[test]
    fn run_is_deterministic() {
        let cube = small_cube(81, 6, 9);
        let mut config = SolverConfig::new(2, KernelSpec::gaussian(1.5).unwrap());
        config.iterations = 20;
        config.seed = 9;
        let r1 = run(&config, &cube).unwrap();
        let r2 = run(&config, &cube).unwrap();
        assert_eq!(r1.endmembers.matrix, r2.endmembers.matrix);
        assert_eq!(r1.abundances.matrix, r2.abundances.matrix);
        assert_eq!(r1.cost_trace, r2.cost_trace);
    }

    #[test]
    fn parallel_sweeps_match_sequential_bitwise() {
        let cube = small_cube(91, 8, 30);
        for kernel in [
            KernelSpec::Linear,
            KernelSpec::polynomial(2, 0.4).unwrap(),
            KernelSpec::gaussian(1.2).unwrap(),
        ] {
            let mut config = SolverConfig::new(3, kernel);
            config.iterations = 15;
            config.seed = 4;
            config.sum_to_one = true;
            let seq = run(&config, &cube).unwrap();
            config.threads = 4;
            let par = run(&config, &cube).unwrap();
            assert_eq!(seq.endmembers.matrix, par.endmembers.matrix, "{kernel:?}");
            assert_eq!(seq.abundances.matrix, par.abundances.matrix);
            assert_eq!(seq.re, par.re);
        }
    }

    #[test]
    fn nonnegativity_preserved_with_regularizers() {
        let mut rng = Rng::new(101);
        let x = Mat::from_fn(6, 12, |_, _| rng.uniform());
        let cube = HyperCube::new(x, 3, 4).unwrap();
        let regs = RegularizerSet {
            lambda: 0.1,
            lambda_feature: 0.05,
            gamma: 0.02,
            rho: 0.3,
            mu: 0.05,
            omega_left: 0.4,
            omega_right: 0.4,
            omega_up: 0.4,
            omega_down: 0.4,
            ..RegularizerSet::default()
        };
        for kernel in [
            KernelSpec::Linear,
            KernelSpec::polynomial(2, 0.5).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
        ] {
            for scheme in [UpdateScheme::Multiplicative, UpdateScheme::Additive] {
                let mut config = SolverConfig::new(3, kernel);
                config.scheme = scheme;
                config.iterations = 10;
                config.regularizers = regs.clone();
                config.seed = 3;
                let result = run(&config, &cube).unwrap();
                assert!(
                    result.endmembers.matrix.min() >= 0.0,
                    "{kernel:?} {scheme:?} endmembers"
                );
                assert!(
                    result.abundances.matrix.min() >= 0.0,
                    "{kernel:?} {scheme:?} abundances"
                );
            }
        }
    }

    #[test]
    fn backtracking_keeps_objective_from_increasing() {
        let cube = small_cube(111, 8, 10);
        let mut config = SolverConfig::new(2, KernelSpec::gaussian(0.8).unwrap());
        config.scheme = UpdateScheme::Additive;
        config.step_sizes = StepSizes {
            abundance: 5.0,
            endmember: 5.0,
            backtracking: true,
        };
        config.iterations = 10;
        let result = run(&config, &cube).unwrap();
        for w in result.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", result.cost_trace);
        }
    }

    #[test]
    fn run_validates_poly_degree_for_multiplicative() {
        let cube = small_cube(121, 4, 5);
        let mut config = SolverConfig::new(2, KernelSpec::polynomial(3, 0.5).unwrap());
        config.scheme = UpdateScheme::Multiplicative;
        assert!(matches!(
            run(&config, &cube),
            Err(Error::UnsupportedConfiguration(_))
        ));
        config.scheme = UpdateScheme::Additive;
        config.iterations = 3;
        assert!(run(&config, &cube).is_ok());
    }

    #[test]
    fn semi_relaxed_additive_allows_negative_endmembers() {
        // Data near zero with a large endmember forces a descent step that
        // crosses zero; the relaxed variant keeps it, the constrained one
        // clamps it.
        let x = Mat::from_rows(&[&[0.0, 0.0]]);
        let cube = HyperCube::flat(x).unwrap();
        let e = Endmembers {
            matrix: Mat::from_rows(&[&[0.5]]),
        };
        let a = Abundances {
            matrix: Mat::from_rows(&[&[1.0, 1.0]]),
        };
        let regs = RegularizerSet::default();
        let relaxed =
            additive_step_e(&cube, &e, &a, &KernelSpec::Linear, 2.0, &regs, true).unwrap();
        assert!(relaxed.matrix.get(0, 0) < 0.0, "{relaxed:?}");
        let clamped =
            additive_step_e(&cube, &e, &a, &KernelSpec::Linear, 2.0, &regs, false).unwrap();
        assert_eq!(clamped.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn semi_relaxed_run_keeps_abundances_nonnegative() {
        let cube = small_cube(141, 5, 8);
        let mut config = SolverConfig::new(2, KernelSpec::Linear);
        config.scheme = UpdateScheme::Additive;
        config.semi_relaxed = true;
        config.iterations = 20;
        config.step_sizes.abundance = 1e-2;
        config.step_sizes.endmember = 1e-2;
        let result = run(&config, &cube).unwrap();
        assert!(result.abundances.matrix.min() >= 0.0);
    }

    #[test]
    fn normalization_once_at_the_end() {
        let cube = small_cube(151, 6, 9);
        let mut every = SolverConfig::new(2, KernelSpec::Linear);
        every.iterations = 15;
        every.sum_to_one = true;
        let mut at_end = every.clone();
        at_end.normalize_every_iteration = false;

        let result = run(&at_end, &cube).unwrap();
        for t in 0..cube.pixels() {
            let sum: f64 = result.abundances.matrix.col(t).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "column {t} sums to {sum}");
        }
        // Deferring normalization must match a run without the constraint
        // up to that final step.
        let mut off = every.clone();
        off.sum_to_one = false;
        let unconstrained = run(&off, &cube).unwrap();
        assert_eq!(result.cost_trace, unconstrained.cost_trace);
        assert_eq!(result.endmembers.matrix, unconstrained.endmembers.matrix);

        // And the every-iteration default differs from the deferred one.
        let eager = run(&every, &cube).unwrap();
        assert!(eager.cost_trace != result.cost_trace);
    }
}
