//! Exact risks on finite distributions and numerical checks of the
//! consistency and comparison results for the simplex losses.
//!
//! A [`FiniteDistribution`] puts mass `marginal[x]` on each of `m` abstract
//! inputs and has conditional label law `conditionals[(x, y)]`. Every
//! integral against it is a finite sum, so risks are computed exactly.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::coding::{dot, CodeBook};
use crate::error::{check_dim, Error, Result};
use crate::losses::{loss_value_unchecked, LossKind};
use crate::scalar::Scalar;

/// Sum tolerance for marginals and conditional rows.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Default radius of the ball unconstrained test functions are drawn from.
pub const SAMPLE_RADIUS: f64 = 3.0;
/// Conditionals closer than this are treated as a Bayes tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution<T: Scalar> {
    marginal: Vec<T>,
    conditionals: DMatrix<T>,
}

impl<T: Scalar> FiniteDistribution<T> {
    pub fn new(marginal: Vec<T>, conditionals: DMatrix<T>) -> Result<Self> {
        check_dim(marginal.len(), conditionals.nrows(), "distribution: one conditional row per point")?;
        if marginal.is_empty() {
            return Err(Error::InvalidArgument("distribution needs at least one point".into()));
        }
        if conditionals.ncols() < 2 {
            return Err(Error::InvalidArgument("distribution needs at least two classes".into()));
        }
        let tol = T::lit(SIMPLEX_TOL);
        if marginal.iter().chain(conditionals.iter()).any(|&p| !p.is_finite_val() || p < T::zero()) {
            return Err(Error::InvalidData("probabilities must be finite and nonnegative".into()));
        }
        let total = marginal.iter().fold(T::zero(), |s, &p| s + p);
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidData(format!("marginal sums to {total}, not 1")));
        }
        for (x, row) in conditionals.row_iter().enumerate() {
            let s = row.sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidData(format!("conditional row {x} sums to {s}, not 1")));
            }
        }
        Ok(Self { marginal, conditionals })
    }

    /// Random distribution on `points` inputs: the marginal is flat-Dirichlet
    /// and each conditional row is Dirichlet with the given concentration.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, points: usize, classes: usize, concentration: f64) -> Result<Self> {
        let marginal = dirichlet(rng, points, 1.0)?;
        let mut rows = DMatrix::zeros(points, classes);
        for x in 0..points {
            let row = dirichlet(rng, classes, concentration)?;
            for (y, p) in row.into_iter().enumerate() {
                rows[(x, y)] = p;
            }
        }
        Self::from_f64(marginal, rows)
    }

    /// Random distribution whose largest conditional is at least `min_top` at
    /// every point.
    pub fn random_near_deterministic<R: Rng + ?Sized>(
        rng: &mut R,
        points: usize,
        classes: usize,
        min_top: f64,
    ) -> Result<Self> {
        if !(0.5..1.0).contains(&min_top) {
            return Err(Error::InvalidArgument(format!("min_top must be in [0.5, 1), got {min_top}")));
        }
        let marginal = dirichlet(rng, points, 1.0)?;
        let mut rows = DMatrix::zeros(points, classes);
        for x in 0..points {
            let top = rng.random_range(min_top..1.0);
            let winner = rng.random_range(0..classes);
            let rest = dirichlet(rng, classes - 1, 1.0)?;
            let mut others = rest.into_iter();
            for y in 0..classes {
                rows[(x, y)] = if y == winner { top } else { (1.0 - top) * others.next().unwrap_or(0.0) };
            }
        }
        Self::from_f64(marginal, rows)
    }

    fn from_f64(marginal: Vec<f64>, rows: DMatrix<f64>) -> Result<Self> {
        // Renormalize after the cast so f32 still meets the sum tolerance.
        let mut marginal: Vec<T> = marginal.into_iter().map(T::lit).collect();
        let s = marginal.iter().fold(T::zero(), |a, &b| a + b);
        marginal.iter_mut().for_each(|p| *p /= s);
        let mut conditionals = rows.map(T::lit);
        for mut row in conditionals.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        Self::new(marginal, conditionals)
    }

    pub fn points(&self) -> usize {
        self.marginal.len()
    }

    pub fn classes(&self) -> usize {
        self.conditionals.ncols()
    }

    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }

    pub fn conditionals(&self) -> &DMatrix<T> {
        &self.conditionals
    }

    /// Whether the largest conditional at `x` is shared by two labels.
    pub fn is_tied(&self, x: usize) -> bool {
        let mut sorted: Vec<T> = self.conditionals.row(x).iter().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        sorted[0] - sorted[1] <= T::lit(TIE_TOL)
    }
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize, concentration: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("dirichlet: no components".into()));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("dirichlet concentration {concentration}: {e}")))?;
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 && s.is_finite() {
            return Ok(draws.into_iter().map(|d| d / s).collect());
        }
    }
}

/// Pointwise argmax of the conditionals, ties to the smallest label.
pub fn bayes_rule<T: Scalar>(dist: &FiniteDistribution<T>) -> Vec<usize> {
    dist.conditionals
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for y in 1..row.len() {
                if row[y] > row[best] {
                    best = y;
                }
            }
            best
        })
        .collect()
}

/// `sum_x rho_X(x) (1 - max_y rho_y(x))`
pub fn bayes_risk<T: Scalar>(dist: &FiniteDistribution<T>) -> T {
    bayes_rule(dist)
        .into_iter()
        .enumerate()
        .fold(T::zero(), |s, (x, b)| s + dist.marginal[x] * (T::one() - dist.conditionals[(x, b)]))
}

fn check_f<T: Scalar>(dist: &FiniteDistribution<T>, cb: &CodeBook<T>, f: &DMatrix<T>) -> Result<()> {
    check_dim(dist.classes(), cb.classes(), "code book classes vs distribution classes")?;
    check_dim(dist.points(), f.nrows(), "f: one row per point")?;
    check_dim(cb.dim(), f.ncols(), "f: row width must be T-1")
}

fn row<T: Scalar>(f: &DMatrix<T>, x: usize) -> Vec<T> {
    f.row(x).iter().copied().collect()
}

/// Misclassification risk of the decoded rule `D(f)`.
pub fn misclass_risk<T: Scalar>(dist: &FiniteDistribution<T>, cb: &CodeBook<T>, f: &DMatrix<T>) -> Result<T> {
    check_f(dist, cb, f)?;
    Ok((0..dist.points()).fold(T::zero(), |s, x| {
        let d = cb.decode_unchecked(&row(f, x));
        s + dist.marginal[x] * (T::one() - dist.conditionals[(x, d)])
    }))
}

/// `sum_y rho_y(x) V(y, v)` at one input.
fn conditional_risk<T: Scalar>(dist: &FiniteDistribution<T>, cb: &CodeBook<T>, kind: LossKind, x: usize, v: &[T]) -> T {
    (0..dist.classes()).fold(T::zero(), |s, y| {
        s + dist.conditionals[(x, y)] * loss_value_unchecked(kind, cb, y, v)
    })
}

/// Expected surrogate loss `sum_x rho_X(x) sum_y rho_y(x) V(y, f(x))`.
pub fn expected_loss<T: Scalar>(
    dist: &FiniteDistribution<T>,
    cb: &CodeBook<T>,
    kind: LossKind,
    f: &DMatrix<T>,
) -> Result<T> {
    check_f(dist, cb, f)?;
    Ok((0..dist.points()).fold(T::zero(), |s, x| {
        s + dist.marginal[x] * conditional_risk(dist, cb, kind, x, &row(f, x))
    }))
}

/// Minimizer of the expected loss and the constants of its comparison
/// inequality `R(D(f)) - R(D(f_rho)) <= c_t (E(f) - E(f_rho))^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProfile<T: Scalar> {
    pub loss: LossKind,
    /// `m x (T-1)`
    pub f_rho: DMatrix<T>,
    pub c_t: T,
    pub alpha: T,
}

/// `(C_T, alpha)` for `kind` with `classes` labels.
pub fn comparison_constants<T: Scalar>(kind: LossKind, classes: usize) -> (T, T) {
    let t = T::count(classes);
    match kind {
        LossKind::SLs => ((T::lit(2.0) * (t - T::one()) / t).sqrt(), T::lit(0.5)),
        LossKind::ScSvm | LossKind::ShSvm => (t - T::one(), T::one()),
    }
}

pub fn target_function<T: Scalar>(
    dist: &FiniteDistribution<T>,
    cb: &CodeBook<T>,
    kind: LossKind,
) -> Result<TargetProfile<T>> {
    check_dim(dist.classes(), cb.classes(), "code book classes vs distribution classes")?;
    let f_rho = match kind {
        LossKind::SLs => &dist.conditionals * cb.code_matrix().transpose(),
        LossKind::ScSvm | LossKind::ShSvm => {
            let b = bayes_rule(dist);
            DMatrix::from_fn(dist.points(), cb.dim(), |x, k| cb.code(b[x])[k])
        }
    };
    let (c_t, alpha) = comparison_constants(kind, cb.classes());
    Ok(TargetProfile {
        loss: kind,
        f_rho,
        c_t,
        alpha,
    })
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Uniform point in the ball of the given radius in `R^d`.
fn ball_point<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    unit_direction(rng, d).into_iter().map(|a| a * r).collect()
}

/// Random point of the convex hull of the codes.
fn hull_point<T: Scalar, R: Rng + ?Sized>(rng: &mut R, cb: &CodeBook<T>) -> Vec<f64> {
    let concentration = if rng.random_bool(0.5) { 0.2 } else { 1.0 };
    let w = dirichlet(rng, cb.classes(), concentration).unwrap_or_else(|_| vec![1.0 / cb.classes() as f64; cb.classes()]);
    (0..cb.dim())
        .map(|k| (0..cb.classes()).map(|y| w[y] * cb.code(y)[k].as_f64()).sum())
        .collect()
}

/// A test function: half the draws are global (ball or hull), half are
/// perturbations of `f_rho` at a log-uniform scale.
fn sample_f<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cb: &CodeBook<T>,
    kind: LossKind,
    f_rho: &DMatrix<T>,
    radius: f64,
) -> DMatrix<T> {
    let m = f_rho.nrows();
    let d = cb.dim();
    let local = rng.random_bool(0.5);
    let scale = 10f64.powf(rng.random_range(-4.0..0.0));
    let mut f = DMatrix::zeros(m, d);
    for x in 0..m {
        let v: Vec<f64> = match (kind, local) {
            (LossKind::ShSvm, false) => hull_point(rng, cb),
            (LossKind::ShSvm, true) => {
                // Convex combination with a hull point stays in the hull.
                let h = hull_point(rng, cb);
                (0..d).map(|k| (1.0 - scale) * f_rho[(x, k)].as_f64() + scale * h[k]).collect()
            }
            (_, false) => ball_point(rng, d, radius),
            (_, true) => {
                let dir = unit_direction(rng, d);
                (0..d).map(|k| f_rho[(x, k)].as_f64() + scale * radius * dir[k]).collect()
            }
        };
        for k in 0..d {
            f[(x, k)] = T::lit(v[k]);
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub loss: LossKind,
    pub classes: usize,
    /// Non-tied points where `D(f_rho) = b_rho` was checked.
    pub checked: usize,
    pub skipped_ties: usize,
    pub decode_mismatches: usize,
    /// Candidates that beat `f_rho` on expected loss by more than `1e-10`.
    pub minimizer_failures: usize,
    /// Smallest `E(candidate) - E(f_rho)` seen.
    pub min_gap: f64,
}

impl ConsistencyReport {
    fn empty(loss: LossKind, classes: usize) -> Self {
        Self {
            loss,
            classes,
            checked: 0,
            skipped_ties: 0,
            decode_mismatches: 0,
            minimizer_failures: 0,
            min_gap: f64::INFINITY,
        }
    }

    pub fn passed(&self) -> bool {
        self.decode_mismatches == 0 && self.minimizer_failures == 0
    }

    pub fn merge(&mut self, other: &Self) {
        self.checked += other.checked;
        self.skipped_ties += other.skipped_ties;
        self.decode_mismatches += other.decode_mismatches;
        self.minimizer_failures += other.minimizer_failures;
        self.min_gap = self.min_gap.min(other.min_gap);
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fisher consistency   {:<6} T={:<2} points {:>6}  ties skipped {:>4}  decode mismatches {}  minimizer failures {}  min gap {:.3e}  {}",
            self.loss.name(),
            self.classes,
            self.checked,
            self.skipped_ties,
            self.decode_mismatches,
            self.minimizer_failures,
            self.min_gap,
            pass_fail(self.passed())
        )
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

const PERTURBATION_DIRECTIONS: usize = 20;
const PERTURBATION_STEP: f64 = 1e-4;
const MINIMIZER_TOL: f64 = 1e-10;
const HULL_GRID_STEP: f64 = 0.01;
const POINTWISE_CANDIDATES: usize = 200;

/// Checks `D(f_rho) = b_rho` at every non-tied point and that `f_rho`
/// minimizes the expected loss against local and global candidates.
pub fn check_fisher_consistency<T: Scalar>(
    dist: &FiniteDistribution<T>,
    cb: &CodeBook<T>,
    kind: LossKind,
    seed: u64,
) -> Result<ConsistencyReport> {
    let target = target_function(dist, cb, kind)?;
    let bayes = bayes_rule(dist);
    let mut report = ConsistencyReport::empty(kind, cb.classes());
    for (x, &b) in bayes.iter().enumerate() {
        if dist.is_tied(x) {
            report.skipped_ties += 1;
            continue;
        }
        report.checked += 1;
        if cb.decode_unchecked(&row(&target.f_rho, x)) != b {
            report.decode_mismatches += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = MINIMIZER_TOL;
    let record = |gap: f64, report: &mut ConsistencyReport| {
        report.min_gap = report.min_gap.min(gap);
        if gap < -tol {
            report.minimizer_failures += 1;
        }
    };
    match kind {
        LossKind::SLs => {
            let base = expected_loss(dist, cb, kind, &target.f_rho)?.as_f64();
            let (m, d) = target.f_rho.shape();
            for _ in 0..PERTURBATION_DIRECTIONS {
                let dir = unit_direction(&mut rng, m * d);
                for sign in [1.0, -1.0] {
                    let f = DMatrix::from_fn(m, d, |x, k| {
                        target.f_rho[(x, k)] + T::lit(sign * PERTURBATION_STEP * dir[x * d + k])
                    });
                    let gap = expected_loss(dist, cb, kind, &f)?.as_f64() - base;
                    record(gap, &mut report);
                }
            }
        }
        LossKind::ScSvm | LossKind::ShSvm => {
            // The expected loss is a sum of pointwise conditional risks, so
            // minimizing each one separately is equivalent.
            for x in 0..dist.points() {
                let base = conditional_risk(dist, cb, kind, x, &row(&target.f_rho, x)).as_f64();
                let w = dist.marginal[x].as_f64();
                for v in pointwise_candidates(&mut rng, cb, kind) {
                    let v: Vec<T> = v.into_iter().map(T::lit).collect();
                    let gap = w * (conditional_risk(dist, cb, kind, x, &v).as_f64() - base);
                    record(gap, &mut report);
                }
            }
        }
    }
    Ok(report)
}

/// Candidate outputs for the pointwise minimizer check: the hull grid at
/// resolution 0.01 for SH-SVM with `T <= 3`, random hull points for larger
/// `T`, and random ball points for SC-SVM.
fn pointwise_candidates<T: Scalar, R: Rng + ?Sized>(rng: &mut R, cb: &CodeBook<T>, kind: LossKind) -> Vec<Vec<f64>> {
    let code = |y: usize, k: usize| cb.code(y)[k].as_f64();
    match kind {
        LossKind::ShSvm if cb.classes() <= 3 => {
            let steps = (1.0 / HULL_GRID_STEP).round() as usize;
            let mut out = Vec::new();
            if cb.classes() == 2 {
                for i in 0..=steps {
                    let a = i as f64 / steps as f64;
                    out.push(vec![a * code(0, 0) + (1.0 - a) * code(1, 0)]);
                }
            } else {
                for i in 0..=steps {
                    for j in 0..=(steps - i) {
                        let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                        let c = 1.0 - a - b;
                        out.push((0..2).map(|k| a * code(0, k) + b * code(1, k) + c * code(2, k)).collect());
                    }
                }
            }
            out
        }
        LossKind::ShSvm => (0..POINTWISE_CANDIDATES).map(|_| hull_point(rng, cb)).collect(),
        _ => (0..POINTWISE_CANDIDATES)
            .map(|_| ball_point(rng, cb.dim(), SAMPLE_RADIUS))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub loss: LossKind,
    pub classes: usize,
    pub samples: usize,
    pub violations: usize,
    /// Largest `LHS / RHS` over samples with positive LHS.
    pub max_ratio: f64,
    /// Samples with `E(f) < E(f_rho) - 1e-10`.
    pub negative_excess_loss: usize,
    /// Samples with `R(D(f)) < R(b_rho) - 1e-12`.
    pub negative_excess_risk: usize,
}

impl ComparisonReport {
    fn empty(loss: LossKind, classes: usize) -> Self {
        Self {
            loss,
            classes,
            samples: 0,
            violations: 0,
            max_ratio: 0.0,
            negative_excess_loss: 0,
            negative_excess_risk: 0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.negative_excess_loss == 0 && self.negative_excess_risk == 0
    }

    pub fn merge(&mut self, other: &Self) {
        self.samples += other.samples;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self.negative_excess_loss += other.negative_excess_loss;
        self.negative_excess_risk += other.negative_excess_risk;
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "comparison           {:<6} T={:<2} samples {:>6}  violations {}  max ratio {:.4}  {}",
            self.loss.name(),
            self.classes,
            self.samples,
            self.violations,
            self.max_ratio,
            pass_fail(self.passed())
        )
    }
}

/// Slack for rounding in `LHS <= RHS`.
const INEQUALITY_SLACK: f64 = 1e-12;

/// Checks the comparison inequality of `kind` on `trials` random functions.
/// SH-SVM functions are drawn inside the convex hull of the codes, the others
/// in a ball of radius `radius`.
pub fn check_comparison_inequality<T: Scalar>(
    dist: &FiniteDistribution<T>,
    cb: &CodeBook<T>,
    kind: LossKind,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<ComparisonReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let target = target_function(dist, cb, kind)?;
    let (c_t, alpha) = (target.c_t.as_f64(), target.alpha.as_f64());
    let bayes = bayes_risk(dist).as_f64();
    let r_rho = misclass_risk(dist, cb, &target.f_rho)?.as_f64();
    let e_rho = expected_loss(dist, cb, kind, &target.f_rho)?.as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ComparisonReport::empty(kind, cb.classes());
    for _ in 0..trials {
        let f = sample_f(&mut rng, cb, kind, &target.f_rho, radius);
        let r = misclass_risk(dist, cb, &f)?.as_f64();
        let excess_loss = expected_loss(dist, cb, kind, &f)?.as_f64() - e_rho;
        report.samples += 1;
        if excess_loss < -MINIMIZER_TOL {
            report.negative_excess_loss += 1;
        }
        if r < bayes - INEQUALITY_SLACK {
            report.negative_excess_risk += 1;
        }
        let lhs = r - r_rho;
        let rhs = c_t * excess_loss.max(0.0).powf(alpha);
        if lhs > rhs + INEQUALITY_SLACK {
            report.violations += 1;
        }
        if lhs > INEQUALITY_SLACK {
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
    }
    Ok(report)
}

/// `gamma(x) = min_{j != D} (T-1)/T <c_D - c_j, f_rho(x)>` for the S-LS
/// target, with `D = D(f_rho(x))`.
pub fn noise_margins<T: Scalar>(dist: &FiniteDistribution<T>, cb: &CodeBook<T>) -> Result<Vec<T>> {
    let target = target_function(dist, cb, LossKind::SLs)?;
    let scale = T::count(cb.dim()) / T::count(cb.classes());
    Ok((0..dist.points())
        .map(|x| {
            let f = row(&target.f_rho, x);
            let d = cb.decode_unchecked(&f);
            let sd = dot(cb.code(d), &f);
            (0..cb.classes())
                .filter(|&j| j != d)
                .map(|j| scale * (sd - dot(cb.code(j), &f)))
                .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
        })
        .collect())
}

/// Points of the uniform grid on `(0, 1]` used alongside the margin atoms.
pub const NOISE_GRID: usize = 1000;

/// Smallest `B_q` with `rho_X{gamma <= s} <= B_q s^q` for all `s` in `(0, 1]`.
/// Margins within [`TIE_TOL`] of zero count as zero and are rejected.
///
/// The ratio is a step function over a decreasing denominator, so its
/// supremum sits at a margin value; those are evaluated exactly, together
/// with a uniform grid.
pub fn noise_constant<T: Scalar>(margins: &[T], marginal: &[T], q: T) -> Result<T> {
    check_dim(marginal.len(), margins.len(), "noise constant: one margin per point")?;
    if !(q > T::zero()) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    if let Some(x) = margins.iter().position(|&g| g <= T::lit(TIE_TOL)) {
        return Err(Error::Degenerate(format!(
            "point {x} has zero noise margin; no finite constant satisfies the noise condition"
        )));
    }
    let mass_below = |s: T| {
        margins
            .iter()
            .zip(marginal)
            .filter(|(&g, _)| g <= s)
            .fold(T::zero(), |a, (_, &w)| a + w)
    };
    let grid = (1..=NOISE_GRID).map(|k| T::count(k) / T::count(NOISE_GRID));
    let atoms = margins.iter().copied().filter(|&g| g <= T::one());
    Ok(grid
        .chain(atoms)
        .map(|s| mass_below(s) / s.powf(q))
        .fold(T::zero(), |a, b| a.max(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub classes: usize,
    pub q: f64,
    /// Largest noise constant over the distributions checked.
    pub b_q: f64,
    /// Largest multiplier `(2 sqrt(B_q + 1))^((2q+2)/(q+2))`.
    pub k_const: f64,
    /// `(q+1)/(q+2)`
    pub exponent: f64,
    pub samples: usize,
    pub violations: usize,
    pub max_ratio: f64,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.exponent > 0.5
    }

    pub fn merge(&mut self, other: &Self) {
        self.b_q = self.b_q.max(other.b_q);
        self.k_const = self.k_const.max(other.k_const);
        self.samples += other.samples;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }
}

impl fmt::Display for NoiseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "noise bound          q={:<4} T={:<2} samples {:>6}  max B_q {:.4}  max K {:.4}  exponent {:.4}  violations {}  max ratio {:.4}  {}",
            self.q,
            self.classes,
            self.samples,
            self.b_q,
            self.k_const,
            self.exponent,
            self.violations,
            self.max_ratio,
            pass_fail(self.passed())
        )
    }
}

/// `(2 sqrt(B_q + 1))^((2q+2)/(q+2))`
pub fn noise_multiplier(b_q: f64, q: f64) -> f64 {
    (2.0 * (b_q + 1.0).sqrt()).powf((2.0 * q + 2.0) / (q + 2.0))
}

/// Checks the improved S-LS bound
/// `R(D(f)) - R(D(f_rho)) <= K (2(T-1)/T (E(f) - E(f_rho)))^((q+1)/(q+2))`
/// on `trials` random functions.
pub fn check_noise_improved_bound<T: Scalar>(
    dist: &FiniteDistribution<T>,
    cb: &CodeBook<T>,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<NoiseReport> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let margins = noise_margins(dist, cb)?;
    let b_q = noise_constant(&margins, &dist.marginal, T::lit(q))?.as_f64();
    let k_const = noise_multiplier(b_q, q);
    let exponent = (q + 1.0) / (q + 2.0);
    let t = cb.classes() as f64;
    let target = target_function(dist, cb, LossKind::SLs)?;
    let r_rho = misclass_risk(dist, cb, &target.f_rho)?.as_f64();
    let e_rho = expected_loss(dist, cb, LossKind::SLs, &target.f_rho)?.as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NoiseReport {
        classes: cb.classes(),
        q,
        b_q,
        k_const,
        exponent,
        samples: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    for _ in 0..trials {
        let f = sample_f(&mut rng, cb, LossKind::SLs, &target.f_rho, SAMPLE_RADIUS);
        let lhs = misclass_risk(dist, cb, &f)?.as_f64() - r_rho;
        let excess = (expected_loss(dist, cb, LossKind::SLs, &f)?.as_f64() - e_rho).max(0.0);
        let rhs = k_const * (2.0 * (t - 1.0) / t * excess).powf(exponent);
        report.samples += 1;
        if lhs > rhs + INEQUALITY_SLACK {
            report.violations += 1;
        }
        if lhs > INEQUALITY_SLACK {
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
    }
    Ok(report)
}

/// Settings for [`verify_theory`].
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub classes: usize,
    /// Random distributions per loss for the consistency and comparison checks.
    pub trials: usize,
    /// Functions sampled per distribution in the comparison check.
    pub samples_per_distribution: usize,
    /// Near-deterministic distributions per `q` for the noise bound.
    pub noise_distributions: usize,
    pub noise_samples_per_distribution: usize,
    pub min_top: f64,
    pub q_values: Vec<f64>,
    pub max_points: usize,
    pub seed: u64,
}

impl TheoryConfig {
    pub fn new(classes: usize, trials: usize, seed: u64) -> Self {
        Self {
            classes,
            trials,
            samples_per_distribution: 5,
            noise_distributions: (trials / 10).max(1),
            noise_samples_per_distribution: 20,
            min_top: 0.9,
            q_values: vec![0.5, 1.0, 4.0],
            max_points: 6,
            seed,
        }
    }
}

/// Check of the binary special cases: the S-LS constants reduce to
/// `psi(t) = sqrt(t)` and the noise margin to `|f_rho|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryReport {
    pub constants_match: bool,
    pub margin_points: usize,
    pub max_margin_error: f64,
}

impl BinaryReport {
    pub fn passed(&self) -> bool {
        self.constants_match && self.max_margin_error <= 1e-12
    }
}

impl fmt::Display for BinaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "binary reduction     s-ls   T=2  sqrt bound constants {}  margin = |f_rho| on {} points (max error {:.1e})  {}",
            if self.constants_match { "match" } else { "differ" },
            self.margin_points,
            self.max_margin_error,
            pass_fail(self.passed())
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub classes: usize,
    pub consistency: Vec<ConsistencyReport>,
    pub comparison: Vec<ComparisonReport>,
    pub noise: Vec<NoiseReport>,
    pub binary: Option<BinaryReport>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.consistency.iter().all(ConsistencyReport::passed)
            && self.comparison.iter().all(ComparisonReport::passed)
            && self.noise.iter().all(NoiseReport::passed)
            && self.binary.as_ref().is_none_or(BinaryReport::passed)
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.consistency {
            writeln!(f, "{r}")?;
        }
        for r in &self.comparison {
            writeln!(f, "{r}")?;
        }
        for r in &self.noise {
            writeln!(f, "{r}")?;
        }
        if let Some(b) = &self.binary {
            writeln!(f, "{b}")?;
        }
        write!(f, "overall T={}: {}", self.classes, pass_fail(self.passed()))
    }
}

/// Runs every check on freshly drawn distributions. Deterministic in `seed`.
pub fn verify_theory(cfg: &TheoryConfig) -> Result<TheoryReport> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {}", cfg.classes)));
    }
    if cfg.trials == 0 || cfg.samples_per_distribution == 0 || cfg.noise_samples_per_distribution == 0 {
        return Err(Error::InvalidArgument("trial counts must be at least 1".into()));
    }
    if cfg.max_points == 0 {
        return Err(Error::InvalidArgument("max_points must be at least 1".into()));
    }
    let cb = CodeBook::<f64>::new(cfg.classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut consistency = Vec::new();
    let mut comparison = Vec::new();
    for kind in LossKind::ALL {
        let mut cons = ConsistencyReport::empty(kind, cfg.classes);
        let mut comp = ComparisonReport::empty(kind, cfg.classes);
        for _ in 0..cfg.trials {
            let m = rng.random_range(1..=cfg.max_points);
            let concentration = [0.3, 1.0, 3.0][rng.random_range(0..3)];
            let dist = FiniteDistribution::<f64>::random(&mut rng, m, cfg.classes, concentration)?;
            cons.merge(&check_fisher_consistency(&dist, &cb, kind, rng.random())?);
            comp.merge(&check_comparison_inequality(
                &dist,
                &cb,
                kind,
                cfg.samples_per_distribution,
                SAMPLE_RADIUS,
                rng.random(),
            )?);
        }
        consistency.push(cons);
        comparison.push(comp);
    }
    let mut noise = Vec::new();
    for &q in &cfg.q_values {
        let mut total: Option<NoiseReport> = None;
        for _ in 0..cfg.noise_distributions {
            let m = rng.random_range(1..=cfg.max_points);
            let dist = FiniteDistribution::<f64>::random_near_deterministic(&mut rng, m, cfg.classes, cfg.min_top)?;
            let r = check_noise_improved_bound(&dist, &cb, q, cfg.noise_samples_per_distribution, rng.random())?;
            match &mut total {
                Some(t) => t.merge(&r),
                None => total = Some(r),
            }
        }
        noise.extend(total);
    }
    let binary = if cfg.classes == 2 {
        Some(binary_reduction(&cb, &mut rng, cfg.trials)?)
    } else {
        None
    };
    Ok(TheoryReport {
        classes: cfg.classes,
        consistency,
        comparison,
        noise,
        binary,
    })
}

fn binary_reduction<R: Rng + ?Sized>(cb: &CodeBook<f64>, rng: &mut R, trials: usize) -> Result<BinaryReport> {
    let (c_t, alpha) = comparison_constants::<f64>(LossKind::SLs, 2);
    let constants_match = (c_t - 1.0).abs() < 1e-15 && alpha == 0.5;
    let mut max_err = 0.0f64;
    let mut points = 0;
    for _ in 0..trials {
        let m = rng.random_range(1..=4);
        let dist = FiniteDistribution::<f64>::random(rng, m, 2, 1.0)?;
        let margins = noise_margins(&dist, cb)?;
        let target = target_function(&dist, cb, LossKind::SLs)?;
        for (x, g) in margins.iter().enumerate() {
            max_err = max_err.max((g - target.f_rho[(x, 0)].abs()).abs());
            points += 1;
        }
    }
    Ok(BinaryReport {
        constants_match,
        margin_points: points,
        max_margin_error: max_err,
    })
}
