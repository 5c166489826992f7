//! Quality-factor arithmetic.
//!
//! Every function here is pure. The engine evaluates one quality factor per
//! arm and pulls the arm with the largest value.
//!
//! KL-UCB is provided twice:
//!
//! * [`qf_klucb_bisect`] runs a fixed number `beta` of bisection steps on the
//!   bracket `[s1, min(1, s1 + sqrt(s2 / 2))]` and returns the upper end. The
//!   loop count is fixed so the cost per arm is constant.
//! * [`qf_klucb_exact`] bisects on `[s1, 1]` until the bracket is narrower
//!   than a tolerance. It is the reference the fixed-iteration version is
//!   checked against.
//!
//! Logarithms are natural throughout.

use thiserror::Error;

use crate::stats::ArmStats;

/// `q` is clamped to `[Q_CLAMP, 1 - Q_CLAMP]` inside [`kl_bernoulli`] so a
/// boundary `q` yields a large finite divergence.
pub const Q_CLAMP: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QfError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("quality factor requested for an arm with no pulls")]
    NoPulls,
    #[error("cumulative reward {x_sum} is invalid for {t_pulls} pulls")]
    Reward { x_sum: f64, t_pulls: u64 },
    #[error("slot index {n} too small (need n >= 2)")]
    SlotTooSmall { n: u64 },
    #[error("bisection needs at least one iteration")]
    ZeroIterations,
    #[error("tolerance {0} must lie in (0, 1e-10]")]
    Tolerance(f64),
    #[error("cannot select from an empty quality-factor vector")]
    Empty,
    #[error("quality factor at index {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("quality-factor vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Operands shared by every quality factor: `X(k,n)`, `T(k,n)` and the slot
/// index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfInputs {
    pub x_sum: f64,
    pub t_pulls: u64,
    pub n: u64,
}

impl QfInputs {
    pub fn new(x_sum: f64, t_pulls: u64, n: u64) -> Self {
        Self { x_sum, t_pulls, n }
    }

    pub fn from_stats(stats: &ArmStats, n: u64) -> Self {
        Self::new(stats.x_sum as f64, stats.t_pulls, n)
    }

    /// Checks the shared preconditions and returns `(mean, T, ln n)`.
    #[inline]
    fn checked(&self) -> Result<(f64, f64, f64), QfError> {
        if self.t_pulls == 0 {
            return Err(QfError::NoPulls);
        }
        let t = self.t_pulls as f64;
        if !(self.x_sum >= 0.0 && self.x_sum <= t) {
            return Err(QfError::Reward { x_sum: self.x_sum, t_pulls: self.t_pulls });
        }
        if self.n < 2 {
            return Err(QfError::SlotTooSmall { n: self.n });
        }
        Ok((self.x_sum / t, t, (self.n as f64).ln()))
    }
}

#[inline]
fn kl_unchecked(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    let q = q.clamp(Q_CLAMP, 1.0 - Q_CLAMP);
    let mut d = 0.0;
    if p > 0.0 {
        d += p * (p / q).ln();
    }
    if p < 1.0 {
        d += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    // Rounding can leave a tiny negative residue when p and q nearly agree.
    d.max(0.0)
}

/// Bernoulli relative entropy `d(p, q)`, with `0 ln 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, QfError> {
    for v in [p, q] {
        if !(0.0..=1.0).contains(&v) {
            return Err(QfError::Domain(v));
        }
    }
    Ok(kl_unchecked(p, q))
}

/// UCB: `X/T + sqrt(alpha ln n / T)`.
pub fn qf_ucb(input: &QfInputs, alpha: f64) -> Result<f64, QfError> {
    let (mean, t, ln_n) = input.checked()?;
    Ok(mean + (alpha * ln_n / t).sqrt())
}

/// UCB-Tuned with the Bernoulli variance `m(1 - m)`:
/// `m + sqrt(ln n / T * min(1/4, m(1-m) + sqrt(2 ln n / T)))`.
pub fn qf_ucb_tuned(input: &QfInputs) -> Result<f64, QfError> {
    let (mean, t, ln_n) = input.checked()?;
    let v = mean * (1.0 - mean) + (2.0 * ln_n / t).sqrt();
    Ok(mean + (ln_n / t * v.min(0.25)).sqrt())
}

/// UCB-V for rewards in `[0, 1]`: `m + sqrt(2 V ln n / T) + 3 ln n / T` with
/// `V = m(1 - m)`.
pub fn qf_ucb_v(input: &QfInputs) -> Result<f64, QfError> {
    let (mean, t, ln_n) = input.checked()?;
    let v = mean * (1.0 - mean);
    Ok(mean + (2.0 * v * ln_n / t).sqrt() + 3.0 * ln_n / t)
}

/// KL-UCB exploration budget `max(0, (ln n + c ln ln n) / T)`.
///
/// `ln ln n` is negative for `n < e`; the clamp keeps the budget meaningful.
pub fn klucb_budget(n: u64, t_pulls: u64, c: f64) -> f64 {
    let ln_n = (n as f64).ln();
    let extra = if c == 0.0 { 0.0 } else { c * ln_n.ln() };
    ((ln_n + extra) / t_pulls as f64).max(0.0)
}

/// Bracket of the fixed-iteration KL-UCB bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionState {
    /// Empirical mean.
    pub s1: f64,
    /// Divergence budget.
    pub s2: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BisectionState {
    /// Pinsker's inequality `d(p, q) >= 2 (p - q)^2` puts the root below
    /// `s1 + sqrt(s2 / 2)`.
    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2, lower: s1, upper: (s1 + (s2 / 2.0).sqrt()).min(1.0) }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    #[inline]
    pub fn step(&mut self) {
        let mid = 0.5 * (self.lower + self.upper);
        if kl_unchecked(self.s1, mid) > self.s2 {
            self.upper = mid;
        } else {
            self.lower = mid;
        }
    }
}

/// Fixed-iteration KL-UCB index from the mean `s1` and budget `s2`.
#[inline]
pub fn klucb_index(s1: f64, s2: f64, beta: u32) -> f64 {
    let mut state = BisectionState::new(s1, s2);
    for _ in 0..beta {
        state.step();
    }
    state.upper
}

/// KL-UCB quality factor via `beta` bisection iterations.
pub fn qf_klucb_bisect(input: &QfInputs, c: f64, beta: u32) -> Result<f64, QfError> {
    if beta == 0 {
        return Err(QfError::ZeroIterations);
    }
    let (mean, _, _) = input.checked()?;
    Ok(klucb_index(mean, klucb_budget(input.n, input.t_pulls, c), beta))
}

/// Reference solution of `max { q in [s1, 1] : d(s1, q) <= s2 }`, resolved
/// to a bracket no wider than `tol`.
pub fn klucb_exact_index(s1: f64, s2: f64, tol: f64) -> f64 {
    if s2 <= 0.0 || s1 >= 1.0 {
        return s1;
    }
    if kl_unchecked(s1, 1.0) <= s2 {
        return 1.0;
    }
    let (mut lo, mut hi) = (s1, 1.0_f64);
    while hi - lo > tol {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_unchecked(s1, mid) <= s2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// KL-UCB quality factor solved to tolerance `tol` (at most `1e-10`).
pub fn qf_klucb_exact(input: &QfInputs, c: f64, tol: f64) -> Result<f64, QfError> {
    if !(tol > 0.0 && tol <= 1e-10) {
        return Err(QfError::Tolerance(tol));
    }
    let (mean, _, _) = input.checked()?;
    Ok(klucb_exact_index(mean, klucb_budget(input.n, input.t_pulls, c), tol))
}

/// Index of the largest quality factor; ties go to the lowest index.
pub fn select_arm(qfs: &[f64]) -> Result<usize, QfError> {
    let mut best: Option<(usize, f64)> = None;
    for (index, &value) in qfs.iter().enumerate() {
        if !value.is_finite() {
            return Err(QfError::NonFinite { index, value });
        }
        match best {
            Some((_, b)) if value <= b => {}
            _ => best = Some((index, value)),
        }
    }
    best.map(|(i, _)| i).ok_or(QfError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Values below were produced by a 40-digit mpmath evaluation of the
    // closed forms, independent of this module.

    #[test]
    fn kl_pinned_values() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_bernoulli(0.2, 0.8).unwrap(), 0.831_776_616_7, epsilon = 1e-6);
        assert_abs_diff_eq!(kl_bernoulli(0.5, 0.75).unwrap(), 0.143_841_036_2, epsilon = 1e-6);
    }

    #[test]
    fn kl_boundaries_are_finite() {
        assert_eq!(kl_bernoulli(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(kl_bernoulli(1.0, 1.0).unwrap(), 0.0);
        let d = kl_bernoulli(0.5, 1.0).unwrap();
        assert!(d.is_finite() && d > 10.0);
        let d = kl_bernoulli(1.0, 0.0).unwrap();
        assert!(d.is_finite() && d > 30.0);
        assert_abs_diff_eq!(kl_bernoulli(0.0, 0.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn kl_domain_errors() {
        assert_eq!(kl_bernoulli(-0.1, 0.5), Err(QfError::Domain(-0.1)));
        assert_eq!(kl_bernoulli(0.5, 1.5), Err(QfError::Domain(1.5)));
        assert!(kl_bernoulli(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn ucb_pinned() {
        let qf = qf_ucb(&QfInputs::new(3.0, 6, 100), 2.0).unwrap();
        assert_abs_diff_eq!(qf, 1.738_974_063, epsilon = 1e-5);
    }

    #[test]
    fn ucb_bonus_vanishes() {
        let t = 1_000_000;
        let qf = qf_ucb(&QfInputs::new(t as f64, t, t + 1), 2.0).unwrap();
        assert!(qf > 1.0 && qf < 1.01, "{qf}");
    }

    #[test]
    fn ucb_tuned_pinned() {
        assert_abs_diff_eq!(
            qf_ucb_tuned(&QfInputs::new(5.0, 10, 100)).unwrap(),
            0.839_307_021,
            epsilon = 1e-5
        );
        // zero-variance branch
        let (t, n) = (20u64, 50u64);
        let ln_n = (n as f64).ln();
        let t_f = t as f64;
        let expect = 1.0 + (ln_n / t_f * (2.0 * ln_n / t_f).sqrt().min(0.25)).sqrt();
        assert_abs_diff_eq!(qf_ucb_tuned(&QfInputs::new(t_f, t, n)).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn ucb_v_pinned() {
        assert_abs_diff_eq!(qf_ucb_v(&QfInputs::new(0.0, 4, 10)).unwrap(), 1.726_938_820, epsilon = 1e-5);
        let expect = 1.0 + 3.0 * 30f64.ln() / 7.0;
        assert_abs_diff_eq!(qf_ucb_v(&QfInputs::new(7.0, 7, 30)).unwrap(), expect, epsilon = 1e-15);
    }

    #[test]
    fn precondition_errors() {
        let zero = QfInputs::new(0.0, 0, 10);
        assert_eq!(qf_ucb(&zero, 2.0), Err(QfError::NoPulls));
        assert_eq!(qf_ucb_tuned(&zero), Err(QfError::NoPulls));
        assert_eq!(qf_ucb_v(&zero), Err(QfError::NoPulls));
        assert_eq!(qf_klucb_bisect(&zero, 3.0, 16), Err(QfError::NoPulls));
        let early = QfInputs::new(1.0, 1, 1);
        assert_eq!(qf_ucb(&early, 2.0), Err(QfError::SlotTooSmall { n: 1 }));
        assert_eq!(qf_klucb_bisect(&early, 3.0, 16), Err(QfError::SlotTooSmall { n: 1 }));
        assert!(matches!(qf_ucb(&QfInputs::new(5.0, 4, 10), 2.0), Err(QfError::Reward { .. })));
        assert_eq!(qf_klucb_bisect(&QfInputs::new(1.0, 2, 10), 3.0, 0), Err(QfError::ZeroIterations));
        assert_eq!(qf_klucb_exact(&QfInputs::new(1.0, 2, 10), 3.0, 1e-6), Err(QfError::Tolerance(1e-6)));
    }

    #[test]
    fn budget_clamped_at_small_n() {
        // ln ln 2 < 0, so with a large c the raw budget is negative.
        assert_eq!(klucb_budget(2, 1, 3.0), 0.0);
        assert!(klucb_budget(3, 1, 3.0) > 0.0);
        assert_abs_diff_eq!(klucb_budget(2, 1, 0.0), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn bisect_pinned() {
        // d(0.5, q) = -0.5 ln(4 q (1 - q)), so the root solves
        // q (1 - q) = 0.25 exp(-0.1).
        assert_abs_diff_eq!(klucb_index(0.5, 0.05, 16), 0.654_242_165, epsilon = 5e-6);
        assert_eq!(klucb_index(0.37, 0.0, 16), 0.37);
        assert_eq!(klucb_index(1.0, 0.7, 16), 1.0);
        assert_eq!(klucb_index(1.0, 0.0, 16), 1.0);
    }

    #[test]
    fn exact_pinned() {
        let tol = 1e-12;
        assert_abs_diff_eq!(klucb_exact_index(0.5, 0.05, tol), 0.654_242_165_087_923, epsilon = 1e-11);
        // d(0, q) = -ln(1 - q)
        assert_abs_diff_eq!(klucb_exact_index(0.0, 2f64.ln(), tol), 0.5, epsilon = 1e-11);
        assert_eq!(klucb_exact_index(0.3, 0.0, tol), 0.3);
    }

    #[test]
    fn qf_klucb_wrappers_agree_with_index() {
        let input = QfInputs::new(3.0, 7, 40);
        let s2 = klucb_budget(40, 7, 3.0);
        assert_eq!(qf_klucb_bisect(&input, 3.0, 16).unwrap(), klucb_index(3.0 / 7.0, s2, 16));
        let exact = qf_klucb_exact(&input, 3.0, 1e-12).unwrap();
        assert_abs_diff_eq!(exact, klucb_index(3.0 / 7.0, s2, 40), epsilon = 1e-9);
    }

    #[test]
    fn bisection_width_halves() {
        let mut st = BisectionState::new(0.3, 0.4);
        let w0 = st.width();
        for i in 1..=20 {
            st.step();
            assert_abs_diff_eq!(st.width(), w0 / 2f64.powi(i), epsilon = 1e-15);
        }
    }

    #[test]
    fn select_arm_ties_and_errors() {
        assert_eq!(select_arm(&[0.3, 0.9, 0.9, 0.1]), Ok(1));
        assert_eq!(select_arm(&[0.7]), Ok(0));
        assert_eq!(select_arm(&[]), Err(QfError::Empty));
        assert!(matches!(select_arm(&[0.1, f64::NAN]), Err(QfError::NonFinite { index: 1, .. })));
        assert!(matches!(select_arm(&[f64::INFINITY]), Err(QfError::NonFinite { index: 0, .. })));
    }
}
