//! Composite Simpson quadrature with panel doubling, certified truncation of
//! semi-infinite integrals, and the kernel and measure constants built on it.

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, Expression};
use crate::measure::MeasureSpec;

/// Every doubling evaluates at least this many levels before the
/// `|I_2n - I_n|` test may stop it, which guards against aliasing on
/// periodic integrands sampled at a handful of points.
const MIN_LEVELS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("no convergence on [{lo}, {hi}] after {refinements} refinements (last estimate {estimate:e}, tolerance {tol:e})")]
    NotConverged {
        lo: f64,
        hi: f64,
        refinements: u32,
        estimate: f64,
        tol: f64,
    },
    #[error("decay rate must be positive, got {0}")]
    NonPositiveDecay(f64),
    #[error("truncation point {required} exceeds the hard cap {cap}")]
    TruncationCap { required: f64, cap: f64 },
    #[error("integral diverges: tail mass {tail:e} beyond {reached} still above tolerance")]
    Divergent { reached: f64, tail: f64 },
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("invalid quadrature configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Target absolute error of a single integral.
    pub abs_tol: f64,
    pub max_refinements: u32,
    /// Even, at least 4.
    pub initial_panels: usize,
    /// Decay rate used to truncate kernel integrals over `[0, ∞)`.
    pub tail_decay_rate: f64,
    /// Semi-infinite integrals are truncated no further than
    /// `lo + truncation_cap / decay`.
    pub truncation_cap: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-8,
            max_refinements: 20,
            initial_panels: 4,
            tail_decay_rate: 1.0,
            truncation_cap: 200.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.abs_tol > 0.0) {
            return Err(QuadratureError::Config(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.initial_panels < 4 || self.initial_panels % 2 != 0 {
            return Err(QuadratureError::Config(format!(
                "initial_panels must be even and at least 4, got {}",
                self.initial_panels
            )));
        }
        if !(self.tail_decay_rate > 0.0) {
            return Err(QuadratureError::Config(format!(
                "tail_decay_rate must be positive, got {}",
                self.tail_decay_rate
            )));
        }
        if !(self.truncation_cap > 0.0) {
            return Err(QuadratureError::Config("truncation_cap must be positive".into()));
        }
        Ok(())
    }

    /// Same settings with a different first panel count (rounded up to even, at least 4).
    pub fn with_initial_panels(&self, panels: usize) -> Self {
        let mut n = panels.max(4);
        if n % 2 == 1 {
            n += 1;
        }
        QuadratureConfig {
            initial_panels: n,
            ..*self
        }
    }

    pub fn with_abs_tol(&self, abs_tol: f64) -> Self {
        QuadratureConfig { abs_tol, ..*self }
    }
}

/// Integrates a fallible integrand over `[lo, hi]`.
///
/// Composite Simpson on `initial_panels` panels, doubled until two
/// successive estimates differ by less than `abs_tol`; the finer one is
/// returned. Points are visited in a fixed order, so the result is
/// bit-reproducible.
pub fn try_integrate<E, F>(mut f: F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(QuadratureError::BadInterval { lo, hi }.into());
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut sample = |x: f64| -> Result<f64, E> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite(x).into())
        }
    };

    let mut n = cfg.initial_panels.max(4);
    if n % 2 == 1 {
        n += 1;
    }
    let width = hi - lo;
    let mut step = width / n as f64;
    let ends = sample(lo)? + sample(hi)?;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = sample(lo + i as f64 * step)?;
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    let mut estimate = step / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    let mut last_diff = f64::INFINITY;

    for level in 1..=cfg.max_refinements {
        even += odd;
        n *= 2;
        step = width / n as f64;
        odd = 0.0;
        let mut i = 1;
        while i < n {
            odd += sample(lo + i as f64 * step)?;
            i += 2;
        }
        let refined = step / 3.0 * (ends + 4.0 * odd + 2.0 * even);
        last_diff = (refined - estimate).abs();
        estimate = refined;
        if level >= MIN_LEVELS && last_diff < cfg.abs_tol {
            return Ok(refined);
        }
    }
    Err(QuadratureError::NotConverged {
        lo,
        hi,
        refinements: cfg.max_refinements,
        estimate: last_diff,
        tol: cfg.abs_tol,
    }
    .into())
}

/// [`try_integrate`] for an infallible integrand.
pub fn integrate<F>(mut f: F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    try_integrate(|x| Ok::<f64, QuadratureError>(f(x)), lo, hi, cfg)
}

/// Truncation point `R` for `|f(y)| <= bound * exp(-decay (y - lo))`,
/// chosen so that the dropped tail is at most `abs_tol`.
pub fn truncation_point(lo: f64, decay: f64, bound: f64, cfg: &QuadratureConfig) -> Result<f64, QuadratureError> {
    if !(decay > 0.0) {
        return Err(QuadratureError::NonPositiveDecay(decay));
    }
    let bound = bound.abs();
    let length = if bound == 0.0 {
        0.0
    } else {
        ((bound / (cfg.abs_tol * decay)).ln() / decay).max(0.0)
    };
    let cap = cfg.truncation_cap / decay;
    if length > cap {
        return Err(QuadratureError::TruncationCap {
            required: lo + length,
            cap: lo + cap,
        });
    }
    Ok(lo + length)
}

/// `∫_lo^∞ f` for an integrand certified by `|f(y)| <= bound·exp(-decay (y-lo))`.
/// Total error is at most `2·abs_tol`.
pub fn try_integrate_semi_infinite<E, F>(
    f: F,
    lo: f64,
    decay: f64,
    bound: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    let hi = truncation_point(lo, decay, bound, cfg)?;
    try_integrate(f, lo, hi, cfg)
}

pub fn integrate_semi_infinite<F>(
    mut f: F,
    lo: f64,
    decay: f64,
    bound: f64,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    try_integrate_semi_infinite(|x| Ok::<f64, QuadratureError>(f(x)), lo, decay, bound, cfg)
}

/// `∫_0^∞ g` for a nonnegative integrand without a decay certificate.
///
/// Integrates over `[0,1]`, `[1,2]`, `[2,4]`, … and stops once a dyadic
/// segment contributes less than `abs_tol`; the segment mass doubles as the
/// tail estimate. Fails as divergent if the segment beyond `2^40` is still
/// above tolerance.
pub fn try_integrate_dyadic_tail<E, F>(mut g: F, cfg: &QuadratureConfig) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    let mut total = try_integrate(&mut g, 0.0, 1.0, cfg)?;
    let mut lo = 1.0f64;
    let mut last = total;
    for _ in 0..40 {
        let seg = try_integrate(&mut g, lo, 2.0 * lo, cfg)?;
        total += seg;
        last = seg;
        lo *= 2.0;
        if seg.abs() < cfg.abs_tol {
            return Ok(total);
        }
    }
    Err(QuadratureError::Divergent { reached: lo, tail: last }.into())
}

/// A convolution kernel `K(s)` on `s ≥ 0`, or the zero kernel.
///
/// A kernel that stays below `bound · exp(-decay · s)` on the build-time
/// sample carries that envelope, which certifies truncation of the kernel
/// integrals inside the right-hand side. Kernels without one (power laws)
/// are integrated over dyadic segments instead.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    expr: Option<Expression>,
    compiled: Option<CompiledExpr>,
    bound: Option<f64>,
    decay: f64,
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec {
            expr: None,
            compiled: None,
            bound: Some(0.0),
            decay: 1.0,
        }
    }

    /// Builds a kernel from an expression in `s` (and optionally `p`).
    ///
    /// `decay` is the envelope rate; the envelope bound is taken as the
    /// largest sampled value of `K(s)·exp(decay·s)`, and is dropped when that
    /// product is still rising at the far end of the sample. Fails if `K` is
    /// negative or non-finite somewhere on the sample.
    pub fn new(expr: Expression, decay: f64, p_delay: f64) -> Result<Self, QuadratureError> {
        if expr.is_zero_literal() {
            return Ok(Self::zero());
        }
        if !(decay > 0.0) {
            return Err(QuadratureError::NonPositiveDecay(decay));
        }
        let compiled = expr.compile(&["s", "p"])?;
        let reach = 60.0 / decay;
        let samples = 6000;
        let mut bound: f64 = 0.0;
        let mut env = Vec::with_capacity(samples + 1);
        for i in 0..=samples {
            let s = reach * i as f64 / samples as f64;
            let k = compiled.eval(&[s, p_delay])?;
            if !k.is_finite() || k < 0.0 {
                return Err(QuadratureError::Config(format!(
                    "kernel must be finite and nonnegative, K({s}) = {k}"
                )));
            }
            let scaled = k * (decay * s).exp();
            env.push(scaled);
            bound = bound.max(scaled);
        }
        // envelope must not be attained only at the far end of the sample
        let far = env[samples * 9 / 10..].iter().cloned().fold(0.0, f64::max);
        let slow = !bound.is_finite()
            || (bound > 0.0 && far >= bound * (1.0 - 1e-12) && env[samples] > env[samples / 2] * (1.0 + 1e-9));
        Ok(KernelSpec {
            expr: Some(expr),
            compiled: Some(compiled),
            bound: (!slow).then_some(bound * (1.0 + 1e-9)),
            decay,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_none()
    }

    pub fn expression(&self) -> Option<&Expression> {
        self.expr.as_ref()
    }

    /// `sup K(s)·exp(decay·s)`, if the kernel has an exponential envelope.
    pub fn envelope_bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn eval(&self, s: f64, p_delay: f64) -> Result<f64, EvalError> {
        match &self.compiled {
            Some(c) => c.eval(&[s, p_delay]),
            None => Ok(0.0),
        }
    }
}

/// Total kernel mass `c = ∫_0^∞ K`.
pub fn kernel_constant_c(kernel: &KernelSpec, p_delay: f64, cfg: &QuadratureConfig) -> Result<f64, QuadratureError> {
    if kernel.is_zero() {
        return Ok(0.0);
    }
    try_integrate_dyadic_tail(|s| kernel.eval(s, p_delay).map_err(QuadratureError::from), cfg)
}

/// `(∫_0^∞ K^q)^{1/q}` for `q > 1`.
pub fn kernel_q_norm(kernel: &KernelSpec, q: f64, p_delay: f64, cfg: &QuadratureConfig) -> Result<f64, QuadratureError> {
    if !(q > 1.0) {
        return Err(QuadratureError::Config(format!("q must exceed 1, got {q}")));
    }
    if kernel.is_zero() {
        return Ok(0.0);
    }
    let integral = try_integrate_dyadic_tail(
        |s| kernel.eval(s, p_delay).map(|k| k.powf(q)).map_err(QuadratureError::from),
        cfg,
    )?;
    Ok(integral.powf(1.0 / q))
}

/// Grid supremum of the two weighted window integrals tying `μ` to `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSupReport {
    pub lambda: f64,
    pub z_grid: Vec<f64>,
    /// `∫_{-z}^{z} exp(-λ(t+z)) dμ(t)` per grid point.
    pub p1_values: Vec<f64>,
    /// `∫_{-z}^{z} exp(-λ(z-t)) dμ(t)` per grid point.
    pub p2_values: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    /// The maximum sits at the last grid point and was still rising there,
    /// so the true supremum may be larger.
    pub p1_saturated: bool,
    pub p2_saturated: bool,
}

pub fn p1_p2_sup(
    mu: &MeasureSpec,
    lambda: f64,
    z_grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<WeightedSupReport, crate::Error> {
    if !(lambda > 0.0) {
        return Err(QuadratureError::NonPositiveDecay(lambda).into());
    }
    if z_grid.is_empty() || z_grid.windows(2).any(|w| !(w[0] < w[1])) || z_grid[0] < 0.0 {
        return Err(crate::Error::Invalid("z_grid must be nonempty, nonnegative and increasing".into()));
    }
    let mut p1_values = Vec::with_capacity(z_grid.len());
    let mut p2_values = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        let p1 = try_integrate(
            |t| Ok::<f64, crate::Error>((-lambda * (t + z)).exp() * mu.density(t)?),
            -z,
            z,
            cfg,
        )?;
        let p2 = try_integrate(
            |t| Ok::<f64, crate::Error>((-lambda * (z - t)).exp() * mu.density(t)?),
            -z,
            z,
            cfg,
        )?;
        p1_values.push(p1);
        p2_values.push(p2);
    }
    let summarize = |vals: &[f64]| -> (f64, bool) {
        let (idx, max) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let last = vals.len() - 1;
        let rising = last > 0 && vals[last] - vals[last - 1] > 1e-6 * max.abs().max(1.0);
        (max, idx == last && (last == 0 || rising))
    };
    let (p1, p1_saturated) = summarize(&p1_values);
    let (p2, p2_saturated) = summarize(&p2_values);
    Ok(WeightedSupReport {
        lambda,
        z_grid: z_grid.to_vec(),
        p1_values,
        p2_values,
        p1,
        p2,
        p1_saturated,
        p2_saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    /// Gauss-Legendre 20-point rule on many subintervals; independent of Simpson.
    fn gauss_oracle(f: impl Fn(f64) -> f64, lo: f64, hi: f64, pieces: usize) -> f64 {
        const X: [f64; 10] = [
            0.0765265211334973, 0.2277858511416451, 0.3737060887154195, 0.5108670019508271,
            0.6360536807265150, 0.7463319064601508, 0.8391169718222188, 0.9122344282513259,
            0.9639719272779138, 0.9931285991850949,
        ];
        const W: [f64; 10] = [
            0.1527533871307258, 0.1491729864726037, 0.1420961093183820, 0.1316886384491766,
            0.1181945319615184, 0.1019301198172404, 0.0832767415767048, 0.0626720483341091,
            0.0406014298003869, 0.0176140071391521,
        ];
        let h = (hi - lo) / pieces as f64;
        let mut total = 0.0;
        for k in 0..pieces {
            let mid = lo + (k as f64 + 0.5) * h;
            let half = h / 2.0;
            for j in 0..10 {
                total += W[j] * half * (f(mid - half * X[j]) + f(mid + half * X[j]));
            }
        }
        total
    }

    #[test]
    fn elementary_integrals() {
        assert_abs_diff_eq!(integrate(|_| 1.0, 0.0, 1.0, &cfg()).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(f64::sin, 0.0, PI, &cfg()).unwrap(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn exp_sin_over_period_matches_bessel_oracle() {
        // 2π I0(1), from an independent Gauss-Legendre evaluation
        let oracle = gauss_oracle(|t| t.sin().exp(), -PI, PI, 64);
        assert_abs_diff_eq!(oracle, 7.954926521012845, epsilon = 1e-12);
        let got = integrate(|t| t.sin().exp(), -PI, PI, &cfg()).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-8);
    }

    #[test]
    fn cubic_is_exact_on_one_level() {
        let f = |x: f64| 3.0 * x * x * x - 2.0 * x * x + x - 5.0;
        let exact = |x: f64| 0.75 * x.powi(4) - 2.0 / 3.0 * x.powi(3) + 0.5 * x * x - 5.0 * x;
        let c = QuadratureConfig { max_refinements: 2, ..cfg() };
        let got = integrate(f, -1.3, 2.1, &c).unwrap();
        assert_abs_diff_eq!(got, exact(2.1) - exact(-1.3), epsilon = 1e-12);
    }

    #[test]
    fn doubling_error_shrinks_by_eight_or_more() {
        // the NotConverged error carries the last |I_2n - I_n|
        let diffs: Vec<f64> = (1..7)
            .map(|k| {
                let c = QuadratureConfig { abs_tol: 1e-300, max_refinements: k, ..cfg() };
                match integrate(|t| (-t * t).exp(), -3.0, 3.0, &c) {
                    Err(QuadratureError::NotConverged { estimate, .. }) => estimate,
                    other => panic!("{other:?}"),
                }
            })
            .collect();
        for w in diffs.windows(2) {
            if w[1] > 1e-14 {
                assert!(w[0] / w[1] >= 8.0, "ratio {} from {:?}", w[0] / w[1], diffs);
            }
        }
    }

    #[test]
    fn refinement_cap_is_reported() {
        let c = QuadratureConfig { max_refinements: 3, abs_tol: 1e-15, ..cfg() };
        let err = integrate(|t| (50.0 * t).sin().abs(), 0.0, 10.0, &c).unwrap_err();
        assert!(matches!(err, QuadratureError::NotConverged { refinements: 3, .. }));
        assert!(matches!(
            integrate(|t| t, 1.0, 0.0, &cfg()),
            Err(QuadratureError::BadInterval { .. })
        ));
        assert!(matches!(
            integrate(|t| 1.0 / t, -1.0, 1.0, &cfg()),
            Err(QuadratureError::NonFinite(_))
        ));
    }

    #[test]
    fn semi_infinite_exponentials() {
        let one = integrate_semi_infinite(|s| (-s).exp(), 0.0, 1.0, 1.0, &cfg()).unwrap();
        assert_abs_diff_eq!(one, 1.0, epsilon = 2e-8);
        let half = integrate_semi_infinite(|s| (-2.0 * s).exp(), 0.0, 2.0, 1.0, &cfg()).unwrap();
        assert_abs_diff_eq!(half, 0.5, epsilon = 2e-8);
        let l2 = integrate_semi_infinite(|s| (-s).exp().powi(2), 0.0, 2.0, 1.0, &cfg()).unwrap().sqrt();
        assert_abs_diff_eq!(l2, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-7);
    }

    #[test]
    fn semi_infinite_errors() {
        assert_eq!(
            integrate_semi_infinite(|s| s, 0.0, 0.0, 1.0, &cfg()),
            Err(QuadratureError::NonPositiveDecay(0.0))
        );
        let err = integrate_semi_infinite(|s| (-1e-3 * s).exp(), 0.0, 1e-3, 1e90, &cfg()).unwrap_err();
        assert!(matches!(err, QuadratureError::TruncationCap { .. }));
        assert_eq!(integrate_semi_infinite(|_| 0.0, 3.0, 1.0, 0.0, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn truncation_agrees_with_ten_times_longer_oracle() {
        let cases: Vec<(Box<dyn Fn(f64) -> f64>, f64, f64, f64)> = vec![
            (Box::new(|s: f64| (-s).exp() * (3.0 * s).cos()), 0.0, 1.0, 1.0),
            (Box::new(|s: f64| (-0.5 * (s - 2.0)).exp() / (1.0 + s * s)), 2.0, 0.5, 0.2),
            (Box::new(|s: f64| 2.0 * (-1.5 * (s + 1.0)).exp() * (1.0 + 0.5 * s.sin())), -1.0, 1.5, 3.0),
        ];
        for (f, lo, decay, bound) in cases {
            let c = cfg();
            let got = integrate_semi_infinite(&f, lo, decay, bound, &c).unwrap();
            let r = truncation_point(lo, decay, bound, &c).unwrap();
            let oracle = gauss_oracle(&f, lo, lo + 10.0 * (r - lo), 4000);
            assert!((got - oracle).abs() <= 2.0 * c.abs_tol, "{got} vs {oracle}");
        }
    }

    fn kernel(src: &str, decay: f64) -> KernelSpec {
        KernelSpec::new(Expression::parse(src).unwrap(), decay, 0.0).unwrap()
    }

    #[test]
    fn kernel_constants() {
        let c = cfg();
        assert_abs_diff_eq!(kernel_constant_c(&kernel("exp(-s)", 1.0), 0.0, &c).unwrap(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(kernel_constant_c(&kernel("exp(-2*s)", 2.0), 0.0, &c).unwrap(), 0.5, epsilon = 1e-7);
        // antiderivative -1/(2(1+s)^2); oracle value 1/2
        let oracle = gauss_oracle(|s| (1.0 + s).powi(-3), 0.0, 1e4, 20000) + 0.5 / (1.0 + 1e4f64).powi(2);
        assert_abs_diff_eq!(oracle, 0.5, epsilon = 1e-10);
        let slow = KernelSpec::new(Expression::parse("1/(1+s)^3").unwrap(), 0.01, 0.0).unwrap();
        assert_abs_diff_eq!(kernel_constant_c(&slow, 0.0, &c).unwrap(), 0.5, epsilon = 1e-6);
        assert_eq!(kernel_constant_c(&KernelSpec::zero(), 0.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn kernel_q_norms() {
        let c = cfg();
        let k = kernel("exp(-s)", 1.0);
        assert_abs_diff_eq!(kernel_q_norm(&k, 2.0, 0.0, &c).unwrap(), 0.5f64.sqrt(), epsilon = 1e-7);
        // (1/q)^{1/q}
        let q4 = 0.25f64.powf(0.25);
        assert_abs_diff_eq!(q4, 0.7071067811865476, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_q_norm(&k, 4.0, 0.0, &c).unwrap(), q4, epsilon = 1e-7);
        assert_eq!(kernel_q_norm(&KernelSpec::zero(), 2.0, 0.0, &c).unwrap(), 0.0);
        assert!(kernel_q_norm(&k, 1.0, 0.0, &c).is_err());
    }

    #[test]
    fn kernel_rejections() {
        assert!(KernelSpec::new(Expression::parse("-exp(-s)").unwrap(), 1.0, 0.0).is_err());
        assert!(KernelSpec::new(Expression::parse("sqrt(s-1)").unwrap(), 1.0, 0.0).is_err());
        assert!(KernelSpec::new(Expression::parse("1").unwrap(), 1.0, 0.0).unwrap().envelope_bound().is_none());
        assert!(KernelSpec::new(Expression::parse("exp(-s/2)").unwrap(), 1.0, 0.0).unwrap().envelope_bound().is_none());
        let fast = KernelSpec::new(Expression::parse("2*exp(-3*s)").unwrap(), 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(fast.envelope_bound().unwrap(), 2.0, epsilon = 1e-8);
        assert!(KernelSpec::new(Expression::parse("0").unwrap(), 1.0, 0.0).unwrap().is_zero());
        let divergent = KernelSpec::new(Expression::parse("1/(1+s)").unwrap(), 0.01, 0.0).unwrap();
        assert!(matches!(
            kernel_constant_c(&divergent, 0.0, &cfg()),
            Err(QuadratureError::Divergent { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(QuadratureConfig { initial_panels: 5, ..cfg() }.validate().is_err());
        assert!(QuadratureConfig { abs_tol: 0.0, ..cfg() }.validate().is_err());
        assert_eq!(cfg().with_initial_panels(7).initial_panels, 8);
    }

    #[test]
    fn weighted_sups_for_lebesgue() {
        let mu = MeasureSpec::lebesgue();
        let z: Vec<f64> = vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 32.0];
        let rep = p1_p2_sup(&mu, 1.0, &z, &cfg()).unwrap();
        assert_eq!(rep.p1_values[0], 0.0);
        for (zz, v) in z.iter().zip(&rep.p1_values) {
            assert_abs_diff_eq!(*v, 1.0 - (-2.0 * zz).exp(), epsilon = 1e-8);
        }
        assert_abs_diff_eq!(rep.p1, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.p2, 1.0, epsilon = 1e-6);
        assert!(!rep.p1_saturated && !rep.p2_saturated);
        let short = p1_p2_sup(&mu, 1.0, &[0.5, 1.0], &cfg()).unwrap();
        assert!(short.p1_saturated);
    }

    #[test]
    fn weighted_sups_respect_density_envelope() {
        let mu = MeasureSpec::new(Expression::parse("exp(sin(t))").unwrap(), "exp(sin t)").unwrap();
        let z: Vec<f64> = (1..=40).map(|k| k as f64 * 0.8).collect();
        let rep = p1_p2_sup(&mu, 1.0, &z, &cfg()).unwrap();
        let e = std::f64::consts::E;
        for v in [rep.p1, rep.p2] {
            assert!(v <= e && v >= 1.0 / e * (1.0 - (-2.0f64 * 0.8).exp()), "{v}");
        }
        // oracle at one radius
        let z0 = 3.2;
        let oracle = gauss_oracle(|t| (-(t + z0)).exp() * t.sin().exp(), -z0, z0, 200);
        assert_abs_diff_eq!(rep.p1_values[3], oracle, epsilon = 1e-8);
    }
}
