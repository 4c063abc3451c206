//! Absolutely continuous measures `dμ = ρ(t) dt`, windowed ergodic means and
//! sampled probes of the measure hypotheses.
//!
//! The hypothesis probes are falsification tests on fixed window and shift
//! families. A report of [`Verdict::Supported`] only says no sample
//! contradicted the hypothesis.

use std::fmt;

use crate::expr::{CompiledExpr, EvalError, Expression};
use crate::funcspace::GridFunction;
use crate::quadrature::{try_integrate, QuadratureConfig};
use crate::{Error, Result};

/// Means below this are treated as zero by the ergodicity verdict.
pub const ERGODIC_ZERO_FLOOR: f64 = 1e-8;

/// The bounded interval excluded from the (M1) windows is `[-1, 1]`.
pub const M1_EXCLUDED_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct MeasureSpec {
    rho: Expression,
    compiled: CompiledExpr,
    description: String,
}

impl MeasureSpec {
    /// Checks positivity of the density on `[-100, 100]` at step `0.01`.
    pub fn new(rho: Expression, description: impl Into<String>) -> Result<MeasureSpec> {
        let compiled = rho.compile(&["t"])?;
        let spec = MeasureSpec {
            rho,
            compiled,
            description: description.into(),
        };
        for i in 0..=20_000 {
            let t = -100.0 + i as f64 * 0.01;
            let v = spec.density(t)?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("density must be positive and finite, rho({t}) = {v}")));
            }
        }
        Ok(spec)
    }

    pub fn lebesgue() -> MeasureSpec {
        MeasureSpec::new(Expression::constant(1.0), "Lebesgue").expect("constant density")
    }

    /// Density with `p` bound, for configs whose density mentions the delay.
    pub fn with_delay(rho: Expression, p_delay: f64, description: impl Into<String>) -> Result<MeasureSpec> {
        let bound = substitute_constant(&rho, "p", p_delay);
        MeasureSpec::new(bound, description)
    }

    pub fn density(&self, t: f64) -> std::result::Result<f64, EvalError> {
        self.compiled.eval(&[t])
    }

    pub fn rho(&self) -> &Expression {
        &self.rho
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn is_lebesgue(&self) -> bool {
        matches!(self.rho.ast(), crate::expr::Node::Num(v) if *v == 1.0)
    }

    /// Largest sampled density on `[-r, r]` at step `0.01`.
    pub fn sampled_sup(&self, r: f64) -> Result<f64> {
        let n = (2.0 * r / 0.01).ceil().max(1.0) as usize;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            best = best.max(self.density(-r + 2.0 * r * i as f64 / n as f64)?);
        }
        Ok(best)
    }
}

pub(crate) fn substitute_constant(e: &Expression, name: &str, value: f64) -> Expression {
    use crate::expr::Node;
    fn go(n: &Node, name: &str, value: f64) -> Node {
        match n {
            Node::Var(v) if v == name => Node::Num(value),
            Node::Neg(inner) => Node::Neg(Box::new(go(inner, name, value))),
            Node::Binary(op, l, r) => Node::Binary(*op, Box::new(go(l, name, value)), Box::new(go(r, name, value))),
            Node::Call(f, args) => Node::Call(*f, args.iter().map(|a| go(a, name, value)).collect()),
            other => other.clone(),
        }
    }
    Expression::from_ast(go(e.ast(), name, value))
}

/// `μ([-r, r])`.
pub fn mass(mu: &MeasureSpec, r: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Invalid(format!("radius must be nonnegative, got {r}")));
    }
    mass_between(mu, -r, r, cfg)
}

/// `μ([lo, hi])`.
pub fn mass_between(mu: &MeasureSpec, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64> {
    try_integrate(|t| Ok::<f64, Error>(mu.density(t)?), lo, hi, cfg)
}

/// The function whose ergodic means are taken.
#[derive(Debug, Clone, Copy)]
pub enum Observable<'a> {
    Grid(&'a GridFunction),
    /// Expression in `t`.
    Expr(&'a Expression),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicVerdict {
    Decaying,
    NonDecaying,
    Inconclusive,
}

impl fmt::Display for ErgodicVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErgodicVerdict::Decaying => "decaying",
            ErgodicVerdict::NonDecaying => "non-decaying",
            ErgodicVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub radii: Vec<f64>,
    /// `(1/μ[-r,r]) ∫_{-r}^{r} |φ| dμ` per radius.
    pub means: Vec<f64>,
    /// Least-squares slope of `ln(mean)` against `ln(r)`; absent when some
    /// mean is zero or fewer than two radii were used.
    pub trend_slope: Option<f64>,
    pub verdict: ErgodicVerdict,
}

pub fn ergodic_mean(
    phi: Observable<'_>,
    mu: &MeasureSpec,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<ErgodicityReport> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || !(radii[0] > 0.0) {
        return Err(Error::Invalid("radii must be nonempty, positive and strictly increasing".into()));
    }
    let compiled = match phi {
        Observable::Expr(e) => Some(e.compile(&["t"])?),
        Observable::Grid(u) => {
            let last = *radii.last().unwrap();
            if last > u.grid().half_width() * (1.0 + 1e-12) {
                return Err(Error::Invalid(format!(
                    "radius {last} exceeds the grid domain [-{0}, {0}]",
                    u.grid().half_width()
                )));
            }
            None
        }
    };
    let value = |t: f64| -> Result<f64> {
        Ok(match (&phi, &compiled) {
            (Observable::Grid(u), _) => u.eval_at(t),
            (Observable::Expr(_), Some(c)) => c.eval(&[t])?,
            _ => unreachable!(),
        })
    };
    let mut means = Vec::with_capacity(radii.len());
    for &r in radii {
        let local = match phi {
            Observable::Grid(u) => aligned_panels(cfg, 2.0 * r, u.grid().step()),
            Observable::Expr(_) => *cfg,
        };
        let weighted = try_integrate(|t| Ok::<f64, Error>(value(t)?.abs() * mu.density(t)?), -r, r, &local)?;
        let m = mass(mu, r, cfg)?;
        means.push((weighted / m).max(0.0));
    }
    let trend_slope = log_log_slope(radii, &means);
    let verdict = classify_means(&means, trend_slope);
    Ok(ErgodicityReport {
        radii: radii.to_vec(),
        means,
        trend_slope,
        verdict,
    })
}

/// First level with panel edges on grid nodes when `width` is a multiple of `step`.
fn aligned_panels(cfg: &QuadratureConfig, width: f64, step: f64) -> QuadratureConfig {
    let cells = width / step;
    if (cells - cells.round()).abs() < 1e-9 * cells.max(1.0) && cells.round() >= 4.0 {
        cfg.with_initial_panels(cells.round() as usize)
    } else {
        *cfg
    }
}

fn log_log_slope(radii: &[f64], means: &[f64]) -> Option<f64> {
    if radii.len() < 2 || means.iter().any(|m| !(*m > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// "decaying" iff the means are eventually non-increasing (last half of the
/// sweep) and the last mean is below a tenth of the first. All-zero means
/// (below [`ERGODIC_ZERO_FLOOR`]) count as decaying.
pub fn classify_means(means: &[f64], trend_slope: Option<f64>) -> ErgodicVerdict {
    let clipped: Vec<f64> = means
        .iter()
        .map(|&m| if m < ERGODIC_ZERO_FLOOR { 0.0 } else { m })
        .collect();
    if clipped.iter().all(|&m| m == 0.0) {
        return ErgodicVerdict::Decaying;
    }
    if clipped.len() < 2 {
        return ErgodicVerdict::Inconclusive;
    }
    let first = clipped[0];
    let last = *clipped.last().unwrap();
    let tail_len = (clipped.len() + 1) / 2;
    let tail = &clipped[clipped.len() - tail_len.max(2)..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let power_law = trend_slope.is_some_and(|s| s <= -0.5);
    if monotone && (last < 0.1 * first || power_law) {
        ErgodicVerdict::Decaying
    } else if last >= 0.5 * first {
        ErgodicVerdict::NonDecaying
    } else {
        ErgodicVerdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Supported,
    ViolatedOnSample,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Supported => "supported",
            Verdict::ViolatedOnSample => "violated on sample",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// Left ends `k` of the windows `[k, k+1]`; each is probed together with
    /// its mirror `[-k-1, -k]`.
    pub window_starts: Vec<f64>,
    pub shifts: Vec<f64>,
    /// Largest `μ(A+τ)/μ(A)` over windows and shifts.
    pub m1_ratio: f64,
    pub m1_verdict: Verdict,
    /// `(m, n)` with `μ(-A) <= m + n μ(A)` on every window.
    pub m2_pair: Option<(f64, f64)>,
    pub m2_verdict: Verdict,
    /// `Some(c)` when the deformation is the translation `t - c`.
    pub h0_translation: Option<f64>,
    /// Largest sampled density ratio `dμ_β/dμ`.
    pub h0_lambda_bound: f64,
    pub h0_radii: Vec<f64>,
    /// `μ[-T(r),T(r)]·S(T(r))/μ[-r,r]` at the largest three radii.
    pub h0_limsup_estimate: Vec<f64>,
    pub h0_verdict: Verdict,
}

/// Strictly increasing deformation `β(t)` with the delay bound.
#[derive(Debug, Clone)]
pub struct Deformation {
    expr: Expression,
    compiled: CompiledExpr,
    p_delay: f64,
}

impl Deformation {
    /// Checks strict monotonicity on `[-60, 60]` at step `0.01`.
    pub fn new(expr: Expression, p_delay: f64) -> Result<Deformation> {
        let compiled = expr.compile(&["t", "p"])?;
        let d = Deformation {
            expr,
            compiled,
            p_delay,
        };
        let mut prev = d.apply(-60.0)?;
        for i in 1..=12_000 {
            let t = -60.0 + i as f64 * 0.01;
            let v = d.apply(t)?;
            if !(v > prev) {
                return Err(Error::Invalid(format!(
                    "beta must be strictly increasing: beta({}) = {prev} >= beta({t}) = {v}",
                    t - 0.01
                )));
            }
            prev = v;
        }
        Ok(d)
    }

    pub fn apply(&self, t: f64) -> std::result::Result<f64, EvalError> {
        self.compiled.eval(&[t, self.p_delay])
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }

    pub fn p_delay(&self) -> f64 {
        self.p_delay
    }

    /// `Some(c)` if `β(t) = t - c` on a spread of sample points.
    pub fn translation(&self) -> Option<f64> {
        let c0 = -self.apply(0.0).ok()?;
        for &t in &[-37.5, -10.0, -1.25, 0.5, 3.0, 17.0, 41.0] {
            let c = t - self.apply(t).ok()?;
            if (c - c0).abs() > 1e-12 * (1.0 + c0.abs() + t.abs()) {
                return None;
            }
        }
        Some(c0)
    }

    pub fn is_identity(&self) -> bool {
        self.translation() == Some(0.0)
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        let (mut lo, mut hi) = (y - 1.0, y + 1.0);
        let mut grow = 1.0;
        while self.apply(lo)? > y {
            grow *= 2.0;
            lo = y - grow;
            if grow > 1e6 {
                return Err(Error::Invalid(format!("cannot invert beta at {y}")));
            }
        }
        grow = 1.0;
        while self.apply(hi)? < y {
            grow *= 2.0;
            hi = y + grow;
            if grow > 1e6 {
                return Err(Error::Invalid(format!("cannot invert beta at {y}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.apply(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + y.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Density of the push-forward `μ_β = μ∘β⁻¹` relative to `μ`, at `t`.
    fn density_ratio(&self, mu: &MeasureSpec, t: f64) -> Result<f64> {
        let rho_t = mu.density(t)?;
        if let Some(c) = self.translation() {
            return Ok(mu.density(t + c)? / rho_t);
        }
        let s = self.inverse(t)?;
        let d = 1e-5 * (1.0 + s.abs());
        let slope = (self.apply(s + d)? - self.apply(s - d)?) / (2.0 * d);
        Ok(mu.density(s)? / (slope * rho_t))
    }
}

const M1_SHIFTS: [f64; 6] = [1.0, -1.0, std::f64::consts::PI, -std::f64::consts::PI, 10.0, -10.0];

pub fn check_hypotheses(
    mu: &MeasureSpec,
    beta: &Deformation,
    radii: &[f64],
    cfg: &QuadratureConfig,
) -> Result<HypothesisReport> {
    let window_starts: Vec<f64> = (2..=50).map(|k| k as f64).collect();
    let mut windows: Vec<(f64, f64)> = Vec::new();
    for &k in &window_starts {
        windows.push((k, k + 1.0));
        windows.push((-k - 1.0, -k));
    }
    debug_assert!(windows
        .iter()
        .all(|&(a, b)| b < -M1_EXCLUDED_HALF_WIDTH || a > M1_EXCLUDED_HALF_WIDTH));

    // (M1): per-window worst shift ratio
    let mut m1_by_window = Vec::with_capacity(windows.len());
    for &(a, b) in &windows {
        let base = mass_between(mu, a, b, cfg)?;
        let mut worst: f64 = 0.0;
        for &tau in &M1_SHIFTS {
            worst = worst.max(mass_between(mu, a + tau, b + tau, cfg)? / base);
        }
        m1_by_window.push(worst);
    }
    let m1_ratio = m1_by_window.iter().cloned().fold(0.0, f64::max);
    let m1_verdict = bounded_verdict(&m1_by_window);

    // (M2): least n with m = 0
    let mut m2_by_window = Vec::with_capacity(windows.len());
    let mut deficit: f64 = 0.0;
    let mut zero_mass = false;
    for &(a, b) in &windows {
        let plus = mass_between(mu, a, b, cfg)?;
        let minus = mass_between(mu, -b, -a, cfg)?;
        if plus > 0.0 {
            m2_by_window.push(minus / plus);
        } else {
            zero_mass = true;
        }
        deficit = deficit.max(minus - plus);
    }
    let (m2_pair, m2_verdict) = if !zero_mass {
        let n = m2_by_window.iter().cloned().fold(0.0, f64::max);
        (Some((0.0, n)), bounded_verdict(&m2_by_window))
    } else if deficit.is_finite() {
        (Some((deficit, 1.0)), Verdict::Supported)
    } else {
        (None, Verdict::ViolatedOnSample)
    };

    // (h0)
    let h0_translation = beta.translation();
    let (span, step): (f64, f64) = if h0_translation.is_some() { (50.0, 0.005) } else { (50.0, 0.05) };
    let n = (2.0 * span / step).round() as usize;
    let mut h0_lambda_bound: f64 = 0.0;
    for i in 0..=n {
        h0_lambda_bound = h0_lambda_bound.max(beta.density_ratio(mu, -span + i as f64 * step)?);
    }
    let mut sorted: Vec<f64> = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h0_radii: Vec<f64> = sorted.iter().rev().take(3).rev().cloned().collect();
    let mut h0_limsup_estimate = Vec::with_capacity(h0_radii.len());
    for &r in &h0_radii {
        let t_r = beta.apply(r)?.abs() + beta.apply(-r)?.abs();
        let m = (2.0 * t_r / 0.01).ceil().max(1.0) as usize;
        let mut s: f64 = 0.0;
        for i in 0..=m {
            s = s.max(beta.density_ratio(mu, -t_r + 2.0 * t_r * i as f64 / m as f64)?);
        }
        h0_limsup_estimate.push(mass(mu, t_r, cfg)? * s / mass(mu, r, cfg)?);
    }
    let h0_verdict = if h0_limsup_estimate.iter().all(|v| v.is_finite())
        && h0_lambda_bound.is_finite()
        && h0_limsup_estimate
            .last()
            .map_or(true, |&last| last <= 2.0 * h0_limsup_estimate.iter().cloned().fold(f64::INFINITY, f64::min))
    {
        Verdict::Supported
    } else {
        Verdict::ViolatedOnSample
    };

    Ok(HypothesisReport {
        window_starts,
        shifts: M1_SHIFTS.to_vec(),
        m1_ratio,
        m1_verdict,
        m2_pair,
        m2_verdict,
        h0_translation,
        h0_lambda_bound,
        h0_radii,
        h0_limsup_estimate,
        h0_verdict,
    })
}

/// A ratio family is supported when finite and the far windows do not
/// exceed twice the near-window maximum (no growth trend). `values` is
/// ordered as interleaved `(A_k, mirror)` pairs with increasing `k`.
fn bounded_verdict(values: &[f64]) -> Verdict {
    if values.iter().any(|v| !v.is_finite()) {
        return Verdict::ViolatedOnSample;
    }
    let half = values.len() / 2;
    let near = values[..half].iter().cloned().fold(0.0, f64::max);
    let far = values[half..].iter().cloned().fold(0.0, f64::max);
    if far <= 2.0 * near {
        Verdict::Supported
    } else {
        Verdict::ViolatedOnSample
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{E, PI};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn exp_sin() -> MeasureSpec {
        MeasureSpec::new(Expression::parse("exp(sin(t))").unwrap(), "exp(sin t)").unwrap()
    }

    fn beta(src: &str, p: f64) -> Deformation {
        Deformation::new(Expression::parse(src).unwrap(), p).unwrap()
    }

    #[test]
    fn masses() {
        assert_abs_diff_eq!(mass(&MeasureSpec::lebesgue(), 5.0, &cfg()).unwrap(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mass(&exp_sin(), PI, &cfg()).unwrap(), 7.954926521012845, epsilon = 1e-8);
        assert_eq!(mass(&exp_sin(), 0.0, &cfg()).unwrap(), 0.0);
        assert!(mass(&exp_sin(), -1.0, &cfg()).is_err());
    }

    #[test]
    fn mass_is_strictly_increasing_and_additive() {
        let mu = exp_sin();
        let c = cfg();
        let radii = [0.5, 1.0, 2.5, 7.0, 13.0];
        let masses: Vec<f64> = radii.iter().map(|&r| mass(&mu, r, &c).unwrap()).collect();
        assert!(masses.windows(2).all(|w| w[1] > w[0]));
        for i in 0..radii.len() {
            for j in i + 1..radii.len() {
                let (r1, r2) = (radii[i], radii[j]);
                let pieces = mass_between(&mu, r1, r2, &c).unwrap() + mass_between(&mu, -r2, -r1, &c).unwrap();
                assert!((masses[j] - masses[i] - pieces).abs() <= 2.0 * c.abs_tol);
            }
        }
    }

    #[test]
    fn density_must_be_positive() {
        assert!(MeasureSpec::new(Expression::parse("sin(t)").unwrap(), "bad").is_err());
        assert!(MeasureSpec::new(Expression::parse("1 + t").unwrap(), "bad").is_err());
    }

    #[test]
    fn ergodic_mean_closed_forms() {
        let phi = Expression::parse("exp(-abs(t))").unwrap();
        let rep = ergodic_mean(Observable::Expr(&phi), &MeasureSpec::lebesgue(), &[10.0], &cfg()).unwrap();
        assert_abs_diff_eq!(rep.means[0], (1.0 - (-10f64).exp()) / 10.0, epsilon = 1e-8);

        let zero = Expression::parse("0").unwrap();
        let rep = ergodic_mean(Observable::Expr(&zero), &exp_sin(), &[1.0, 3.0], &cfg()).unwrap();
        assert_eq!(rep.means, vec![0.0, 0.0]);
        assert_eq!(rep.verdict, ErgodicVerdict::Decaying);
    }

    #[test]
    fn decaying_sweeps() {
        let phi = Expression::parse("exp(-abs(t))").unwrap();
        for mu in [MeasureSpec::lebesgue(), exp_sin()] {
            let rep = ergodic_mean(Observable::Expr(&phi), &mu, &[5.0, 10.0, 20.0, 40.0], &cfg()).unwrap();
            assert_eq!(rep.verdict, ErgodicVerdict::Decaying, "{rep:?}");
            let slope = rep.trend_slope.unwrap();
            assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
        }
        let periodic = Expression::parse("sin(t)").unwrap();
        let rep = ergodic_mean(Observable::Expr(&periodic), &exp_sin(), &[5.0, 10.0, 20.0, 40.0], &cfg()).unwrap();
        assert_eq!(rep.verdict, ErgodicVerdict::NonDecaying);
    }

    #[test]
    fn constant_mean_is_constant() {
        let c = Expression::parse("2.5").unwrap();
        for mu in [MeasureSpec::lebesgue(), exp_sin()] {
            let rep = ergodic_mean(Observable::Expr(&c), &mu, &[0.7, 3.0, 11.0], &cfg()).unwrap();
            for m in rep.means {
                assert_abs_diff_eq!(m, 2.5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn grid_observable() {
        use crate::funcspace::{Grid, GridFunction};
        let g = Grid::new(20.0, 0.02).unwrap();
        let u = GridFunction::from_fn(g, |t| (-t.abs()).exp()).unwrap();
        let rep = ergodic_mean(Observable::Grid(&u), &MeasureSpec::lebesgue(), &[10.0], &cfg()).unwrap();
        // the linear interpolant overestimates a convex function by O(h^2)
        assert_abs_diff_eq!(rep.means[0], (1.0 - (-10f64).exp()) / 10.0, epsilon = 1e-4);
        assert!(ergodic_mean(Observable::Grid(&u), &MeasureSpec::lebesgue(), &[25.0], &cfg()).is_err());
    }

    #[test]
    fn density_bounds_sandwich_the_mean() {
        // e^{-1} <= rho <= e, so weighted means stay within e^2 of Lebesgue ones
        let c = cfg();
        for src in ["exp(-abs(t))", "abs(sin(t))*exp(-t^2/50)", "1/(1+t^2)"] {
            let phi = Expression::parse(src).unwrap();
            let radii = [1.0, 4.0, 9.0, 16.0];
            let a = ergodic_mean(Observable::Expr(&phi), &exp_sin(), &radii, &c).unwrap();
            let b = ergodic_mean(Observable::Expr(&phi), &MeasureSpec::lebesgue(), &radii, &c).unwrap();
            for (x, y) in a.means.iter().zip(&b.means) {
                assert!(*x <= E * E * y && *y <= E * E * x, "{src}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify_means(&[1.0, 0.5, 0.2, 0.05], None), ErgodicVerdict::Decaying);
        assert_eq!(classify_means(&[1.0, 1.0, 1.0], None), ErgodicVerdict::NonDecaying);
        assert_eq!(classify_means(&[1.0, 0.4, 0.3], None), ErgodicVerdict::Inconclusive);
        assert_eq!(classify_means(&[1.0, 0.4, 0.3], Some(-0.9)), ErgodicVerdict::Decaying);
        assert_eq!(classify_means(&[1.0, 0.4, 0.45], Some(-0.9)), ErgodicVerdict::Inconclusive);
        assert_eq!(classify_means(&[1e-12, 3e-12], None), ErgodicVerdict::Decaying);
        assert_eq!(classify_means(&[1.0], None), ErgodicVerdict::Inconclusive);
    }

    #[test]
    fn m2_on_exp_sin_density() {
        let rep = check_hypotheses(&exp_sin(), &beta("t - p", 0.5), &[5.0, 10.0, 20.0, 40.0], &cfg()).unwrap();
        let (m, n) = rep.m2_pair.unwrap();
        assert!(m <= 1.0);
        assert!(n <= E * E + 1e-6, "n = {n}");
        assert_eq!(rep.m2_verdict, Verdict::Supported);
        assert!(rep.m1_ratio <= E * E);
        assert_eq!(rep.m1_verdict, Verdict::Supported);
        assert_eq!(rep.h0_translation, Some(0.5));
        assert_eq!(rep.h0_verdict, Verdict::Supported);
    }

    #[test]
    fn h0_bound_for_lebesgue_translation() {
        let rep = check_hypotheses(&MeasureSpec::lebesgue(), &beta("t - p", 0.5), &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert_eq!(rep.h0_lambda_bound, 1.0);
        for v in &rep.h0_limsup_estimate {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-8);
        }
        let ident = check_hypotheses(&exp_sin(), &beta("t", 0.0), &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert_eq!(ident.h0_lambda_bound, 1.0);
    }

    #[test]
    fn h0_bound_for_shifted_exp_sin_matches_dense_oracle() {
        // oracle: direct maximisation of rho(t+0.5)/rho(t) on a finer grid
        let oracle = (0..=400_000)
            .map(|i| -50.0 + i as f64 * 0.00025)
            .map(|t: f64| ((t + 0.5).sin() - t.sin()).exp())
            .fold(0.0, f64::max);
        assert!(oracle <= 0.5f64.exp());
        let rep = check_hypotheses(&exp_sin(), &beta("t - p", 0.5), &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert!(rep.h0_lambda_bound <= 0.5f64.exp() * (1.0 + 1e-12));
        assert_abs_diff_eq!(rep.h0_lambda_bound, oracle, epsilon = 1e-4);
    }

    #[test]
    fn h0_numeric_path_for_nonlinear_beta() {
        // beta(t) = 2t: pushforward of Lebesgue has density 1/2
        let rep = check_hypotheses(&MeasureSpec::lebesgue(), &beta("2*t", 0.0), &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert_eq!(rep.h0_translation, None);
        assert_abs_diff_eq!(rep.h0_lambda_bound, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn beta_must_increase() {
        assert!(Deformation::new(Expression::parse("-t").unwrap(), 0.0).is_err());
        assert!(Deformation::new(Expression::parse("t^2").unwrap(), 0.0).is_err());
        assert!(beta("t - p", 0.5).translation() == Some(0.5));
        assert!(beta("t", 0.0).is_identity());
        assert!(beta("t + 0.1*sin(t)", 0.0).translation().is_none());
    }
}
