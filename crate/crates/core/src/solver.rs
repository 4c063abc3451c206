//! Contraction conditions for the bounded-solution operator and Picard
//! iteration to its fixed point.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::Expression;
use crate::funcspace::GridFunction;
use crate::operator::{gamma_apply, ProblemSpec};
use crate::quadrature::{
    kernel_constant_c, kernel_q_norm, try_integrate_dyadic_tail, try_integrate_semi_infinite, QuadratureConfig,
};
use crate::verify::{residual, ResidualReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Constant Lipschitz constants `L_f`, `L_h` and kernel mass `c`.
    ConstantLipschitz,
    /// `Lᵖ` Lipschitz functions `L_f(t)`, `L_h(t)` and `‖K‖_{L^q}`.
    LpLipschitz,
}

impl Theorem {
    pub fn key(self) -> &'static str {
        match self {
            Theorem::ConstantLipschitz => "thm1_constant_lipschitz",
            Theorem::LpLipschitz => "thm2_lp_lipschitz",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub theorem: Theorem,
    pub lambda: f64,
    pub geom: f64,
    /// `c = ∫K` for the constant theorem, `‖K‖_{L^q}` for the `Lᵖ` one.
    pub kernel_constant: f64,
    pub p: Option<f64>,
    pub q: Option<f64>,
    /// `L_f` and `L_h`, or their `Lᵖ(dx)` norms.
    pub lf: f64,
    pub lh: f64,
    /// `‖L_f‖_{Lᵖ(dμ)}`, reported for the `Lᵖ` theorem.
    pub lf_mu_norm: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub factor: f64,
    pub verdict: bool,
}

impl ContractionReport {
    fn new(theorem: Theorem, ps: &ProblemSpec, kernel_constant: f64, lf: f64, lh: f64, lhs: f64, rhs: f64) -> Self {
        ContractionReport {
            theorem,
            lambda: ps.lambda(),
            geom: ps.geometry_constant(),
            kernel_constant,
            p: None,
            q: None,
            lf,
            lh,
            lf_mu_norm: None,
            lhs,
            rhs,
            factor: lhs / rhs,
            verdict: lhs < rhs,
        }
    }

    pub fn describe(&self) -> &'static str {
        if self.verdict {
            "contraction holds"
        } else {
            "condition violated; uniqueness not guaranteed"
        }
    }
}

/// `(geom/λ²)·(L_f + 2c·L_h) < 1`.
pub fn check_thm1(ps: &ProblemSpec, lf: f64, lh: f64, cfg: &QuadratureConfig) -> Result<ContractionReport> {
    if !(lf >= 0.0 && lh >= 0.0) {
        return Err(Error::Invalid(format!("Lipschitz constants must be nonnegative, got {lf}, {lh}")));
    }
    // c feeds a verdict compared at tolerances finer than abs_tol
    let c = kernel_constant_c(ps.kernel(), ps.p_delay(), &cfg.with_abs_tol(cfg.abs_tol * 1e-3))?;
    let l = ps.lambda();
    let lhs = ps.geometry_constant() / (l * l) * (lf + 2.0 * c * lh);
    Ok(ContractionReport::new(Theorem::ConstantLipschitz, ps, c, lf, lh, lhs, 1.0))
}

/// A Lipschitz function `L(t)` with an optional envelope `|L(t)| <= bound·e^{-decay|t|}`.
#[derive(Debug, Clone)]
pub struct LipschitzFunction {
    pub expr: Expression,
    pub envelope: Option<(f64, f64)>,
}

impl LipschitzFunction {
    pub fn new(expr: Expression, envelope: Option<(f64, f64)>) -> Self {
        LipschitzFunction { expr, envelope }
    }

    /// `(∫ |L|^p w dt)^{1/p}` over the real line, `w` bounded by `w_sup`.
    fn lp_norm<W>(&self, p: f64, p_delay: f64, w: W, w_sup: f64, cfg: &QuadratureConfig) -> Result<f64>
    where
        W: Fn(f64) -> Result<f64>,
    {
        if self.expr.is_zero_literal() {
            return Ok(0.0);
        }
        let compiled = self.expr.compile(&["t", "p"])?;
        let g = |t: f64| -> Result<f64> { Ok(compiled.eval(&[t, p_delay])?.abs().powf(p) * w(t)?) };
        let mut total = 0.0;
        for sign in [1.0, -1.0] {
            let half = |s: f64| g(sign * s);
            total += match self.envelope {
                Some((bound, decay)) => {
                    try_integrate_semi_infinite(half, 0.0, p * decay, bound.abs().powf(p) * w_sup, cfg)?
                }
                None => try_integrate_dyadic_tail(half, cfg)?,
            };
        }
        Ok(total.powf(1.0 / p))
    }
}

/// `‖L_f‖_p + 2‖K‖_q‖L_h‖_p < λ(qλ)^{1/q}/geom` with `q = p/(p-1)`.
pub fn check_thm2(
    ps: &ProblemSpec,
    lf: &LipschitzFunction,
    lh: &LipschitzFunction,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<ContractionReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Invalid(format!("p must exceed 1, got {p}")));
    }
    let q = p / (p - 1.0);
    let pd = ps.p_delay();
    let cfg = &cfg.with_abs_tol(cfg.abs_tol * 1e-3);
    let one = |_: f64| Ok(1.0);
    let lf_norm = lf.lp_norm(p, pd, one, 1.0, cfg)?;
    let lh_norm = lh.lp_norm(p, pd, one, 1.0, cfg)?;
    let mu = ps.mu();
    let rho_sup = mu.sampled_sup(50.0)? * 1.01;
    let lf_mu = lf.lp_norm(p, pd, |t| Ok(mu.density(t)?), rho_sup, cfg)?;
    let kq = kernel_q_norm(ps.kernel(), q, pd, cfg)?;
    let l = ps.lambda();
    let lhs = lf_norm + 2.0 * kq * lh_norm;
    let rhs = l * (q * l).powf(1.0 / q) / ps.geometry_constant();
    let mut report = ContractionReport::new(Theorem::LpLipschitz, ps, kq, lf_norm, lh_norm, lhs, rhs);
    report.p = Some(p);
    report.q = Some(q);
    report.lf_mu_norm = Some(lf_mu);
    Ok(report)
}

/// Sampling region for [`estimate_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
    /// Value bound to `p` in the expression.
    pub p: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            t: (-10.0, 10.0),
            x: (-10.0, 10.0),
            p: 0.0,
        }
    }
}

/// Largest sampled `|g(t,x₁,y₁) - g(t,x₂,y₂)| / (|x₁-x₂| + |y₁-y₂|)`.
///
/// A lower bound on the Lipschitz constant: random pairs, then small
/// coordinate steps around the best points, then a local search.
pub fn estimate_lipschitz(g: &Expression, region: SampleBox, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples < 1000 {
        return Err(Error::Invalid(format!("n_samples must be at least 1000, got {n_samples}")));
    }
    let compiled = g.compile(&["t", "x1", "x2", "p"])?;
    let eval = |t: f64, x1: f64, x2: f64| compiled.eval(&[t, x1, x2, region.p]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };

    let mut best = 0.0f64;
    let pair_ratio = |t: f64, a: (f64, f64), b: (f64, f64)| -> Result<f64> {
        let d = (a.0 - b.0).abs() + (a.1 - b.1).abs();
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok((eval(t, a.0, a.1)? - eval(t, b.0, b.1)?).abs() / d)
    };
    // slope of the steeper coordinate at a point, by central differences
    let local = |t: f64, x1: f64, x2: f64| -> Result<f64> {
        let d = 1e-5;
        let g1 = (eval(t, x1 + d, x2)? - eval(t, x1 - d, x2)?).abs() / (2.0 * d);
        let g2 = (eval(t, x1, x2 + d)? - eval(t, x1, x2 - d)?).abs() / (2.0 * d);
        Ok(g1.max(g2))
    };

    let mut seeds: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let t = draw(&mut rng, region.t);
        let a = (draw(&mut rng, region.x), draw(&mut rng, region.x));
        let b = (draw(&mut rng, region.x), draw(&mut rng, region.x));
        best = best.max(pair_ratio(t, a, b)?);
        let s = local(t, a.0, a.1)?;
        seeds.push((s, t, a.0, a.1));
    }
    seeds.sort_by(|u, v| v.0.total_cmp(&u.0));

    let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
    for &(mut score, mut t, mut x1, mut x2) in seeds.iter().take(16) {
        let mut step = 0.1 * ((region.x.1 - region.x.0).abs().max((region.t.1 - region.t.0).abs())).max(1e-3);
        while step > 1e-9 {
            let mut improved = false;
            for (dt, d1, d2) in [
                (1.0, 0.0, 0.0),
                (-1.0, 0.0, 0.0),
                (0.0, 1.0, 0.0),
                (0.0, -1.0, 0.0),
                (0.0, 0.0, 1.0),
                (0.0, 0.0, -1.0),
            ] {
                let (nt, n1, n2) = (
                    clamp(t + dt * step, region.t),
                    clamp(x1 + d1 * step, region.x),
                    clamp(x2 + d2 * step, region.x),
                );
                let s = local(nt, n1, n2)?;
                if s > score {
                    (score, t, x1, x2, improved) = (s, nt, n1, n2, true);
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        // confirm with an actual difference quotient so the result stays a lower bound
        let h = 1e-7;
        best = best
            .max(pair_ratio(t, (x1 + h, x2), (x1 - h, x2))?)
            .max(pair_ratio(t, (x1, x2 + h), (x1, x2 - h))?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Retain every iterate in the trace.
    pub keep_iterates: bool,
    /// Window for the final residual; clipped to the grid's safe interior.
    pub residual_window: (f64, f64),
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-8,
            max_iter: 200,
            keep_iterates: false,
            residual_window: (-10.0, 10.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// `d_k = sup|x_{k+1} - x_k|`.
    pub iterations: Vec<f64>,
    pub converged: bool,
    pub final_residual: Option<ResidualReport>,
    pub solution: GridFunction,
    /// `x_0, x_1, …` when requested.
    pub iterates: Vec<GridFunction>,
}

impl SolveTrace {
    /// Consecutive ratios `d_{k+1}/d_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.iterations.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Iterates `x_{k+1} = Γx_k` until `sup|x_{k+1} - x_k| < tol`.
///
/// `gate` is the contraction report authorising the run; `None` forces the
/// iteration without one. A report with a false verdict is refused.
pub fn picard_solve(
    ps: &ProblemSpec,
    x0: GridFunction,
    opts: &PicardOptions,
    cfg: &QuadratureConfig,
    gate: Option<&ContractionReport>,
) -> Result<SolveTrace> {
    if let Some(report) = gate {
        if !report.verdict {
            return Err(Error::ContractionViolated(format!(
                "{}: lhs = {} >= rhs = {}",
                report.theorem, report.lhs, report.rhs
            )));
        }
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Invalid("picard tol must be positive and max_iter at least 1".into()));
    }
    let mut iterates = Vec::new();
    let mut distances = Vec::new();
    let mut x = x0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = gamma_apply(ps, &x, cfg)?;
        let d = next.sup_distance(&x)?;
        distances.push(d);
        if opts.keep_iterates {
            iterates.push(std::mem::replace(&mut x, next));
        } else {
            x = next;
        }
        if d < opts.tol {
            converged = true;
            break;
        }
    }
    if opts.keep_iterates {
        iterates.push(x.clone());
    }
    let final_residual = if converged {
        let t = x.grid().half_width() - 5.0;
        let (lo, hi) = (opts.residual_window.0.max(-t), opts.residual_window.1.min(t));
        if lo < hi {
            Some(residual(ps, &x, (lo, hi), cfg)?)
        } else {
            None
        }
    } else {
        None
    };
    Ok(SolveTrace {
        iterations: distances,
        converged,
        final_residual,
        solution: x,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::Grid;
    use crate::operator::ProblemBuilder;
    use approx::assert_abs_diff_eq;

    const SQRT2: f64 = std::f64::consts::SQRT_2;
    const F4: &str = "(exp(-abs(t))/9)*(sin(x1)+cos(x2))";

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn geometry(kernel: &str) -> ProblemSpec {
        ProblemBuilder::new(SQRT2, 1.0).kernel(kernel, 1.0).unwrap().build().unwrap()
    }

    fn lip(src: &str, env: Option<(f64, f64)>) -> LipschitzFunction {
        LipschitzFunction::new(Expression::parse(src).unwrap(), env)
    }

    #[test]
    fn constant_lipschitz_condition() {
        let ps = geometry("exp(-s)");
        let r = check_thm1(&ps, 0.05, 0.05, &cfg()).unwrap();
        assert_abs_diff_eq!(r.lhs, (2.0 * SQRT2 + 2.0) * 0.15, epsilon = 1e-9);
        assert_abs_diff_eq!(r.lhs, 0.7242640687119285, epsilon = 1e-9);
        assert!(r.verdict);
        assert_eq!(r.rhs, 1.0);
        assert!(!check_thm1(&ps, 10.0, 0.05, &cfg()).unwrap().verdict);
        let zero = check_thm1(&ps, 0.0, 0.0, &cfg()).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert!(zero.verdict);
        assert!(check_thm1(&ps, -1.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn lp_condition_for_worked_example() {
        let ps = ProblemBuilder::new(SQRT2, 1.0)
            .kernel("exp(-s)", 1.0).unwrap()
            .rho("exp(sin(t))").unwrap()
            .build()
            .unwrap();
        let l = lip("exp(-abs(t))/9", Some((1.0 / 9.0, 1.0)));
        let r = check_thm2(&ps, &l, &l, 2.0, &cfg()).unwrap();
        assert_abs_diff_eq!(r.lhs, (SQRT2 + 1.0) / 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.rhs, 1.0 / (SQRT2 + 2.0), epsilon = 1e-6);
        assert_abs_diff_eq!(r.factor, 0.9158489652354761, epsilon = 1e-5);
        assert!(r.verdict);
        assert_eq!(r.q, Some(2.0));
        // quadrature oracle for ∫ e^{-2|t|} e^{sin t} dt / 81, then square root
        assert_abs_diff_eq!(r.lf_mu_norm.unwrap(), 0.11818632, epsilon = 1e-7);
        // no envelope: dyadic segments reach the same norms
        let bare = lip("exp(-abs(t))/9", None);
        let r2 = check_thm2(&ps, &bare, &bare, 2.0, &cfg()).unwrap();
        assert_abs_diff_eq!(r2.lhs, r.lhs, epsilon = 1e-6);
        let zero = lip("0", None);
        let z = check_thm2(&ps, &zero, &zero, 2.0, &cfg()).unwrap();
        assert_eq!(z.lhs, 0.0);
        assert!(z.verdict);
        assert!(check_thm2(&ps, &l, &l, 1.0, &cfg()).is_err());
    }

    #[test]
    fn lipschitz_estimates() {
        let f = Expression::parse(F4).unwrap();
        let at_zero = SampleBox { t: (0.0, 0.0), x: (-4.0, 4.0), p: 0.0 };
        let est = estimate_lipschitz(&f, at_zero, 2000, 3).unwrap();
        assert!(est <= 1.0 / 9.0 + 1e-9, "{est}");
        assert_abs_diff_eq!(est, 1.0 / 9.0, epsilon = 1e-6);
        let wide = estimate_lipschitz(&f, SampleBox::default(), 2000, 3).unwrap();
        assert_abs_diff_eq!(wide, 1.0 / 9.0, epsilon = 1e-6);
        let flat = Expression::parse("t^2 + 3").unwrap();
        assert_eq!(estimate_lipschitz(&flat, SampleBox::default(), 1000, 1).unwrap(), 0.0);
        let lin = Expression::parse("2*x1").unwrap();
        assert_abs_diff_eq!(estimate_lipschitz(&lin, SampleBox::default(), 1000, 1).unwrap(), 2.0, epsilon = 1e-9);
        assert!(estimate_lipschitz(&lin, SampleBox::default(), 999, 1).is_err());
        let bad = Expression::parse("sqrt(x1)").unwrap();
        assert!(estimate_lipschitz(&bad, SampleBox::default(), 1000, 1).is_err());
    }

    #[test]
    fn trivial_problem_converges_at_once() {
        let ps = geometry("0");
        let grid = Grid::new(20.0, 0.05).unwrap();
        let x0 = GridFunction::from_fn(grid, |t| 3.0 * t.sin()).unwrap();
        let trace = picard_solve(&ps, x0, &PicardOptions::default(), &cfg(), None).unwrap();
        // Γx0 = 0 for any x0, then Γ0 = 0
        assert_eq!(trace.iterations.len(), 2);
        assert!(trace.converged);
        assert_eq!(trace.solution.sup_norm(), 0.0);
        assert_eq!(trace.final_residual.unwrap().sup_residual, 0.0);
    }

    #[test]
    fn violated_gate_refuses() {
        let ps = geometry("exp(-s)");
        let bad = check_thm1(&ps, 10.0, 0.0, &cfg()).unwrap();
        let grid = Grid::new(10.0, 0.1).unwrap();
        let err = picard_solve(&ps, GridFunction::constant(grid, 0.0), &PicardOptions::default(), &cfg(), Some(&bad));
        assert!(matches!(err, Err(Error::ContractionViolated(_))));
    }

    #[test]
    fn non_convergence_is_reported() {
        let ps = ProblemBuilder::new(SQRT2, 1.0).f(F4).unwrap().build().unwrap();
        let grid = Grid::new(15.0, 0.05).unwrap();
        let opts = PicardOptions { max_iter: 2, tol: 1e-14, ..PicardOptions::default() };
        let trace = picard_solve(&ps, GridFunction::constant(grid, 0.0), &opts, &cfg(), None).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations.len(), 2);
        assert!(trace.final_residual.is_none());
    }

    #[test]
    fn geometric_decay_and_a_priori_bound() {
        let ps = ProblemBuilder::new(SQRT2, 1.0)
            .f(F4).unwrap()
            .h(F4).unwrap()
            .kernel("exp(-s)", 1.0).unwrap()
            .beta("t - p", 0.5).unwrap()
            .build()
            .unwrap();
        let l = lip("exp(-abs(t))/9", Some((1.0 / 9.0, 1.0)));
        let gate = check_thm2(&ps, &l, &l, 2.0, &cfg()).unwrap();
        let rho = gate.factor;
        let grid = Grid::new(20.0, 0.05).unwrap();
        let opts = PicardOptions { keep_iterates: true, ..PicardOptions::default() };
        let x0 = GridFunction::constant(grid, 1.0);
        let trace = picard_solve(&ps, x0, &opts, &cfg(), Some(&gate)).unwrap();
        assert!(trace.converged);
        assert!(*trace.iterations.last().unwrap() < opts.tol);
        for w in trace.iterations.windows(2) {
            assert!(w[1] <= rho * w[0] + 1e-6, "{w:?}");
        }
        let d0 = trace.iterations[0];
        for (k, xk) in trace.iterates.iter().enumerate() {
            let err = xk.sup_distance(&trace.solution).unwrap();
            assert!(err <= rho.powi(k as i32) / (1.0 - rho) * d0 + 1e-6, "k = {k}: {err}");
        }
    }
}
