//! Independent checks on computed solutions: the equation residual, the
//! manufactured-solution harness and pseudo almost automorphy diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::expr::{Expression, Func, Node};
use crate::funcspace::{fmt_full, Grid, GridFunction};
use crate::measure::{ergodic_mean, ErgodicVerdict, ErgodicityReport, MeasureSpec, Observable};
use crate::operator::{kink_nodes, ProblemSpec, RhsAssembler};
use crate::quadrature::QuadratureConfig;
use crate::solver::{check_thm1, estimate_lipschitz, ContractionReport, SampleBox};
use crate::{Error, Result};

/// Distance kept between a residual window and the edge of the grid.
pub const EDGE_BUFFER: f64 = 5.0;

pub const PAA_DISCLAIMER: &str =
    "numerical evidence only: a finite trigonometric fit and finite-radius ergodic means cannot establish almost automorphy";

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub window: (f64, f64),
    pub sup_residual: f64,
    /// Trapezoidal `L²` norm over the window.
    pub l2_residual: f64,
    pub per_point: Vec<(f64, f64)>,
}

impl ResidualReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,residual")?;
        for (t, r) in &self.per_point {
            writeln!(out, "{},{}", fmt_full(*t), fmt_full(*r))?;
        }
        Ok(())
    }
}

fn fourth_difference(s: &[f64], start: usize) -> f64 {
    (s[start] - 4.0 * s[start + 1] + 6.0 * s[start + 2] - 4.0 * s[start + 3] + s[start + 4]).abs()
}

/// Fourth-order derivative at node `i`: the central five-point stencil, or a
/// one-sided five-point stencil when the central one straddles a kink
/// (essentially non-oscillatory selection by fourth differences). A jump of
/// `u''` exactly in the middle of a window leaves its fourth difference at
/// zero, so each stencil is judged by the shifted windows overlapping it.
fn derivative(s: &[f64], i: usize, h: f64) -> f64 {
    let central = (-s[i + 2] + 8.0 * s[i + 1] - 8.0 * s[i - 1] + s[i - 2]) / (12.0 * h);
    if i < 5 || i + 5 >= s.len() {
        return central;
    }
    let c = fourth_difference(s, i - 3).max(fourth_difference(s, i - 2)).max(fourth_difference(s, i - 1));
    let l = fourth_difference(s, i - 5).max(fourth_difference(s, i - 4));
    let r = fourth_difference(s, i).max(fourth_difference(s, i + 1));
    let scale = s[i - 5..=i + 5].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if c <= 4.0 * l.min(r) + 1e-13 * scale {
        return central;
    }
    if r <= l {
        (-25.0 * s[i] + 48.0 * s[i + 1] - 36.0 * s[i + 2] + 16.0 * s[i + 3] - 3.0 * s[i + 4]) / (12.0 * h)
    } else {
        (25.0 * s[i] - 48.0 * s[i - 1] + 36.0 * s[i - 2] - 16.0 * s[i - 3] + 3.0 * s[i - 4]) / (12.0 * h)
    }
}

/// Nodes beyond the residual window whose right-hand side is sampled for kink detection.
const KINK_MARGIN: usize = 6;

/// As [`derivative`], but a central stencil never straddles a known kink:
/// a kink at `i-1` or `i` takes the right-sided stencil, one at `i+1` the
/// left-sided one.
fn derivative_near(s: &[f64], i: usize, h: f64, kinks: &[usize]) -> f64 {
    let right = kinks.iter().any(|&k| k + 1 == i || k == i) && i + 4 < s.len();
    let left = kinks.contains(&(i + 1)) && i >= 4;
    if right {
        (-25.0 * s[i] + 48.0 * s[i + 1] - 36.0 * s[i + 2] + 16.0 * s[i + 3] - 3.0 * s[i + 4]) / (12.0 * h)
    } else if left {
        (25.0 * s[i] - 48.0 * s[i - 1] + 36.0 * s[i - 2] - 16.0 * s[i - 3] + 3.0 * s[i - 4]) / (12.0 * h)
    } else {
        derivative(s, i, h)
    }
}

/// Equation residual of `u`: `D_h u - a u - b u(-t) - F(t, u(β(t)), u(β(-t)))`.
pub fn residual(ps: &ProblemSpec, u: &GridFunction, window: (f64, f64), cfg: &QuadratureConfig) -> Result<ResidualReport> {
    defect(ps, u, u, window, cfg)
}

/// As [`residual`], with the right-hand side evaluated at `source` instead
/// of `u`. For `u = Γ(source)` this measures how well `u` solves the linear
/// problem driven by `source`.
pub fn defect(
    ps: &ProblemSpec,
    u: &GridFunction,
    source: &GridFunction,
    window: (f64, f64),
    cfg: &QuadratureConfig,
) -> Result<ResidualReport> {
    let grid = *u.grid();
    if grid != *source.grid() {
        return Err(Error::Invalid("defect: u and source live on different grids".into()));
    }
    let (lo, hi) = window;
    let safe = grid.half_width() - EDGE_BUFFER;
    if !(lo < hi) || lo < -safe - 1e-12 || hi > safe + 1e-12 {
        return Err(Error::Invalid(format!(
            "residual window [{lo}, {hi}] must lie inside [{}, {}]",
            -safe, safe
        )));
    }
    let h = grid.step();
    let first = ((lo + grid.half_width()) / h - 1e-9).ceil() as usize;
    let last = ((hi + grid.half_width()) / h + 1e-9).floor() as usize;
    let assembler = RhsAssembler::new(ps, source, cfg)?;
    let s = u.samples();
    let (a, b) = (ps.a(), ps.b());
    // u'' jumps where F has a kink, u''' at the mirror images
    let (lo_i, hi_i) = (first - KINK_MARGIN, last + KINK_MARGIN);
    let rhs = (lo_i..=hi_i)
        .into_par_iter()
        .map(|i| Ok(assembler.at(grid.point(i))?.total))
        .collect::<Result<Vec<f64>>>()?;
    let mut kinks: Vec<usize> = kink_nodes(&rhs).into_iter().map(|k| k + lo_i).collect();
    kinks.extend(kinks.clone().into_iter().map(|k| grid.mirror(k)));
    let per_point = (first..=last)
        .into_par_iter()
        .map(|i| {
            let t = grid.point(i);
            let du = derivative_near(s, i, h, &kinks);
            Ok((t, du - a * s[i] - b * s[grid.mirror(i)] - rhs[i - lo_i]))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let sup_residual = per_point.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let n = per_point.len();
    let sq: f64 = per_point
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 || k + 1 == n { 0.5 } else { 1.0 } * p.1 * p.1)
        .sum();
    Ok(ResidualReport {
        window: (grid.point(first), grid.point(last)),
        sup_residual,
        l2_residual: (sq * h).sqrt(),
        per_point,
    })
}

/// A problem built so that a chosen function solves it exactly.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub problem: ProblemSpec,
    /// The target sampled on the grid.
    pub exact: GridFunction,
    pub gate: ContractionReport,
}

fn scaled_sin_x1(eps: f64) -> Expression {
    if eps == 0.0 {
        return Expression::constant(0.0);
    }
    Expression::from_ast(Node::Binary(
        crate::expr::BinOp::Mul,
        Box::new(Node::Num(eps)),
        Box::new(Node::Call(Func::Sin, vec![Node::Var("x1".into())])),
    ))
}

/// Replaces the template's `f` by
/// `S(t) + ε·sin(x₁)` with `S(t) = u*' - a u* - b u*(-t) - kernel terms at u* - ε sin u*(β(t))`,
/// tabulated on `grid`, so that `u*` solves the new problem; `h`, `K`, `β`
/// and `μ` are kept. The derivative uses sixth-order central differences.
pub fn manufacture(
    u_star: &Expression,
    template: &ProblemSpec,
    grid: Grid,
    eps: f64,
    cfg: &QuadratureConfig,
) -> Result<Manufactured> {
    if !(eps >= 0.0) {
        return Err(Error::Invalid(format!("eps must be nonnegative, got {eps}")));
    }
    let target = u_star.compile(&["t"])?;
    let ev = |t: f64| target.eval(&[t]);
    let exact = GridFunction::try_from_fn(grid, |t| Ok::<f64, Error>(ev(t)?))?;

    let unforced = template.with_forcing(Expression::constant(0.0), None)?;
    let assembler = RhsAssembler::new(&unforced, &exact, cfg)?;
    let d = 1e-3;
    let (a, b) = (template.a(), template.b());
    let offset = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let t = grid.point(i);
            let du = (-ev(t - 3.0 * d)? + 9.0 * ev(t - 2.0 * d)? - 45.0 * ev(t - d)? + 45.0 * ev(t + d)?
                - 9.0 * ev(t + 2.0 * d)?
                + ev(t + 3.0 * d)?)
                / (60.0 * d);
            let kernel = assembler.at(t)?;
            let x1 = exact.eval_cubic(template.beta().apply(t)?);
            Ok(du - a * ev(t)? - b * ev(-t)? - kernel.total - eps * x1.sin())
        })
        .collect::<Result<Vec<f64>>>()?;
    let offset = GridFunction::new(grid, offset)?;
    let problem = template.with_forcing(scaled_sin_x1(eps), Some(offset))?;

    let lh = if template.h().is_zero() || template.kernel().is_zero() {
        0.0
    } else {
        let x = exact.sup_norm() + 1.0;
        let region = SampleBox {
            t: (-grid.half_width(), grid.half_width()),
            x: (-x, x),
            p: template.p_delay(),
        };
        estimate_lipschitz(template.h().expression(), region, 2000, 11)?
    };
    let gate = check_thm1(&problem, eps, lh, cfg)?;
    if !gate.verdict {
        return Err(Error::ContractionViolated(format!(
            "manufactured problem: lhs = {} with eps = {eps}, L_h = {lh}",
            gate.lhs
        )));
    }
    Ok(Manufactured { problem, exact, gate })
}

/// Outcome of [`paa_diagnostics`].
#[derive(Debug, Clone, PartialEq)]
pub struct PaaReport {
    /// Dominant angular frequencies used in the fit.
    pub frequencies: Vec<f64>,
    /// Coefficients of `1, sin ω₁t, cos ω₁t, …`.
    pub coefficients: Vec<f64>,
    /// Sup norm of `u` minus the fit, over the fitting region.
    pub fit_residual: f64,
    pub remainder: GridFunction,
    pub ergodic: ErgodicityReport,
    pub note: &'static str,
}

const MAX_PEAKS: usize = 8;
const MAX_FREQUENCY: f64 = 12.0;
/// Spectral peaks with amplitude below this fraction of `sup|u|` are ignored.
const AMPLITUDE_FLOOR: f64 = 1e-6;
const TRUSTED_FRACTION: f64 = 0.7;
/// Remainder means below this fraction of `sup|u|` are solver noise, not an ergodic part.
const REMAINDER_NOISE: f64 = 1e-6;

fn periodogram(ts: &[f64], us: &[f64], w: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (t, u) in ts.iter().zip(us) {
        let (sn, cs) = (w * t).sin_cos();
        c += u * cs;
        s += u * sn;
    }
    c * c + s * s
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

struct Fit {
    coefficients: Vec<f64>,
    misfit: f64,
    max_error: f64,
}

fn basis_row(frequencies: &[f64], t: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + 2 * frequencies.len());
    row.push(1.0);
    for w in frequencies {
        let (s, c) = (w * t).sin_cos();
        row.push(s);
        row.push(c);
    }
    row
}

fn fit(ts: &[f64], us: &[f64], frequencies: &[f64]) -> Result<Fit> {
    let cols = 1 + 2 * frequencies.len();
    let mut design = DMatrix::zeros(ts.len(), cols);
    for (r, &t) in ts.iter().enumerate() {
        for (c, v) in basis_row(frequencies, t).into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateFit(format!(
            "dictionary of {} frequencies is rank deficient (singular values {smin:e} / {smax:e})",
            frequencies.len()
        )));
    }
    let coefficients = svd
        .solve(&DVector::from_column_slice(us), 1e-12 * smax)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let fitted = &design * &coefficients;
    let (mut misfit, mut max_error) = (0.0, 0.0f64);
    for (f, v) in fitted.iter().zip(us) {
        misfit += (f - v) * (f - v);
        max_error = max_error.max((f - v).abs());
    }
    Ok(Fit {
        coefficients: coefficients.iter().cloned().collect(),
        misfit,
        max_error,
    })
}

/// Splits `u` into a trigonometric fit and a remainder and tests the
/// remainder's ergodic means.
///
/// The fit uses the dictionary `{1, sin ω_j t, cos ω_j t}` with the
/// dominant periodogram peaks, and is computed on `T/4 <= |t| <= 0.7 T`:
/// far enough out for an ergodic component to have decayed, and clear of
/// the boundary layer a truncated solve leaves near `±T`. Radii beyond
/// `0.7 T` are dropped for the same reason.
pub fn paa_diagnostics(u: &GridFunction, mu: &MeasureSpec, radii: &[f64], cfg: &QuadratureConfig) -> Result<PaaReport> {
    let grid = *u.grid();
    let (inner, trusted) = (grid.half_width() / 4.0, TRUSTED_FRACTION * grid.half_width());
    let radii: Vec<f64> = radii.iter().copied().filter(|&r| r <= trusted).collect();
    if radii.len() < 2 {
        return Err(Error::Invalid(format!("need at least two radii within {trusted} for this grid")));
    }
    let (ts, us): (Vec<f64>, Vec<f64>) = grid
        .points()
        .zip(u.samples())
        .filter(|(t, _)| (inner..=trusted).contains(&t.abs()))
        .map(|(t, v)| (t, *v))
        .unzip();
    if ts.len() < 4 {
        return Err(Error::DegenerateFit("grid too small for a fit".into()));
    }
    let mean = us.iter().sum::<f64>() / us.len() as f64;
    let centred: Vec<f64> = us.iter().map(|v| v - mean).collect();
    let scale = u.sup_norm();

    let span = grid.half_width();
    let resolution = std::f64::consts::PI / span;
    let d_omega = resolution / 4.0;
    let n_freq = (MAX_FREQUENCY.min(std::f64::consts::PI / grid.step()) / d_omega) as usize;
    // the fit region is two slabs, whose spectral window has strong
    // fringes; extracting one tone at a time removes a tone's fringes
    // together with the tone
    let floor = (AMPLITUDE_FLOOR * scale * ts.len() as f64 / 2.0).powi(2);
    let mut frequencies: Vec<f64> = Vec::new();
    let mut rest = centred;
    while frequencies.len() < MAX_PEAKS {
        let power: Vec<f64> = (1..=n_freq)
            .into_par_iter()
            .map(|k| periodogram(&ts, &rest, k as f64 * d_omega))
            .collect();
        let Some((k, &peak)) = power.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)) else {
            break;
        };
        // amplitude of a sinusoid with periodogram value P over n samples is about 2√P/n
        if peak <= floor {
            break;
        }
        let centre = (k + 1) as f64 * d_omega;
        let w = golden_max(|w| periodogram(&ts, &rest, w), centre - d_omega, centre + d_omega);
        if frequencies.iter().any(|f| (f - w).abs() < resolution / 8.0) {
            break;
        }
        frequencies.push(w);
        let j = frequencies.len() - 1;
        let mut trial = frequencies.clone();
        frequencies[j] = golden_max(
            |w| {
                trial[j] = w;
                fit(&ts, &us, &trial).map(|f| -f.misfit).unwrap_or(f64::NEG_INFINITY)
            },
            w - resolution / 2.0,
            w + resolution / 2.0,
        );
        let current = fit(&ts, &us, &frequencies)?;
        rest = ts
            .iter()
            .zip(&us)
            .map(|(&t, &v)| v - basis_row(&frequencies, t).iter().zip(&current.coefficients).map(|(b, c)| b * c).sum::<f64>())
            .collect();
    }

    // periodogram peaks are biased by leakage; refine each frequency
    // against the least-squares misfit of the whole dictionary
    for _ in 0..2 {
        for j in 0..frequencies.len() {
            let centre = frequencies[j];
            let mut trial = frequencies.clone();
            let best = golden_max(
                |w| {
                    trial[j] = w;
                    fit(&ts, &us, &trial).map(|f| -f.misfit).unwrap_or(f64::NEG_INFINITY)
                },
                centre - resolution / 2.0,
                centre + resolution / 2.0,
            );
            frequencies[j] = best;
        }
    }
    let Fit { coefficients, misfit: _, max_error: fit_residual } = fit(&ts, &us, &frequencies)?;
    let remainder = GridFunction::from_fn(grid, |t| {
        let row = basis_row(&frequencies, t);
        u.eval_at(t) - row.iter().zip(&coefficients).map(|(b, c)| b * c).sum::<f64>()
    })?;
    let mut ergodic = ergodic_mean(Observable::Grid(&remainder), mu, &radii, cfg)?;
    if ergodic.means.iter().all(|&m| m <= REMAINDER_NOISE * scale) {
        ergodic.verdict = ErgodicVerdict::Decaying;
    }
    Ok(PaaReport {
        frequencies,
        coefficients,
        fit_residual,
        remainder,
        ergodic,
        note: PAA_DISCLAIMER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ErgodicVerdict;
    use crate::operator::ProblemBuilder;
    use crate::solver::{picard_solve, PicardOptions};
    use approx::assert_abs_diff_eq;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn grid() -> Grid {
        Grid::new(30.0, 0.02).unwrap()
    }

    fn linear() -> ProblemSpec {
        ProblemBuilder::new(SQRT2, 1.0).build().unwrap()
    }

    #[test]
    fn residual_of_trivial_and_constant_solutions() {
        let ps = linear();
        let zero = GridFunction::constant(grid(), 0.0);
        let r = residual(&ps, &zero, (-10.0, 10.0), &cfg()).unwrap();
        assert_eq!(r.sup_residual, 0.0);
        assert_eq!(r.per_point.len(), 1001);

        let g0 = 0.7;
        let forced = ProblemBuilder::new(SQRT2, 1.0).f("0.7").unwrap().build().unwrap();
        let u = GridFunction::constant(grid(), -g0 / (SQRT2 + 1.0));
        let r = residual(&forced, &u, (-10.0, 10.0), &cfg()).unwrap();
        assert!(r.sup_residual < 1e-10, "{}", r.sup_residual);
        assert!(r.l2_residual <= r.sup_residual * 20f64.sqrt());
    }

    #[test]
    fn residual_window_must_keep_clear_of_the_edge() {
        let ps = linear();
        let u = GridFunction::constant(grid(), 0.0);
        assert!(residual(&ps, &u, (-26.0, 0.0), &cfg()).is_err());
        assert!(residual(&ps, &u, (1.0, 1.0), &cfg()).is_err());
        assert!(residual(&ps, &u, (-25.0, 25.0), &cfg()).is_ok());
    }

    #[test]
    fn derivative_stencils() {
        let h = 0.02;
        let smooth: Vec<f64> = (0..41).map(|i| (i as f64 * h).sin()).collect();
        for i in 2..39 {
            assert_abs_diff_eq!(derivative(&smooth, i, h), (i as f64 * h).cos(), epsilon = 1e-8);
        }
        // u'' jumps at t = 0: u = t²/2 for t > 0, 0 otherwise, u'(0) = 0
        let kinked: Vec<f64> = (-20..=20).map(|i| { let t = i as f64 * h; if t > 0.0 { t * t / 2.0 } else { 0.0 } }).collect();
        for i in 16..=24 {
            let t = (i as f64 - 20.0) * h;
            assert_abs_diff_eq!(derivative(&kinked, i, h), t.max(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_csv() {
        let ps = linear();
        let u = GridFunction::from_fn(grid(), |t| t.sin()).unwrap();
        let r = residual(&ps, &u, (-0.04, 0.04), &cfg()).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,residual\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn manufactured_zero_is_zero() {
        let zero = Expression::parse("0").unwrap();
        let m = manufacture(&zero, &linear(), grid(), 0.0, &cfg()).unwrap();
        assert_eq!(m.problem.f_offset().unwrap().sup_norm(), 0.0);
        let trace = picard_solve(&m.problem, m.exact.clone(), &PicardOptions::default(), &cfg(), Some(&m.gate)).unwrap();
        assert_eq!(trace.solution.sup_norm(), 0.0);
    }

    #[test]
    fn manufactured_sine_forcing_matches_substitution() {
        let u_star = Expression::parse("sin(t)").unwrap();
        let m = manufacture(&u_star, &linear(), grid(), 0.0, &cfg()).unwrap();
        let off = m.problem.f_offset().unwrap();
        for (t, v) in grid().points().zip(off.samples()) {
            assert_abs_diff_eq!(*v, t.cos() - (SQRT2 - 1.0) * t.sin(), epsilon = 1e-11);
        }
        let r = residual(&m.problem, &m.exact, (-10.0, 10.0), &cfg()).unwrap();
        assert!(r.sup_residual < 1e-6, "{}", r.sup_residual);
    }

    #[test]
    fn manufactured_with_kernel_is_sound_and_recovered() {
        let template = ProblemBuilder::new(SQRT2, 1.0)
            .h("0.05*cos(x2)").unwrap()
            .kernel("exp(-s)", 1.0).unwrap()
            .build()
            .unwrap();
        let u_star = Expression::parse("sin(t) + 0.3*cos(sqrt(2)*t)").unwrap();
        let m = manufacture(&u_star, &template, grid(), 0.05, &cfg()).unwrap();
        assert!(m.gate.verdict);
        let r = residual(&m.problem, &m.exact, (-10.0, 10.0), &cfg()).unwrap();
        assert!(r.sup_residual < 1e-6, "{}", r.sup_residual);
        let x0 = GridFunction::constant(grid(), 0.0);
        let trace = picard_solve(&m.problem, x0, &PicardOptions::default(), &cfg(), Some(&m.gate)).unwrap();
        assert!(trace.converged);
        let err = trace.solution.sup_distance_on(&m.exact, -10.0, 10.0).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn manufacture_refuses_a_non_contractive_harness() {
        let u_star = Expression::parse("sin(t)").unwrap();
        assert!(matches!(
            manufacture(&u_star, &linear(), grid(), 0.5, &cfg()),
            Err(Error::ContractionViolated(_))
        ));
    }

    #[test]
    fn paa_of_pure_sine_and_offset_sine() {
        let mu = MeasureSpec::lebesgue();
        let radii = [5.0, 10.0, 20.0];
        for offset in [0.0, 0.5] {
            let u = GridFunction::from_fn(grid(), |t| t.sin() + offset).unwrap();
            let rep = paa_diagnostics(&u, &mu, &radii, &cfg()).unwrap();
            assert_eq!(rep.ergodic.verdict, ErgodicVerdict::Decaying, "{:?}", rep.ergodic);
            assert_abs_diff_eq!(rep.frequencies[0], 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(rep.coefficients[0], offset, epsilon = 1e-8);
            assert!(rep.remainder.sup_norm() < 1e-8);
        }
    }

    #[test]
    fn paa_separates_incommensurate_tones() {
        let mu = MeasureSpec::lebesgue();
        let g = Grid::new(40.0, 0.02).unwrap();
        let u = GridFunction::from_fn(g, |t| t.sin() + 0.3 * (SQRT2 * t).cos()).unwrap();
        let rep = paa_diagnostics(&u, &mu, &[5.0, 10.0, 20.0, 40.0], &cfg()).unwrap();
        assert_eq!(rep.ergodic.radii, vec![5.0, 10.0, 20.0]);
        assert_eq!(rep.ergodic.verdict, ErgodicVerdict::Decaying);
        for w in [1.0, SQRT2] {
            assert!(rep.frequencies.iter().any(|f| (f - w).abs() < 1e-6), "{:?}", rep.frequencies);
            assert_eq!(rep.note, PAA_DISCLAIMER);
        }
    }

    #[test]
    fn paa_of_decaying_bump() {
        let mu = MeasureSpec::lebesgue();
        let u = GridFunction::from_fn(grid(), |t| (-t.abs()).exp()).unwrap();
        let rep = paa_diagnostics(&u, &mu, &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert_eq!(rep.ergodic.verdict, ErgodicVerdict::Decaying);
        // the fit can only absorb the tail beyond T/4, where u is below e^{-7.5}
        let raw = ergodic_mean(Observable::Grid(&u), &mu, &[5.0, 10.0, 20.0], &cfg()).unwrap();
        assert_abs_diff_eq!(rep.ergodic.means[1], raw.means[1], epsilon = 2e-4);
        assert_abs_diff_eq!(rep.ergodic.means[1], (1.0 - (-10f64).exp()) / 10.0, epsilon = 2e-4);
        assert!(rep.fit_residual < (-7.5f64).exp());
    }
}
