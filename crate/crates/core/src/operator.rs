//! The equation
//!
//! ```text
//! u'(t) = a u(t) + b u(-t) + f(t, u(β(t)), u(β(-t)))
//!       + ∫_t^∞ K(s-t) h(s, u(β(s)), u(β(-s))) ds
//!       + ∫_{-t}^∞ K(s+t) h(s, u(β(s)), u(β(-s))) ds
//! ```
//!
//! and its bounded-solution operator. With `λ = √(a² - b²)`, the unique
//! bounded solution of the linear problem `u' = a u + b u(-·) + G` is
//!
//! ```text
//! u(t) = -(1/2λ) e^{λt}  ∫_t^∞  e^{-λy} [(λ+a) G(y) - b G(-y)] dy
//!        +(1/2λ) e^{-λt} ∫_{-∞}^t e^{λy} [(λ-a) G(y) + b G(-y)] dy
//! ```
//!
//! obtained by splitting `(u(t), u(-t))` along the eigenvectors `±λ` of
//! `[[a, b], [-b, -a]]`. [`gamma_apply`] maps a candidate `x` to the
//! bounded solution with forcing `G = F(·, x(β(·)), x(β(-·)))`; its fixed
//! point solves the full equation.

use rayon::prelude::*;

use crate::expr::{CompiledExpr, Expression};
use crate::funcspace::{Grid, GridFunction};
use crate::measure::{substitute_constant, Deformation, MeasureSpec};
use crate::quadrature::{
    truncation_point, try_integrate, try_integrate_dyadic_tail, try_integrate_semi_infinite, KernelSpec, QuadratureConfig,
};
use crate::{Error, Result};

/// Subdivisions of a grid cell held in the right-hand side lookup tables.
const TABLE_REFINE: usize = 8;

/// A nonlinearity `g(t, x1, x2)`; the delay `p` may appear as a constant.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    expr: Expression,
    compiled: CompiledExpr,
    p_delay: f64,
}

impl Nonlinearity {
    pub fn new(expr: Expression, p_delay: f64) -> Result<Nonlinearity> {
        let compiled = expr.compile(&["t", "x1", "x2", "p"])?;
        Ok(Nonlinearity {
            expr,
            compiled,
            p_delay,
        })
    }

    pub fn eval(&self, t: f64, x1: f64, x2: f64) -> Result<f64> {
        Ok(self.compiled.eval(&[t, x1, x2, self.p_delay])?)
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero_literal()
    }
}

/// Raw ingredients of a [`ProblemSpec`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    pub a: f64,
    pub b: f64,
    pub f: Expression,
    pub h: Expression,
    pub kernel: Expression,
    /// Envelope rate for the kernel; see [`KernelSpec::new`].
    pub kernel_decay: f64,
    pub beta: Expression,
    pub p_delay: f64,
    pub rho: Expression,
    /// Permits `b = 0`, which removes the reflection coupling.
    pub allow_no_reflection: bool,
}

impl ProblemBuilder {
    pub fn new(a: f64, b: f64) -> ProblemBuilder {
        ProblemBuilder {
            a,
            b,
            f: Expression::constant(0.0),
            h: Expression::constant(0.0),
            kernel: Expression::constant(0.0),
            kernel_decay: 1.0,
            beta: Expression::parse("t").expect("identity"),
            p_delay: 0.0,
            rho: Expression::constant(1.0),
            allow_no_reflection: false,
        }
    }

    pub fn f(mut self, src: &str) -> Result<Self> {
        self.f = Expression::parse(src)?;
        Ok(self)
    }

    pub fn h(mut self, src: &str) -> Result<Self> {
        self.h = Expression::parse(src)?;
        Ok(self)
    }

    pub fn kernel(mut self, src: &str, decay: f64) -> Result<Self> {
        self.kernel = Expression::parse(src)?;
        self.kernel_decay = decay;
        Ok(self)
    }

    pub fn beta(mut self, src: &str, p_delay: f64) -> Result<Self> {
        self.beta = Expression::parse(src)?;
        self.p_delay = p_delay;
        Ok(self)
    }

    pub fn rho(mut self, src: &str) -> Result<Self> {
        self.rho = Expression::parse(src)?;
        Ok(self)
    }

    pub fn allow_no_reflection(mut self, yes: bool) -> Self {
        self.allow_no_reflection = yes;
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let (a, b) = (self.a, self.b);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid(format!("a and b must be finite (a = {a}, b = {b})")));
        }
        let disc = a * a - b * b;
        if !(disc > 0.0) {
            return Err(Error::Invalid(format!(
                "a²−b² must be positive (a = {a}, b = {b}, a²−b² = {disc})"
            )));
        }
        if b == 0.0 && !self.allow_no_reflection {
            return Err(Error::Invalid(
                "b must be nonzero for an equation with reflection (enable no-reflection mode to allow b = 0)".into(),
            ));
        }
        let f = Nonlinearity::new(self.f, self.p_delay)?;
        let h = Nonlinearity::new(self.h, self.p_delay)?;
        let kernel = KernelSpec::new(substitute_constant(&self.kernel, "p", self.p_delay), self.kernel_decay, self.p_delay)?;
        let beta = Deformation::new(self.beta, self.p_delay)?;
        let description = self.rho.to_string();
        let mu = MeasureSpec::with_delay(self.rho, self.p_delay, description)?;
        Ok(ProblemSpec {
            a,
            b,
            lambda: disc.sqrt(),
            f,
            h,
            kernel,
            beta,
            mu,
            p_delay: self.p_delay,
            f_offset: None,
        })
    }
}

/// A fully validated equation.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: f64,
    b: f64,
    lambda: f64,
    f: Nonlinearity,
    h: Nonlinearity,
    kernel: KernelSpec,
    beta: Deformation,
    mu: MeasureSpec,
    p_delay: f64,
    /// Tabulated addition to `f(t, ·, ·)`, used by manufactured problems.
    f_offset: Option<GridFunction>,
}

impl ProblemSpec {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `√(a² - b²)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `|λ - a| + |λ + a| + 2|b|`.
    pub fn geometry_constant(&self) -> f64 {
        let (l, a, b) = (self.lambda, self.a, self.b);
        (l - a).abs() + (l + a).abs() + 2.0 * b.abs()
    }

    /// Whether `a > b` holds as literally stated for λ; only `a² > b²` is enforced.
    pub fn a_exceeds_b(&self) -> bool {
        self.a > self.b
    }

    pub fn has_reflection(&self) -> bool {
        self.b != 0.0
    }

    pub fn f(&self) -> &Nonlinearity {
        &self.f
    }

    pub fn h(&self) -> &Nonlinearity {
        &self.h
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn beta(&self) -> &Deformation {
        &self.beta
    }

    pub fn mu(&self) -> &MeasureSpec {
        &self.mu
    }

    pub fn p_delay(&self) -> f64 {
        self.p_delay
    }

    pub fn f_offset(&self) -> Option<&GridFunction> {
        self.f_offset.as_ref()
    }

    /// Same problem with `f` replaced by `expr(t,x1,x2) + offset(t)`.
    pub fn with_forcing(&self, expr: Expression, offset: Option<GridFunction>) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            f: Nonlinearity::new(expr, self.p_delay)?,
            f_offset: offset,
            ..self.clone()
        })
    }

    /// `f(t, x1, x2)` including any tabulated offset.
    pub fn f_value(&self, t: f64, x1: f64, x2: f64) -> Result<f64> {
        let base = self.f.eval(t, x1, x2)?;
        Ok(match &self.f_offset {
            Some(off) => base + off.eval_cubic(t),
            None => base,
        })
    }
}

/// Right-hand side `F(t, u(β(t)), u(β(-t)))` split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsValue {
    pub f_part: f64,
    /// `∫_t^∞ K(s-t) h(s, …) ds`.
    pub kernel_forward: f64,
    /// `∫_{-t}^∞ K(s+t) h(s, …) ds`.
    pub kernel_backward: f64,
    pub total: f64,
}

impl RhsValue {
    fn new(f_part: f64, kernel_forward: f64, kernel_backward: f64) -> RhsValue {
        RhsValue {
            f_part,
            kernel_forward,
            kernel_backward,
            total: f_part + kernel_forward + kernel_backward,
        }
    }
}

/// Uniform table of a function of one variable with direct-evaluation
/// fallback off the nodes.
struct Table {
    origin: f64,
    step: f64,
    values: Vec<f64>,
}

impl Table {
    fn lookup(&self, s: f64) -> Option<f64> {
        let x = (s - self.origin) / self.step;
        let k = x.round();
        if k < 0.0 || (x - k).abs() > 1e-7 {
            return None;
        }
        self.values.get(k as usize).copied()
    }
}

/// Evaluates `F(t, u(β(t)), u(β(-t)))` for a fixed `u`.
///
/// The kernel integrals are written as `∫_0^∞ K(y) H(t+y) dy` and
/// `∫_0^∞ K(y) H(y-t) dy` with `H(s) = h(s, u(β(s)), u(β(-s)))`, which does
/// not depend on `t`. Both `K` and `H` are tabulated at an eighth of the
/// grid step so that Simpson levels on grid-aligned panels are lookups;
/// other abscissae are evaluated directly.
pub struct RhsAssembler<'a> {
    ps: &'a ProblemSpec,
    u: &'a GridFunction,
    cfg: QuadratureConfig,
    kernel: KernelMode,
}

enum KernelMode {
    Off,
    Tabled(KernelTables),
    /// No exponential envelope: dyadic segments until they fall below tolerance.
    Dyadic,
}

struct KernelTables {
    /// Truncation length for the kernel integrals, a whole number of cells.
    reach: f64,
    cells: usize,
    h_table: Table,
    k_table: Table,
    /// Certified envelope bound for `K(y)·H(·)`.
    bound: f64,
}

impl<'a> RhsAssembler<'a> {
    pub fn new(ps: &'a ProblemSpec, u: &'a GridFunction, cfg: &QuadratureConfig) -> Result<RhsAssembler<'a>> {
        let kernel = if ps.kernel.is_zero() || ps.h.is_zero() {
            KernelMode::Off
        } else if let Some(envelope) = ps.kernel.envelope_bound() {
            KernelMode::Tabled(Self::build_tables(ps, u, envelope, cfg)?)
        } else {
            KernelMode::Dyadic
        };
        Ok(RhsAssembler {
            ps,
            u,
            cfg: *cfg,
            kernel,
        })
    }

    fn h_at(ps: &ProblemSpec, u: &GridFunction, s: f64) -> Result<f64> {
        let x1 = u.eval_cubic(ps.beta.apply(s)?);
        let x2 = u.eval_cubic(ps.beta.apply(-s)?);
        ps.h.eval(s, x1, x2)
    }

    fn build_tables(ps: &ProblemSpec, u: &GridFunction, envelope: f64, cfg: &QuadratureConfig) -> Result<KernelTables> {
        let grid = u.grid();
        let step = grid.step();
        let big_t = grid.half_width();
        let decay = ps.kernel.decay();
        let far = cfg.truncation_cap / decay;

        // sampled sup of |H| over everything a truncated integral can reach
        let n_coarse = ((2.0 * big_t + 2.0 * far) / step).ceil() as usize;
        let h_sup = (0..=n_coarse)
            .into_par_iter()
            .map(|i| Self::h_at(ps, u, -big_t - far + i as f64 * step).map(f64::abs))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        // sampling can miss the true sup between points; the truncation
        // length only grows by ln 2 / decay for the factor 2
        let bound = 2.0 * envelope * h_sup;

        let raw = truncation_point(0.0, decay, bound, cfg)?;
        let mut cells = (raw / step).ceil().max(2.0) as usize;
        if cells % 2 == 1 {
            cells += 1;
        }
        let reach = cells as f64 * step;
        let fine = step / TABLE_REFINE as f64;

        let lo = -big_t - reach;
        let n_h = (((big_t + reach) - lo) / fine).round() as usize;
        let h_values = (0..=n_h)
            .into_par_iter()
            .map(|i| Self::h_at(ps, u, lo + i as f64 * fine))
            .collect::<Result<Vec<f64>>>()?;
        let n_k = cells * TABLE_REFINE;
        let k_values = (0..=n_k)
            .map(|i| ps.kernel.eval(i as f64 * fine, ps.p_delay).map_err(Error::from))
            .collect::<Result<Vec<f64>>>()?;
        Ok(KernelTables {
            reach,
            cells,
            h_table: Table {
                origin: lo,
                step: fine,
                values: h_values,
            },
            k_table: Table {
                origin: 0.0,
                step: fine,
                values: k_values,
            },
            bound,
        })
    }

    fn kernel_integrals(&self, t: f64) -> Result<(f64, f64)> {
        let ps = self.ps;
        let tab = match &self.kernel {
            KernelMode::Off => return Ok((0.0, 0.0)),
            KernelMode::Tabled(tab) => tab,
            KernelMode::Dyadic => {
                let k_at = |y: f64| -> Result<f64> { Ok(ps.kernel.eval(y, ps.p_delay)?) };
                let forward = try_integrate_dyadic_tail(
                    |y| Ok::<f64, Error>(k_at(y)? * Self::h_at(ps, self.u, t + y)?),
                    &self.cfg,
                )?;
                let backward = try_integrate_dyadic_tail(
                    |y| Ok::<f64, Error>(k_at(y)? * Self::h_at(ps, self.u, y - t)?),
                    &self.cfg,
                )?;
                return Ok((forward, backward));
            }
        };
        let k_at = |y: f64| -> Result<f64> {
            match tab.k_table.lookup(y) {
                Some(v) => Ok(v),
                None => Ok(ps.kernel.eval(y, ps.p_delay)?),
            }
        };
        let big_h = |s: f64| -> Result<f64> {
            match tab.h_table.lookup(s) {
                Some(v) => Ok(v),
                None => Self::h_at(ps, self.u, s),
            }
        };
        // one panel per grid cell, so kinks of H at nodes fall on panel edges
        let cfg = self.cfg.with_initial_panels(tab.cells);
        let forward = try_integrate(|y| Ok::<f64, Error>(k_at(y)? * big_h(t + y)?), 0.0, tab.reach, &cfg)?;
        let backward = try_integrate(|y| Ok::<f64, Error>(k_at(y)? * big_h(y - t)?), 0.0, tab.reach, &cfg)?;
        Ok((forward, backward))
    }

    pub fn at(&self, t: f64) -> Result<RhsValue> {
        let ps = self.ps;
        let x1 = self.u.eval_cubic(ps.beta.apply(t)?);
        let x2 = self.u.eval_cubic(ps.beta.apply(-t)?);
        let f_part = ps.f_value(t, x1, x2)?;
        let (kf, kb) = self.kernel_integrals(t)?;
        Ok(RhsValue::new(f_part, kf, kb))
    }

    /// Envelope bound `sup|K·H|` used for truncation, when a kernel is active.
    pub fn kernel_bound(&self) -> Option<f64> {
        match &self.kernel {
            KernelMode::Tabled(k) => Some(k.bound),
            _ => None,
        }
    }

    /// `F` at every node of the candidate's grid, in index order.
    pub fn on_grid(&self) -> Result<GridFunction> {
        let grid = *self.u.grid();
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| self.at(grid.point(i)).map(|r| r.total))
            .collect::<Result<Vec<f64>>>()?;
        Ok(GridFunction::new(grid, values)?)
    }
}

/// `F(t, u(β(t)), u(β(-t)))` with its parts.
#[allow(non_snake_case)]
pub fn assemble_F(ps: &ProblemSpec, u: &GridFunction, t: f64, cfg: &QuadratureConfig) -> Result<RhsValue> {
    RhsAssembler::new(ps, u, cfg)?.at(t)
}

/// Bounded solution at `t` of `u' = a u + b u(-·) + G` for a forcing with
/// `sup|G| <= sup_bound`, by certified semi-infinite Simpson quadrature.
pub fn linear_solution<G>(ps: &ProblemSpec, g: G, sup_bound: f64, t: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let (l, a, b) = (ps.lambda, ps.a, ps.b);
    if !(l > 0.0) {
        return Err(Error::Invalid(format!("λ must be positive, got {l}")));
    }
    let scale = 1.0 / (2.0 * l);
    let bound = ps.geometry_constant() * sup_bound.abs() * scale;
    // ∫_t^∞ e^{-λ(y-t)} [(λ+a) G(y) - b G(-y)] dy
    let forward = try_integrate_semi_infinite(
        |y| Ok::<f64, Error>(scale * (-l * (y - t)).exp() * ((l + a) * g(y)? - b * g(-y)?)),
        t,
        l,
        bound,
        cfg,
    )?;
    // ∫_{-∞}^t e^{-λ(t-y)} [(λ-a) G(y) + b G(-y)] dy, with y = 2t - w
    let backward = try_integrate_semi_infinite(
        |w| {
            let y = 2.0 * t - w;
            Ok::<f64, Error>(scale * (-l * (w - t)).exp() * ((l - a) * g(y)? + b * g(-y)?))
        },
        t,
        l,
        bound,
        cfg,
    )?;
    Ok(backward - forward)
}

/// Closed Newton–Cotes weight of point `j` on `n` unit cells; the
/// end-corrected trapezoid rule from six cells on.
fn node_weight(j: usize, n: usize) -> f64 {
    const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    let j = j.min(n - j);
    match n {
        1 => 0.5,
        2 => [1.0 / 3.0, 4.0 / 3.0][j],
        3 => [3.0 / 8.0, 9.0 / 8.0][j],
        4 => [14.0 / 45.0, 64.0 / 45.0, 24.0 / 45.0][j],
        5 => [95.0 / 288.0, 375.0 / 288.0, 250.0 / 288.0][j],
        _ => END.get(j).copied().unwrap_or(1.0),
    }
}

/// Interior nodes where the samples have a derivative jump.
///
/// A slope jump `J` at node `k` adds `J·h` to the second difference at `k`
/// only, so the second difference minus the mean of its neighbours is
/// `J·h` at `k`, `J·h/2` next to it and `O(h⁴)` elsewhere, however large
/// the smooth curvature.
pub fn kink_nodes(samples: &[f64]) -> Vec<usize> {
    let n = samples.len();
    if n < 9 {
        return Vec::new();
    }
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // d2[j] at node j+1, e[m] at node m+2
    let d2: Vec<f64> = (1..n - 1).map(|j| samples[j + 1] - 2.0 * samples[j] + samples[j - 1]).collect();
    let e: Vec<f64> = (1..d2.len() - 1).map(|m| (d2[m] - 0.5 * (d2[m - 1] + d2[m + 1])).abs()).collect();
    (4..n - 4)
        .filter(|&k| {
            let here = e[k - 2];
            let near = e[k - 3].max(e[k - 1]);
            let away = e[k - 4].max(e[k]);
            here > 1e-9 * scale && here > 1.5 * near && here > 8.0 * away
        })
        .collect()
}

/// Bounded solution sampled on the forcing's grid.
///
/// The forcing is known only at the nodes, so both integrals are node
/// rules at step `h`, clamping beyond `±T`, truncated where the certified
/// tail `geom·sup|G|/(2λ)·e^{-λR}/λ` drops below `abs_tol`. Each integral
/// is split at the forcing's kink nodes (and their mirrors, since `G(-y)`
/// enters too) and every piece gets its own fourth-order rule, so a kink
/// costs nothing whether it sits at an end or inside.
pub fn linear_solution_on_grid(ps: &ProblemSpec, forcing: &GridFunction, cfg: &QuadratureConfig) -> Result<GridFunction> {
    let (l, a, b) = (ps.lambda, ps.a, ps.b);
    let grid = *forcing.grid();
    let step = grid.step();
    let g = forcing.samples();
    let last = (grid.len() - 1) as isize;
    let scale = 1.0 / (2.0 * l);
    let bound = ps.geometry_constant() * forcing.sup_norm() * scale;
    let reach = truncation_point(0.0, l, bound, cfg)?;
    let m = (reach / step).ceil().max(6.0) as isize;
    let decay: Vec<f64> = (0..=m).map(|k| step * scale * (-l * k as f64 * step).exp()).collect();

    let mut kinks: Vec<isize> = kink_nodes(g).into_iter().map(|k| k as isize).collect();
    kinks.extend(kinks.clone().into_iter().map(|k| last - k));
    kinks.sort_unstable();
    kinks.dedup();

    let at = |j: isize| g[j.clamp(0, last) as usize];
    // forward integrand at node j, backward integrand at node j
    let fwd = |j: isize| (l + a) * at(j) - b * at(last - j);
    let bwd = |j: isize| (l - a) * at(j) + b * at(last - j);
    // Σ over offsets 0..=m of weight·e^{-λkh}·integrand(k), split at `cuts`
    let sum = |cuts: &mut Vec<isize>, integrand: &dyn Fn(isize) -> f64| -> f64 {
        // the integrand continues smoothly behind the endpoint unless a kink sits there
        let smooth_behind = !cuts.iter().any(|c| (-2..=0).contains(c));
        cuts.retain(|&c| c > 0 && c < m);
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(m);
        let mut acc = 0.0;
        for piece in cuts.windows(2) {
            let (lo, n) = (piece[0], (piece[1] - piece[0]) as usize);
            if n == 1 && lo == 0 && smooth_behind {
                // cubic through offsets -2..=1 integrated over the first cell
                for (k, w) in [(-2isize, 1.0), (-1, -5.0), (0, 19.0), (1, 9.0)] {
                    acc += w / 24.0 * step * scale * (-l * k as f64 * step).exp() * integrand(k);
                }
                continue;
            }
            for j in 0..=n {
                let k = lo + j as isize;
                acc += node_weight(j, n) * decay[k as usize] * integrand(k);
            }
        }
        acc
    };
    let values: Vec<f64> = (0..grid.len() as isize)
        .into_par_iter()
        .map(|i| {
            let mut cuts_f: Vec<isize> = kinks.iter().map(|&c| c - i).collect();
            let mut cuts_b: Vec<isize> = kinks.iter().map(|&c| i - c).collect();
            let acc_f = sum(&mut cuts_f, &|k| fwd(i + k));
            let acc_b = sum(&mut cuts_b, &|k| bwd(i - k));
            acc_b - acc_f
        })
        .collect();
    Ok(GridFunction::new(grid, values)?)
}

/// `Γx`: the bounded linear solution driven by `F(·, x(β(·)), x(β(-·)))`.
pub fn gamma_apply(ps: &ProblemSpec, x: &GridFunction, cfg: &QuadratureConfig) -> Result<GridFunction> {
    let forcing = RhsAssembler::new(ps, x, cfg)?.on_grid()?;
    linear_solution_on_grid(ps, &forcing, cfg)
}

/// Default working grid `T = 40`, `h = 0.02`.
pub fn default_grid() -> Grid {
    Grid::new(40.0, 0.02).expect("valid default grid")
}
