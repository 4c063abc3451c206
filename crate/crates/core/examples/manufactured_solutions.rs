//! Manufactured solutions: pick u*, derive the forcing, solve, compare.

use refide::operator::default_grid;
use refide::solver::{picard_solve, PicardOptions};
use refide::verify::{manufacture, residual};
use refide::{Expression, GridFunction, ProblemBuilder, QuadratureConfig};

fn main() -> refide::Result<()> {
    let cfg = QuadratureConfig::default();
    let grid = default_grid();
    let templates = [
        ("K = 0", ProblemBuilder::new(2f64.sqrt(), 1.0).build()?),
        ("K = e^-s", ProblemBuilder::new(2f64.sqrt(), 1.0).h("0.05*cos(x2)")?.kernel("exp(-s)", 1.0)?.build()?),
    ];
    for (label, template) in &templates {
        for u_star in ["sin(t)", "sin(t)+0.3*cos(sqrt(2)*t)", "2"] {
            let m = manufacture(&Expression::parse(u_star)?, template, grid, 0.05, &cfg)?;
            let pre = residual(&m.problem, &m.exact, (-10.0, 10.0), &cfg)?.sup_residual;
            let trace = picard_solve(&m.problem, GridFunction::constant(grid, 0.0), &PicardOptions::default(), &cfg, Some(&m.gate))?;
            let err = trace.solution.sup_distance_on(&m.exact, -10.0, 10.0)?;
            println!("{label:9} u* = {u_star:26} residual at u* {pre:.1e}, {} iterations, error {err:.1e}", trace.iterations.len());
        }
    }
    Ok(())
}
