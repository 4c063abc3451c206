//! Picard iteration on the worked example, from two starts.

use refide::cli::{parse_config, run_contraction_checks, WORKED_EXAMPLE};
use refide::solver::picard_solve;
use refide::GridFunction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = parse_config(WORKED_EXAMPLE)?;
    let gate = run_contraction_checks(&cfg)?.selected;
    println!("gate: {} with factor {:.6}", gate.describe(), gate.factor);

    let mut ends = Vec::new();
    for start in [0.0, 10.0] {
        let trace = picard_solve(&cfg.problem, GridFunction::constant(cfg.grid, start), &cfg.picard, &cfg.quad, Some(&gate))?;
        let ratios: Vec<String> = trace.ratios().iter().map(|r| format!("{r:.4}")).collect();
        println!("x0 = {start}: {} iterations, ratios [{}]", trace.iterations.len(), ratios.join(", "));
        if let Some(r) = &trace.final_residual {
            println!("  residual sup on {:?}: {:.3e}", r.window, r.sup_residual);
        }
        println!("  u(0) = {:.12}", trace.solution.eval_at(0.0));
        ends.push(trace.solution);
    }
    println!("sup distance between the two limits: {:.3e}", ends[0].sup_distance(&ends[1])?);
    Ok(())
}
