//! Degenerate configurations: no kernel, no deformation, no reflection.

use refide::cli::{cmd_check, parse_config, Context};
use refide::measure::check_hypotheses;
use refide::operator::default_grid;
use refide::{assemble_F, GridFunction, QuadratureConfig};

const BASE: &str = "[problem]\na = 2^0.5\nf = \"(exp(-abs(t))/9)*(sin(x1)+cos(x2))\"\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let quad = QuadratureConfig::default();

    let no_kernel = parse_config(&format!("{BASE}b = 1\nh = cos(x1)\nK = 0\n"))?;
    let u = GridFunction::from_fn(default_grid(), |t| t.cos())?;
    let rhs = assemble_F(&no_kernel.problem, &u, 1.0, &quad)?;
    println!("K = 0: kernel terms {} and {}", rhs.kernel_forward, rhs.kernel_backward);

    let plain = parse_config(&format!("{BASE}b = 1\nh = 0\nbeta = t\n"))?;
    let hyp = check_hypotheses(plain.problem.mu(), plain.problem.beta(), &[10.0, 20.0, 40.0], &quad)?;
    println!("beta = t: density ratio bound {} ({})", hyp.h0_lambda_bound, hyp.h0_verdict);

    match parse_config(&format!("{BASE}b = 2\nh = 0\n")) {
        Ok(_) => unreachable!(),
        Err(e) => println!("b = 2 rejected with exit code {}: {e}", e.exit_code()),
    }
    match parse_config(&format!("{BASE}b = 0\nh = 0\n")) {
        Ok(_) => unreachable!(),
        Err(e) => println!("b = 0 without no_reflection: {e}"),
    }
    let ode = parse_config(&format!("{BASE}b = 0\nh = 0\nno_reflection = true\n"))?;
    let ctx = Context { out_dir: std::env::temp_dir().join("refide-corollaries"), force: false };
    let out = cmd_check(&ode, &ctx)?;
    println!("b = 0 with no_reflection: {} (exit {})", out.report.get("contraction").unwrap_or("?"), out.code);
    Ok(())
}
