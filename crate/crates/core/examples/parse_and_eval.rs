//! Parse, inspect and evaluate expressions.

use refide::Expression;

fn main() -> refide::Result<()> {
    let rho = Expression::parse("exp(sin(t))")?;
    println!("rho = {rho}  free vars = {:?}", rho.free_vars());
    println!("rho(pi/2) = {}", rho.eval_with(&[("t", std::f64::consts::FRAC_PI_2)])?);

    let lf = Expression::parse("exp(-abs(t))/9")?;
    println!("Lf(0) = {}", lf.eval_with(&[("t", 0.0)])?);

    // compiled form for hot loops: slots are positional
    let f = Expression::parse("(exp(-abs(t))/9)*(sin(x1)+cos(x2))")?.compile(&["t", "x1", "x2"])?;
    for t in [-1.0, 0.0, 1.0] {
        println!("f({t}, 0, 0) = {}", f.eval(&[t, 0.0, 0.0])?);
    }

    match Expression::parse("sin(t") {
        Ok(_) => unreachable!(),
        Err(e) => println!("syntax error reported as: {e}"),
    }
    Ok(())
}
