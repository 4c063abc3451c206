//! Finite, certified semi-infinite and kernel quadratures.

use refide::quadrature::{integrate, integrate_semi_infinite, kernel_constant_c, kernel_q_norm, p1_p2_sup};
use refide::{Expression, KernelSpec, MeasureSpec, QuadratureConfig};
use std::f64::consts::PI;

fn main() -> refide::Result<()> {
    let cfg = QuadratureConfig::default();

    let bessel = integrate(|t| t.sin().exp(), -PI, PI, &cfg)?;
    println!("int_{{-pi}}^{{pi}} e^sin t dt = {bessel:.12}");

    // |e^{-s}| <= 1·e^{-(s-0)} certifies the truncation point
    let tail = integrate_semi_infinite(|s| (-s).exp(), 0.0, 1.0, 1.0, &cfg)?;
    println!("int_0^inf e^-s ds       = {tail:.12}");

    let k = KernelSpec::new(Expression::parse("exp(-s)")?, 1.0, 0.0)?;
    println!("c = int K               = {:.12}", kernel_constant_c(&k, 0.0, &cfg)?);
    println!("||K||_2                 = {:.12}", kernel_q_norm(&k, 2.0, 0.0, &cfg)?);

    let slow = KernelSpec::new(Expression::parse("(1+s)^(-3)")?, 1.0, 0.0)?;
    println!("power-law kernel: envelope = {:?}, c = {:.10}", slow.envelope_bound(), kernel_constant_c(&slow, 0.0, &cfg)?);

    let sweep = p1_p2_sup(&MeasureSpec::lebesgue(), 1.0, &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0], &cfg)?;
    println!("P1 = {:.9}, P2 = {:.9}, saturated = {}/{}", sweep.p1, sweep.p2, sweep.p1_saturated, sweep.p2_saturated);
    Ok(())
}
