//! Ergodic means and the measure hypotheses for a periodic density.

use refide::measure::{check_hypotheses, ergodic_mean, Observable};
use refide::{Deformation, Expression, MeasureSpec, QuadratureConfig};

fn main() -> refide::Result<()> {
    let cfg = QuadratureConfig::default();
    let radii = [5.0, 10.0, 20.0, 40.0];
    let bump = Expression::parse("exp(-abs(t))")?;

    for mu in [MeasureSpec::lebesgue(), MeasureSpec::new(Expression::parse("exp(sin(t))")?, "exp(sin t) dt")?] {
        let rep = ergodic_mean(Observable::Expr(&bump), &mu, &radii, &cfg)?;
        println!("{}: means {:?} -> {}", mu.description(), rep.means, rep.verdict);
    }

    let mu = MeasureSpec::with_delay(Expression::parse("exp(sin(t))")?, 0.5, "exp(sin t) dt")?;
    let beta = Deformation::new(Expression::parse("t-p")?, 0.5)?;
    let hyp = check_hypotheses(&mu, &beta, &radii, &cfg)?;
    println!("M1: worst shift ratio {:.6} ({})", hyp.m1_ratio, hyp.m1_verdict);
    println!("M2: (m, n) = {:?}, e^2 = {:.6} ({})", hyp.m2_pair, std::f64::consts::E.powi(2), hyp.m2_verdict);
    println!("h0: translation {:?}, density ratio <= {:.6} ({})", hyp.h0_translation, hyp.h0_lambda_bound, hyp.h0_verdict);
    Ok(())
}
