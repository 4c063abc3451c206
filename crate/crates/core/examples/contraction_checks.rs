//! Both contraction conditions, with given and sampled Lipschitz data.

use refide::solver::{check_thm1, check_thm2, estimate_lipschitz, LipschitzFunction, SampleBox};
use refide::{Expression, ProblemBuilder, QuadratureConfig};

fn main() -> refide::Result<()> {
    let cfg = QuadratureConfig::default();
    let nl = "(exp(-abs(t))/9)*(sin(x1)+cos(x2))";
    let ps = ProblemBuilder::new(2f64.sqrt(), 1.0)
        .f(nl)?
        .h(nl)?
        .kernel("exp(-s)", 1.0)?
        .beta("t-p", 0.5)?
        .rho("exp(sin(t))")?
        .build()?;

    let sampled = estimate_lipschitz(ps.f().expression(), SampleBox { p: 0.5, ..SampleBox::default() }, 4000, 7)?;
    println!("sampled Lipschitz constant of f: {sampled:.9} (exact 1/9)");

    let t1 = check_thm1(&ps, 1.0 / 9.0, 1.0 / 9.0, &cfg)?;
    println!("constant-Lipschitz: {:.9} vs {:.9} -> {}", t1.lhs, t1.rhs, t1.describe());

    let l = LipschitzFunction::new(Expression::parse("exp(-abs(t))/9")?, Some((1.0 / 9.0, 1.0)));
    let t2 = check_thm2(&ps, &l, &l, 2.0, &cfg)?;
    println!("L^p-Lipschitz:      {:.9} vs {:.9} -> {}", t2.lhs, t2.rhs, t2.describe());
    println!("contraction factor {:.6}", t2.factor);
    Ok(())
}
