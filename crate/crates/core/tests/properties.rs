use proptest::prelude::*;
use refide::cli::Report;
use refide::operator::{default_grid, linear_solution};
use refide::quadrature::integrate;
use refide::solver::check_thm1;
use refide::verify::defect;
use refide::{gamma_apply, Grid, GridFunction, ProblemBuilder, QuadratureConfig};

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cubics_integrate_exactly(c in prop::array::uniform4(-5.0..5.0f64), lo in -3.0..0.0f64, len in 0.1..4.0f64) {
        let hi = lo + len;
        let p = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * c[3]));
        let prim = |t: f64| t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)));
        let got = integrate(p, lo, hi, &cfg().with_initial_panels(1)).unwrap();
        prop_assert!((got - (prim(hi) - prim(lo))).abs() < 1e-11 * (1.0 + got.abs()));
    }

    #[test]
    fn reflection_is_an_isometry(a in prop::collection::vec(-3.0..3.0f64, 41), b in prop::collection::vec(-3.0..3.0f64, 41)) {
        let g = Grid::new(1.0, 0.05).unwrap();
        let (x, y) = (GridFunction::new(g, a).unwrap(), GridFunction::new(g, b).unwrap());
        prop_assert_eq!(x.sup_distance(&y).unwrap(), x.reflect().sup_distance(&y.reflect()).unwrap());
    }

    #[test]
    fn constant_forcing_gives_the_constant_solution(b in -2.0..2.0f64, gap in 0.2..2.0f64, g0 in -3.0..3.0f64, t in -5.0..5.0f64) {
        prop_assume!(b.abs() > 1e-3);
        let a = (b * b + gap * gap).sqrt();
        let ps = ProblemBuilder::new(a, b).build().unwrap();
        let u = linear_solution(&ps, |_| Ok(g0), g0.abs(), t, &cfg()).unwrap();
        prop_assert!((u + g0 / (a + b)).abs() < 1e-6, "{} vs {}", u, -g0 / (a + b));
    }

    #[test]
    fn constant_lipschitz_condition_matches_closed_form(lf in 0.0..0.5f64, lh in 0.0..0.5f64, b in 0.1..1.0f64) {
        let a = 2f64.sqrt();
        let ps = ProblemBuilder::new(a, b).h("0").unwrap().kernel("exp(-s)", 1.0).unwrap().build().unwrap();
        let r = check_thm1(&ps, lf, lh, &cfg()).unwrap();
        let l = (a * a - b * b).sqrt();
        let geom = (l - a).abs() + (l + a).abs() + 2.0 * b;
        prop_assert!((r.lhs - geom / (l * l) * (lf + 2.0 * lh)).abs() < 1e-7);
        prop_assert_eq!(r.verdict, r.lhs < r.rhs);
        prop_assert!((r.factor - r.lhs / r.rhs).abs() < 1e-15);
    }

    #[test]
    fn reports_render_in_insertion_order(keys in prop::collection::vec("[a-z]{1,6}", 1..12), v in -1e6..1e6f64) {
        let mut r = Report::default();
        for k in &keys {
            r.num(k.clone(), v);
        }
        let text = r.render();
        let lines: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        prop_assert_eq!(lines, keys.iter().map(String::as_str).collect::<Vec<_>>());
        let back: f64 = r.entries()[0].1.parse().unwrap();
        prop_assert_eq!(back, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn gamma_output_solves_the_linear_problem(amp in 0.1..3.0f64, w in 0.3..2.0f64, shift in -1.0..1.0f64) {
        let nl = "(exp(-abs(t))/9)*(sin(x1)+cos(x2))";
        let ps = ProblemBuilder::new(2f64.sqrt(), 1.0)
            .f(nl).unwrap()
            .h(nl).unwrap()
            .kernel("exp(-s)", 1.0).unwrap()
            .beta("t-p", 0.5).unwrap()
            .build()
            .unwrap();
        let x = GridFunction::from_fn(default_grid(), |t| amp * (w * t + shift).sin()).unwrap();
        let gx = gamma_apply(&ps, &x, &cfg()).unwrap();
        let d = defect(&ps, &gx, &x, (-10.0, 10.0), &cfg()).unwrap();
        prop_assert!(d.sup_residual < 1e-4, "{}", d.sup_residual);
    }
}
