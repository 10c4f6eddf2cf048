use proptest::prelude::*;

use xtwave::config::{Mode, Regularity, RunConfig};
use xtwave::driver::{run, RunOptions};
use xtwave::dump::SolutionDump;
use xtwave::expr::Expr;
use xtwave::problems::smooth_case;
use xtwave::splines::{Constraint, SplineSpace};
use xtwave::system::solve;

fn regularity() -> impl Strategy<Value = Regularity> {
    prop_oneof![
        Just(Regularity::Maximal),
        Just(Regularity::C1),
        (0i64..4).prop_map(Regularity::Explicit),
    ]
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        1usize..6,
        regularity(),
        prop::collection::vec((1usize..64, 1usize..64), 1..5),
        prop::option::of(1usize..20),
        prop::option::of(any::<u64>()),
        prop::option::of((-5.0f64..5.0, 0.1f64..3.0, 0.1f64..10.0)),
    )
        .prop_map(|(degree, regularity, levels, quad_points, seed, inline)| {
            let mut cfg = RunConfig {
                problem: "smooth".into(),
                degree,
                regularity,
                levels: levels.into_iter().map(|(a, b)| [a, b]).collect(),
                mode: None,
                quad_points,
                output: None,
                seed,
                omega: None,
                final_time: None,
                c2: None,
                c0: None,
                forcing: None,
                u0: None,
                v0: None,
                exact_u: None,
            };
            if let Some((a, w, t)) = inline {
                cfg.problem = "inline".into();
                cfg.omega = Some([a, a + w]);
                cfg.final_time = Some(t);
                cfg.c2 = Some("1 + x^2".into());
                cfg.exact_u = Some("sin(pi*x)*exp(-t)".into());
            }
            cfg
        })
}

fn expr_tree() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("t".to_string()),
        Just("pi".to_string()),
        (0.0f64..10.0).prop_map(|v| format!("{v}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*", "/"]))
                .prop_map(|(a, b, op)| format!("({a} {op} {b})")),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            (inner, prop::sample::select(vec!["sin", "cos", "exp", "-"]))
                .prop_map(|(a, f)| format!("{f}({a})")),
        ]
    })
}

proptest! {
    #[test]
    fn config_toml_round_trip(cfg in config()) {
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn printed_expressions_parse_back(src in expr_tree(), x in -2.0f64..2.0, t in 0.0f64..3.0) {
        let e = Expr::parse(&src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let (a, b) = (e.eval(x, t), again.eval(x, t));
        prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let err = RunConfig::parse("problem = \"smooth\"\ndegree = 2\nlevels = [[2, 2]]\ncolour = 1\n").unwrap_err();
    assert!(err.to_string().contains("colour"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn expressions_match_hand_written_closures() {
    let e = Expr::parse("2*sin(pi*x)^2 - exp(-t/3) + x^3/(1+t)").unwrap();
    for (x, t) in [(0.1, 0.0), (0.7, 2.5), (-1.3, 1.0)] {
        let want = 2.0 * (std::f64::consts::PI * x).sin().powi(2) - (-t / 3.0f64).exp() + x * x * x / (1.0 + t);
        assert!((e.eval(x, t) - want).abs() < 1e-14);
    }
    assert!(Expr::parse("sin(x").is_err());
    assert!(Expr::parse("log(x)").is_err());
    assert!(Expr::parse("x y").is_err());
}

#[test]
fn dump_file_round_trip_is_bit_exact() {
    let p = smooth_case();
    let sx = SplineSpace::uniform(p.spec.omega, 4, 3, 1, Constraint::ZeroBoth).unwrap();
    let st = SplineSpace::uniform((0.0, p.spec.final_time), 6, 3, 1, Constraint::ZeroLeft).unwrap();
    let sol = solve(&p.spec, &sx, &st).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sol.txt");
    let dump = SolutionDump::from_solution(&p.name, &sol);
    dump.write(&path).unwrap();
    let back = SolutionDump::read(&path).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.u_coeffs), bits(&sol.u_coeffs));
    assert_eq!(bits(&back.v_coeffs), bits(&sol.v_coeffs));
    let r = back.reconstruct(&p.spec).unwrap();
    for (x, t) in [(0.2, 0.4), (0.9, 3.0)] {
        assert_eq!(r.evaluate(x, t, 0, 0).unwrap(), sol.evaluate(x, t, 0, 0).unwrap());
    }
}

#[test]
fn driver_output_is_deterministic() {
    let cfg = RunConfig::parse("problem = \"smooth\"\ndegree = 2\nlevels = [[2, 3], [4, 6], [8, 12]]\n").unwrap();
    let strip_time = |s: String| {
        s.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string())
            .collect::<Vec<_>>()
    };
    let mut seen = Vec::new();
    for threads in [1, 2] {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            mode: Mode::Convergence,
            out: Some(dir.path().to_path_buf()),
            threads: Some(threads),
            seed: None,
        };
        let out = run(&cfg, &opts).unwrap();
        assert_eq!(out.rows.len(), 3);
        seen.push(strip_time(std::fs::read_to_string(dir.path().join("results.csv")).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
}
