use proptest::prelude::*;
use spdelab::cli::parse_coefficient;
use spdelab::expr::{Expression, Point};

/// Test-side expression tree with its own printer and evaluator.
#[derive(Debug, Clone)]
enum T {
    Num(f64),
    U,
    Time,
    X(usize),
    Neg(Box<T>),
    Add(Box<T>, Box<T>),
    Sub(Box<T>, Box<T>),
    Mul(Box<T>, Box<T>),
    Div(Box<T>, Box<T>),
    F(&'static str, Box<T>),
    Clamp(Box<T>, f64, f64),
}

impl T {
    fn src(&self) -> String {
        match self {
            T::Num(c) => format!("{c}"),
            T::U => "u".into(),
            T::Time => "t".into(),
            T::X(i) => format!("x{}", i + 1),
            T::Neg(a) => format!("-({})", a.src()),
            T::Add(a, b) => format!("({} + {})", a.src(), b.src()),
            T::Sub(a, b) => format!("({} - {})", a.src(), b.src()),
            T::Mul(a, b) => format!("({} * {})", a.src(), b.src()),
            T::Div(a, b) => format!("({} / {})", a.src(), b.src()),
            T::F(f, a) => format!("{f}({})", a.src()),
            T::Clamp(a, lo, hi) => format!("clamp({}, {lo}, {hi})", a.src()),
        }
    }

    fn eval(&self, t: f64, x: &[f64], u: f64) -> f64 {
        match self {
            T::Num(c) => *c,
            T::U => u,
            T::Time => t,
            T::X(i) => x[*i],
            T::Neg(a) => -a.eval(t, x, u),
            T::Add(a, b) => a.eval(t, x, u) + b.eval(t, x, u),
            T::Sub(a, b) => a.eval(t, x, u) - b.eval(t, x, u),
            T::Mul(a, b) => a.eval(t, x, u) * b.eval(t, x, u),
            T::Div(a, b) => a.eval(t, x, u) / b.eval(t, x, u),
            T::F(f, a) => {
                let v = a.eval(t, x, u);
                match *f {
                    "sin" => v.sin(),
                    "cos" => v.cos(),
                    "exp" => v.exp(),
                    "abs" => v.abs(),
                    "sqrt" => {
                        if v > 0.0 {
                            v.sqrt()
                        } else {
                            0.0
                        }
                    }
                    "tanh" => v.tanh(),
                    _ => unreachable!(),
                }
            }
            T::Clamp(a, lo, hi) => {
                let v = a.eval(t, x, u);
                if v < *lo {
                    *lo
                } else if v > *hi {
                    *hi
                } else {
                    v
                }
            }
        }
    }
}

fn tree(dim: usize, with_div_exp: bool) -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(|c| T::Num((c * 100.0).round() / 100.0)),
        Just(T::U),
        Just(T::Time),
        (0..dim).prop_map(T::X),
    ];
    leaf.prop_recursive(4, 24, 2, move |inner| {
        let funcs: Vec<&'static str> = if with_div_exp {
            vec!["sin", "cos", "exp", "abs", "sqrt", "tanh"]
        } else {
            vec!["sin", "cos", "abs", "sqrt", "tanh"]
        };
        let bin = (inner.clone(), inner.clone(), 0..if with_div_exp { 4 } else { 3 }).prop_map(|(a, b, k)| {
            let (a, b) = (Box::new(a), Box::new(b));
            match k {
                0 => T::Add(a, b),
                1 => T::Sub(a, b),
                2 => T::Mul(a, b),
                _ => T::Div(a, b),
            }
        });
        prop_oneof![
            bin,
            inner.clone().prop_map(|a| T::Neg(Box::new(a))),
            (inner.clone(), proptest::sample::select(funcs)).prop_map(|(a, f)| T::F(f, Box::new(a))),
            (inner, -3.0f64..0.0, 0.0f64..3.0).prop_map(|(a, lo, hi)| T::Clamp(Box::new(a), lo, hi)),
        ]
    })
}

fn points(seed: u64, n: usize) -> Vec<(f64, [f64; 3], f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..2.0),
                [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)],
                rng.random_range(-10.0..10.0),
            )
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-300
}

fn at(e: &Expression, t: f64, x: &[f64], u: f64) -> f64 {
    e.eval(&Point { t, x, u, r: 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // 100 expressions x 100 points = 10^4 evaluations.
    #[test]
    fn compiled_matches_reference(tr in tree(3, true), seed in any::<u64>()) {
        let e = Expression::coefficient(&tr.src(), 3).unwrap();
        for (t, x, u) in points(seed, 100) {
            let (got, want) = (at(&e, t, &x, u), tr.eval(t, &x, u));
            prop_assert!(close(got, want), "{} at t={t} x={x:?} u={u}: {got} vs {want}", tr.src());
        }
    }

    #[test]
    fn print_parse_is_idempotent(tr in tree(2, true)) {
        let e = Expression::coefficient(&tr.src(), 2).unwrap();
        let printed = e.canonical();
        let again = Expression::coefficient(&printed, 2).unwrap();
        prop_assert_eq!(&again.ast, &e.ast);
        prop_assert_eq!(again.canonical(), printed);
    }

    #[test]
    fn no_nan_without_division_or_exp(tr in tree(3, false), seed in any::<u64>()) {
        let e = Expression::coefficient(&tr.src(), 3).unwrap();
        for (t, x, u) in points(seed, 50) {
            prop_assert!(at(&e, t, &x, u).is_finite(), "{}", tr.src());
        }
    }

    #[test]
    fn declared_constants_hold(tr in tree(1, false), seed in any::<u64>()) {
        let e = Expression::coefficient(&tr.src(), 1).unwrap();
        let pts = points(seed, 50);
        if let Some(b) = e.derived.bound {
            for (t, x, u) in &pts {
                let v = at(&e, *t, &x[..1], *u);
                prop_assert!(v.abs() <= b * (1.0 + 1e-12) + 1e-12, "{}: |{v}| > {b}", tr.src());
            }
        }
        if let Some(l) = e.derived.lipschitz {
            for w in pts.windows(2) {
                let (t, x, u1) = w[0];
                let u2 = w[1].2;
                let diff = (at(&e, t, &x[..1], u1) - at(&e, t, &x[..1], u2)).abs();
                prop_assert!(diff <= l * (u1 - u2).abs() * (1.0 + 1e-9) + 1e-9, "{}: L = {l}", tr.src());
            }
        }
    }
}

#[test]
fn spec_examples() {
    let e = parse_coefficient("0.5*sin(u)").unwrap();
    assert_eq!((e.derived.bound, e.derived.lipschitz), (Some(0.5), Some(0.5)));
    let e = parse_coefficient("sqrt(1+u*u)").unwrap();
    assert_eq!(e.derived.lipschitz, Some(1.0));
    // |u|/sqrt(1+u^2) <= 1, checked by central differences.
    let h = 1e-5;
    let worst = (-2000..=2000)
        .map(|k| {
            let u = k as f64 / 100.0;
            (at(&e, 0.0, &[0.0; 3], u + h) - at(&e, 0.0, &[0.0; 3], u - h)).abs() / (2.0 * h)
        })
        .fold(0.0f64, f64::max);
    assert!(worst <= 1.0 + 1e-6 && worst > 0.99, "{worst}");
    match parse_coefficient("sin(u") {
        Err(spdelab::Error::Parse { column, .. }) => assert_eq!(column, 6),
        other => panic!("{other:?}"),
    }
}
