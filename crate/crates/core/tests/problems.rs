use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use adam_rho::harness::{run, RunSpec};
use adam_rho::problems::{
    finite_diff_grad, max_relative_error, LogisticRegression, Problem, ProblemSpec, Rosenbrock,
};
use adam_rho::{AdamConfig, Schedule};

fn specs() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec::Quadratic {
            dim: 10,
            condition: 100.0,
            noise: 0.0,
            data_seed: 0,
        },
        ProblemSpec::Quadratic {
            dim: 5,
            condition: 10.0,
            noise: 0.5,
            data_seed: 3,
        },
        ProblemSpec::Rosenbrock { dim: 4 },
        ProblemSpec::Logistic {
            n_samples: 200,
            dim: 6,
            batch_size: 20,
            data_seed: 7,
        },
        ProblemSpec::Mlp {
            in_dim: 3,
            hidden_dim: 7,
            n_samples: 100,
            batch_size: 10,
            data_seed: 11,
        },
    ]
}

#[test]
fn gradients_match_finite_differences_at_twenty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for spec in specs() {
        let p = spec.build().unwrap();
        let tol = match p.name() {
            "rosenbrock" | "mlp" => 1e-5,
            _ => 1e-6,
        };
        for _ in 0..20 {
            let x: Vec<f64> = (0..p.dim())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let seed = rng.random();
            let fd = finite_diff_grad(p.as_ref(), &x, 1e-5, seed).unwrap();
            let err = max_relative_error(&fd, &p.eval(&x, seed).1);
            assert!(err < tol, "{spec}: {err:.2e}");
        }
    }
}

#[test]
fn deterministic_problems_ignore_batch_seed() {
    for spec in specs() {
        let p = spec.build().unwrap();
        let x = p.init(1);
        if p.is_deterministic() {
            assert_eq!(p.eval(x.as_slice(), 1), p.eval(x.as_slice(), 2), "{spec}");
        } else {
            assert_ne!(p.eval(x.as_slice(), 1), p.eval(x.as_slice(), 2), "{spec}");
        }
    }
}

#[test]
fn data_is_a_pure_function_of_seed() {
    for spec in specs() {
        let (a, b) = (spec.build().unwrap(), spec.build().unwrap());
        let x = a.init(5);
        assert_eq!(x, b.init(5));
        assert_eq!(a.eval(x.as_slice(), 9), b.eval(x.as_slice(), 9));
        assert_eq!(
            a.eval_loss(x.as_slice()).to_bits(),
            b.eval_loss(x.as_slice()).to_bits()
        );
    }
    let a = LogisticRegression::new(64, 4, 8, 1).unwrap();
    let b = LogisticRegression::new(64, 4, 8, 1).unwrap();
    let c = LogisticRegression::new(64, 4, 8, 2).unwrap();
    assert_eq!(a.features(), b.features());
    assert_eq!(a.labels(), b.labels());
    assert_ne!(a.features(), c.features());
}

#[test]
fn rosenbrock_hand_values() {
    let r = Rosenbrock::new(2).unwrap();
    assert_eq!(r.eval(&[0.0, 0.0], 0), (1.0, vec![-2.0, 0.0]));
    assert_eq!(r.eval(&[1.0, 1.0], 0), (0.0, vec![0.0, 0.0]));
    let fd = finite_diff_grad(&r, &[0.0, 0.0], 1e-5, 0).unwrap();
    assert!((fd[0] + 2.0).abs() < 1e-6 && fd[1].abs() < 1e-6);
    assert!(Rosenbrock::new(3).is_err());
}

#[test]
fn quadratic_hand_values() {
    let q = ProblemSpec::Quadratic {
        dim: 1,
        condition: 1.0,
        noise: 0.0,
        data_seed: 0,
    }
    .build()
    .unwrap();
    assert_eq!(q.eval(&[3.0], 0), (4.5, vec![3.0]));
    let q = ProblemSpec::Quadratic {
        dim: 6,
        condition: 50.0,
        noise: 0.0,
        data_seed: 0,
    }
    .build()
    .unwrap();
    assert_eq!(q.eval(&[0.0; 6], 0), (0.0, vec![0.0; 6]));
}

// Minibatch gradients average to the full-batch gradient within 3 standard
// errors per coordinate.
#[test]
fn minibatch_gradient_is_unbiased() {
    const DRAWS: u64 = 10_000;
    let lr = LogisticRegression::new(300, 5, 16, 4).unwrap();
    let x = [0.3, -0.2, 0.5, 0.1, -0.4];
    let full = lr.full_batch(&x).1;
    let mut sum = [0.0; 5];
    let mut sq = [0.0; 5];
    for s in 0..DRAWS {
        for (i, g) in lr.eval(&x, s).1.iter().enumerate() {
            sum[i] += g;
            sq[i] += g * g;
        }
    }
    let n = DRAWS as f64;
    for i in 0..5 {
        let mean = sum[i] / n;
        let var = (sq[i] - n * mean * mean) / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - full[i]).abs() <= 3.0 * se,
            "coord {i}: {mean} vs {} (se {se})",
            full[i]
        );
    }
}

#[test]
fn noisy_quadratic_gradient_is_unbiased() {
    const DRAWS: u64 = 10_000;
    let q = ProblemSpec::Quadratic {
        dim: 3,
        condition: 4.0,
        noise: 1.0,
        data_seed: 0,
    }
    .build()
    .unwrap();
    let x = [1.0, -1.0, 0.5];
    let exact = ProblemSpec::Quadratic {
        dim: 3,
        condition: 4.0,
        noise: 0.0,
        data_seed: 0,
    }
    .build()
    .unwrap()
    .eval(&x, 0)
    .1;
    for (i, want) in exact.iter().enumerate() {
        let mean = (0..DRAWS).map(|s| q.eval(&x, s).1[i]).sum::<f64>() / DRAWS as f64;
        assert!(
            (mean - want).abs() <= 3.0 / (DRAWS as f64).sqrt(),
            "coord {i}"
        );
    }
}

#[test]
fn mlp_training_reduces_loss_for_most_seeds() {
    let spec = ProblemSpec::Mlp {
        in_dim: 4,
        hidden_dim: 8,
        n_samples: 256,
        batch_size: 32,
        data_seed: 0,
    };
    let improved = (0..10)
        .filter(|&seed| {
            let r = run(&RunSpec {
                problem: spec.clone(),
                config: AdamConfig::default().with_weight_decay(0.0),
                schedule: Schedule::constant(1e-2, 2000).unwrap(),
                seed,
            })
            .unwrap();
            r.final_loss().is_some_and(|l| l < r.outcome.initial_loss)
        })
        .count();
    assert!(improved >= 9, "{improved}/10");
}

#[test]
fn invalid_problems_are_rejected() {
    let bad = [
        "quadratic:dim=0",
        "quadratic:dim=3;condition=0.5",
        "rosenbrock:dim=5",
        "logistic:n_samples=10;dim=2;batch_size=11;data_seed=0",
        "mlp:in_dim=2;hidden_dim=0;n_samples=10;batch_size=2;data_seed=0",
    ];
    for s in bad {
        let parsed: Result<ProblemSpec, _> = s.parse();
        assert!(parsed.map_or(true, |p| p.build().is_err()), "{s}");
    }
}
