//! Scores and posteriors checked against independent computations.

use jambayes_core::bn::score::{gaussian_log_ml, multinomial_log_ml, GaussianStats, NigPrior};
use jambayes_core::bn::{
    query, structure_search, Dataset, Evidence, InferenceConfig, Leaf, Method, Posterior, Priors, Role, Schema,
    SearchConfig, Value, Variable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sequential Pólya-urn predictive probabilities.
fn polya_log_ml(sequence: &[usize], arity: usize, ess: f64) -> f64 {
    let alpha = ess / arity as f64;
    let mut counts = vec![0.0; arity];
    let mut total = 0.0;
    let mut ll = 0.0;
    for &k in sequence {
        ll += ((counts[k] + alpha) / (total + ess)).ln();
        counts[k] += 1.0;
        total += 1.0;
    }
    ll
}

#[test]
fn multinomial_matches_polya_urn() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for arity in [2usize, 3, 7] {
        for ess in [0.5, 1.0, 4.0] {
            let seq: Vec<usize> = (0..40).map(|_| rng.gen_range(0..arity)).collect();
            let mut counts = vec![0.0; arity];
            seq.iter().for_each(|&k| counts[k] += 1.0);
            let got = multinomial_log_ml(&counts, ess);
            let want = polya_log_ml(&seq, arity, ess);
            assert!((got - want).abs() < 1e-9, "arity {arity} ess {ess}: {got} vs {want}");
        }
    }
}

/// Integrates the likelihood against the NIG prior on a trapezoid grid over
/// `u = (μ - μ0)·sqrt(κ0)/σ` and `ln σ²`. `alpha` must be a positive integer.
pub fn quadrature_log_ml(xs: &[f64], prior: &NigPrior<f64>) -> f64 {
    let (nm, ns) = (800usize, 2000usize);
    let (mlo, mhi) = (-12.0, 12.0);
    let (slo, shi) = (-14.0, 16.0);
    let dm = (mhi - mlo) / nm as f64;
    let ds = (shi - slo) / ns as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let gamma_alpha: f64 = (1..prior.alpha.round() as u64).map(|k| k as f64).product();
    let mut total = 0.0;
    for i in 0..=ns {
        let s = slo + i as f64 * ds;
        let var = s.exp();
        // IG density in σ², times the Jacobian σ² of the ln transform.
        let ig = prior.beta.powf(prior.alpha) / gamma_alpha * var.powf(-prior.alpha) * (-prior.beta / var).exp();
        let wi = if i == 0 || i == ns { 0.5 } else { 1.0 };
        let mut inner = 0.0;
        for j in 0..=nm {
            let u = mlo + j as f64 * dm;
            let mu = prior.mu + u * (var / prior.kappa).sqrt();
            let wj = if j == 0 || j == nm { 0.5 } else { 1.0 };
            let lik: f64 = xs
                .iter()
                .map(|x| (-(x - mu).powi(2) / (2.0 * var)).exp() / (two_pi * var).sqrt())
                .product();
            inner += wj * (-u * u / 2.0).exp() * lik;
        }
        total += wi * ig * inner * dm / two_pi.sqrt();
    }
    (total * ds).ln()
}

#[test]
fn gaussian_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut cases: Vec<(Vec<f64>, NigPrior<f64>)> = vec![(vec![0.0], NigPrior::standard())];
    while cases.len() < 20 {
        let n = rng.gen_range(1..=5);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let prior = if cases.len() % 2 == 0 {
            NigPrior::standard()
        } else {
            NigPrior {
                mu: rng.gen_range(-1.0..1.0),
                kappa: rng.gen_range(0.5..3.0),
                alpha: rng.gen_range(1..=3) as f64,
                beta: rng.gen_range(0.5..2.0),
            }
        };
        cases.push((xs, prior));
    }
    for (xs, prior) in cases {
        let got = gaussian_log_ml(&GaussianStats::from_values(&xs), &prior);
        let want = quadrature_log_ml(&xs, &prior);
        assert!(((got - want).exp() - 1.0).abs() < 1e-6, "{xs:?} {prior:?}: {got} vs {want}");
    }
}

fn discrete_chain(rows: usize, seed: u64) -> Dataset {
    discrete_chain_with(rows, seed, Role::Evidence)
}

fn discrete_chain_with(rows: usize, seed: u64, c_role: Role) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = Schema::new(vec![
        Variable::discrete("a", 3, Role::Evidence),
        Variable::discrete("b", 2, Role::Evidence),
        Variable::discrete("c", 2, c_role),
    ])
    .unwrap();
    let data: Vec<Vec<Value>> = (0..rows)
        .map(|_| {
            let a = rng.gen_range(0..3);
            let b = usize::from(rng.gen_bool(if a == 0 { 0.1 } else if a == 1 { 0.5 } else { 0.85 }));
            let c = usize::from(rng.gen_bool(if b == 0 { 0.2 } else { 0.75 }));
            vec![Value::State(a), Value::State(b), Value::State(c)]
        })
        .collect();
    Dataset::from_rows(schema, &data).unwrap()
}

/// Joint probability of a full discrete assignment.
fn joint(net: &jambayes_core::bn::BayesNet, assignment: &[usize]) -> f64 {
    (0..assignment.len())
        .map(|v| match net.cpds[v].leaf_for(|p| Some(Value::State(assignment[p]))).unwrap() {
            Leaf::Multinomial(m) => m.probability(assignment[v]),
            Leaf::BinaryGaussian(_) => unreachable!(),
        })
        .product()
}

fn enumerate_posterior(net: &jambayes_core::bn::BayesNet, observed: &[(usize, usize)], target: usize) -> Vec<f64> {
    let arities: Vec<usize> = net.schema.variables().iter().map(|v| v.arity().unwrap()).collect();
    let mut post = vec![0.0; arities[target]];
    let total: usize = arities.iter().product();
    for code in 0..total {
        let mut rest = code;
        let assignment: Vec<usize> = arities
            .iter()
            .map(|&k| {
                let s = rest % k;
                rest /= k;
                s
            })
            .collect();
        if observed.iter().all(|&(v, s)| assignment[v] == s) {
            post[assignment[target]] += joint(net, &assignment);
        }
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|p| p / z).collect()
}

#[test]
fn likelihood_weighting_matches_enumeration() {
    let data = discrete_chain(4000, 3);
    let net = structure_search(&data, &Priors::default(), &SearchConfig::default()).unwrap();
    let cfg = InferenceConfig {
        samples: 40_000,
        seed: 5,
    };
    let queries: Vec<(Vec<(usize, usize)>, usize)> = vec![
        (vec![(2, 1)], 0),
        (vec![(2, 0)], 1),
        (vec![(0, 2)], 2),
        (vec![], 2),
        (vec![(0, 0), (2, 1)], 1),
    ];
    for (obs, target) in queries {
        let mut ev = Evidence::new(3);
        for &(v, s) in &obs {
            ev.set(v, Value::State(s));
        }
        let want = enumerate_posterior(&net, &obs, target);
        match query(&net, &ev, target, &cfg).unwrap() {
            Posterior::Discrete { probabilities, .. } => {
                for (g, w) in probabilities.iter().zip(&want) {
                    assert!((g - w).abs() < 0.015, "{obs:?} -> {target}: {probabilities:?} vs {want:?}");
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn exact_lookup_used_when_path_observed() {
    let data = discrete_chain_with(4000, 4, Role::Target);
    let net = structure_search(&data, &Priors::default(), &SearchConfig::default()).unwrap();
    let mut ev = Evidence::new(3);
    ev.set(0, Value::State(1));
    ev.set(1, Value::State(1));
    let post = query(&net, &ev, 2, &InferenceConfig::default()).unwrap();
    assert_eq!(post.method(), Method::Exact);
    let want = enumerate_posterior(&net, &[(0, 1), (1, 1)], 2);
    let Posterior::Discrete { probabilities, .. } = post else { panic!() };
    for (g, w) in probabilities.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn continuous_target_mixture_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let schema = Schema::new(vec![
        Variable::discrete("a", 2, Role::Evidence),
        Variable::continuous("t", Role::Target),
    ])
    .unwrap();
    let rows: Vec<Vec<Value>> = (0..3000)
        .map(|_| {
            let a = rng.gen_range(0..2);
            let t = if a == 0 {
                if rng.gen_bool(0.9) {
                    Value::Present(10.0 + rng.gen::<f64>() * 4.0)
                } else {
                    Value::Absent
                }
            } else if rng.gen_bool(0.3) {
                Value::Present(40.0 + rng.gen::<f64>() * 10.0)
            } else {
                Value::Absent
            };
            vec![Value::State(a), t]
        })
        .collect();
    let data = Dataset::from_rows(schema, &rows).unwrap();
    let net = structure_search(&data, &Priors::default(), &SearchConfig::default()).unwrap();
    assert_eq!(net.parents[1], vec![0]);

    let pa = match net.cpds[0].leaf_for(|_| None).unwrap() {
        Leaf::Multinomial(m) => m.distribution(),
        _ => unreachable!(),
    };
    let std = net.cpds[1].standardizer.unwrap();
    let (mut wp, mut wpm, mut wpm2) = (0.0, 0.0, 0.0);
    for (s, &p_a) in pa.iter().enumerate() {
        let Leaf::BinaryGaussian(g) = net.cpds[1].leaf_for(|_| Some(Value::State(s))).unwrap() else {
            unreachable!()
        };
        let (m, sd) = g.moments(&std);
        wp += p_a * g.p_present();
        wpm += p_a * g.p_present() * m;
        wpm2 += p_a * g.p_present() * (sd * sd + m * m);
    }
    let want_mean = wpm / wp;
    let want_std = (wpm2 / wp - want_mean * want_mean).sqrt();

    let post = query(&net, &Evidence::new(2), 1, &InferenceConfig { samples: 20_000, seed: 1 }).unwrap();
    let Posterior::Continuous { p_present, mean, std: sd, method } = post else {
        panic!()
    };
    assert_eq!(method, Method::LikelihoodWeighting);
    assert!((p_present - wp).abs() < 0.01, "{p_present} vs {wp}");
    assert!((mean - want_mean).abs() < 0.3, "{mean} vs {want_mean}");
    assert!((sd - want_std).abs() < 0.3, "{sd} vs {want_std}");
}

#[test]
fn model_json_round_trip() {
    let data = discrete_chain(500, 9);
    let net = structure_search(&data, &Priors::default(), &SearchConfig::default()).unwrap();
    let json = net.to_json().unwrap();
    let back = jambayes_core::bn::BayesNet::from_json(&json).unwrap();
    assert_eq!(net, back);
    let bumped = json.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    assert!(jambayes_core::bn::BayesNet::from_json(&bumped).is_err());
}
