use std::collections::{BTreeMap, BTreeSet};

use npchoice::oracle::{prefix_lower_bound, ranking_value, solve_bnb, solve_enum, write_ip};
use npchoice::sim::{rng_from_seed, sample_assortments};
use npchoice::{Instance, Ranking};
use rand::seq::SliceRandom;
use rand::Rng;

fn random_instance(rng: &mut impl Rng, n: usize, m: usize) -> Instance {
    // any distinct product subsets, capped at what n allows
    let products = n - 1;
    let mut sets = BTreeSet::new();
    let max = (1usize << products) - 1;
    let m = m.min(max);
    while sets.len() < m {
        let mask = rng.random_range(1..=max);
        let set: Vec<usize> = (0..products).filter(|b| mask >> b & 1 == 1).map(|b| b + 2).collect();
        sets.insert(set);
    }
    Instance::new(n, sets.into_iter().collect()).unwrap()
}

fn random_costs(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn all_rankings(n: usize) -> Vec<Ranking> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Ranking>) {
        if left.is_empty() {
            out.push(Ranking::new(prefix.clone()).unwrap());
            return;
        }
        for k in 0..left.len() {
            let item = left.remove(k);
            prefix.push(item);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(k, item);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (1..=n).collect(), &mut out);
    out
}

#[test]
fn bnb_matches_enumeration_on_random_instances() {
    let mut rng = rng_from_seed(2024);
    for trial in 0..200 {
        let n = rng.random_range(3..=7);
        let m = rng.random_range(1..=10);
        let inst = random_instance(&mut rng, n, m);
        let c = random_costs(&mut rng, inst.dim());
        let e = solve_enum(&inst, &c).unwrap();
        let b = solve_bnb(&inst, &c).unwrap();
        assert_eq!(e.value, b.value, "trial {trial}");
        assert_eq!(e.ranking, b.ranking, "trial {trial}");
        assert_eq!(b.value, ranking_value(&inst, &b.ranking, &c).unwrap());
    }
}

#[test]
fn bnb_matches_enumeration_with_heavy_ties() {
    // costs on a coarse grid make many rankings tie
    let mut rng = rng_from_seed(5);
    for trial in 0..200 {
        let n = rng.random_range(3..=7);
        let inst = {
            let m = rng.random_range(1..=10);
            random_instance(&mut rng, n, m)
        };
        let c: Vec<f64> = (0..inst.dim()).map(|_| rng.random_range(-1..=1) as f64).collect();
        let e = solve_enum(&inst, &c).unwrap();
        let b = solve_bnb(&inst, &c).unwrap();
        assert_eq!((e.value, &e.ranking), (b.value, &b.ranking), "trial {trial}");
    }
}

#[test]
fn enumeration_returns_lex_smallest_optimum() {
    let mut rng = rng_from_seed(9);
    for trial in 0..30 {
        let inst = random_instance(&mut rng, 5, 4);
        let c: Vec<f64> = (0..inst.dim()).map(|_| rng.random_range(0..=1) as f64).collect();
        let best = all_rankings(5)
            .into_iter()
            .map(|r| (ranking_value(&inst, &r, &c).unwrap(), r))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
            .unwrap();
        let e = solve_enum(&inst, &c).unwrap();
        assert_eq!((e.value, e.ranking), best, "trial {trial}");
    }
}

#[test]
fn bnb_is_deterministic() {
    let mut rng = rng_from_seed(77);
    let inst = Instance::new(11, sample_assortments(10, 30, 3).unwrap()).unwrap();
    let c = random_costs(&mut rng, inst.dim());
    let a = solve_bnb(&inst, &c).unwrap();
    let b = solve_bnb(&inst, &c).unwrap();
    assert_eq!(a, b);
}

#[test]
fn prefix_bound_is_admissible() {
    let mut rng = rng_from_seed(31);
    for trial in 0..40 {
        let n = rng.random_range(3..=6);
        let inst = {
            let m = rng.random_range(1..=8);
            random_instance(&mut rng, n, m)
        };
        let c = random_costs(&mut rng, inst.dim());
        let rankings = all_rankings(n);
        // every prefix of a few random rankings
        for _ in 0..5 {
            let mut order: Vec<usize> = (1..=n).collect();
            order.shuffle(&mut rng);
            for k in 0..=n {
                let prefix = &order[..k];
                let bound = prefix_lower_bound(&inst, &c, prefix).unwrap();
                let best = rankings
                    .iter()
                    .filter(|r| r.order().starts_with(prefix))
                    .map(|r| ranking_value(&inst, r, &c).unwrap())
                    .fold(f64::INFINITY, f64::min);
                assert!(bound <= best, "trial {trial}, prefix {prefix:?}: {bound} > {best}");
                if k == n {
                    assert_eq!(bound, best);
                }
            }
        }
    }
}

/// A linear program in the subset of LP format produced by the exporter.
struct Lp {
    objective: BTreeMap<String, f64>,
    rows: Vec<(BTreeMap<String, f64>, String, f64)>,
    binaries: Vec<String>,
}

fn parse_terms(text: &str) -> BTreeMap<String, f64> {
    let mut terms = BTreeMap::new();
    let mut sign = 1.0;
    let mut coef = 1.0;
    for tok in text.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            t => match t.parse::<f64>() {
                Ok(v) => coef = v,
                Err(_) => {
                    *terms.entry(t.to_string()).or_insert(0.0) += sign * coef;
                    sign = 1.0;
                    coef = 1.0;
                }
            },
        }
    }
    terms
}

fn parse_lp(text: &str) -> Lp {
    let mut section = "";
    let mut lp = Lp {
        objective: BTreeMap::new(),
        rows: Vec::new(),
        binaries: Vec::new(),
    };
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('\\')) {
        match line {
            "Minimize" | "Subject To" | "Binaries" | "End" => {
                section = line;
                continue;
            }
            _ => {}
        }
        let body = line.split_once(':').map_or(line, |(_, b)| b);
        match section {
            "Minimize" => lp.objective = parse_terms(body),
            "Subject To" => {
                let op = ["<=", ">=", "="].into_iter().find(|op| body.contains(op)).unwrap();
                let (lhs, rhs) = body.split_once(op).unwrap();
                lp.rows.push((parse_terms(lhs), op.to_string(), rhs.trim().parse().unwrap()));
            }
            "Binaries" => lp.binaries.push(line.to_string()),
            other => panic!("unexpected section {other}"),
        }
    }
    lp
}

/// Exhaustive minimum over all 0/1 assignments.
fn brute_force(lp: &Lp) -> Option<f64> {
    let vars = &lp.binaries;
    assert!(vars.len() <= 20);
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << vars.len()) {
        let value = |terms: &BTreeMap<String, f64>| -> f64 {
            terms
                .iter()
                .map(|(v, c)| {
                    let k = vars.iter().position(|b| b == v).expect("declared binary");
                    c * f64::from((mask >> k) & 1)
                })
                .sum()
        };
        let feasible = lp.rows.iter().all(|(terms, op, rhs)| {
            let lhs = value(terms);
            match op.as_str() {
                "<=" => lhs <= rhs + 1e-12,
                ">=" => lhs >= rhs - 1e-12,
                _ => (lhs - rhs).abs() <= 1e-12,
            }
        });
        if feasible {
            let v = value(&lp.objective);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

#[test]
fn exported_program_solves_to_oracle_value() {
    let inst = Instance::new(3, vec![vec![1, 2], vec![1, 2, 3]]).unwrap();
    let c = [0.5, 0.2, 0.1, 0.4, 0.3];
    let mut text = Vec::new();
    write_ip(&inst, &c, &mut text).unwrap();
    let lp = parse_lp(std::str::from_utf8(&text).unwrap());
    assert_eq!(lp.binaries.iter().filter(|b| b.starts_with("x_")).count(), 6);
    let best = brute_force(&lp).unwrap();
    assert!((best - 0.5).abs() < 1e-12);
}

#[test]
fn exported_program_matches_oracle_on_random_costs() {
    let mut rng = rng_from_seed(8);
    for trial in 0..10 {
        let inst = random_instance(&mut rng, 3, 3);
        let c = random_costs(&mut rng, inst.dim());
        let mut text = Vec::new();
        write_ip(&inst, &c, &mut text).unwrap();
        let best = brute_force(&parse_lp(std::str::from_utf8(&text).unwrap())).unwrap();
        let exact = solve_enum(&inst, &c).unwrap().value;
        assert!((best - exact).abs() < 1e-9, "trial {trial}: {best} vs {exact}");
    }
}

#[test]
fn exported_program_with_zero_costs() {
    let inst = Instance::new(3, vec![vec![1, 2], vec![1, 2, 3]]).unwrap();
    let mut text = Vec::new();
    write_ip(&inst, &[0.0; 5], &mut text).unwrap();
    let lp = parse_lp(std::str::from_utf8(&text).unwrap());
    assert!(lp.objective.values().all(|&v| v == 0.0));
    assert_eq!(brute_force(&lp), Some(0.0));
}
