use npchoice::data::SequenceSource;
use npchoice::dual::{dual_run, dual_step, regret_certificate, DualConfig, DualState};
use npchoice::fw::{fw_run, FwConfig};
use npchoice::sim::{self, rng_from_seed};
use npchoice::{ChoiceVector, Distance, Instance, Ranking, Snapshot, SparseModel, StaticSource};
use rand::seq::SliceRandom;
use rand::Rng;

fn random_ranking(rng: &mut impl Rng, n: usize) -> Ranking {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    Ranking::new(order).unwrap()
}

fn sparse_truth(rng: &mut impl Rng, inst: &Instance, k: usize) -> ChoiceVector {
    let mut support: Vec<(Ranking, f64)> = Vec::new();
    while support.len() < k {
        let r = random_ranking(rng, inst.n());
        if support.iter().all(|(s, _)| *s != r) {
            support.push((r, rng.random_range(0.1..1.0)));
        }
    }
    let total: f64 = support.iter().map(|(_, w)| w).sum();
    let model = SparseModel::new(support.into_iter().map(|(r, w)| (r, w / total)).collect()).unwrap();
    inst.predict(&model).unwrap()
}

fn half_sq(x: &ChoiceVector, p: &ChoiceVector) -> f64 {
    0.5 * x.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

#[test]
fn frank_wolfe_meets_rate_bound() {
    let mut rng = rng_from_seed(40);
    for trial in 0..5 {
        let inst = Instance::new(8, sim::sample_assortments(7, 12, trial).unwrap()).unwrap();
        let p = sparse_truth(&mut rng, &inst, 4);
        let r2 = 2.0 * inst.m() as f64;
        for t in [4usize, 10, 40, 200] {
            let mut cfg = FwConfig::new(Distance::SquaredL2, t);
            cfg.stop_train_mae = None;
            let res = fw_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap();
            assert!(half_sq(&res.prediction, &p) <= 8.0 * r2 / t as f64);
            assert!(res.sparsity() <= res.iterations_used + 1);
            assert!(inst.block_sum_error(&res.prediction) <= 1e-9);
            assert_eq!(res.trace.len(), t - 1);
        }
    }
}

#[test]
fn frank_wolfe_objective_trace_tracks_prediction() {
    let mut rng = rng_from_seed(41);
    let inst = Instance::new(6, sim::sample_assortments(5, 8, 1).unwrap()).unwrap();
    let p = sparse_truth(&mut rng, &inst, 3);
    let mut cfg = FwConfig::new(Distance::SquaredL2, 80);
    cfg.stop_train_mae = None;
    let res = fw_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap();
    let last = res.trace.last().unwrap();
    assert!((last.objective - half_sq(&res.prediction, &p)).abs() <= 1e-12);
    for w in res.trace.windows(2) {
        assert!(w[1].sparsity <= w[0].sparsity + 1);
    }
}

#[test]
fn weak_duality_sandwich_and_decomposition() {
    let mut rng = rng_from_seed(42);
    for d in [Distance::L1, Distance::L2, Distance::Linf] {
        for trial in 0..4 {
            let inst = Instance::new(7, sim::sample_assortments(6, 10, trial).unwrap()).unwrap();
            let p = sparse_truth(&mut rng, &inst, 5);
            let mut cfg = DualConfig::new(d.clone(), 300);
            cfg.stop_train_mae = None;
            let (fit, report) = dual_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap();
            let mask = vec![true; inst.m()];
            let gap = d.value(&inst, &fit.prediction, &p, &mask).unwrap();
            // every dual value is a lower bound on the distance of any point of X
            for &f in &report.state.played {
                assert!(f <= gap + 1e-12, "{d}: {f} > {gap}");
            }
            assert!(gap - report.best_dual_value <= report.certificate + 1e-9);
            assert!(report.certificate <= report.regret_bound() + 1e-9);
            assert!(fit.sparsity() <= fit.iterations_used);
        }
    }
}

#[test]
fn certificate_matches_grid_search() {
    let inst = Instance::new(3, vec![vec![1, 2], vec![1, 2, 3]]).unwrap();
    let p = ChoiceVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 1.0]);
    let snap = Snapshot::exact(p, 2);
    let grid: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
    for d in [Distance::L1, Distance::L2, Distance::Linf] {
        let mut state = DualState::new(&inst);
        dual_step(&inst, &mut state, &snap, &d, 0.1).unwrap();
        dual_step(&inst, &mut state, &snap, &d, 0.1).unwrap();
        let cert = regret_certificate(&state, &d).unwrap();

        let ball = d.dual_ball().unwrap();
        let mean_played = state.played.iter().sum::<f64>() / 2.0;
        let mut best = f64::NEG_INFINITY;
        let mut y = [0.0; 5];
        for idx in 0..21usize.pow(5) {
            let mut r = idx;
            for v in y.iter_mut() {
                *v = grid[r % 21];
                r /= 21;
            }
            if ball.norm(&y) <= 1.0 + 1e-12 {
                let val: f64 = y.iter().zip(&state.grad_sum).map(|(a, g)| a * g / 2.0).sum();
                best = best.max(val);
            }
        }
        let searched = best - mean_played;
        match d {
            // vertices of the box and of the cross-polytope lie on the grid
            Distance::L1 | Distance::Linf => assert!((cert - searched).abs() <= 1e-12, "{d}: {cert} vs {searched}"),
            _ => assert!(cert >= searched - 1e-12 && cert - searched <= 0.05, "{d}: {cert} vs {searched}"),
        }
        assert!(cert >= -1e-12);
    }
}

#[test]
fn interior_dual_path_does_not_depend_on_the_norm() {
    // while no projection is active the iterate is gamma times the summed
    // supergradients, and the oracle is invariant to positive scaling
    let mut rng = rng_from_seed(43);
    let inst = Instance::new(7, sim::sample_assortments(6, 10, 9).unwrap()).unwrap();
    let p = sparse_truth(&mut rng, &inst, 6);
    let snap = Snapshot::exact(p, inst.m());
    let mut paths = Vec::new();
    for (d, gamma) in [(Distance::L1, 1e-3), (Distance::L2, 2e-4), (Distance::Linf, 5e-4)] {
        let mut state = DualState::new(&inst);
        for _ in 0..60 {
            dual_step(&inst, &mut state, &snap, &d, gamma).unwrap();
            assert!(d.dual_ball().unwrap().norm(&state.y) < 1.0);
        }
        paths.push(state.rankings);
    }
    assert_eq!(paths[0], paths[1]);
    assert_eq!(paths[1], paths[2]);
}

#[test]
fn constant_stream_equals_static_for_both_solvers() {
    let mut rng = rng_from_seed(44);
    let inst = Instance::new(6, sim::sample_assortments(5, 8, 4).unwrap()).unwrap();
    let p = sparse_truth(&mut rng, &inst, 3);
    let snaps = vec![Snapshot::exact(p.clone(), inst.m()); 400];

    let cfg = DualConfig::new(Distance::L2, 400);
    let (a, _) = dual_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap();
    let (b, _) = dual_run(&inst, &cfg, &mut SequenceSource::new(snaps.clone())).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model, b.model);

    let cfg = FwConfig::new(Distance::SquaredL2, 400);
    let a = fw_run(&inst, &cfg, &mut StaticSource::exact(&inst, p)).unwrap();
    let b = fw_run(&inst, &cfg, &mut SequenceSource::new(snaps)).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn unseen_assortments_stay_neutral() {
    // a masked-out block contributes neither cost nor gradient
    let inst = Instance::new(4, vec![vec![1, 2], vec![1, 3], vec![1, 2, 3, 4]]).unwrap();
    let p = ChoiceVector::from_vec(vec![0.2, 0.8, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    let snap = Snapshot {
        probs: p,
        mask: vec![true, true, false],
    };
    let mut state = DualState::new(&inst);
    for _ in 0..5 {
        dual_step(&inst, &mut state, &snap, &Distance::L1, 0.1).unwrap();
    }
    assert!(state.y[4..].iter().all(|&v| v == 0.0));
    assert!(state.grad_sum[4..].iter().all(|&v| v == 0.0));
}

#[test]
fn fw_dynamic_stream_stays_feasible() {
    let truth = sim::gen_mmnl(6, 3, 5.0, 3).unwrap();
    let inst = Instance::new(7, sim::sample_assortments(6, 10, 3).unwrap()).unwrap();
    let mut src = sim::make_data_source(&truth, &inst, sim::StreamConfig::new(sim::Batch::Finite(50), 3)).unwrap();
    let mut cfg = FwConfig::new(Distance::SquaredL2, 300);
    cfg.stop_train_mae = Some(0.005);
    let res = fw_run(&inst, &cfg, &mut src).unwrap();
    assert!(inst.block_sum_error(&res.prediction) <= 1e-9);
    assert!(res.sparsity() <= res.iterations_used + 1);
    if res.stopped_by_rule {
        assert!(res.train_mae <= 0.005);
    }
    assert_eq!(res.observations_used, Some(2000 + 50 * (res.data_snapshots_used as u64 - 1)));
}
