use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use npchoice::dual::{dual_step, DualState};
use npchoice::oracle::{solve_bnb, solve_enum};
use npchoice::sim::{gen_mmnl, rng_from_seed, sample_assortments};
use npchoice::{dual_run, fw_run, Distance, DualConfig, FwConfig, Instance, Snapshot, StaticSource};
use rand::Rng;

fn instance(products: usize, m: usize) -> Instance {
    Instance::new(products + 1, sample_assortments(products, m, 1).unwrap()).unwrap()
}

fn costs(inst: &Instance, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..inst.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    for products in [4usize, 6] {
        let inst = instance(products, 10);
        let cost = costs(&inst, 3);
        group.bench_with_input(BenchmarkId::new("enum", products), &products, |b, _| {
            b.iter(|| solve_enum(&inst, black_box(&cost)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("bnb", products), &products, |b, _| {
            b.iter(|| solve_bnb(&inst, black_box(&cost)).unwrap())
        });
    }
    let inst = instance(10, 20);
    let cost = costs(&inst, 4);
    group.bench_function("bnb/10", |b| b.iter(|| solve_bnb(&inst, black_box(&cost)).unwrap()));
    group.finish();
}

fn dual(c: &mut Criterion) {
    let truth = gen_mmnl(10, 5, 5.0, 2).unwrap();
    let inst = instance(10, 20);
    let p = npchoice::sim::exact_choice_vector(&truth, &inst).unwrap();
    let snap = Snapshot::exact(p.clone(), inst.m());

    c.bench_function("dual/step", |b| {
        b.iter_batched(
            || DualState::new(&inst),
            |mut state| {
                for _ in 0..20 {
                    dual_step(&inst, &mut state, &snap, &Distance::L2, 0.01).unwrap();
                }
                state
            },
            criterion::BatchSize::SmallInput,
        )
    });

    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("dual_l2", |b| {
        let cfg = DualConfig::new(Distance::L2, 10_000);
        b.iter(|| dual_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap())
    });
    group.bench_function("fw_sql2", |b| {
        let cfg = FwConfig::new(Distance::SquaredL2, 10_000);
        b.iter(|| fw_run(&inst, &cfg, &mut StaticSource::exact(&inst, p.clone())).unwrap())
    });
    group.finish();
}

criterion_group!(benches, oracle, dual);
criterion_main!(benches);
