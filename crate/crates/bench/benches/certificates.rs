use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use scencert::certificates::{
    allocation_region, apriori_bound_diagonal, apriori_bound_independent, diagonal_region,
    joint_bound_region_max, REGION_MAX_DIMS,
};
use scencert::numerics::Psi;
use scencert::scenario::{solve, trial_datasets, RobustLp2d};
use scencert::{AllocationSpec, MultiIndex, PsiSpec, IntervalChoice, DEFAULT_TOLERANCE};
use scencert_bench::{many_criteria, two_criteria, APRIORI};

fn psi(c: &mut Criterion) {
    let (n, k) = two_criteria();
    let p = Psi::new(&PsiSpec::new(k.clone(), n.clone(), n.scale(2), 1e-5).unwrap()).unwrap();
    c.bench_function("psi_eval_m2", |b| b.iter(|| p.eval(black_box(0.8)).unwrap()));
    c.bench_function("root_pair_m2", |b| b.iter(|| p.root_pair(black_box(DEFAULT_TOLERANCE)).unwrap()));
    let (n, k) = many_criteria();
    c.bench_function("diagonal_region_m100", |b| b.iter(|| diagonal_region(&n, &n, black_box(&k), 1e-7).unwrap()));
}

fn regions(c: &mut Criterion) {
    let (n, k) = two_criteria();
    let uni = AllocationSpec::uniform(n.clone(), n.scale(2), 1e-5).unwrap();
    let g = uni.region_fn(&k).unwrap();
    c.bench_function("uniform_region_fn_m2", |b| b.iter(|| g.eval(black_box(&[0.12, 0.05])).unwrap()));
    let cert = allocation_region(&uni, &k).unwrap();
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("uniform_region_max_m2_res100", |b| {
        b.iter(|| joint_bound_region_max(&cert, REGION_MAX_DIMS, black_box(100)).unwrap())
    });
    group.finish();
}

fn apriori(c: &mut Criterion) {
    let (nl, ks, beta) = APRIORI;
    let mut group = c.benchmark_group("apriori");
    group.sample_size(10);
    group.bench_function("independent_m50", |b| {
        b.iter(|| apriori_bound_independent(&vec![(nl, beta / 50.0); 50], black_box(ks), IntervalChoice::UpperOnlyHN))
    });
    group.bench_function("diagonal_m1000", |b| {
        let n = MultiIndex::filled(1000, nl).unwrap();
        b.iter(|| apriori_bound_diagonal(&n, beta, black_box(ks)).unwrap())
    });
    group.finish();
}

fn lp(c: &mut Criterion) {
    let p = RobustLp2d::standard();
    let n = MultiIndex::new(vec![40, 40]).unwrap();
    let data = trial_datasets(&p, &n, 1, 0).unwrap();
    c.bench_function("robust_lp2d_solve_80", |b| b.iter(|| solve(&p, black_box(&data)).unwrap()));
}

criterion_group!(benches, psi, regions, apriori, lp);
criterion_main!(benches);
