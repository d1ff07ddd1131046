use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use goodhart_core::conditioning::{condition_sweep, conditional_mean};
use goodhart_core::diagnostics::tail_report;
use goodhart_core::distributions::{Normal, Pareto, StudentT};
use goodhart_core::mdp::{assign_ranked_returns, lift_sweep, midpoint_atoms, token_chain};
use goodhart_core::rng::stream_rng;
use goodhart_core::tilting::{build_tail_upweighted, upweighted_kl, upweighted_mean};
use goodhart_core::{
    ConditioningProblem, Dist, Distribution, HScheme, RegionScheme, SampleSet, TailUpweightConfig,
};

fn tilting(c: &mut Criterion) {
    let base: Dist = std::sync::Arc::new(StudentT::new(3.0, 0.0, 1.0).unwrap());
    c.bench_function("upweighted_mean/student_t3/t=1e4", |b| {
        b.iter(|| {
            let p = build_tail_upweighted(
                TailUpweightConfig::new(base.clone(), 1.0, black_box(1e4)).with_gamma(0.8),
            )
            .unwrap();
            (upweighted_mean(&p).unwrap(), upweighted_kl(&p))
        })
    });
}

fn conditioning(c: &mut Criterion) {
    let v: Dist = std::sync::Arc::new(Normal::standard());
    let x: Dist = std::sync::Arc::new(Pareto::new(1.5, 1.0).unwrap());
    c.bench_function("conditional_mean/normal+pareto1.5/t=1e6", |b| {
        b.iter(|| {
            let p = ConditioningProblem::independent(v.clone(), x.clone(), black_box(1e6)).unwrap();
            conditional_mean(&p).unwrap()
        })
    });
    let scheme = RegionScheme::new(HScheme::Sqrt);
    c.bench_function("condition_sweep/region_table/3_points", |b| {
        b.iter(|| condition_sweep(&v, &x, &scheme, black_box(&[1e2, 1e4, 1e6])).unwrap())
    });
}

fn mdp(c: &mut Criterion) {
    let (mut m, pol) = token_chain(3, 5).unwrap();
    let atoms = midpoint_atoms(&Pareto::new(1.5, 1.0).unwrap(), 64);
    assign_ranked_returns(&mut m, &pol, &atoms).unwrap();
    c.bench_function("lift_sweep/token_chain_3x5", |b| {
        b.iter(|| lift_sweep(&m, &pol, 3.0, 1.0, black_box(&[4.0, 8.0, 16.0])).unwrap())
    });
}

fn diagnostics(c: &mut Criterion) {
    let values = Pareto::new(1.5, 1.0)
        .unwrap()
        .sample(&mut stream_rng(1, 0), 10_000);
    let s = SampleSet::new(values, "pareto:1.5,1", Some(1)).unwrap();
    c.bench_function("tail_report/n=1e4", |b| {
        b.iter(|| tail_report(black_box(&s), None).unwrap())
    });
}

criterion_group!(benches, tilting, conditioning, mdp, diagnostics);
criterion_main!(benches);
