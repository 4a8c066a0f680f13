use ccspline::estimator::InputSignal;
use ccspline::tuning::{
    empirical_bayes_tune, neg_log_marginal_likelihood, neg_log_marginal_likelihood_dense,
    KernelFamily, OptimizerConfig,
};
use ccspline_bench::study_dataset;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn objective(c: &mut Criterion) {
    let data = study_dataset();
    let family = KernelFamily::ProposedTwoPole;
    let theta = [3.0, 1.0, 0.5];
    let kernel = family.kernel(&theta).unwrap();
    c.bench_function("eb_objective_structured", |b| {
        b.iter(|| {
            neg_log_marginal_likelihood(black_box(&theta), &data, &family, &InputSignal::Impulse)
        })
    });
    c.bench_function("eb_objective_dense", |b| {
        b.iter(|| {
            neg_log_marginal_likelihood_dense(black_box(&kernel), &data, &InputSignal::Impulse)
        })
    });
}

fn tune(c: &mut Criterion) {
    let data = study_dataset();
    let cfg = OptimizerConfig::default();
    let mut g = c.benchmark_group("eb_tune");
    g.sample_size(10);
    for family in [KernelFamily::ProposedTwoPole, KernelFamily::Tc] {
        g.bench_function(family.name(), |b| {
            b.iter(|| empirical_bayes_tune(&data, &family, &InputSignal::Impulse, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, objective, tune);
criterion_main!(benches);
