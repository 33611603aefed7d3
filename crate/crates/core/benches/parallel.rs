//! Compares the rayon data-parallel paths against the sequential fallback
//! on the two workloads that fan out: batched gradient computation and
//! greedy evaluation sweeps. Results are bit-identical between paths; only
//! wall-clock time differs.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rusleep_core::model::ScenarioSpace;
use rusleep_core::par;
use rusleep_core::reward::Regime;
use rusleep_core::td3::{Mlp, MlpGrads, OutputActivation};
use rusleep_core::{env::SleepEnv, run::ci_stat};

fn batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Critic-style MSE gradients over a batch, chunk-reduced either
/// sequentially or through rayon.
fn critic_grads(critic: &Mlp, inputs: &[Vec<f64>], targets: &[f64], parallel: bool) -> (f64, MlpGrads) {
    let b = inputs.len() as f64;
    let make = || (0.0f64, MlpGrads::zeros_like(critic));
    let fold = |(loss, grads): &mut (f64, MlpGrads), i: usize| {
        let cache = critic.forward_cached(&inputs[i]);
        let diff = cache.y[0] - targets[i];
        *loss += diff * diff;
        critic.backward(&cache, &[2.0 * diff / b], grads);
    };
    let merge = |a: &mut (f64, MlpGrads), b: (f64, MlpGrads)| {
        a.0 += b.0;
        a.1.add_assign(&b.1);
    };
    let (loss, grads) = if parallel {
        par::fold_chunks_par(inputs.len(), par::GRAD_CHUNK, make, fold, merge).unwrap()
    } else {
        par::fold_chunks_seq(inputs.len(), par::GRAD_CHUNK, make, fold, merge).unwrap()
    };
    (loss / b, grads)
}

fn bench_batch_gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let critic = Mlp::new(&[16, 400, 300, 1], OutputActivation::Linear, &mut rng);
    let inputs = batch(&mut rng, 256, 16);
    let targets: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // Same bits from both paths.
    let (seq_loss, seq_grads) = critic_grads(&critic, &inputs, &targets, false);
    let (par_loss, par_grads) = critic_grads(&critic, &inputs, &targets, true);
    assert_eq!(seq_loss.to_bits(), par_loss.to_bits());
    assert_eq!(seq_grads, par_grads);

    let mut group = c.benchmark_group("critic_batch_grads_256");
    group.bench_function("sequential", |b| {
        b.iter(|| critic_grads(&critic, &inputs, &targets, false))
    });
    group.bench_function("rayon", |b| {
        b.iter(|| critic_grads(&critic, &inputs, &targets, true))
    });
    group.finish();
}

/// Greedy rollouts across seeds, mapped either sequentially or in parallel.
fn eval_sweep(actor: &Mlp, seeds: &[u64], parallel: bool) -> f64 {
    let rollout = |&seed: &u64| -> f64 {
        let mut env = SleepEnv::new(ScenarioSpace::default(), Regime::Markov, 30).unwrap();
        let mut obs = env.reset(seed).unwrap();
        for _ in 0..30 {
            let action = actor.forward(&obs.to_vec());
            obs = env.step(&action).unwrap().observation;
        }
        env.metrics().mean_ee
    };
    let ees = if parallel {
        par::map_collect_par(seeds, rollout)
    } else {
        par::map_collect_seq(seeds, rollout)
    };
    ci_stat(&ees).mean
}

fn bench_eval_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let actor = Mlp::new(&[10, 64, 64, 4], OutputActivation::TanhUnit, &mut rng);
    let seeds: Vec<u64> = (0..16).collect();

    assert_eq!(
        eval_sweep(&actor, &seeds, false).to_bits(),
        eval_sweep(&actor, &seeds, true).to_bits()
    );

    let mut group = c.benchmark_group("eval_sweep_16_seeds");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter_batched(|| seeds.clone(), |s| eval_sweep(&actor, &s, false), BatchSize::SmallInput)
    });
    group.bench_function("rayon", |b| {
        b.iter_batched(|| seeds.clone(), |s| eval_sweep(&actor, &s, true), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bench_batch_gradients, bench_eval_sweep);
criterion_main!(benches);
