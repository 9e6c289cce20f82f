use std::time::Instant;
use uamm_core::config::ExperimentConfig;
use uamm_core::datagen::{generate_scene_with, make_split, SceneConfig};
use uamm_core::rng::derive_u64;
use uamm_core::trainer::{stack_images, train_stage1};
use uamm_core::uncertainty::mc_uncertainty_batch;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.backbone = uamm_core::ArchSpec::uniform_dropout(3, vec![6, 12, 24], 0.5);
    cfg.train.stage1_micro_epochs = 300;
    cfg.train.stage1_macro_epochs = 12;
    cfg.train.val_every = 0;
    cfg.uncertainty.mc_samples = 4;
    cfg.data.count = 300;
    cfg.seed = 1;

    let scene_cfg = SceneConfig::new(cfg.data.height, cfg.data.width, cfg.data.num_classes);
    let samples: Vec<_> = (0..cfg.data.count)
        .map(|i| generate_scene_with::<f32>(&scene_cfg, derive_u64(cfg.seed, "scene", i as u64)).unwrap())
        .collect();
    let split = make_split(samples, cfg.data.full_fraction, derive_u64(cfg.seed, "split", 0)).unwrap();

    let t0 = Instant::now();
    let s1 = train_stage1::<f32>(&split, &cfg).unwrap();
    println!("stage1: {:.1}s", t0.elapsed().as_secs_f64());
    let mut micro = s1.micro;

    // U distribution over 8 weak images, T=4 and T=8
    let batch = stack_images(&split.train_weak[..8]);
    for t in [4usize, 8] {
        let (_, umaps) = mc_uncertainty_batch(&mut micro, &batch, t, 77).unwrap();
        let mut all: Vec<f32> = umaps.iter().flat_map(|u| u.iter().cloned()).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| all[(p * (all.len() - 1) as f64) as usize];
        println!(
            "T={t}: mean={:.6} p50={:.6} p90={:.6} p95={:.6} p99={:.6} max={:.6}",
            all.iter().map(|&v| v as f64).sum::<f64>() / all.len() as f64,
            q(0.50), q(0.90), q(0.95), q(0.99), q(1.0)
        );
        for tau_raw in [0.005f32, 0.01, 0.025, 0.05, 0.125] {
            let frac = all.iter().filter(|&&u| u < tau_raw).count() as f64 / all.len() as f64;
            println!("  raw tau {tau_raw}: certain fraction {frac:.4}");
        }
    }
}
