//! Scratch convergence experiments (ignored; run explicitly).

use smdepth_core::network::infer_mono;
use smdepth_core::synth::{generate_scene, SceneConfig, SceneMode, StereoSample};
use smdepth_core::train::{AugmentConfig, TrainConfig, Trainer};

fn scenes(seeds: std::ops::Range<u64>, sigmas: &[f64]) -> Vec<StereoSample<f32>> {
    seeds
        .map(|s| {
            let cfg = SceneConfig {
                texture_sigma: sigmas[(s % sigmas.len() as u64) as usize],
                mode: SceneMode::ConstantPlane,
                ..SceneConfig::default()
            };
            generate_scene::<f32>(s, &cfg).unwrap()
        })
        .collect()
}

fn median_err_px(trainer: &Trainer<f32>, test: &[StereoSample<f32>]) -> (f64, f64) {
    let mut errs: Vec<f64> = Vec::new();
    for s in test {
        let maps = infer_mono(trainer.params(), &trainer.config().spec, &s.left).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        let sh = maps[0].shape();
        let skip = sh.w / 10;
        for i in 0..sh.h {
            for j in skip..sh.w {
                let e = (maps[0].at(0, 0, i, j) - gt.at(0, 0, i, j)).abs() as f64 * sh.w as f64;
                errs.push(e);
            }
        }
    }
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = errs[errs.len() / 2];
    let p90 = errs[(errs.len() as f64 * 0.9) as usize];
    (med, p90)
}

#[test]
#[ignore]
fn mixed_sigma_convergence() {
    let sigmas_env = std::env::var("SIGMAS").unwrap_or_else(|_| "1,2,4,8".into());
    let sigmas: Vec<f64> = sigmas_env.split(',').map(|s| s.parse().unwrap()).collect();
    let steps: u64 = std::env::var("STEPS").map(|s| s.parse().unwrap()).unwrap_or(1200);
    let seed: u64 = std::env::var("SEED").map(|s| s.parse().unwrap()).unwrap_or(42);

    let train_set = scenes(100..132, &sigmas);
    let test_set = scenes(2000..2008, &sigmas);

    let shuffle = std::env::var("SHUFFLE").map(|v| v == "1").unwrap_or(false);
    let cfg = TrainConfig {
        batch_size: 4,
        steps,
        seed,
        shuffle,
        augment: AugmentConfig { enabled: false, ..AugmentConfig::default() },
        adam: smdepth_core::train::AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(cfg).unwrap();
    let t0 = std::time::Instant::now();
    while !trainer.is_finished() {
        let tr = trainer.step(&train_set).unwrap();
        if trainer.is_finished() && std::env::var("SCATTER").is_ok() {
            // pred-mean vs true d*, held-out AND train scenes
            for (tag, set) in [("held-out", &scenes(3000..3032, &sigmas)), ("train", &train_set)] {
                println!("--- {tag} ---");
                for s in set.iter() {
                    let maps = infer_mono(trainer.params(), &trainer.config().spec, &s.left).unwrap();
                    let m = maps[0].data().iter().map(|&v| v as f64).sum::<f64>()
                        / maps[0].len() as f64 * 128.0;
                    let d = s.gt_disparity.as_ref().unwrap().data()[0] as f64 * 128.0;
                    println!("true {d:.2} pred-mean {m:.2}");
                }
            }
        }
        if tr.step % 50 == 0 {
            let (med, p90) = median_err_px(&trainer, &test_set);
            let mut by_scene = String::new();
            for (k, s) in test_set.iter().enumerate() {
                let (m, _) = median_err_px(&trainer, core::slice::from_ref(s));
                by_scene += &format!(" s{}({}):{:.2}", k, sigmas[k % sigmas.len()], m);
            }
            println!(
                "step {:>5}  L={:<9.4}  median {med:.3} px  p90 {p90:.3} px  [{:.0?}] {by_scene}",
                tr.step, tr.total, t0.elapsed()
            );
        }
    }
}
