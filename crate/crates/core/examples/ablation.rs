//! Paired baseline / coordinated runs on the synthetic benchmark.
//!
//! `cargo run --release -p eagc --example ablation -- [seeds]`

use eagc::simulator::{gen_synthetic, train_gcd, train_reference, EagcMode, SyntheticSpec, TrainConfig};

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let base = TrainConfig::default();
    let variants: Vec<(&str, TrainConfig)> = vec![
        ("baseline", TrainConfig { eagc: EagcMode::Off, ..base }),
        ("eagc", base),
        ("uniform", TrainConfig { eagc: EagcMode::UniformProj, ..base }),
        ("aga-only", {
            let mut c = base;
            c.coordinator.lambda_p = 0.0;
            c
        }),
        ("eep-only", {
            let mut c = base;
            c.coordinator.lambda_a = 0.0;
            c
        }),
    ];
    let mut cfgs = variants;
    for (_, c) in cfgs.iter_mut() {
        c.lr_encoder = env_f64("LR_ENC", c.lr_encoder);
        c.lr_head = env_f64("LR_HEAD", c.lr_head);
        c.entropy_weight = env_f64("ENT", c.entropy_weight);
        c.view_noise_std = env_f64("VIEW", c.view_noise_std);
        c.epochs = env_f64("EPOCHS", c.epochs as f64) as usize;
        c.coordinator.lambda_p = if c.coordinator.lambda_p > 0.0 { env_f64("LP", c.coordinator.lambda_p) } else { 0.0 };
        c.coordinator.lambda_a = if c.coordinator.lambda_a > 0.0 { env_f64("LA", c.coordinator.lambda_a) } else { 0.0 };
        c.coordinator.eta = env_f64("ETA", c.coordinator.eta);
        c.batch_size = env_f64("BATCH", c.batch_size as f64) as usize;
        c.coordinator.alpha = env_f64("ALPHA", c.coordinator.alpha);
        c.coordinator.beta = env_f64("BETA", c.coordinator.beta);
        c.warm_start = std::env::var("WARM").ok().and_then(|v| v.parse().ok()).unwrap_or(c.warm_start);
        c.sharpen_temp = env_f64("SHARP", c.sharpen_temp);
    }
    println!("{:<10} {:>6} {:>8} {:>8} {:>7} {:>7} {:>7}", "variant", "seed", "gdc", "soc", "all", "old", "new");
    let mut sums = vec![[0.0f64; 5]; cfgs.len()];
    let mut paired_ok = true;
    for seed in 0..seeds {
        let bench = SyntheticSpec::benchmark(seed);
        let data = gen_synthetic(&SyntheticSpec {
            input_dim: env_f64("DIN", bench.input_dim as f64) as usize,
            class_sep: env_f64("SEP", bench.class_sep),
            noise_std: env_f64("NOISE", bench.noise_std),
            ..bench
        })
        .unwrap();
        let ref_base = TrainConfig::reference_default();
        let ref_cfg = TrainConfig {
            seed,
            lr_encoder: env_f64("REF_LR_ENC", ref_base.lr_encoder),
            lr_head: env_f64("REF_LR_HEAD", ref_base.lr_head),
            epochs: env_f64("REF_EPOCHS", ref_base.epochs as f64) as usize,
            ..cfgs[0].1
        };
        let mut base_ge = (0.0, 0.0);
        let (reference, summary) = train_reference(&data, &ref_cfg).unwrap();
        println!("reference seed {seed}: loss {:.4} acc {:.3}", summary.final_loss, summary.train_accuracy);
        for (i, (name, cfg)) in cfgs.iter().enumerate() {
            let cfg = TrainConfig { seed, ..*cfg };
            let trace = train_gcd(&data, &reference, &cfg).unwrap();
            let m = trace.window_means(200).unwrap();
            let acc = trace.final_acc();
            if i == 0 && std::env::var("TRAJ").is_ok() {
                println!("  pca_k {} energy {:.3}", trace.pca_k, trace.mean_labeled_energy);
            }
            if std::env::var("TRAJ").is_ok() {
                let g: Vec<String> =
                    trace.records.iter().step_by(20).map(|r| format!("{:.2}/{:.2}", r.gdc, r.soc)).collect();
                println!("  {}", g.join(" "));
            }
            println!(
                "{:<10} {:>6} {:>8.4} {:>8.4} {:>7.3} {:>7.3} {:>7.3}",
                name, seed, m.gdc, m.soc, acc.all, acc.old, acc.new
            );
            if i == 0 {
                base_ge = (m.gdc, m.soc);
            } else if i == 1 {
                paired_ok &= m.gdc < base_ge.0 && m.soc < base_ge.1;
            }
            for (k, v) in [m.gdc, m.soc, acc.all, acc.old, acc.new].into_iter().enumerate() {
                sums[i][k] += v / seeds as f64;
            }
        }
    }
    println!("--- means");
    for (i, (name, _)) in cfgs.iter().enumerate() {
        let s = sums[i];
        println!("{:<10} {:>6} {:>8.4} {:>8.4} {:>7.3} {:>7.3} {:>7.3}", name, "", s[0], s[1], s[2], s[3], s[4]);
    }
    let (b, e, u, a, p) = (sums[0], sums[1], sums[2], sums[3], sums[4]);
    println!(
        "SCORE paired {} gdc_red {:.3} soc_red {:.3} new_gain {:.3} old_uni {:.3} aga_all {:.3} eep_all {:.3} base_new {:.3}",
        paired_ok,
        1.0 - e[0] / b[0],
        1.0 - e[1] / b[1],
        e[4] - b[4],
        e[3] - u[3],
        a[2] - b[2],
        p[2] - b[2],
        b[4]
    );
}
