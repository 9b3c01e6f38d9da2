//! Scratch calibration run (not part of the deliverable test surface).

use std::time::Instant;

use pelab_core::encodings::EncodingConfig;
use pelab_core::numerics::Precision;
use pelab_core::toylm::{
    build_model, extrapolation_report, synth_task, train, ModelConfig, ReportSettings, TaskKind,
    TrainRecipe,
};

fn trace_probe(steps: usize, lr: f64, batch: usize, vocab: usize, c: f64, nope: bool) {
    let enc = if nope {
        EncodingConfig::nope(16)
    } else {
        EncodingConfig {
            freq_scale: c,
            theta_prime: 1.1 * c,
            ..EncodingConfig::hope(16)
        }
    };
    let cfg = ModelConfig { vocab_size: vocab, ..ModelConfig::desk_scale(enc.clone()) };
    let ds = synth_task(TaskKind::Copy, 777, 512, 64, vocab).unwrap();
    let params = build_model(&cfg, 1).unwrap();
    let recipe = TrainRecipe {
        batch_size: batch,
        total_steps: steps,
        learning_rate: lr,
        seed: 1,
        ..TrainRecipe::default()
    };
    let t0 = Instant::now();
    let out = train(params, &ds, &recipe, &cfg).unwrap();
    let tr = &out.loss_trace;
    let milestones: Vec<String> = (0..=10)
        .map(|i| {
            let ix = (tr.len() - 1) * i / 10;
            format!("{:.3}", tr[ix])
        })
        .collect();
    println!(
        "c={c} lr={lr} steps={steps}: loss[{}]  final={:.4}  ({:.0}s)",
        milestones.join(" "),
        tr.last().unwrap(),
        t0.elapsed().as_secs_f64()
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("probe") {
        let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
        let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
        let vocab: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
        let c: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);
        let nope = args.get(6).map(String::as_str) == Some("nope");
        trace_probe(steps, lr, 16, vocab, c, nope);
        return;
    }
    real_main(args);
}

fn real_main(args: Vec<String>) {
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let seeds: Vec<u64> = args
        .get(4)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![1]);
    let vocab: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(32);

    let base = ModelConfig {
        vocab_size: vocab,
        ..ModelConfig::desk_scale(EncodingConfig::hope(16))
    };
    let settings = ReportSettings {
        length_multiples: vec![1, 2, 3],
        n_train_sequences: 512,
        n_eval_sequences: 32,
        parallel: true,
        ..ReportSettings::desk_scale(base)
    };
    let recipe = TrainRecipe {
        batch_size: batch,
        total_steps: steps,
        learning_rate: lr,
        precision: Precision::F64,
        ..TrainRecipe::default()
    };
    let configs = vec![EncodingConfig::hope(16), EncodingConfig::rope(16)];

    let t0 = Instant::now();
    let report =
        extrapolation_report(&configs, &recipe, TaskKind::Copy, &seeds, &settings).unwrap();
    println!("wall: {:.1}s for {} runs", t0.elapsed().as_secs_f64(), 2 * seeds.len());
    println!("lengths: {:?}", report.lengths);
    for row in &report.rows {
        println!("{:>5}: per-seed ppl {:?}", row.variant, row.per_seed_ppl);
        for (si, ppl) in row.per_seed_ppl.iter().enumerate() {
            println!(
                "       seed {}: growth64->192 {:.3}",
                report.seeds[si],
                ppl[2] / ppl[0]
            );
        }
    }
}
