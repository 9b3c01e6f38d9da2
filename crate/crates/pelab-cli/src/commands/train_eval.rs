//! `pelab train` / `pelab eval`: one training run producing a saved model
//! artifact, and length-grid evaluation of a saved model.
//!
//! The data seeds derive from the run seed exactly as in the in-process
//! comparison report, so `train` followed by `eval` reproduces those
//! numbers bit-for-bit.

use std::path::PathBuf;

use clap::Args;
use pelab_core::encodings::{EncodingConfig, Variant};
use pelab_core::numerics::Precision;
use pelab_core::toylm::{
    build_model, eval_perplexity, load_params, report, save_params, synth_task, train,
    ModelConfig, TaskKind, TrainRecipe,
};

use crate::manifest::RunManifest;
use crate::{resolve_out_dir, CliError};

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value = "copy")]
    pub task: String,

    #[arg(long, default_value = "hope")]
    pub variant: String,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = 2000)]
    pub steps: usize,

    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,

    /// Train in 32-bit storage precision instead of f64.
    #[arg(long, default_value_t = false)]
    pub f32: bool,

    #[arg(long, default_value_t = 512)]
    pub train_sequences: usize,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to rebuild and re-evaluate a saved model.
#[derive(serde::Serialize, serde::Deserialize, Debug)]
pub struct RunConfig {
    pub task: TaskKind,
    pub model: ModelConfig,
    pub recipe: TrainRecipe,
    pub n_train_sequences: usize,
    pub n_eval_sequences: usize,
}

fn parse_task(name: &str) -> Result<TaskKind, CliError> {
    name.parse::<TaskKind>().map_err(CliError::validation)
}

fn parse_variant_config(name: &str) -> Result<EncodingConfig, CliError> {
    let variant: Variant = name.parse().map_err(CliError::validation)?;
    Ok(match variant {
        Variant::Hope => EncodingConfig::hope(16),
        Variant::Rope => EncodingConfig::rope(16),
        Variant::Alibi => EncodingConfig::alibi(16),
        Variant::Sinusoidal => EncodingConfig::sinusoidal(16),
        Variant::Nope => EncodingConfig::nope(16),
    })
}

pub fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let task = parse_task(&args.task)?;
    let encoder = parse_variant_config(&args.variant)?;
    let model = ModelConfig::desk_scale(encoder);
    model.validate().map_err(CliError::validation)?;
    let recipe = TrainRecipe {
        batch_size: args.batch_size,
        total_steps: args.steps,
        learning_rate: args.learning_rate,
        seed: args.seed,
        precision: if args.f32 { Precision::F32 } else { Precision::F64 },
        ..TrainRecipe::default()
    };

    let out_dir = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", out_dir.display())))?;

    let dataset = synth_task(
        task,
        report::train_data_seed(args.seed),
        args.train_sequences,
        model.train_len,
        model.vocab_size,
    )
    .map_err(CliError::runtime)?;
    let params = build_model(&model, args.seed).map_err(CliError::runtime)?;
    let result = train(params, &dataset, &recipe, &model).map_err(CliError::runtime)?;

    save_params(&result.params, &out_dir.join("model.pelm")).map_err(CliError::runtime)?;

    let run_config = RunConfig {
        task,
        model,
        recipe,
        n_train_sequences: args.train_sequences,
        n_eval_sequences: 32,
    };
    std::fs::write(
        out_dir.join("run_config.json"),
        serde_json::to_string_pretty(&run_config).expect("serializes"),
    )
    .map_err(|e| CliError::runtime(format!("writing run_config.json: {e}")))?;

    let mut trace = String::from("step,loss\n");
    for (i, loss) in result.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{loss:.16e}\n"));
    }
    std::fs::write(out_dir.join("loss_trace.csv"), trace)
        .map_err(|e| CliError::runtime(format!("writing loss_trace.csv: {e}")))?;

    println!(
        "trained {} on {} for {} steps; final loss {:.4}",
        args.variant,
        args.task,
        args.steps,
        result.loss_trace.last().unwrap_or(&f64::NAN)
    );
    for name in ["model.pelm", "run_config.json", "loss_trace.csv"] {
        println!("wrote {}", out_dir.join(name).display());
    }

    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(&run_config).expect("serializes"),
        args.seed,
    );
    for name in ["model.pelm", "run_config.json", "loss_trace.csv"] {
        manifest.record(name);
    }
    manifest.write(&out_dir)
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Directory holding model.pelm and run_config.json (a `train` output).
    #[arg(long)]
    pub model: PathBuf,

    /// Evaluation lengths as multiples of train_len, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub lengths: Vec<usize>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let config_path = args.model.join("run_config.json");
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| CliError::runtime(format!("reading {}: {e}", config_path.display())))?;
    let run_config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", config_path.display())))?;
    if args.lengths.is_empty() || args.lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation(
            "--lengths must be strictly increasing multiples of train_len".into(),
        ));
    }

    let params = load_params(&args.model.join("model.pelm")).map_err(CliError::runtime)?;
    let model = &run_config.model;

    let out_dir = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", out_dir.display())))?;

    // Per-length eval sets at exactly that length, seeded like the
    // in-process report.
    let mut lengths_abs = Vec::with_capacity(args.lengths.len());
    let mut nll = Vec::with_capacity(args.lengths.len());
    let mut ppl = Vec::with_capacity(args.lengths.len());
    for &mult in &args.lengths {
        let len = mult * model.train_len;
        let ds = synth_task(
            run_config.task,
            report::eval_data_seed(run_config.recipe.seed, len),
            run_config.n_eval_sequences,
            len,
            model.vocab_size,
        )
        .map_err(CliError::runtime)?;
        let r = eval_perplexity(&params, model, &ds, &[len]).map_err(CliError::runtime)?;
        lengths_abs.push(len);
        nll.push(r.mean_nll[0]);
        ppl.push(r.perplexity[0]);
    }

    let mut csv = String::from("length,mean_nll,perplexity\n");
    for i in 0..lengths_abs.len() {
        csv.push_str(&format!("{},{:.16e},{:.16e}\n", lengths_abs[i], nll[i], ppl[i]));
    }
    std::fs::write(out_dir.join("eval_report.csv"), csv)
        .map_err(|e| CliError::runtime(format!("writing eval_report.csv: {e}")))?;
    let json = serde_json::json!({
        "lengths": lengths_abs,
        "mean_nll": nll,
        "perplexity": ppl,
    });
    std::fs::write(
        out_dir.join("eval_report.json"),
        serde_json::to_string_pretty(&json).expect("serializes"),
    )
    .map_err(|e| CliError::runtime(format!("writing eval_report.json: {e}")))?;

    for (len, p) in lengths_abs.iter().zip(&ppl) {
        println!("length {len}: ppl {p:.4}");
    }
    for name in ["eval_report.csv", "eval_report.json"] {
        println!("wrote {}", out_dir.join(name).display());
    }

    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({ "model_dir": args.model, "lengths": args.lengths,
                            "run_config": run_config }),
        run_config.recipe.seed,
    );
    for name in ["eval_report.csv", "eval_report.json"] {
        manifest.record(name);
    }
    manifest.write(&out_dir)
}
