//! `pelab decay`: decay-curve CSVs for one or more encoder variants.

use std::path::PathBuf;

use clap::Args;
use pelab_core::analysis::{decay_curve_fixed, decay_curve_gaussian, export_csv, DecayCurve};
use pelab_core::encodings::{Encoder, EncodingConfig, Variant};

use crate::manifest::RunManifest;
use crate::{resolve_out_dir, CliError};

#[derive(Args, Debug, Clone)]
pub struct DecayArgs {
    /// Encoder variants, comma-separated (hope,rope,alibi,sinusoidal,nope).
    #[arg(long, value_delimiter = ',', default_value = "hope")]
    pub variant: Vec<String>,

    /// fixed: canonical all-ones vectors; gaussian: sampled pairs.
    #[arg(long, default_value = "fixed")]
    pub mode: String,

    #[arg(long, default_value_t = 256)]
    pub max_dist: usize,

    /// Monte Carlo sample count (gaussian mode).
    #[arg(long, default_value_t = 256)]
    pub samples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// JSON file with an EncodingConfig; its variant field is overridden
    /// per requested variant.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn base_config(args: &DecayArgs, variant: Variant) -> Result<EncodingConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
            serde_json::from_str::<EncodingConfig>(&text)
                .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?
        }
        None => match variant {
            Variant::Hope => EncodingConfig::hope(64),
            Variant::Rope => EncodingConfig::rope(64),
            Variant::Alibi => EncodingConfig::alibi(64),
            Variant::Sinusoidal => EncodingConfig::sinusoidal(64),
            Variant::Nope => EncodingConfig::nope(64),
        },
    };
    config.variant = variant;
    config.validate().map_err(CliError::validation)?;
    Ok(config)
}

pub fn run(args: DecayArgs) -> Result<(), CliError> {
    let out_dir = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", out_dir.display())))?;

    let mut configs = Vec::new();
    for name in &args.variant {
        let variant: Variant = name.parse().map_err(CliError::validation)?;
        configs.push(base_config(&args, variant)?);
    }

    let mut manifest = RunManifest::new(
        "decay",
        serde_json::json!({
            "variants": args.variant,
            "mode": args.mode,
            "max_dist": args.max_dist,
            "samples": args.samples,
            "configs": configs,
        }),
        args.seed,
    );

    for config in &configs {
        let encoder = Encoder::from_config(config).map_err(CliError::validation)?;
        let curve: DecayCurve = match args.mode.as_str() {
            "fixed" => {
                let ones = vec![1.0; config.head_dim];
                decay_curve_fixed(&ones, &ones, &encoder, args.max_dist)
            }
            "gaussian" => decay_curve_gaussian(&encoder, args.samples, args.seed, args.max_dist),
            other => {
                return Err(CliError::Validation(format!(
                    "--mode must be fixed or gaussian, got `{other}`"
                )))
            }
        }
        .map_err(CliError::runtime)?;
        let name = curve.default_file_name();
        export_csv(&curve, &out_dir.join(&name)).map_err(CliError::runtime)?;
        println!("wrote {}", out_dir.join(&name).display());
        manifest.record(name);
    }
    manifest.write(&out_dir)
}
