//! `pelab props`: run the cross-module property suite on a config and
//! print a pass/fail table; nonzero exit if anything fails.

use std::path::PathBuf;

use clap::Args;
use pelab_core::encodings::EncodingConfig;
use pelab_core::props::{run_all, PropertyStatus};

use crate::manifest::RunManifest;
use crate::{resolve_out_dir, CliError};

#[derive(Args, Debug, Clone)]
pub struct PropsArgs {
    /// JSON file with an EncodingConfig; defaults to the hyperbolic
    /// defaults at head_dim 8.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Directory for the JSON report (defaults per PELAB_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: PropsArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
            serde_json::from_str::<EncodingConfig>(&text)
                .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?
        }
        None => EncodingConfig::hope(8),
    };
    config.validate().map_err(CliError::validation)?;

    let results = run_all(&config).map_err(CliError::validation)?;

    println!("{:<28} {:>6}  {:>12}  {:>9}  detail", "property", "status", "max_error", "tol");
    for r in &results {
        let status = match r.status {
            PropertyStatus::Pass => "pass",
            PropertyStatus::Fail => "FAIL",
            PropertyStatus::NotApplicable => "n/a",
        };
        let err = r.max_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:>6}  {:>12}  {:>9.0e}  {}",
            r.name, status, err, r.tolerance, r.detail
        );
    }

    let out_dir = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", out_dir.display())))?;
    let report = serde_json::json!({ "config": config, "properties": results });
    let report_path = out_dir.join("props_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).expect("serializes"))
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", report_path.display())))?;
    println!("wrote {}", report_path.display());

    let mut manifest = RunManifest::new("props", serde_json::json!({ "config": config }), 0);
    manifest.record("props_report.json");
    manifest.write(&out_dir)?;

    let failures: Vec<&str> = results
        .iter()
        .filter(|r| r.status == PropertyStatus::Fail)
        .map(|r| r.name.as_str())
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PropertyFailure(failures.join(", ")))
    }
}
