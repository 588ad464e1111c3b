//! `calico grad-check`: verify tape gradients against central differences
//! through every operation type and a deep composite program. Exits nonzero
//! when any relative error reaches the tolerance.

use std::path::PathBuf;

use calico::diagnostics::{fidelity_sweep, FidelitySettings};
use calico::{Error, Result};

use crate::commands::{ensure_dir, write_json_pretty};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

#[derive(Debug, clap::Args)]
pub struct GradCheckArgs {
    /// Finite-difference step (key: step).
    #[arg(long)]
    pub step: Option<f64>,
    /// Components probed per parameter tensor; 0 probes all
    /// (key: max-components).
    #[arg(long)]
    pub max_components: Option<usize>,
    /// Failure threshold on the relative error (key: tolerance).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Optional directory receiving gradcheck.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the fixture and the probed components.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: GradCheckArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let defaults = FidelitySettings::default();
    let step = s.resolve("step", args.step, defaults.step)?;
    let max_components = s.resolve(
        "max-components",
        args.max_components,
        defaults.max_components_per_param.unwrap_or(0),
    )?;
    let tolerance = s.resolve("tolerance", args.tolerance, 1e-4)?;
    let snapshot = s.finish()?;

    let settings = FidelitySettings {
        step,
        max_components_per_param: (max_components > 0).then_some(max_components),
        seed,
    };
    let report = fidelity_sweep(&settings)?;

    for case in &report.cases {
        println!(
            "{}: nodes={} components={} max_rel_err={:.3e} worst={}",
            case.label, case.nodes, case.components_checked, case.max_rel_err, case.worst_param
        );
    }
    println!("overall max_rel_err={:.3e}", report.max_rel_err);

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let report_path = out.join("gradcheck.json");
        write_json_pretty(&report_path, &report)?;
        let inputs: Vec<PathBuf> = args.config.iter().cloned().collect();
        write_manifest(out, "grad-check", snapshot, seed, &inputs, &[report_path], started_at)?;
    }

    if report.max_rel_err >= tolerance {
        return Err(Error::Config(format!(
            "gradient check failed: max_rel_err {:.3e} >= tolerance {tolerance:.3e}",
            report.max_rel_err
        )));
    }
    Ok(())
}
