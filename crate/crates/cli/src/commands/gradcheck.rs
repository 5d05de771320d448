//! `gradcheck`: finite-difference verification of analytic gradients,
//! per component and for the composed model.

use anyhow::bail;
use clap::Args;
use std::path::PathBuf;
use steercloud::checkpoint;
use steercloud::neural::gradcheck::{check_all, check_model, GradCheckReport};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "gnn-ncp")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per component.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Check a trained checkpoint instead of fresh random components.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn print_report(r: &GradCheckReport) -> bool {
    let status = if r.passed() { "PASS" } else { "FAIL" };
    eprintln!(
        "{status} {:<18} instances={:<3} max_rel_err={:.3e} (tol {:.0e}) worst={}",
        r.component, r.instances, r.max_rel_err, r.tolerance, r.worst_param
    );
    r.passed()
}

pub fn run(args: &GradcheckArgs) -> anyhow::Result<()> {
    if let Some(path) = &args.checkpoint {
        let ck = checkpoint::load(path)?;
        let bad = ck.model.non_finite_params();
        if !bad.is_empty() {
            bail!(
                "checkpoint {} holds non-finite values in parameter '{}'",
                path.display(),
                bad[0]
            );
        }
        let report = check_model(&ck.model, args.seed, args.instances.min(5))?;
        if !print_report(&report) {
            bail!("gradient check failed for {}", report.component);
        }
        return Ok(());
    }

    let reports = check_all(args.seed, args.instances)?;
    let mut ok = true;
    for r in &reports {
        ok &= print_report(r);
    }
    // A composed-model check of the requested preset on fresh parameters.
    let cfg = steercloud::neural::preset(&args.preset)?;
    let model = steercloud::neural::SteeringModel::from_preset(&cfg, 6, args.seed)?;
    let preset_report = check_model(&model, args.seed.wrapping_add(9), args.instances.min(3))?;
    ok &= print_report(&preset_report);
    if !ok {
        bail!("gradient check failed");
    }
    eprintln!("all gradient checks passed");
    Ok(())
}
