use clap::Parser;

use twophase_bench::config::{CaseConfig, Cli};
use twophase_bench::run::run;

fn main() {
    let cli = Cli::parse();
    let cfg = match CaseConfig::resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            let b = &outcome.summary.benchmarks;
            let a = &outcome.summary.audit;
            println!("run      : {}", outcome.summary.label);
            println!(
                "extrema  : circ_min = {:.6} at t = {:.4} | vc_max = {:.6} at t = {:.4} | vc_max1 = {:.6} at t = {:.4}",
                b.circ_min, b.t_circ_min, b.vc_max, b.t_vc_max, b.vc_max1, b.t_vc_max1
            );
            println!(
                "final    : yc({:.2}) = {:.6} | energy = {:.6}",
                b.t_final, b.yc_final, b.energy_final
            );
            println!(
                "audit    : max |vdelta| = {:.3e} | min slack = {:.3e} (rel {:.3e}) | audit valid = {} | remeshes = {}",
                a.vdelta_max_abs, a.slack_min, a.slack_rel_min, a.energy_audit_valid, a.remeshes
            );
            println!(
                "iteration: picard max = {} mean = {:.2} | min angle = {:.2} deg | jacobian in [{:.4}, {:.4}]",
                a.picard_max,
                a.picard_mean,
                a.min_angle_min.to_degrees(),
                a.jacobian_min,
                a.jacobian_max
            );
            println!(
                "artifacts: {} | {}",
                outcome.csv_path.display(),
                outcome.summary_path.display()
            );
            println!("walltime : {:.1} s", outcome.summary.walltime);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
