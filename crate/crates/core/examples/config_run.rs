//! Loads a TOML experiment and runs one command, as the binary does.
//!
//! ```text
//! cargo run --release --example config_run -- scenarios/random_rate.toml compare
//! ```

use std::path::PathBuf;

use closedloop::config::{ExperimentConfig, Overrides};
use closedloop::experiment::{run_experiment, Command};

fn main() -> closedloop::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/random_rate.toml")
    });
    let command = match args.next().as_deref() {
        Some("verify") => Command::Verify,
        Some("compare") => Command::Compare,
        Some("hedge") => Command::Hedge,
        _ => Command::Solve,
    };
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.apply(&Overrides {
        paths: Some(5000),
        out: Some(std::env::temp_dir().join("closedloop-config-run")),
        ..Default::default()
    })?;
    let outcome = run_experiment(command, &cfg, None)?;
    print!("{}", outcome.summary);
    Ok(())
}
