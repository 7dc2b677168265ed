//! Saves the encoding state after a run, reloads it and prints its summary.

use foro::cli::{inspect, run_experiment, ExperimentConfig, StreamSource};
use foro::protocol::{InputKind, Mode, SyntheticSpec};

fn main() -> foro::Result<()> {
    let mut cfg = ExperimentConfig {
        mode: Mode::KemOnly,
        stream: StreamSource::Synthetic(SyntheticSpec {
            tasks: 2,
            classes_per_task: 3,
            input: InputKind::Features,
            dim: 8,
            ..SyntheticSpec::default()
        }),
        ..ExperimentConfig::default()
    };
    cfg.encoding.nrp_dim = 128;
    let artifacts = run_experiment(&cfg, None)?;

    let dir = tempfile::tempdir()?;
    let written = artifacts.write(dir.path())?;
    for p in &written {
        println!("wrote {}", p.file_name().unwrap().to_string_lossy());
    }
    let report = inspect(&dir.path().join(foro::cli::CHECKPOINT_FILE))?;
    print!("{report}");
    Ok(())
}
