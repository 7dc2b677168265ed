//! Full prompt search plus knowledge encoding on a drifting stream, compared
//! with the two ablations.

use foro::protocol::{
    average_accuracy, average_forgetting, generate_synthetic, CmaConfig, EncodingConfig, Engine,
    EngineConfig, Mode, SyntheticSpec,
};

fn main() -> foro::Result<()> {
    let spec = SyntheticSpec {
        shift: 1.0,
        ..SyntheticSpec::default()
    };
    let stream = generate_synthetic(&spec, 1)?;
    for mode in [Mode::Foro, Mode::KemOnly, Mode::FitnessOnly] {
        let cfg = EngineConfig {
            mode,
            cma: CmaConfig {
                population: 4,
                generations: 20,
                ..CmaConfig::default()
            },
            encoding: EncodingConfig {
                nrp_dim: 512,
                ..EncodingConfig::default()
            },
            seed: 1,
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(cfg, stream.input_shape()?)?;
        let outcome = engine.run(&stream)?;
        let t = stream.len();
        println!(
            "{mode:?}: accuracy {:.3}, forgetting {:.3}",
            average_accuracy(&outcome.matrix, t)?,
            average_forgetting(&outcome.matrix, t)?
        );
        for r in outcome.reports.iter().filter(|r| !r.curve.is_empty()) {
            println!(
                "  task {} fitness {:.4} -> {:.4}",
                r.task_id,
                r.curve[0],
                r.curve.last().unwrap()
            );
        }
    }
    Ok(())
}
