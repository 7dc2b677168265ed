//! Class-incremental learning on a synthetic patch stream with the knowledge
//! encoding classifier alone.

use foro::backbone::BackboneConfig;
use foro::protocol::{
    average_accuracy, average_forgetting, generate_synthetic, EncodingConfig, Engine, EngineConfig,
    Mode, SyntheticSpec,
};

fn main() -> foro::Result<()> {
    let spec = SyntheticSpec {
        separation: 2.0,
        cluster_std: 0.5,
        ..SyntheticSpec::default()
    };
    let stream = generate_synthetic(&spec, 7)?;
    let cfg = EngineConfig {
        mode: Mode::KemOnly,
        backbone: BackboneConfig::default(),
        encoding: EncodingConfig {
            nrp_dim: 512,
            ..EncodingConfig::default()
        },
        seed: 7,
        ..EngineConfig::default()
    };
    let mut engine = Engine::new(cfg, stream.input_shape()?)?;
    let outcome = engine.run(&stream)?;

    print!("{}", outcome.matrix.to_csv());
    let t = stream.len();
    println!(
        "average accuracy   {:.4}",
        average_accuracy(&outcome.matrix, t)?
    );
    println!(
        "average forgetting {:.4}",
        average_forgetting(&outcome.matrix, t)?
    );
    println!("classes learned    {}", engine.classifier().num_classes());
    println!("samples encoded    {}", engine.kem().samples_seen());
    Ok(())
}
