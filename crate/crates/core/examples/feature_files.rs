//! Writes a feature-file stream with a manifest, reloads it and learns it.

use foro::protocol::{
    average_accuracy, generate_synthetic, load_feature_stream, write_feature_stream,
    EncodingConfig, Engine, EngineConfig, FeatureFile, FeatureTask, InputKind, Inputs, Manifest,
    Mode, SyntheticSpec,
};

fn main() -> foro::Result<()> {
    let spec = SyntheticSpec {
        tasks: 3,
        classes_per_task: 2,
        input: InputKind::Features,
        dim: 32,
        separation: 1.0,
        cluster_std: 0.5,
        ..SyntheticSpec::default()
    };
    let stream = generate_synthetic(&spec, 9)?;
    let tasks: Vec<FeatureTask> = stream
        .tasks
        .iter()
        .map(|t| {
            let (Inputs::Features(tr), Inputs::Features(te)) = (&t.train().inputs, &t.test.inputs)
            else {
                unreachable!()
            };
            FeatureTask {
                task_id: t.task_id,
                class_ids: t.class_ids.clone(),
                train: FeatureFile::from_matrix(tr, t.train().labels.clone()),
                test: FeatureFile::from_matrix(te, t.test.labels.clone()),
            }
        })
        .collect();

    let dir = tempfile::tempdir()?;
    let manifest = write_feature_stream(dir.path(), &tasks)?;
    for e in Manifest::read(&manifest)?.tasks {
        println!(
            "task {} classes {:?} {} {}",
            e.task_id,
            e.class_ids,
            e.train_file,
            &e.sha256[..16]
        );
    }

    let loaded = load_feature_stream(&manifest)?;
    let cfg = EngineConfig {
        mode: Mode::KemOnly,
        encoding: EncodingConfig {
            nrp_dim: 256,
            ..EncodingConfig::default()
        },
        ..EngineConfig::default()
    };
    let mut engine = Engine::new(cfg, loaded.input_shape()?)?;
    let outcome = engine.run(&loaded)?;
    println!(
        "average accuracy {:.4}",
        average_accuracy(&outcome.matrix, loaded.len())?
    );
    Ok(())
}
