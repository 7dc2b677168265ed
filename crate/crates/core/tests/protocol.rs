use foro::encoding::Classifier;
use foro::protocol::{
    generate_synthetic, load_feature_stream, load_feature_tasks, write_feature_stream, Engine,
    EngineConfig, FeatureFile, FeatureTask, InputKind, Inputs, Manifest, Mode, Split,
    SyntheticSpec, Task, TaskStream,
};
use foro::seed::rng_from;
use foro::ForoError;
use nalgebra::DMatrix;
use rand::Rng;

fn feature_task(id: u32, classes: &[u32], rows: usize, dim: usize, seed: u64) -> FeatureTask {
    let mut rng = rng_from(seed);
    let mut file = |n: usize| FeatureFile {
        dim,
        values: (0..n * dim).map(|_| rng.random::<f32>() - 0.5).collect(),
        labels: (0..n).map(|i| classes[i % classes.len()]).collect(),
    };
    let train = file(rows);
    let test = file(rows / 2);
    FeatureTask {
        task_id: id,
        class_ids: classes.to_vec(),
        train,
        test,
    }
}

#[test]
fn manifest_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = vec![
        feature_task(0, &[0, 1], 10, 6, 1),
        feature_task(1, &[2, 3], 10, 6, 2),
    ];
    let manifest = write_feature_stream(dir.path(), &tasks).unwrap();
    assert_eq!(Manifest::read(&manifest).unwrap().tasks.len(), 2);
    let files = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .path()
            .extension()
            .is_some_and(|x| x == "feat")
    });
    assert_eq!(files.count(), 4);

    let loaded = load_feature_tasks(&manifest).unwrap();
    assert_eq!(loaded, tasks);
    for (a, b) in loaded.iter().zip(&tasks) {
        assert_eq!(a.train.to_bytes(), b.train.to_bytes());
        assert_eq!(a.test.to_bytes(), b.test.to_bytes());
    }
    let stream = load_feature_stream(&manifest).unwrap();
    assert_eq!(stream.len(), 2);
    assert_eq!(stream.total_classes(), 4);
}

#[test]
fn overlapping_classes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = vec![
        feature_task(0, &[7, 1], 8, 4, 1),
        feature_task(1, &[2, 7], 8, 4, 2),
    ];
    let manifest = write_feature_stream(dir.path(), &tasks).unwrap();
    match load_feature_stream(&manifest) {
        Err(ForoError::OverlappingClasses { class }) => assert_eq!(class, 7),
        other => panic!("expected overlap error, got {other:?}"),
    }
}

#[test]
fn tampered_payload_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_feature_stream(dir.path(), &[feature_task(3, &[0, 1], 8, 4, 1)]).unwrap();
    let path = dir.path().join("task3_test.feat");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 5;
    bytes[last] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        load_feature_stream(&manifest),
        Err(ForoError::ChecksumMismatch { task_id: 3, .. })
    ));
}

#[test]
fn missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_feature_stream(dir.path(), &[feature_task(0, &[0, 1], 8, 4, 1)]).unwrap();
    std::fs::remove_file(dir.path().join("task0_train.feat")).unwrap();
    assert!(matches!(
        load_feature_stream(&manifest),
        Err(ForoError::MissingFile(_))
    ));

    let p = dir.path().join("x.feat");
    assert!(matches!(
        FeatureFile::from_bytes(b"FOROFEAT\x01\x00", &p),
        Err(ForoError::MalformedFeatureFile { .. })
    ));
    assert!(FeatureFile::from_bytes(b"NOTAFEAT\x01\x00\0\0\0\0\0\0\0\0", &p).is_err());
}

#[test]
fn constant_predictor_scores_half() {
    let dim = 3;
    // Only class 0 has non-zero weights, so every logit row favors it.
    let mut w = DMatrix::zeros(dim, 2);
    w[(0, 0)] = 1.0;
    let clf = Classifier::from_parts(w, vec![0, 1]).unwrap();
    let h = DMatrix::from_element(10, dim, 1.0);
    let (_, preds) = clf.predict(&h).unwrap();
    let labels: Vec<u32> = (0..10).map(|i| i % 2).collect();
    let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
    assert_eq!(
        foro::protocol::accuracy(correct as u64, 10).unwrap(),
        num_half()
    );
}

fn num_half() -> foro::protocol::Fraction {
    foro::protocol::Fraction::new(1, 2)
}

#[test]
fn separable_raw_stream_is_solved_by_the_batch_oracle() {
    let spec = SyntheticSpec {
        tasks: 3,
        classes_per_task: 3,
        input: InputKind::Features,
        dim: 16,
        separation: 5.0,
        cluster_std: 1.0,
        ..SyntheticSpec::default()
    };
    let stream = generate_synthetic(&spec, 2).unwrap();
    let classes: Vec<u32> = stream
        .tasks
        .iter()
        .flat_map(|t| t.class_ids.clone())
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in &stream.tasks {
        let Inputs::Features(x) = &t.train().inputs else {
            unreachable!()
        };
        xs.push(x.clone());
        ys.extend(t.train().labels.clone());
    }
    let rows = xs.iter().map(|x| x.nrows()).sum();
    let mut x = DMatrix::zeros(rows, 16);
    let mut r = 0;
    for m in &xs {
        x.rows_mut(r, m.nrows()).copy_from(m);
        r += m.nrows();
    }
    let y = foro::encoding::one_hot(&ys, &classes).unwrap();
    let w = foro::encoding::batch_solve_oracle(&x, &y, 0.1).unwrap();
    let clf = Classifier::from_parts(w, classes).unwrap();
    let (mut correct, mut total) = (0, 0);
    for t in &stream.tasks {
        let Inputs::Features(x) = &t.test.inputs else {
            unreachable!()
        };
        let (_, p) = clf.predict(x).unwrap();
        correct += p.iter().zip(&t.test.labels).filter(|(a, b)| a == b).count();
        total += p.len();
    }
    assert!(correct as f64 / total as f64 >= 0.99, "{correct}/{total}");
}

fn patch_spec() -> SyntheticSpec {
    SyntheticSpec {
        tasks: 3,
        classes_per_task: 2,
        train_per_class: 12,
        test_per_class: 6,
        shift: 0.5,
        ..SyntheticSpec::default()
    }
}

fn small_engine(mode: Mode, stream: &TaskStream) -> Engine {
    let mut cfg = EngineConfig {
        mode,
        seed: 3,
        ..EngineConfig::default()
    };
    cfg.encoding.nrp_dim = 64;
    cfg.cma.population = 4;
    cfg.cma.generations = 3;
    cfg.fitness.eval_batch = 8;
    Engine::new(cfg, stream.input_shape().unwrap()).unwrap()
}

#[test]
fn run_reads_each_training_set_once_and_keeps_the_backbone() {
    let stream = generate_synthetic(&patch_spec(), 4).unwrap();
    let mut engine = small_engine(Mode::Foro, &stream);
    let before = engine.backbone().unwrap().checksum();
    let outcome = engine.run(&stream).unwrap();
    assert_eq!(engine.backbone().unwrap().checksum(), before);
    assert_eq!(engine.classifier().num_classes(), stream.total_classes());
    assert_eq!(outcome.matrix.tasks(), 3);
    let reads: Vec<usize> = stream.tasks.iter().map(Task::train_reads).collect();
    assert!(reads.iter().all(|&r| r == reads[0] && r > 0), "{reads:?}");
}

#[test]
fn overlapping_streams_are_rejected_before_learning() {
    let mut stream = generate_synthetic(&patch_spec(), 4).unwrap();
    stream.tasks[2].class_ids[0] = stream.tasks[0].class_ids[0];
    let mut engine = small_engine(Mode::KemOnly, &stream);
    assert!(engine.run(&stream).is_err());
    assert_eq!(engine.classifier().num_classes(), 0);
}

#[test]
fn labels_outside_the_task_are_rejected() {
    let split = |labels: Vec<u32>| Split {
        inputs: Inputs::Features(DMatrix::zeros(labels.len(), 2)),
        labels,
    };
    let stream = TaskStream {
        tasks: vec![Task::new(
            0,
            vec![0, 1],
            split(vec![0, 5]),
            split(vec![0, 1]),
        )],
        mode: foro::protocol::StreamMode::Synthetic,
    };
    assert!(stream.validate().is_err());
}
