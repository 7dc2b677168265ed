//! Random nonlinear features make XOR linearly separable.

use foro::encoding::{batch_solve_oracle, one_hot, Activation, Classifier, RandomProjection};
use foro::protocol::{generate_synthetic, InputKind, Inputs, SyntheticSpec};
use nalgebra::DMatrix;

fn accuracy(
    x_train: &DMatrix<f64>,
    y_train: &[u32],
    x_test: &DMatrix<f64>,
    y_test: &[u32],
) -> foro::Result<f64> {
    let classes = [0, 1];
    let w = batch_solve_oracle(x_train, &one_hot(y_train, &classes)?, 0.1)?;
    let clf = Classifier::from_parts(w, classes.to_vec())?;
    let (_, pred) = clf.predict(x_test)?;
    Ok(pred.iter().zip(y_test).filter(|(p, y)| p == y).count() as f64 / y_test.len() as f64)
}

fn main() -> foro::Result<()> {
    let spec = SyntheticSpec {
        tasks: 1,
        classes_per_task: 2,
        input: InputKind::Xor,
        cluster_std: 0.3,
        train_per_class: 200,
        test_per_class: 100,
        ..SyntheticSpec::default()
    };
    let stream = generate_synthetic(&spec, 3)?;
    let task = &stream.tasks[0];
    let train = task.train();
    let (Inputs::Features(xtr), Inputs::Features(xte)) = (&train.inputs, &task.test.inputs) else {
        unreachable!()
    };
    println!(
        "raw 2-d ridge: {:.3}",
        accuracy(xtr, &train.labels, xte, &task.test.labels)?
    );

    for (m, act) in [
        (256, Activation::Relu),
        (256, Activation::Tanh),
        (256, Activation::Identity),
        (16, Activation::Relu),
    ] {
        let nrp = RandomProjection::build(2, m, act, 11)?;
        let acc = accuracy(
            &nrp.project(xtr)?,
            &train.labels,
            &nrp.project(xte)?,
            &task.test.labels,
        )?;
        println!("NRP M={m:<4} {act:?}: {acc:.3}");
    }
    Ok(())
}
