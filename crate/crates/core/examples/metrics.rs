//! Accuracy matrix bookkeeping: average accuracy and forgetting.

use foro::protocol::{average_accuracy, average_forgetting, AccuracyMatrix};

fn main() -> foro::Result<()> {
    let m = AccuracyMatrix::from_counts(&[&[(9, 10)], &[(8, 10), (9, 10)]])?;
    print!("{}", m.to_csv());
    println!("A2 = {}", average_accuracy(&m, 2)?);
    println!("F  = {}", average_forgetting(&m, 2)?);

    let m = AccuracyMatrix::from_counts(&[
        &[(95, 100)],
        &[(90, 100), (97, 100)],
        &[(85, 100), (96, 100), (99, 100)],
    ])?;
    println!(
        "A3 = {:.4}, F = {:.4}",
        average_accuracy(&m, 3)?,
        average_forgetting(&m, 3)?
    );
    Ok(())
}
