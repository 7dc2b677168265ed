//! Recursive knowledge-encoding updates against a joint ridge fit, batch by batch.

use foro::cli::{batch_prefix_oracle, random_stream, recursive_prefixes};
use foro::linalg::relative_frobenius;

fn main() -> foro::Result<()> {
    let stream = random_stream(42, 5, 64);
    let order = [0, 1, 2, 3, 4];
    for gamma in [0.1, 1.0] {
        let rec = recursive_prefixes(&stream, &order, gamma)?;
        println!("gamma {gamma}");
        for (k, w) in rec.iter().enumerate() {
            let oracle = batch_prefix_oracle(&stream, &order[..=k], gamma)?;
            println!(
                "  after batch {} ({:>2} rows): rel. error {:.2e}",
                k + 1,
                stream.batches[k].0.nrows(),
                relative_frobenius(w, &oracle)
            );
        }
    }

    let reversed = [4, 3, 2, 1, 0];
    let rec = recursive_prefixes(&stream, &reversed, 0.1)?;
    let oracle = batch_prefix_oracle(&stream, &reversed, 0.1)?;
    println!(
        "reversed order: rel. error {:.2e}",
        relative_frobenius(rec.last().unwrap(), &oracle)
    );
    Ok(())
}
