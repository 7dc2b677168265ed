//! Minimizes the sphere and Rosenbrock functions with the ask/tell optimizer.

use foro::cli::{rosenbrock, sphere};
use foro::cma::{minimize, CmaState};
use foro::seed::rng_from;
use nalgebra::DVector;

fn main() -> foro::Result<()> {
    let mut state = CmaState::new(10, 10, 1)?;
    state.set_mean(DVector::from_element(10, 3.0))?;
    let (best, curve) = minimize(&mut state, &mut rng_from(1), 300, sphere)?;
    println!(
        "sphere n=10: best {:.3e} after {} generations",
        best.fitness,
        curve.len()
    );
    for g in [0, 49, 99, 199, 299] {
        println!("  gen {:>3}  {:.3e}", g + 1, curve[g]);
    }

    let mut state = CmaState::new(5, 12, 2)?;
    let (best, curve) = minimize(&mut state, &mut rng_from(2), 3000, rosenbrock)?;
    let hit = curve.iter().position(|&f| f < 1e-6).map(|g| g + 1);
    println!(
        "rosenbrock n=5: below 1e-6 at generation {hit:?}, best at {:?}",
        best.genome
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
