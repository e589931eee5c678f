//! Tour of the Poincaré-ball projection used on agent features: tangent
//! vectors map into the open ball, never reach its boundary, and come back
//! out unchanged.
//!
//!     cargo run --example hyperbolic_maps

use issm::error::Result;
use issm::hypgeo::{exp_map_origin, log_map_origin, metric_factor, Curvature};

fn main() -> Result<()> {
    let c = Curvature::unit();
    println!("ball radius at curvature {}: {}", c.value(), c.radius());

    // Growing tangent vectors saturate toward the boundary instead of
    // leaving the ball.
    println!("\n{:>8} {:>12} {:>12}", "‖v‖", "‖exp(v)‖", "conformal λ");
    for scale in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let v = vec![scale, 0.0, 0.0];
        let point = exp_map_origin(&v, c)?;
        let norm: f64 = point.coords().iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "{scale:>8.1} {norm:>12.9} {:>12.4}",
            metric_factor(point.coords(), c)?
        );
    }

    // log is exp's exact inverse on the whole ball.
    let v = vec![0.3, -1.2, 0.8];
    let point = exp_map_origin(&v, c)?;
    let back = log_map_origin(point.coords(), c)?;
    let err: f64 = v
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("\nround trip of {v:?}");
    println!("  ball point  {:?}", point.coords());
    println!("  back        {back:?}");
    println!("  max error   {err:.2e}");

    // Sharper curvature shrinks the ball; the same vector lands deeper
    // into its (smaller) radius.
    for c_val in [0.25, 1.0, 4.0] {
        let c = Curvature::new(c_val)?;
        let p = exp_map_origin(&[1.0, 0.0], c)?;
        let norm: f64 = p.coords().iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "c = {c_val:<5} radius = {:<6.3} ‖exp([1,0])‖ = {norm:.6} ({:.1}% of radius)",
            c.radius(),
            100.0 * norm / c.radius()
        );
    }
    Ok(())
}
