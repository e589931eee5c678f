//! Backpropagation against central finite differences on a randomly
//! initialized network: every parameter's analytic gradient should agree
//! with the numeric one to several digits.
//!
//!     cargo run --example gradient_check

use issm::error::Result;
use issm::nncore::{Activation, DenseNet};

/// Squared-error loss of the net on one (input, target) pair.
fn loss(net: &DenseNet, input: &[f64], target: &[f64]) -> Result<f64> {
    let out = net.forward(input)?;
    Ok(out
        .iter()
        .zip(target)
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

fn main() -> Result<()> {
    let net = DenseNet::new(
        &[4, 8, 5, 2],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
        42,
    )?;
    let input = [0.4, -1.1, 0.7, 0.2];
    let target = [0.5, -0.25];

    // Analytic gradients: d(sum of squared errors)/d(output) = 2(o − t).
    let trace = net.forward_trace(&input)?;
    let loss_grad: Vec<f64> = trace
        .output()
        .iter()
        .zip(&target)
        .map(|(o, t)| 2.0 * (o - t))
        .collect();
    let analytic = net.backward(&trace, &loss_grad)?;

    // Numeric gradients: bump every parameter in spec order.
    let h = 1e-5;
    let spec = net.to_spec();
    let mut numeric = Vec::with_capacity(net.param_count());
    for (li, layer) in spec.layers.iter().enumerate() {
        for (wi, _) in layer.weights.iter().enumerate() {
            let mut plus = spec.clone();
            plus.layers[li].weights[wi] += h;
            let mut minus = spec.clone();
            minus.layers[li].weights[wi] -= h;
            numeric.push(
                (loss(&DenseNet::from_spec(&plus)?, &input, &target)?
                    - loss(&DenseNet::from_spec(&minus)?, &input, &target)?)
                    / (2.0 * h),
            );
        }
        for (bi, _) in layer.bias.iter().enumerate() {
            let mut plus = spec.clone();
            plus.layers[li].bias[bi] += h;
            let mut minus = spec.clone();
            minus.layers[li].bias[bi] -= h;
            numeric.push(
                (loss(&DenseNet::from_spec(&plus)?, &input, &target)?
                    - loss(&DenseNet::from_spec(&minus)?, &input, &target)?)
                    / (2.0 * h),
            );
        }
    }

    let mut worst = 0.0f64;
    for (a, n) in analytic.flat().zip(&numeric) {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    println!("parameters checked : {}", numeric.len());
    println!("max relative error : {worst:.3e}");
    assert!(worst < 1e-6, "backprop disagrees with finite differences");
    println!("backprop matches finite differences");
    Ok(())
}
