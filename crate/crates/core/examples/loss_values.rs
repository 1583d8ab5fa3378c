//! Evaluate each adversarial loss on hand-picked logits and show the
//! gradient penalty differentiating through a critic's input gradient.

use crgan::autograd::Graph;
use crgan::losses::{gradient_penalty, metric, relativistic, relativistic_average, wasserstein_d};
use ndarray::{ArrayD, IxDyn};

fn main() -> crgan::Result<()> {
    let g = Graph::new();
    let v = |x: &[f64]| g.leaf(ArrayD::from_shape_vec(IxDyn(&[x.len()]), x.to_vec()).unwrap());
    let (real, fake) = (v(&[2.0, 0.5]), v(&[-1.0, 0.0]));
    println!("wasserstein d      {:.6}", wasserstein_d(real, fake)?.item());
    let (d, gl) = relativistic(v(&[1.0, 1.0]), v(&[1.0, 1.0]))?;
    println!("relativistic tie   d {:.6} g {:.6} (ln 2 = {:.6})", d.item(), gl.item(), 2f64.ln());
    let (d, _) = relativistic_average(v(&[0.3; 3]), v(&[0.3; 3]))?;
    println!("rel-average tie    d {:.6}", d.item());
    let (d, _) = metric(v(&[0.4]), v(&[1.0]), &[0.4])?;
    println!("metric at optimum  d {:.6}", d.item());

    // Critic D(x) = sum(x^2): the penalty is (|2x| - 1)^2 at the interpolate.
    let x_real = g.leaf(ArrayD::from_elem(IxDyn(&[1, 1, 2, 2]), 0.5));
    let x_fake = g.leaf(ArrayD::zeros(IxDyn(&[1, 1, 2, 2])));
    let gp = gradient_penalty(&g, |x| Ok(x.square().reshape(&[1, 4]).sum_axis(1)), x_real, x_fake, &[1.0])?;
    println!("gradient penalty   {:.6} (expected {:.6})", gp.item(), (2.0f64 - 1.0).powi(2));
    let grad = g.grad(gp, &[x_real])[0];
    println!("d penalty / d real {:?}", grad.value().iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
    Ok(())
}
