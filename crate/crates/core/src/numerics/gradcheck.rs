use super::extended::Dd;
use super::network::{Gradients, Network};

/// Worst relative disagreement between an analytic gradient and central differences.
///
/// `loss` returns the scalar loss and its analytic gradient at the given parameters. Every
/// parameter is perturbed by `±step`; the relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// The loss value may be an `f64` or a double-double [`Dd`]; the difference of the two
/// perturbed values is taken in double-double either way.
pub fn grad_check<F, V>(net: &Network, loss: F, step: f64) -> f64
where
    F: Fn(&Network) -> (V, Gradients),
    V: Into<Dd>,
{
    let (_, analytic) = loss(net);
    let analytic = analytic.flatten();
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.parameter_mut(i);
        let plus = original + step;
        let minus = original - step;
        *probe.parameter_mut(i) = plus;
        let (lp, _) = loss(&probe);
        *probe.parameter_mut(i) = minus;
        let (lm, _) = loss(&probe);
        *probe.parameter_mut(i) = original;
        // the representable step, not the nominal one
        let numeric = ((lp.into() - lm.into()) / (plus - minus)).to_f64();
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
