//! Central-difference verification of analytic gradients.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::tensor::Tensor;

/// Relative error of the analytic gradient against central differences.
///
/// `f` maps a parameter set to a scalar loss plus its analytic gradients.
/// Up to `samples` coordinates per tensor are probed (chosen by `seed`);
/// the report is the worst `|a - n| / max(|a|, |n|, floor)` seen. For f64
/// models `eps = 1e-5` and `floor = 1e-3` are appropriate; a loss computed
/// through f32 needs both loosened.
pub fn grad_check<F>(
    f: &mut F,
    params: &BTreeMap<String, Tensor>,
    eps: f64,
    floor: f64,
    samples: usize,
    seed: u64,
) -> f64
where
    F: FnMut(&BTreeMap<String, Tensor>) -> (f64, BTreeMap<String, Tensor>),
{
    let (_, analytic) = f(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (name, tensor) in params {
        let grad = analytic
            .get(name)
            .unwrap_or_else(|| panic!("no analytic gradient for {name}"));
        assert_eq!(
            (grad.rows, grad.cols),
            (tensor.rows, tensor.cols),
            "gradient shape mismatch for {name}"
        );
        let mut coords: Vec<usize> = (0..tensor.numel()).collect();
        coords.shuffle(&mut rng);
        coords.truncate(samples.min(tensor.numel()));
        for i in coords {
            let mut probe = params.clone();
            probe.get_mut(name).unwrap().data[i] += eps;
            let (plus, _) = f(&probe);
            probe.get_mut(name).unwrap().data[i] -= 2.0 * eps;
            let (minus, _) = f(&probe);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// Like [`grad_check`] but with a fourth-order five-point central stencil.
///
/// The `eps^2` truncation term of the plain stencil cancels, so a much
/// larger step (around `1e-4` for f64 models) keeps rounding noise far
/// below tolerance even when the loss accumulates thousands of float ops
/// per evaluation. Use this when the plain check bottoms out above the
/// target because truncation and round-off cross over near it.
pub fn grad_check4<F>(
    f: &mut F,
    params: &BTreeMap<String, Tensor>,
    eps: f64,
    floor: f64,
    samples: usize,
    seed: u64,
) -> f64
where
    F: FnMut(&BTreeMap<String, Tensor>) -> (f64, BTreeMap<String, Tensor>),
{
    let (_, analytic) = f(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (name, tensor) in params {
        let grad = analytic
            .get(name)
            .unwrap_or_else(|| panic!("no analytic gradient for {name}"));
        assert_eq!(
            (grad.rows, grad.cols),
            (tensor.rows, tensor.cols),
            "gradient shape mismatch for {name}"
        );
        let mut coords: Vec<usize> = (0..tensor.numel()).collect();
        coords.shuffle(&mut rng);
        coords.truncate(samples.min(tensor.numel()));
        for i in coords {
            let base = tensor.data[i];
            let mut probe = params.clone();
            let mut at = |offset: f64| {
                probe.get_mut(name).unwrap().data[i] = base + offset;
                f(&probe).0
            };
            let p2 = at(2.0 * eps);
            let p1 = at(eps);
            let m1 = at(-eps);
            let m2 = at(-2.0 * eps);
            let numeric = (m2 - p2 + 8.0 * (p1 - m1)) / (12.0 * eps);
            let a = grad.data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}
