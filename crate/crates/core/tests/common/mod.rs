//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use rand::Rng;
use weightscape::mlp::{Activation, Mlp, Sample};
use weightscape::seed;

pub const FD_STEP: f64 = 1e-5;

/// A random net with up to three weight layers of at most ten units, random
/// biases, and a batch of random samples.
pub fn random_problem(seed_: u64) -> (Mlp, Vec<Sample>) {
    let mut rng = seed::rng(seed_);
    let depth = rng.gen_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=10)).collect();
    let mut m = Mlp::init(&sizes, seed_).unwrap();
    for layer in m.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let classes = *sizes.last().unwrap();
    let batch = (0..rng.gen_range(1..=4))
        .map(|_| {
            let x = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Sample::labeled(x, rng.gen_range(0..classes), classes)
        })
        .collect();
    (m, batch)
}

/// Working precision of the finite-difference oracle, in bits.
const ORACLE_BITS: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Mean per-sample RMS loss with parameters shifted by `delta` at `index`,
/// evaluated in 256-bit arithmetic so that rounding cannot swamp the difference
/// quotient of small gradient components.
fn precise_batch_loss(m: &Mlp, batch: &[Sample], index: usize, delta: f64, cc: &mut Consts) -> BigFloat {
    let p = ORACLE_BITS;
    let big = |v: f64| BigFloat::from_f64(v, p);
    let mut params: Vec<BigFloat> = m.parameters().into_iter().map(big).collect();
    params[index] = params[index].add(&big(delta), p, RM);

    let mut total = big(0.0);
    for sample in batch {
        let mut act: Vec<BigFloat> = sample.input.iter().copied().map(big).collect();
        let mut offset = 0;
        for layer in m.layers() {
            let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
            let bias_at = offset + fan_in * fan_out;
            act = (0..fan_out)
                .map(|o| {
                    let mut z = params[bias_at + o].clone();
                    for (i, a) in act.iter().enumerate() {
                        z = z.add(&params[offset + o * fan_in + i].mul(a, p, RM), p, RM);
                    }
                    match layer.activation() {
                        Activation::Tanh => z.tanh(p, RM, cc),
                        Activation::Identity => z,
                    }
                })
                .collect();
            offset = bias_at + fan_out;
        }
        let mut sq = big(0.0);
        for (y, t) in act.iter().zip(&sample.target) {
            let e = y.sub(&big(*t), p, RM);
            sq = sq.add(&e.mul(&e, p, RM), p, RM);
        }
        let mean = sq.div(&big(act.len() as f64), p, RM);
        total = total.add(&mean.sqrt(p, RM), p, RM);
    }
    total.div(&big(batch.len() as f64), p, RM)
}

fn to_f64(x: &BigFloat, cc: &mut Consts) -> f64 {
    x.format(Radix::Dec, RM, cc).unwrap().parse().unwrap()
}

/// Central finite differences of the mean batch loss for every parameter,
/// computed with the high-precision oracle.
pub fn finite_difference_gradient(m: &Mlp, batch: &[Sample], step: f64) -> Vec<f64> {
    let mut cc = Consts::new().unwrap();
    let two_h = BigFloat::from_f64(2.0 * step, ORACLE_BITS);
    (0..m.parameter_count())
        .map(|i| {
            let plus = precise_batch_loss(m, batch, i, step, &mut cc);
            let minus = precise_batch_loss(m, batch, i, -step, &mut cc);
            let q = plus.sub(&minus, ORACLE_BITS, RM).div(&two_h, ORACLE_BITS, RM);
            to_f64(&q, &mut cc)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between backprop and finite differences.
pub fn worst_gradient_error(m: &Mlp, batch: &[Sample]) -> f64 {
    let (g, _) = m.gradient(batch).unwrap();
    let fd = finite_difference_gradient(m, batch, FD_STEP);
    g.flatten()
        .iter()
        .zip(&fd)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}
