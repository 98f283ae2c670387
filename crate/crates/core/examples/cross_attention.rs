//! Row-wise cross attention recovers horizontal disparity.
//!
//! The right-view features are the left-view features shifted by a known
//! disparity. Attending from each left pixel over its row in the right view
//! and averaging the column index gives back `x - disparity`.
//!
//! `cargo run --release --example cross_attention`

use nafrssr::autograd::{row_attention, Tape};
use nafrssr::blocks::DsscamParams;
use nafrssr::params::ParamRegistry;
use nafrssr::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C: usize = 16;
const H: usize = 4;
const W: usize = 40;
const DISPARITY: usize = 5;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut left = Tensor::zeros([1, C, H, W]);
    let mut right = Tensor::zeros([1, C, H, W]);
    // random +-2 codes; right[x] sees what left saw at x + DISPARITY
    let codes: Vec<f64> = (0..C * H * (W + 2 * DISPARITY))
        .map(|_| if rng.gen::<bool>() { 2.0 } else { -2.0 })
        .collect();
    let code = |c: usize, y: usize, x: usize| codes[(c * H + y) * (W + 2 * DISPARITY) + x];
    for c in 0..C {
        for y in 0..H {
            for x in 0..W {
                left.set(0, c, y, x, code(c, y, x + DISPARITY));
                right.set(0, c, y, x, code(c, y, x + 2 * DISPARITY));
            }
        }
    }
    let mut columns = Tensor::zeros([1, C, H, W]);
    for c in 0..C {
        for y in 0..H {
            for x in 0..W {
                columns.set(0, c, y, x, x as f64);
            }
        }
    }

    let tape = Tape::inference();
    let (l, r) = (tape.constant(left.clone()), tape.constant(right.clone()));
    let matched = row_attention(&l, &r, &tape.constant(columns))?;
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..H {
        for x in DISPARITY..W {
            total += x as f64 - matched.value().at(0, 0, y, x);
            count += 1;
        }
    }
    println!("true disparity {DISPARITY}, recovered mean {:.3}", total / count as f64);

    // A freshly initialized DSSCAM has zero residual scales, so it passes
    // both views through unchanged; nonzero scales mix in the other view.
    let mut reg = ParamRegistry::new(0);
    let module = DsscamParams::register(&mut reg, "cross", C);
    let mut store = reg.finish();
    let p = store.bind(&tape);
    let (out_l, _) = module.forward(&p, &l, &r)?;
    println!("at init, left output equals left input: {}", out_l.value() == &left);

    store.get_mut(module.gamma_left).values.fill(1.0);
    store.get_mut(module.gamma_right).values.fill(1.0);
    let p = store.bind(&tape);
    let (out_l, _) = module.forward(&p, &l, &r)?;
    let change: f64 = out_l
        .value()
        .data()
        .iter()
        .zip(left.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / left.len() as f64;
    println!("with unit scales, mean |change| of the left view: {change:.4}");
    Ok(())
}
