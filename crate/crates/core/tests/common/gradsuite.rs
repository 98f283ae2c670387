//! Finite-difference sweeps over every differentiable operation and block.

use nafrssr::autograd::{row_attention, Tape, Var};
use nafrssr::blocks::{sca, simple_gate, Conv, DsscamParams, EdgeOpParams, NafBlockParams, NafGcBlock2Params, ScamParams};
use nafrssr::model::{ArchConfig, BlockKind, BlockSlot, CrossKind, Model};
use nafrssr::params::{ParamRegistry, ParameterStore};
use nafrssr::stereo::StereoPair;
use nafrssr::tensor::Tensor;
use nafrssr::training::mse_loss;

use super::{check_module, check_op, random, randomize};

/// Worst relative error of one operation over several shapes.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: &'static str,
    pub shapes: usize,
    pub worst: f64,
}

const SHAPES: [[usize; 4]; 5] = [[1, 2, 3, 4], [2, 3, 2, 5], [1, 4, 4, 3], [2, 1, 3, 3], [1, 6, 2, 7]];

fn sweep(name: &'static str, cases: impl IntoIterator<Item = f64>) -> GradCase {
    let errs: Vec<f64> = cases.into_iter().collect();
    GradCase {
        name,
        shapes: errs.len(),
        worst: errs.iter().cloned().fold(0.0, f64::max),
    }
}

fn seeded(i: usize, salt: u64) -> u64 {
    salt * 100 + i as u64
}

pub fn op_cases() -> Vec<GradCase> {
    let mut out = Vec::new();
    let binary = |salt: u64, f: for<'t> fn(&Var<'t>, &Var<'t>) -> Var<'t>| {
        SHAPES
            .iter()
            .enumerate()
            .map(move |(i, &s)| {
                let inputs = [random(s, seeded(i, salt)), random(s, seeded(i, salt + 50))];
                check_op(&inputs, seeded(i, salt), |_, v| f(&v[0], &v[1]))
            })
            .collect::<Vec<_>>()
    };
    out.push(sweep("add", binary(1, |a, b| a.add(b).unwrap())));
    out.push(sweep("sub", binary(2, |a, b| a.sub(b).unwrap())));
    out.push(sweep("mul", binary(3, |a, b| a.mul(b).unwrap())));

    let unary = |salt: u64, f: for<'t> fn(&Var<'t>) -> Var<'t>| {
        SHAPES
            .iter()
            .enumerate()
            .map(move |(i, &s)| check_op(&[random(s, seeded(i, salt))], seeded(i, salt), |_, v| f(&v[0])))
            .collect::<Vec<_>>()
    };
    out.push(sweep("scale", unary(4, |a| a.scale(-1.7))));
    out.push(sweep("sum", unary(5, |a| a.sum())));
    out.push(sweep("mean", unary(6, |a| a.mean())));
    out.push(sweep("softmax_rows", unary(7, |a| a.softmax_rows())));
    out.push(sweep("global_avg_pool", unary(8, |a| a.global_avg_pool())));
    out.push(sweep("pad_replicate(1)", unary(9, |a| a.pad_replicate(1))));
    out.push(sweep("pad_replicate(2)", unary(10, |a| a.pad_replicate(2))));
    out.push(sweep(
        "narrow_channels",
        unary(11, |a| {
            let c = a.shape().c;
            a.narrow_channels(c / 2, c - c / 2).unwrap()
        }),
    ));

    out.push(sweep(
        "channel_scale",
        SHAPES.iter().enumerate().map(|(i, &[n, c, h, w])| {
            let fn_ = if i % 2 == 0 { 1 } else { n };
            let inputs = [random([n, c, h, w], seeded(i, 12)), random([fn_, c, 1, 1], seeded(i, 13))];
            check_op(&inputs, seeded(i, 12), |_, v| v[0].channel_scale(&v[1]).unwrap())
        }),
    ));

    out.push(sweep(
        "repeat_batch",
        [[1, 1, 3, 3], [1, 2, 2, 2], [1, 1, 1, 1], [1, 3, 2, 4], [1, 1, 3, 1]]
            .iter()
            .enumerate()
            .map(|(i, &s)| check_op(&[random(s, seeded(i, 14))], seeded(i, 14), |_, v| v[0].repeat_batch(i + 2))),
    ));

    // (x shape, cout, k, stride, padding, groups, bias)
    let convs: [([usize; 4], usize, usize, usize, usize, usize, bool); 7] = [
        ([1, 2, 5, 4], 3, 3, 1, 1, 1, true),
        ([2, 4, 4, 5], 4, 3, 1, 1, 4, true),
        ([1, 4, 6, 5], 2, 3, 2, 1, 2, false),
        ([1, 3, 4, 4], 5, 1, 1, 0, 1, true),
        ([2, 6, 3, 5], 3, 3, 1, 0, 3, true),
        ([1, 2, 7, 6], 4, 3, 2, 0, 1, false),
        ([1, 8, 3, 4], 4, 3, 1, 1, 2, true),
    ];
    out.push(sweep(
        "conv2d",
        convs.iter().enumerate().map(|(i, &(xs, cout, k, stride, pad, groups, bias))| {
            let mut inputs = vec![
                random(xs, seeded(i, 15)),
                random([cout, xs[1] / groups, k, k], seeded(i, 16)),
            ];
            if bias {
                inputs.push(random([1, cout, 1, 1], seeded(i, 17)));
            }
            check_op(&inputs, seeded(i, 15), move |_, v| {
                v[0].conv2d(&v[1], v.get(2), stride, pad, groups).unwrap()
            })
        }),
    ));

    out.push(sweep(
        "layer_norm",
        SHAPES.iter().filter(|s| s[1] > 1).chain([[1, 5, 2, 2]].iter()).enumerate().map(|(i, &s)| {
            let c = s[1];
            let inputs = [
                random(s, seeded(i, 18)),
                random([1, c, 1, 1], seeded(i, 19)),
                random([1, c, 1, 1], seeded(i, 20)),
            ];
            check_op(&inputs, seeded(i, 18), |_, v| v[0].layer_norm(&v[1], &v[2], 1e-6).unwrap())
        }),
    ));

    out.push(sweep(
        "row_attention",
        SHAPES.iter().enumerate().map(|(i, &s)| {
            let inputs = [random(s, seeded(i, 21)), random(s, seeded(i, 22)), random(s, seeded(i, 23))];
            check_op(&inputs, seeded(i, 21), |_, v| row_attention(&v[0], &v[1], &v[2]).unwrap())
        }),
    ));

    let shuffles: [([usize; 4], usize); 5] = [
        ([1, 4, 2, 3], 2),
        ([2, 8, 3, 2], 2),
        ([1, 12, 2, 2], 2),
        ([1, 9, 2, 2], 3),
        ([2, 4, 1, 1], 2),
    ];
    out.push(sweep(
        "pixel_shuffle",
        shuffles.iter().enumerate().map(|(i, &(s, r))| {
            check_op(&[random(s, seeded(i, 24))], seeded(i, 24), move |_, v| v[0].pixel_shuffle(r).unwrap())
        }),
    ));
    out.push(sweep(
        "pixel_unshuffle",
        shuffles.iter().enumerate().map(|(i, &([n, c, h, w], r))| {
            let s = [n, c / (r * r), h * r, w * r];
            check_op(&[random(s, seeded(i, 25))], seeded(i, 25), move |_, v| v[0].pixel_unshuffle(r).unwrap())
        }),
    ));

    out.push(sweep(
        "simple_gate",
        [[1, 2, 3, 4], [2, 4, 2, 5], [1, 6, 4, 3], [2, 2, 3, 3], [1, 8, 2, 7]]
            .iter()
            .enumerate()
            .map(|(i, &s)| check_op(&[random(s, seeded(i, 26))], seeded(i, 26), |_, v| simple_gate(&v[0]).unwrap())),
    ));

    out.push(sweep(
        "mse_loss",
        SHAPES.iter().enumerate().map(|(i, &s)| {
            let inputs = [
                random(s, seeded(i, 27)),
                random(s, seeded(i, 28)),
                random(s, seeded(i, 29)),
                random(s, seeded(i, 30)),
            ];
            check_op(&inputs, seeded(i, 27), |_, v| {
                let sr = StereoPair::new(v[0].clone(), v[1].clone());
                let hr = StereoPair::new(v[2].clone(), v[3].clone());
                mse_loss(&sr, &hr).unwrap()
            })
        }),
    ));
    out
}

/// Registers a module with random weights (including the zero-initialized
/// residual scales, which would otherwise hide most gradient paths).
fn build<T>(seed: u64, f: impl FnOnce(&mut ParamRegistry) -> T) -> (T, ParameterStore) {
    let mut reg = ParamRegistry::new(seed);
    let module = f(&mut reg);
    let mut store = reg.finish();
    randomize(&mut store, 0.5, seed + 7);
    (module, store)
}

/// `(n, c, h, w)` combinations for block checks; `c` must suit the block.
const BLOCK_SHAPES: [[usize; 4]; 5] = [[1, 4, 3, 4], [2, 4, 2, 3], [1, 8, 2, 5], [1, 4, 4, 2], [2, 8, 3, 3]];

pub fn block_cases() -> Vec<GradCase> {
    let mut out = Vec::new();
    out.push(sweep(
        "sca",
        BLOCK_SHAPES.iter().enumerate().map(|(i, &s)| {
            let (conv, store) = build(seeded(i, 40), |r| Conv::pointwise(r, "sca", s[1], s[1]));
            check_module(&store, &[random(s, seeded(i, 41))], seeded(i, 40), |_, p, v| {
                sca(p, &conv, &v[0]).unwrap()
            })
        }),
    ));
    for (name, with_sca, gc1) in [("naf_block", true, false), ("naf_block_no_sca", false, false), ("nafgc_block1", false, true)] {
        out.push(sweep(
            name,
            BLOCK_SHAPES.iter().enumerate().map(|(i, &s)| {
                let (block, store) = build(seeded(i, 42), |r| {
                    if gc1 {
                        NafBlockParams::gc1(r, "b", s[1], 2, 4)
                    } else {
                        NafBlockParams::naf(r, "b", s[1], 2, with_sca)
                    }
                });
                check_module(&store, &[random(s, seeded(i, 43))], seeded(i, 42), |_, p, v| {
                    block.forward(p, &v[0]).unwrap()
                })
            }),
        ));
    }
    out.push(sweep(
        "nafgc_block2_recursive",
        BLOCK_SHAPES.iter().enumerate().map(|(i, &s)| {
            let (block, store) = build(seeded(i, 44), |r| NafGcBlock2Params::register(r, "b", s[1], 2, 4));
            check_module(&store, &[random(s, seeded(i, 45))], seeded(i, 44), |_, p, v| {
                let once = block.forward(p, &v[0]).unwrap();
                block.forward(p, &once).unwrap()
            })
        }),
    ));
    let pair = |name: &'static str, salt: u64, dsscam: bool| {
        sweep(
            name,
            BLOCK_SHAPES.iter().enumerate().map(move |(i, &s)| {
                let inputs = [random(s, seeded(i, salt + 1)), random(s, seeded(i, salt + 2))];
                // both outputs enter the loss through one channel concat
                if dsscam {
                    let (m, store) = build(seeded(i, salt), |r| DsscamParams::register(r, "x", s[1]));
                    check_module(&store, &inputs, seeded(i, salt), |_, p, v| {
                        let (l, r) = m.forward(p, &v[0], &v[1]).unwrap();
                        l.add(&r.scale(0.37)).unwrap()
                    })
                } else {
                    let (m, store) = build(seeded(i, salt), |r| ScamParams::register(r, "x", s[1]));
                    check_module(&store, &inputs, seeded(i, salt), |_, p, v| {
                        let (l, r) = m.forward(p, &v[0], &v[1]).unwrap();
                        l.add(&r.scale(0.37)).unwrap()
                    })
                }
            }),
        )
    };
    out.push(pair("scam", 46, false));
    out.push(pair("dsscam", 49, true));
    out.push(sweep(
        "edge_op",
        [[1, 3, 3, 4], [2, 3, 4, 4], [1, 3, 5, 3], [1, 3, 2, 6], [2, 3, 3, 3]]
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let (edge, store) = build(seeded(i, 52), |r| EdgeOpParams::register(r, "edge"));
                check_module(&store, &[random(s, seeded(i, 53))], seeded(i, 52), |_, p, v| {
                    edge.forward(p, &v[0]).unwrap()
                })
            }),
    ));
    out
}

/// Whole-network check on tiny configurations; gradients w.r.t. every weight.
pub fn model_cases() -> Vec<GradCase> {
    let configs = [
        (CrossKind::Dsscam, true, [3usize, 4usize]),
        (CrossKind::Scam, false, [3, 3]),
        (CrossKind::Dsscam, false, [4, 3]),
        (CrossKind::None, true, [3, 5]),
        (CrossKind::Scam, true, [3, 4]),
    ];
    vec![sweep(
        "full_model",
        configs.iter().enumerate().map(|(i, &(cross, edge, [h, w]))| {
            let config = ArchConfig {
                blocks: vec![BlockSlot::once(BlockKind::NafGc1), BlockSlot::recursive(2)],
                edge,
                upscale: 2,
                ..ArchConfig::uniform(4, BlockKind::Naf, 0, cross)
            };
            let mut model = Model::new(config, seeded(i, 60)).unwrap();
            randomize(model.params_mut(), 0.3, seeded(i, 61));
            let inputs = [
                Tensor::uniform([1, 3, h, w], 0.0, 1.0, &mut super::rng(seeded(i, 62))),
                Tensor::uniform([1, 3, h, w], 0.0, 1.0, &mut super::rng(seeded(i, 63))),
            ];
            let fixed = StereoPair::new(inputs[0].clone(), inputs[1].clone());
            check_module(model.params(), &[], seeded(i, 60), |tape: &Tape, p, _| {
                let out = model.forward(tape, p, &fixed).unwrap();
                out.left.add(&out.right.scale(0.61)).unwrap()
            })
        }),
    )]
}

pub fn all_cases() -> Vec<GradCase> {
    let mut v = op_cases();
    v.extend(block_cases());
    v.extend(model_cases());
    v
}
