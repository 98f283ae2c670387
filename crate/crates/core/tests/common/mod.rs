//! Shared helpers: finite-difference gradient checks and brute-force
//! reference implementations written without the library's kernels.

#![allow(dead_code)]

pub mod gradsuite;
pub mod oracles;

use nafrssr::autograd::{Tape, Var};
use nafrssr::params::{BoundParams, ParameterStore};
use nafrssr::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Coordinates probed per tensor when it is too large to check exhaustively.
pub const FD_SAMPLES: usize = 24;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: impl Into<Shape>, seed: u64) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn probe_indices(len: usize, seed: u64) -> Vec<usize> {
    if len <= FD_SAMPLES {
        return (0..len).collect();
    }
    let mut r = rng(seed);
    (0..FD_SAMPLES).map(|_| r.gen_range(0..len)).collect()
}

/// Scalarizes an output with a fixed random projection so every output
/// element contributes a distinct weight to the loss.
fn project<'t>(tape: &'t Tape, out: &Var<'t>, seed: u64) -> Var<'t> {
    let r = tape.constant(random(out.shape(), seed ^ 0x9e37));
    out.mul(&r).expect("projection shape").sum()
}

/// Worst relative error between analytic and central-difference gradients
/// over every input of `f`.
pub fn check_op<F>(inputs: &[Tensor], seed: u64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = project(&tape, &f(&tape, &vars), seed);
    let grads = tape.backward(&loss).expect("backward");
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(v)).collect();

    let eval = |xs: &[Tensor]| -> f64 {
        let tape = Tape::inference();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        project(&tape, &f(&tape, &vars), seed).value().data()[0]
    };
    let mut worst = 0.0f64;
    for (k, g) in analytic.iter().enumerate() {
        let idx = probe_indices(inputs[k].len(), seed + k as u64);
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += FD_STEP;
            let up = eval(&xs);
            xs[k].data_mut()[i] -= 2.0 * FD_STEP;
            let down = eval(&xs);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let picked: Vec<f64> = idx.iter().map(|&i| g.data()[i]).collect();
        worst = worst.max(rel_err(&picked, &numeric));
    }
    worst
}

/// Fills every parameter with uniform values in `[-scale, scale]`.
pub fn randomize(store: &mut ParameterStore, scale: f64, seed: u64) {
    let mut r = rng(seed);
    for p in store.iter_mut() {
        for v in &mut p.values {
            *v = r.gen_range(-scale..scale);
        }
    }
}

/// Like [`check_op`] for a module: gradients with respect to its inputs and
/// every parameter in `store`.
pub fn check_module<F>(store: &ParameterStore, inputs: &[Tensor], seed: u64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let params = store.bind(&tape);
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = project(&tape, &f(&tape, &params, &vars), seed);
    let grads = tape.backward(&loss).expect("backward");

    let eval = |store: &ParameterStore, xs: &[Tensor]| -> f64 {
        let tape = Tape::inference();
        let params = store.bind(&tape);
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        project(&tape, &f(&tape, &params, &vars), seed).value().data()[0]
    };
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.wrt(v);
        let idx = probe_indices(inputs[k].len(), seed + k as u64);
        let mut numeric = Vec::new();
        for &i in &idx {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += FD_STEP;
            let up = eval(store, &xs);
            xs[k].data_mut()[i] -= 2.0 * FD_STEP;
            let down = eval(store, &xs);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let picked: Vec<f64> = idx.iter().map(|&i| g.data()[i]).collect();
        worst = worst.max(rel_err(&picked, &numeric));
    }
    for (pi, pv) in params.vars().iter().enumerate() {
        let g = grads.wrt(pv);
        let len = g.len();
        let idx = probe_indices(len, seed + 1000 + pi as u64);
        let mut numeric = Vec::new();
        for &i in &idx {
            let mut s = store.clone();
            let id = nafrssr::params::ParamId(pi);
            s.get_mut(id).values[i] += FD_STEP;
            let up = eval(&s, inputs);
            s.get_mut(id).values[i] -= 2.0 * FD_STEP;
            let down = eval(&s, inputs);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let picked: Vec<f64> = idx.iter().map(|&i| g.data()[i]).collect();
        worst = worst.max(rel_err(&picked, &numeric));
    }
    worst
}

/// Ties every right-view cross-module parameter to its left-view twin, so
/// the network treats the two views identically.
pub fn symmetrize(store: &mut ParameterStore) {
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    for name in names {
        let twin = if let Some(stem) = name.strip_suffix("_r") {
            format!("{stem}_l")
        } else if name.contains("_r.") {
            name.replace("_r.", "_l.")
        } else {
            continue;
        };
        let values = store.by_name(&twin).expect("left twin").values.clone();
        let id = store.id(&name).unwrap();
        store.get_mut(id).values = values;
    }
}

// ---- brute-force references -------------------------------------------------

/// Direct 6-loop cross-correlation with zero padding.
pub fn conv_ref(x: &Tensor, w: &Tensor, bias: Option<&[f64]>, stride: usize, pad: usize, groups: usize) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let cin_g = xs.c / groups;
    let cout_g = ws.n / groups;
    let mut out = Tensor::zeros([xs.n, ws.n, oh, ow]);
    for n in 0..xs.n {
        for o in 0..ws.n {
            let g = o / cout_g;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    for ic in 0..cin_g {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (y * stride + ky) as i64 - pad as i64;
                                let ix = (xo * stride + kx) as i64 - pad as i64;
                                if iy < 0 || ix < 0 || iy >= xs.h as i64 || ix >= xs.w as i64 {
                                    continue;
                                }
                                acc += x.at(n, g * cin_g + ic, iy as usize, ix as usize) * w.at(o, ic, ky, kx);
                            }
                        }
                    }
                    out.set(n, o, y, xo, acc);
                }
            }
        }
    }
    out
}

/// Channel layer norm per pixel.
pub fn layer_norm_ref(x: &Tensor, scale: &[f64], shift: &[f64], eps: f64) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for y in 0..s.h {
            for xx in 0..s.w {
                let vals: Vec<f64> = (0..s.c).map(|c| x.at(n, c, y, xx)).collect();
                let mean = vals.iter().sum::<f64>() / s.c as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.c as f64;
                for c in 0..s.c {
                    out.set(n, c, y, xx, (vals[c] - mean) / (var + eps).sqrt() * scale[c] + shift[c]);
                }
            }
        }
    }
    out
}

/// Row attention from its definition: for each row, `softmax(Q_l Q_r^T / sqrt(c)) V`.
pub fn row_attention_ref(ql: &Tensor, qr: &Tensor, v: &Tensor) -> Tensor {
    let s = ql.shape();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for y in 0..s.h {
            for i in 0..s.w {
                let logits: Vec<f64> = (0..s.w)
                    .map(|j| (0..s.c).map(|c| ql.at(n, c, y, i) * qr.at(n, c, y, j)).sum::<f64>() / (s.c as f64).sqrt())
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for c in 0..s.c {
                    let val: f64 = (0..s.w).map(|j| exps[j] / z * v.at(n, c, y, j)).sum();
                    out.set(n, c, y, i, val);
                }
            }
        }
    }
    out
}

pub fn simple_gate_ref(x: &Tensor) -> Tensor {
    let s = x.shape();
    let half = s.c / 2;
    let mut out = Tensor::zeros([s.n, half, s.h, s.w]);
    for n in 0..s.n {
        for c in 0..half {
            for y in 0..s.h {
                for xx in 0..s.w {
                    out.set(n, c, y, xx, x.at(n, c, y, xx) * x.at(n, c + half, y, xx));
                }
            }
        }
    }
    out
}

/// SCA: `x * (W pool(x) + b)` with a `[c, c]` matrix.
pub fn sca_ref(x: &Tensor, w: &[f64], b: &[f64]) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let pooled: Vec<f64> = (0..s.c)
            .map(|c| {
                let mut acc = 0.0;
                for y in 0..s.h {
                    for xx in 0..s.w {
                        acc += x.at(n, c, y, xx);
                    }
                }
                acc / (s.h * s.w) as f64
            })
            .collect();
        for o in 0..s.c {
            let a: f64 = b[o] + (0..s.c).map(|i| w[o * s.c + i] * pooled[i]).sum::<f64>();
            for y in 0..s.h {
                for xx in 0..s.w {
                    out.set(n, o, y, xx, x.at(n, o, y, xx) * a);
                }
            }
        }
    }
    out
}

/// `x + g * a` with a per-channel `g`.
pub fn scaled_residual_ref(x: &Tensor, a: &Tensor, g: &[f64]) -> Tensor {
    let s = x.shape();
    let mut out = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for xx in 0..s.w {
                    out.set(n, c, y, xx, x.at(n, c, y, xx) + g[c] * a.at(n, c, y, xx));
                }
            }
        }
    }
    out
}

pub fn tensor(store: &ParameterStore, id: nafrssr::params::ParamId) -> Tensor {
    store.get(id).to_tensor()
}

pub fn values(store: &ParameterStore, id: nafrssr::params::ParamId) -> Vec<f64> {
    store.get(id).values.clone()
}

/// Relative error of `a` against reference `b` over the whole tensor.
pub fn tensor_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    rel_err(a.data(), b.data())
}
