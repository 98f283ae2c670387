//! Library forward passes compared with the brute-force references.

use nafrssr::autograd::{row_attention, Tape};
use nafrssr::blocks::{sca, simple_gate, Conv, DsscamParams, ScamParams, LN_EPS};
use nafrssr::params::ParamRegistry;
use nafrssr::tensor::Tensor;

use super::{
    conv_ref, layer_norm_ref, random, randomize, row_attention_ref, sca_ref, scaled_residual_ref, simple_gate_ref,
    tensor, tensor_rel_err, values,
};

/// Input shapes up to `1 x 8 x 6 x 12`.
pub const ORACLE_SHAPES: [[usize; 4]; 5] = [[1, 2, 1, 3], [1, 4, 3, 5], [1, 8, 6, 12], [1, 6, 2, 9], [1, 8, 4, 7]];

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub name: &'static str,
    pub worst: f64,
}

fn worst(name: &'static str, errs: impl IntoIterator<Item = f64>) -> OracleCase {
    OracleCase {
        name,
        worst: errs.into_iter().fold(0.0, f64::max),
    }
}

pub fn row_attention_case() -> OracleCase {
    worst(
        "row_attention",
        ORACLE_SHAPES.iter().enumerate().map(|(i, &s)| {
            let (ql, qr, v) = (random(s, i as u64), random(s, 10 + i as u64), random(s, 20 + i as u64));
            let tape = Tape::inference();
            let got = row_attention(&tape.constant(ql.clone()), &tape.constant(qr.clone()), &tape.constant(v.clone()))
                .unwrap();
            tensor_rel_err(got.value(), &row_attention_ref(&ql, &qr, &v))
        }),
    )
}

pub fn simple_gate_case() -> OracleCase {
    worst(
        "simple_gate",
        ORACLE_SHAPES.iter().enumerate().map(|(i, &s)| {
            let x = random(s, 30 + i as u64);
            let tape = Tape::inference();
            let got = simple_gate(&tape.constant(x.clone())).unwrap();
            tensor_rel_err(got.value(), &simple_gate_ref(&x))
        }),
    )
}

pub fn sca_case() -> OracleCase {
    worst(
        "sca",
        ORACLE_SHAPES.iter().enumerate().map(|(i, &s)| {
            let mut reg = ParamRegistry::new(i as u64);
            let conv = Conv::pointwise(&mut reg, "sca", s[1], s[1]);
            let mut store = reg.finish();
            randomize(&mut store, 0.5, 40 + i as u64);
            let x = random(s, 50 + i as u64);
            let tape = Tape::inference();
            let p = store.bind(&tape);
            let got = sca(&p, &conv, &tape.constant(x.clone())).unwrap();
            let expected = sca_ref(&x, &values(&store, conv.weight), &values(&store, conv.bias));
            tensor_rel_err(got.value(), &expected)
        }),
    )
}

pub fn scam_case() -> OracleCase {
    worst(
        "scam",
        ORACLE_SHAPES.iter().enumerate().map(|(i, &s)| {
            let mut reg = ParamRegistry::new(i as u64);
            let m = ScamParams::register(&mut reg, "x", s[1]);
            let mut store = reg.finish();
            randomize(&mut store, 0.5, 60 + i as u64);
            let (l, r) = (random(s, 70 + i as u64), random(s, 80 + i as u64));
            let tape = Tape::inference();
            let p = store.bind(&tape);
            let (gl, gr) = m.forward(&p, &tape.constant(l.clone()), &tape.constant(r.clone())).unwrap();

            let pw = |conv: &Conv, x: &Tensor| {
                conv_ref(x, &tensor(&store, conv.weight), Some(&values(&store, conv.bias)), 1, 0, 1)
            };
            let ln = |norm: &nafrssr::blocks::Norm, x: &Tensor| {
                layer_norm_ref(x, &values(&store, norm.scale), &values(&store, norm.shift), LN_EPS)
            };
            let ql = pw(&m.query_left, &ln(&m.norm_left, &l));
            let qr = pw(&m.query_right, &ln(&m.norm_right, &r));
            let vl = pw(&m.value_left, &l);
            let vr = pw(&m.value_right, &r);
            let el = scaled_residual_ref(&l, &row_attention_ref(&ql, &qr, &vr), &values(&store, m.gamma_left));
            let er = scaled_residual_ref(&r, &row_attention_ref(&qr, &ql, &vl), &values(&store, m.gamma_right));
            tensor_rel_err(gl.value(), &el).max(tensor_rel_err(gr.value(), &er))
        }),
    )
}

pub fn dsscam_case() -> OracleCase {
    worst(
        "dsscam",
        ORACLE_SHAPES.iter().enumerate().map(|(i, &s)| {
            let mut reg = ParamRegistry::new(i as u64);
            let m = DsscamParams::register(&mut reg, "x", s[1]);
            let mut store = reg.finish();
            randomize(&mut store, 0.5, 90 + i as u64);
            let (l, r) = (random(s, 100 + i as u64), random(s, 110 + i as u64));
            let tape = Tape::inference();
            let p = store.bind(&tape);
            let (gl, gr) = m.forward(&p, &tape.constant(l.clone()), &tape.constant(r.clone())).unwrap();

            let dw = |x: &Tensor| {
                let conv = &m.depthwise;
                conv_ref(x, &tensor(&store, conv.weight), Some(&values(&store, conv.bias)), 1, 1, s[1])
            };
            let ln = |x: &Tensor| layer_norm_ref(x, &values(&store, m.norm.scale), &values(&store, m.norm.shift), LN_EPS);
            let (ql, qr) = (dw(&ln(&l)), dw(&ln(&r)));
            let el = scaled_residual_ref(&l, &row_attention_ref(&ql, &qr, &r), &values(&store, m.gamma_left));
            let er = scaled_residual_ref(&r, &row_attention_ref(&qr, &ql, &l), &values(&store, m.gamma_right));
            tensor_rel_err(gl.value(), &el).max(tensor_rel_err(gr.value(), &er))
        }),
    )
}

pub fn all_cases() -> Vec<OracleCase> {
    vec![row_attention_case(), scam_case(), dsscam_case(), simple_gate_case(), sca_case()]
}
