mod common;

use common::gradsuite::{block_cases, model_cases, op_cases, GradCase};

const TOLERANCE: f64 = 1e-4;

fn assert_cases(cases: &[GradCase]) {
    for c in cases {
        assert!(c.shapes >= 5, "{}: only {} shapes", c.name, c.shapes);
        assert!(c.worst < TOLERANCE, "{}: relative error {:e}", c.name, c.worst);
    }
}

#[test]
fn elementary_ops_match_finite_differences() {
    assert_cases(&op_cases());
}

#[test]
fn blocks_match_finite_differences() {
    assert_cases(&block_cases());
}

#[test]
fn whole_network_matches_finite_differences() {
    assert_cases(&model_cases());
}

