mod common;

use common::oracles;

const TOLERANCE: f64 = 1e-10;

#[test]
fn row_attention_matches_reference() {
    let c = oracles::row_attention_case();
    assert!(c.worst < TOLERANCE, "{c:?}");
}

#[test]
fn scam_matches_reference() {
    let c = oracles::scam_case();
    assert!(c.worst < TOLERANCE, "{c:?}");
}

#[test]
fn dsscam_matches_reference() {
    let c = oracles::dsscam_case();
    assert!(c.worst < TOLERANCE, "{c:?}");
}

#[test]
fn simple_gate_matches_reference() {
    let c = oracles::simple_gate_case();
    assert!(c.worst < TOLERANCE, "{c:?}");
}

#[test]
fn sca_matches_reference() {
    let c = oracles::sca_case();
    assert!(c.worst < TOLERANCE, "{c:?}");
}
