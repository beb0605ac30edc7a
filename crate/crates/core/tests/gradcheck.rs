//! The full suite runs in the acceptance target; this is its negative control.

use oslr::gradsuite::{check_names, run_check};

#[test]
fn corrupted_backward_is_detected() {
    for (check, op) in [
        ("conv2d_3x3_same", "conv2d"),
        ("relu", "relu"),
        ("composite_multi_scale", "concat_channels"),
    ] {
        let r = run_check(check, 1, Some(op)).unwrap();
        assert!(!r.passed(), "{check}: corruption of {op} went unnoticed");
    }
}

#[test]
fn single_seed_of_each_check_passes() {
    for name in check_names() {
        let r = run_check(name, 1, None).unwrap();
        assert!(r.passed(), "{name}: {:.3e}", r.max_rel_err);
    }
}
