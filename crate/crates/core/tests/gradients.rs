mod common;

use common::Case;

fn assert_case(c: Case) {
    assert!(c.report.entries_checked > 0);
    assert!(
        c.report.max_rel_error < c.tolerance,
        "{}: {:?} exceeds {}",
        c.name,
        c.report,
        c.tolerance
    );
}

#[test]
fn tanh() {
    assert_case(common::tanh_case());
}

#[test]
fn dense() {
    assert_case(common::dense_case());
}

#[test]
fn conv1d() {
    assert_case(common::conv1d_case());
}

#[test]
fn lstm_five_steps() {
    assert_case(common::lstm_case());
}

#[test]
fn batch_norm_training_path() {
    assert_case(common::batch_norm_case());
}

#[test]
fn leaky_relu_away_from_kink() {
    assert_case(common::leaky_relu_case());
}

#[test]
fn generator_and_critic_end_to_end() {
    assert_case(common::end_to_end_case());
}
