//! Analytic gradients against central finite differences on toy networks.

mod common;

#[test]
fn generator_gradients_match_finite_differences() {
    common::grad::generator_gradients_match_finite_differences();
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    common::grad::discriminator_gradients_match_finite_differences();
}

#[test]
fn discriminator_loss_gradient_matches_finite_differences() {
    common::grad::discriminator_loss_gradient_matches_finite_differences();
}

#[test]
fn generator_objective_gradient_matches_finite_differences() {
    common::grad::generator_objective_gradient_matches_finite_differences();
}

#[test]
fn losses_have_closed_forms_on_constant_inputs() {
    common::grad::losses_have_closed_forms_on_constant_inputs();
}
