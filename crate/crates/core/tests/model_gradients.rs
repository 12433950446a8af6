mod common;

use common::grad_suite::{end_to_end_cases, module_cases};

fn assert_all_pass(cases: Vec<(String, agfa_core::tensor::GradCheckReport)>) {
    let failures: Vec<String> = cases
        .iter()
        .filter(|(_, r)| !r.passed || r.checked == 0)
        .map(|(name, r)| format!("{name}: max rel {:.3e}", r.max_relative_error))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn attention_modules_match_central_differences() {
    assert_all_pass(module_cases());
}

#[test]
fn full_network_matches_central_differences() {
    let cases = end_to_end_cases(50);
    for (name, r) in &cases {
        println!("{name}: {:.3e} over {}", r.max_relative_error, r.checked);
    }
    assert_all_pass(cases);
}
