mod common;

use common::{algebra_oracle, temporal_oracle};

#[test]
fn temporal_domains_match_the_bit_set_model() {
    temporal_oracle::check(10_000, 7).unwrap();
}

#[test]
fn extraction_functions_match_brute_force() {
    let counts = algebra_oracle::check(1000, 11).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(counts["join"], 2000);
    assert_eq!(counts.len(), 5);
}
