//! Acceptance report for `bcfeedback`; see `tests/acceptance.rs`.
