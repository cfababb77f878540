//! Acceptance suite for `tqst`; the checks live in `tests/acceptance.rs`.
