//! Desk-scale acceptance suite; see `tests/acceptance.rs`.
