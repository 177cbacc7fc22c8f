//! Acceptance checks for `hbpe` live in `tests/acceptance.rs`; run them with
//! `cargo test -p hbpe-verify --test acceptance`.
