//! End-to-end acceptance suite; the checks live in `tests/acceptance.rs`
//! and run with `cargo test -p crosswidth-validation`.
