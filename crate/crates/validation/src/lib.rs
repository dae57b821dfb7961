//! Holds the `acceptance` test target. Run it with
//! `cargo test -p suscept-validation --test acceptance`.
