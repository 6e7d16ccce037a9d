//! Acceptance checks for the simulator. The criteria run from
//! `tests/acceptance.rs`; this library is empty.
