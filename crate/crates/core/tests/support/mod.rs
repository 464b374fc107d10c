//! Finite-difference gradient checks and brute-force oracles shared by the test targets.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;
