//! Finite-stage builders: involution towers, nice families and their
//! conditions, and block-wise diagonal assembly.

pub mod gadget;
pub mod nice;
pub mod star;
pub mod tower;
