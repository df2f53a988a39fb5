//! Exact computation of the undulation invariant of plane quartics and of
//! the graded components of the undulation ideal.

pub mod curve;
pub mod exactnum;
pub mod idealgen;
pub mod linalg;
pub mod polycore;
pub mod undulation;
