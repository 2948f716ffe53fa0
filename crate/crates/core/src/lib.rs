pub mod linalg;
pub mod expr;
pub mod flow;
pub mod z2index;
pub mod maslov;
pub mod parity;
pub mod bifurcation;
pub mod suites;
