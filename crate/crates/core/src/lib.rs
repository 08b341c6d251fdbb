pub mod construct;
pub mod dynamics;
pub mod fiet;
pub mod graph;
pub mod induction;
pub mod lab;
pub mod matrix;
pub mod perm;
pub mod scalar;
