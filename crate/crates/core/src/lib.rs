pub mod cases;
pub mod control;
pub mod dynamics;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod synth;
