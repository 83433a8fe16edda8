pub mod analyze;
pub mod benchmark;
pub mod fit;
pub mod gof;
pub mod simulate;
