pub mod cli;
pub mod dataset;
pub mod metrics;
pub mod numerics;
pub mod pseudocolor;
pub mod synthetic;
pub mod tensorfile;
pub mod training;
pub mod vit;
