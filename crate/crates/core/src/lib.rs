pub mod econometrics;
pub mod indices;
pub mod intensity;
pub mod numerics;
pub mod panel;
pub mod rng;
pub mod spatial;
pub mod synth;
pub mod cli;
