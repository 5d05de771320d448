pub mod build_graph;
pub mod eval;
pub mod gradcheck;
pub mod path;
pub mod synth;
pub mod train;
