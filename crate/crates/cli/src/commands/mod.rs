pub mod eval;
pub mod gen_data;
pub mod infer;
pub mod train;
