pub mod data;
pub mod dump;
pub mod eval;
pub mod model;
