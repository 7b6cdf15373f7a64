pub mod parser;
pub mod semantics;
pub mod terms;
pub mod ctmc;
pub mod lumping;
pub mod security;
pub mod cli;
