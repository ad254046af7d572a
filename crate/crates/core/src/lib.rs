pub mod checksum_hash;
pub mod exploration;
pub mod frontend;
pub mod harness;
pub mod interp;
pub mod match_action;
pub mod network;
pub mod parser_engine;
pub mod pipeline;
pub mod program_model;
pub mod runtime_state;
pub mod values;
