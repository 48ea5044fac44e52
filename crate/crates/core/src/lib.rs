pub mod analysis;
pub mod backend;
pub mod choice;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod intervention;
pub mod manifest;
pub mod pipeline;
pub mod probing;
pub mod prompts;
pub mod simulation;
pub mod util;
