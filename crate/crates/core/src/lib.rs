pub mod bench;
pub mod config;
pub mod design;
pub mod engine;
pub mod frontend;
pub mod graph;
pub mod report;
pub mod taint;

pub use design::{Design, DesignError};
