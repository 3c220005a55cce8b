pub mod num;
pub mod model;
pub mod clocks;
pub mod mac;
pub mod consensus;
pub mod protocol;
pub mod scheduler;
pub mod adversary;
pub mod engine;
