//! Incremental, parallel checking of proof documents.

pub mod hash;
pub mod kernel;
pub mod syntax;
pub mod cancel;
pub mod env;
pub mod tactics;
pub mod document;
pub mod stm;
pub mod scheduler;
pub mod protocol;
pub mod engine;
pub mod service;
pub mod report;
