//! Pipeline plumbing behind the `stentrom` command: configuration, the
//! generate/train/predict steps and the HTTP prediction service.

pub mod config;
pub mod pipeline;
pub mod service;
