//! File formats and job plumbing around `conv-lower-core`: canonical JSON
//! serialization for tensors, networks, plans and reports, a parallel
//! certification driver, and the batch runner behind the `conv-lower`
//! binary.

pub mod json;
pub mod runner;
