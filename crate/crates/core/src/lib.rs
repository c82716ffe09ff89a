#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod matrix;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod tokenizer;
pub mod types;
pub mod masking;
pub mod model;
pub mod decoding;
pub mod io;
pub mod experiment;
