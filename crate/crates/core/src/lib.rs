pub mod bias_catalog;
pub mod corpus_io;
pub mod corrector_gateway;
pub mod error;
pub mod filter_engine;
pub mod noise_model;
pub mod pipeline;
pub mod prompt_builder;
pub mod scoring;
pub mod seed;
pub mod sot;
pub mod synth;
pub mod text_norm;

pub use error::{Error, Result};

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/transcripts.md")]
    mod transcripts {}
    #[doc = include_str!("../../../book/src/biasing_lists.md")]
    mod biasing_lists {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/correction.md")]
    mod correction {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
