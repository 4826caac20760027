//! Rateless-code downlink scheduling under imperfect channel estimates.
//!
//! See the book under `book/` for a guided tour; every snippet there runs as a
//! doc-test of this crate.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod controller;
pub mod engine;
pub mod error;
pub mod output;
pub mod optimize;
pub mod oracle;
pub mod rateless;
pub mod special;
pub mod utility;

// Book chapters, compiled as doc-tests so the snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/queues.md")]
    mod queues {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
