//! Acceptance criteria in, executable tests out.
//!
//! The crate is organised along the pipeline:
//!
//! * [`gherkin`] parses, validates and renders the Gherkin subset used as the
//!   intermediate representation;
//! * [`prompting`] models acceptance criteria and builds the prompts;
//! * [`gateway`] talks to a chat-completions backend, live or scripted;
//! * [`postprocess`] extracts code from responses, repairs it and classifies
//!   failures;
//! * [`harness`] runs trials in sandboxes and persists their records;
//! * [`metrics`] summarises campaigns and renders reports.

pub mod gateway;
pub mod gherkin;
pub mod harness;
pub mod metrics;
pub mod postprocess;
pub mod prompting;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gherkin.md")]
    mod gherkin {}
    #[doc = include_str!("../../../book/src/prompting.md")]
    mod prompting {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/postprocess.md")]
    mod postprocess {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
