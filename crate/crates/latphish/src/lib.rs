//! Lateral phishing detection and characterization for enterprise email.
//!
//! The toolkit covers the full workflow: loading and indexing email corpora,
//! extracting detector features (recipient behavior, lure keywords, URL
//! reputation), training a bagged decision-tree classifier, text-similarity
//! subdetectors (fuzzy phish matching and template matching), an evaluation
//! pipeline with temporal splits and monthly continuous learning, attacker
//! characterization analytics, and a deterministic synthetic-corpus
//! generator for end-to-end validation.

pub mod characterize;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod features;
pub mod forest;
pub mod html;
pub mod pipeline;
pub mod psl;
pub mod syngen;
pub mod textsim;
pub mod urlrep;

pub use error::{Error, Result};
