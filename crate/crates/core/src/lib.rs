//! Multi-source analytics agent runtime.
//!
//! The pipeline runs in stages that can each be used on their own:
//!
//! 1. [`ingestion`] discovers CSV, SQLite, JSON and plain-text sources in a
//!    workspace directory and samples every column.
//! 2. [`metagraph`] gathers all columns into one catalog with globally unique
//!    aliases such as `csv.sales.user_id`.
//! 3. [`linkage`] scores every type-compatible column pair by name and value
//!    similarity and renders the strongest pairs as join hints.
//! 4. [`staging`] loads every source into one read-only SQLite store.
//! 5. [`planner`] decomposes an analytical goal into sub-questions,
//!    [`executor`] turns each into a self-correcting SQL query with a chart,
//!    and [`synthesis`] composes typed insights into a report.
//!
//! Every language-model call goes through [`provider`], which routes requests
//! across a cheap and a strong model tier and can record or replay cassettes
//! for fully offline runs. [`fixtures`] synthesizes workspaces with planted
//! insights and join keys for testing.

pub mod cli;
pub mod config;
pub mod error;
pub mod executor;
pub mod fixtures;
pub mod ingestion;
pub mod linkage;
pub mod metagraph;
pub mod pipeline;
pub mod planner;
pub mod prompt;
pub mod provider;
pub mod staging;
pub mod synthesis;
pub mod util;

pub use error::{Error, Result};
