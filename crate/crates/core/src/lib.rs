//! Citation-history analysis of Web of Science exports: parsing, reference
//! publication year spectroscopy, cited-reference disambiguation with an
//! audit ledger, and citation-network historiography.

pub mod citegraph;
pub mod corpus;
pub mod disambig;
mod error;
pub mod io;
pub mod pipeline;
pub mod rpys;
pub mod wos;

pub use error::{Error, Result};
