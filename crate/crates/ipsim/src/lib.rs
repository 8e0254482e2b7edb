// SPDX-License-Identifier: Apache-2.0

//! Filesystem, formats, parallel execution and the command line for
//! `ipsim-core`.

pub mod checkpoint;
pub mod cli;
pub mod corpus_io;
pub mod dfg_json;
pub mod exec;
pub mod fsio;
