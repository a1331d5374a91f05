//! File formats, replicate studies and the `flowsum` command line on top of
//! [`flowsum_core`].

pub mod cli;
pub mod io;
pub mod study;
