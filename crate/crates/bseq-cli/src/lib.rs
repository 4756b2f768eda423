//! Library half of the `bseq` binary: file formats, rendering, and the
//! command drivers behind each subcommand.

// Indexed loops are kept where they mirror row-major index math across
// several parallel buffers; iterator chains there would hide the layout.
#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod error;
pub mod formats;
pub mod render;
