//! File formats, language-model clients and the command-line pipeline
//! around `bookseg-core`.

pub mod backend;
pub mod config;
pub mod io;
pub mod mock;
pub mod ocr;
pub mod pipeline;
pub mod xml;
