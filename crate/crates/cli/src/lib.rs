//! IO, file formats and the grid-search harness for the
//! intention-emotion-action toolkit. The algorithmic core lives in
//! `iea-core`; this crate owns everything that touches the filesystem:
//! JSON-lines corpora, dictionary and checkpoint files, pretrained vector
//! loading, human-eval CSVs, run manifests, and the `iea` command-line
//! driver built on top.

pub mod checkpoint;
pub mod config;
pub mod dictfile;
pub mod evaluate;
pub mod glove;
pub mod grid;
pub mod humaneval;
pub mod jsonl;
pub mod manifest;
pub mod predictions;
