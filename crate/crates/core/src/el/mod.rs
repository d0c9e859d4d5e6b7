//! Entity linking: lexical candidate retrieval plus bi-encoder ranking.
//!
//! A linking corpus is a set of per-domain document collections and
//! mentions in context. BM25 retrieval proposes a fixed-size candidate
//! set per mention, the paired encoders score mention against candidate
//! bodies with every entity name scrubbed, and training pulls each
//! mention toward its gold entity against the shared in-batch pool.

pub mod bm25;
pub mod candidates;
pub mod encode;
pub mod evaluate;
pub mod io;
pub mod split;
pub mod synth;
pub mod train;

pub use bm25::{Bm25Params, DomainCollection};
pub use candidates::{build_all_candidates, build_candidates, CandidatePolicy, CANDIDATE_COUNT};
pub use encode::{corpus_vocab, encode_candidate, encode_mention};
pub use evaluate::el_evaluate;
pub use io::{CandidateEntry, CandidateSet, Document, MentionRecord, Provenance};
pub use split::{build_inductive_splits, ElSplits};
pub use synth::{synth_el_corpus, ElSynthSpec};
pub use train::{el_train, write_el_epoch_log, ElEpochReport};
