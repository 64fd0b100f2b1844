//! Server-side de-hashing: dictionary construction, context-aware candidate
//! selection, BoW reconstruction and prior refinement.

mod candidates;
mod solve;

pub use candidates::{
    candidates_from_binary, candidates_from_category, candidates_from_gps, combine_candidates, BinaryCue,
    CandidateCue, CandidateVWs, CategoryCue, CombineMode, ContextTag, CueRegistry, GpsCue,
};
pub use solve::{
    build_dictionary, pseudo_bow, pseudo_bow_mass, reconstruct_bow, reconstruct_bow_with_prior, PriorOptions,
    Reconstruction, SubvectorReport, DROP_BELOW, SKIP_NORM,
};
