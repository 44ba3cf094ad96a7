pub mod ingest;
pub mod item;
pub mod labels;
pub mod seed;
pub mod visionprep;
pub mod inference;
pub mod reannotate;
pub mod export;
pub mod evaluate;
pub mod pipeline;
pub mod synth;
