//! Small trainable models with declared prunable structures.

mod checkpoint;
mod corpus;
mod groups;
mod model;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use corpus::{batch_from, minibatches, select_indices, Corpus, BYTE_VOCAB, DEFAULT_SEQ_LEN};
pub use groups::{GroupLayout, GroupTable, PruneGroup, PruneStructure, Slice, StructureClass};
pub use model::{
    build_mlp, build_mlp_with_context, build_tiny_transformer, Architecture, Batch, BlockShape, Model,
    TransformerConfig,
};
pub use train::{recover_finetune, FinetuneOutcome};
