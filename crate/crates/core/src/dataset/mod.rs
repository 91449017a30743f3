//! Multi-relation attributed graphs: in-memory form, on-disk format,
//! stratified splitting and a synthetic camouflage generator.

mod graph;
mod io;
mod split;
mod synthetic;

pub use graph::{MultiRelationGraph, NeighborIndex, Relation};
pub use io::{load_graph, save_graph, EDGE_FILE_PREFIX, FEATURES_FILE, LABELS_FILE, META_FILE};
pub use split::{split_stratified, DataSplit};
pub use synthetic::{generate_synthetic, SyntheticConfig};
