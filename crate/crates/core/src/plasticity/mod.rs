//! Pointwise elastoplastic integration and plastic strain snapshots.

mod history;
mod io;
mod return_map;

pub use history::{integrate_history, integrate_history_sparse, HistorySnapshot, Integration, PlasticState};
pub use io::{
    read_matrix_binary, read_snapshot_binary, read_snapshot_csv, write_matrix_binary, write_snapshot_binary,
    write_snapshot_csv, DEFAULT_CHUNK_WIDTH,
};
pub use return_map::{elastic_stress, return_map_point, von_mises, PointState, ReturnMap};
