//! Package format and the persistent index.

mod index;
mod package;
pub mod schema;

pub use index::{new_id, now_secs, Index, IndexFilter, IndexRecord};
pub use package::{sha256_hex, LearnwarePackage, ModelSource, MAX_UNPACKED_BYTES};
