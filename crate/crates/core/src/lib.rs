//! Partially persistent array with cache-oblivious history storage.
//!
//! Every memory word lives in an [`arena::Arena`] whose accesses can be traced
//! and replayed through [`cachesim`]. [`persist::PersistentArray`] stores the
//! history as a forest of space-time trees laid out by [`layout`].
//!
//! ```
//! use chronoarray::{PersistentArray, VersionedAnswer};
//!
//! let mut a = PersistentArray::new(8)?;
//! let v1 = a.write(3, 10)?;
//! a.write(3, 20)?;
//! assert_eq!(a.persistent_read(v1, 3)?, VersionedAnswer::Value(10));
//! assert_eq!(a.read(3)?, VersionedAnswer::Value(20));
//! assert_eq!(a.persistent_read(0, 3)?, VersionedAnswer::Unwritten);
//! # Ok::<(), chronoarray::Error>(())
//! ```

pub mod arena;
pub mod cachesim;
pub mod error;
pub mod layout;
pub mod oracle;
pub mod par;
pub mod persist;
pub mod sttree;

pub use arena::{AccessEvent, AccessKind, Arena, OpClass, RegionLabel};
pub use cachesim::{CacheConfig, CacheStats, Policy};
pub use error::{Error, Result};
pub use layout::Epsilon;
pub use oracle::History;
pub use par::Exec;
pub use persist::{Options, PersistentArray, VersionedAnswer};
