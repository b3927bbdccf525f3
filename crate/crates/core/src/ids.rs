use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(
    /// Identifier of a parameter block.
    BlockId,
    "block#"
);
id_type!(
    /// Identifier of a model in the library.
    ModelId,
    "model#"
);
id_type!(
    /// Identifier of a backbone cluster.
    ClusterId,
    "cluster#"
);
id_type!(
    /// Identifier of a user (one inference request per user).
    UserId,
    "user#"
);
