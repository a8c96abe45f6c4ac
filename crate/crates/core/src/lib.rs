pub mod atlas;
pub mod continuation;
pub mod dkp;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod reference;
pub mod singularity;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{
    canonicalize, classify_mode, DesignParams, JointConfig, ModeClass, OperationMode, OrientationQuat,
    PlatformPlacement, Pose, MODE_TOL,
};

// The guide's chapters are compiled here so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/poses.md")]
    mod poses {}
    #[doc = include_str!("../../../book/src/direct-kinematics.md")]
    mod direct_kinematics {}
    #[doc = include_str!("../../../book/src/singularities.md")]
    mod singularities {}
    #[doc = include_str!("../../../book/src/atlas.md")]
    mod atlas {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/cusps.md")]
    mod cusps {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
