//! Pano-native toolkit for equirectangular (ERP) panoramas.
//!
//! The crate covers the full pipeline around a panoramic MLLM without the
//! model itself: spherical coordinate algebra and wrap-aware BFOV IoU
//! ([`sphere`]), gnomonic view rendering and detection reprojection
//! ([`projection`]), two-level detection verification ([`verify`]), metadata
//! graph construction ([`graph`]), observer-centered reference-frame math
//! ([`frame`]), capability-aligned task generation ([`taskgen`]), benchmark
//! scoring ([`eval`]), a numeric reference of spherical spatial
//! cross-attention ([`ssca`]), and prompt/grid rendering ([`prompts`]).
//!
//! All internal angles are radians; every external surface (schemas, CLI,
//! prompt text) speaks degrees. Conversion happens only at the boundary.

pub mod erp;
pub mod eval;
pub mod frame;
pub mod graph;
pub mod projection;
pub mod prompts;
pub mod sphere;
pub mod ssca;
pub mod taskgen;
pub mod verify;

pub use erp::ErpImage;
pub use sphere::{AngularRect, Bfov, SphericalDirection, UnitRay};
