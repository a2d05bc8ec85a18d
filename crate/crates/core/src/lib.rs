//! Software ray tracer for molecular scenes that are never materialized:
//! Wang-tile content is instanced on the fly while rays walk a three-level
//! hierarchy (proxy prisms and core boxes, tile instances, atoms).

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvh;
pub mod geom;
pub mod grid;
pub mod image;
pub mod mesh;
pub mod molecule;
pub mod render;
pub mod scene;
pub mod shell;
pub mod wang;
