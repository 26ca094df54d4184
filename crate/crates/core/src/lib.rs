//! End invariants of connected, locally finite graphs.
//!
//! The library works entirely with finite data: a graph is given implicitly by
//! a deterministic neighbor rule, all computations happen inside a materialized
//! ball (the *window*), and the end structure of the graph is represented by a
//! finite truncation of the inverse system of unbounded complementary
//! components over a compact exhaustion.
//!
//! Modules:
//! - [`graph`]: graph generators, windows (balls), and the `lfgraph v1` format.
//! - [`exhaust`]: compact exhaustions with nesting and efficiency certificates.
//! - [`tower`]: end towers, canonical codes, induced maps, quotients, and tree
//!   realizations of towers.
//! - [`rays`]: embedded proper rays, proper retractions onto a ray, and
//!   end-tree embeddings with end-level retractions.
//! - [`h0e`]: dimension-zero end cohomology with explicit free bases over
//!   exact integer (or prime field) coefficients.
//! - [`endsum`]: end sums of two ray-based graphs and verified end arithmetic.

pub mod endsum;
pub mod exhaust;
pub mod graph;
pub mod h0e;
pub mod rays;
pub mod tower;

pub use endsum::{verify_end_sum, EndSumError, EndSumReport, EndSumSpec};
pub use exhaust::{
    bounded_filling, complement_components, efficient_exhaustion, ray_efficient_exhaustion,
    Compactum, ComplementDecomposition, ExhaustError, Exhaustion,
};
pub use graph::{parse_edge_list, Ball, GraphError, GraphGenerator, VertexId};
pub use h0e::{nobeling_basis, Cochain, H0Algebra, H0Basis, H0Class, H0Error, RepresentativeRule};
pub use rays::{
    build_retraction, embed_end_tree, find_ray, points_to, tree_retraction, Ray, RayError,
    Retraction, TreeEmbedding,
};
pub use tower::{
    induced_tower_map, quotient_tower, tree_realization, BasicOpenRelation, EndPrefix, EndTower,
    EndsReport, TowerError, TowerMap,
};
