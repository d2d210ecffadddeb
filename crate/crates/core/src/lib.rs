// `!(a > b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod bench;
pub mod bvh;
pub mod camera;
pub mod config;
pub mod curriculum;
pub mod depth;
pub mod geometry;
pub mod heightscan;
pub mod image_io;
pub mod mesh;
pub mod metrics;
pub mod motion;
pub mod raycast;
pub mod rng;
pub mod scene;
