//! Synthetic Petri-dish dataset generation.
//!
//! The pipeline has three stages:
//!
//! 1. [`segment`]: annotated colonies are grouped into overlap clusters
//!    ([`cluster`]) and cut out of real dish images as alpha-matted fragments.
//! 2. [`compose`]: fragments are rotated, flipped and placed without overlap on
//!    random crops of empty dishes, producing patches with exact boxes and
//!    instance masks.
//! 3. [`stylize`]: patches are re-styled, either with the built-in Lab
//!    statistics transfer or through an external neural stylizer.
//!
//! [`metrics`] scores detector output against such annotations (COCO mAP,
//! MAE, sMAPE) and [`pipeline`] wires everything to on-disk datasets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod coco;
pub mod compose;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod segment;
pub mod stylize;

pub use error::{Error, Result};
