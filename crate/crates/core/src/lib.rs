//! Bit-exact simulation of low-precision CNN inference datapaths (1- to 8-bit
//! activations, binary/ternary/narrow-integer weights) together with an FPGA
//! design-space performance modeler.
//!
//! The crate is organized around the stages of the accelerator datapath:
//!
//! - [`numerics`] — quantization formats, activation quantizers, and the
//!   ternary/binary weight quantizers with per-feature scales.
//! - [`pe`] — the dot-product engines: reference MAC, sign-flip/mux variants,
//!   XNOR-popcount, the packed-DSP sub-byte multiplier, and the PE cost catalog.
//! - [`bns`] — the fused batch-norm + scale primitive (parameter merging and
//!   per-feature application).
//! - [`netgraph`] — network topologies (AlexNet, ResNet-34/50 built in),
//!   operation counting, GOP-bits accounting, and the widening transform.
//! - [`engine`] — the functional datapath simulator (integer pipeline plus an
//!   unfused fp32 reference path for equivalence checking).
//! - [`dse`] — device specs, array sizing, throughput projection, calibration
//!   against published results, and Pareto frontier construction.
//! - [`fixtures`] — transcribed published measurements and projections used as
//!   calibration targets and comparison data.
//! - [`formats`] — the on-disk tensor container and the text formats for
//!   topologies, model bundles, and fixture tables.

pub mod bns;
pub mod dse;
pub mod engine;
pub mod fixtures;
pub mod formats;
pub mod netgraph;
pub mod numerics;
pub mod pe;
