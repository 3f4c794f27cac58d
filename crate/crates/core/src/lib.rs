//! Product-matrix minimum-storage regenerating code with bandwidth-adaptive
//! exact repair.
//!
//! A stripe of `F = k alpha` symbols over a prime field is spread across `n`
//! nodes holding `alpha` symbols each. Any `k` nodes reconstruct the stripe,
//! and a failed node is rebuilt exactly from any `d` helpers for every `d` in
//! `D = {2(k-1), 3(k-1), ..., (delta+1)(k-1)}`, each helper sending
//! `alpha / (d-k+1)` symbols.

pub mod cli;
pub mod cluster;
pub mod encoder;
pub mod field;
pub mod matrix;
pub mod params;
pub mod reconstructor;
pub mod repairer;
pub mod shardfile;

pub use cluster::{Cluster, ClusterError, HelperPolicy, RepairRecord, LEDGER_HEADER};
pub use encoder::{EncodeError, Encoder, MessageMatrix, NodeShard};
pub use field::{FieldElement, FieldError, PrimeField};
pub use matrix::{build_gvm, solve_symmetric_pair, Matrix, MatrixError, SymmetricPairSolver};
pub use params::{lcm_upto, CodeParams, ParamsError};
pub use reconstructor::{reconstruct, ReconstructError, ReconstructionSession};
pub use repairer::{make_repair_bundle, repair, RepairBundle, RepairError, RepairSession};
pub use shardfile::{Manifest, ShardFile, ShardFileError, ShardHeader};
