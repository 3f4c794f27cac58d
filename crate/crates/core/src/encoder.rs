//! Message-matrix layout and per-node encoding.
//!
//! The message matrix is block-banded: block column `j` (1-based) holds
//! `S_{2j-2}`, `S_{2j-1}`, `S_{2j}` in block rows `j-1`, `j`, `j+1`, where every
//! `S_i` is a symmetric `(k-1) x (k-1)` block and `S_0` is absent.

use thiserror::Error;

use crate::field::{FieldElement, PrimeField};
use crate::matrix::Matrix;
use crate::params::CodeParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("expected {expected} source symbols, got {actual}")]
    SourceLength { expected: usize, actual: usize },
    #[error("node index {index} out of range 1..={n}")]
    NodeIndex { index: usize, n: usize },
    #[error("source symbol modulus {actual} does not match code modulus {expected}")]
    Modulus { expected: u32, actual: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageMatrix {
    blocks: Vec<Matrix>,
    assembled: Matrix,
}

impl MessageMatrix {
    /// Fills `S_1, ..., S_{2z}` in order, each from the row-major upper
    /// triangle of `k(k-1)/2` symbols, mirrored.
    pub fn new(source: &[FieldElement], params: &CodeParams) -> Result<Self, EncodeError> {
        if source.len() != params.file_symbols() {
            return Err(EncodeError::SourceLength {
                expected: params.file_symbols(),
                actual: source.len(),
            });
        }
        let q = params.q();
        if let Some(bad) = source.iter().find(|s| s.field().modulus() != q) {
            return Err(EncodeError::Modulus {
                expected: q,
                actual: bad.field().modulus(),
            });
        }
        let raw: Vec<u32> = source.iter().map(|s| s.value()).collect();
        Ok(Self::from_raw(&raw, params))
    }

    pub(crate) fn from_raw(source: &[u32], params: &CodeParams) -> Self {
        let blocks = fill_blocks(params.field(), source, params.k() - 1, 2 * params.z_delta());
        let assembled = assemble(params, &blocks);
        Self { blocks, assembled }
    }

    /// `S_1..S_{2z}` (index 0 is `S_1`).
    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// `S_i` for 1-based `i`.
    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i - 1]
    }

    pub fn assembled(&self) -> &Matrix {
        &self.assembled
    }

    /// Flattens the blocks back into the fill order.
    pub fn source(&self) -> Vec<FieldElement> {
        let field = self.assembled.field();
        flatten_blocks(&self.blocks)
            .into_iter()
            .map(|v| field.element(v as u64))
            .collect()
    }
}

pub(crate) fn fill_blocks(field: PrimeField, source: &[u32], size: usize, count: usize) -> Vec<Matrix> {
    let per_block = size * (size + 1) / 2;
    debug_assert_eq!(source.len(), per_block * count);
    source
        .chunks(per_block)
        .map(|chunk| {
            let mut s = Matrix::zeros(field, size, size);
            let mut it = chunk.iter();
            for i in 0..size {
                for j in i..size {
                    let v = *it.next().unwrap();
                    s.set_raw(i, j, v);
                    s.set_raw(j, i, v);
                }
            }
            s
        })
        .collect()
}

pub(crate) fn flatten_blocks(blocks: &[Matrix]) -> Vec<u32> {
    let mut out = Vec::new();
    for s in blocks {
        for i in 0..s.rows() {
            for j in i..s.cols() {
                out.push(s.raw(i, j));
            }
        }
    }
    out
}

fn assemble(params: &CodeParams, blocks: &[Matrix]) -> Matrix {
    let b = params.k() - 1;
    let z = params.z_delta();
    let mut m = Matrix::zeros(params.field(), (z + 1) * b, z * b);
    for j in 1..=z {
        let col = (j - 1) * b;
        if j >= 2 {
            m.set_block((j - 2) * b, col, &blocks[2 * j - 3]).unwrap();
        }
        m.set_block((j - 1) * b, col, &blocks[2 * j - 2]).unwrap();
        m.set_block(j * b, col, &blocks[2 * j - 1]).unwrap();
    }
    m
}

/// One node's stored content `x_j = psi_j M` for a single stripe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeShard {
    pub node_index: usize,
    pub eval_point: FieldElement,
    pub symbols: Vec<FieldElement>,
}

impl NodeShard {
    pub(crate) fn raw_symbols(&self) -> Vec<u32> {
        self.symbols.iter().map(|s| s.value()).collect()
    }
}

/// Encodes stripes for a fixed parameter set; caches the coefficient matrix.
#[derive(Debug, Clone)]
pub struct Encoder {
    params: CodeParams,
    psi: Matrix,
}

impl Encoder {
    pub fn new(params: &CodeParams) -> Self {
        Self {
            psi: params.coefficient_matrix(),
            params: params.clone(),
        }
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn coefficient_matrix(&self) -> &Matrix {
        &self.psi
    }

    pub fn encode_node(&self, m: &MessageMatrix, node_index: usize) -> Result<NodeShard, EncodeError> {
        let n = self.params.n();
        if node_index == 0 || node_index > n {
            return Err(EncodeError::NodeIndex { index: node_index, n });
        }
        let field = self.params.field();
        let raw = m.assembled.left_mul_vec(self.psi.row_raw(node_index - 1));
        Ok(NodeShard {
            node_index,
            eval_point: self.params.eval_point(node_index),
            symbols: raw.into_iter().map(|v| field.element(v as u64)).collect(),
        })
    }

    pub fn encode_all(&self, m: &MessageMatrix) -> Vec<NodeShard> {
        (1..=self.params.n())
            .map(|j| self.encode_node(m, j).expect("index in range"))
            .collect()
    }

    /// Builds the message matrix for one stripe and encodes every node.
    pub fn encode_stripe(&self, source: &[FieldElement]) -> Result<Vec<NodeShard>, EncodeError> {
        Ok(self.encode_all(&MessageMatrix::new(source, &self.params)?))
    }

    /// Raw-residue stripe encoding used by the file and cluster layers:
    /// returns one `alpha`-vector per node.
    pub(crate) fn encode_stripe_raw(&self, source: &[u32]) -> Vec<Vec<u32>> {
        let m = MessageMatrix::from_raw(source, &self.params);
        (0..self.params.n())
            .map(|j| m.assembled.left_mul_vec(self.psi.row_raw(j)))
            .collect()
    }
}

pub fn encode_node(m: &MessageMatrix, params: &CodeParams, node_index: usize) -> Result<NodeShard, EncodeError> {
    Encoder::new(params).encode_node(m, node_index)
}

pub fn encode_all(m: &MessageMatrix, params: &CodeParams) -> Vec<NodeShard> {
    Encoder::new(params).encode_all(m)
}
