//! Data reconstruction from any `k` nodes by successive cancellation.
//!
//! With `Psi_DC(i)` the `i`-th `(k-1)`-column block of the accessed rows of
//! the coefficient matrix and `Lambda_DC = diag(e^(k-1))`, consecutive blocks
//! satisfy `Psi_DC(i+1) = Lambda_DC Psi_DC(i)`. Step 1 solves
//! `X_DC(1) = Psi_DC(1) S_1 + Lambda_DC Psi_DC(1) S_2`; step `i` first strips
//! `Psi_DC(i-1) S_{2(i-1)}` from `X_DC(i)` and then solves the same form for
//! `S_{2i-1}`, `S_{2i}`.

use thiserror::Error;

use crate::encoder::{flatten_blocks, NodeShard};
use crate::field::FieldElement;
use crate::matrix::{Matrix, MatrixError, SymmetricPairSolver};
use crate::params::CodeParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconstructError {
    #[error("reconstruction needs exactly {expected} shards, got {actual}")]
    ShardCount { expected: usize, actual: usize },
    #[error("node {0} supplied more than once")]
    DuplicateNode(usize),
    #[error("node index {index} out of range 1..={n}")]
    NodeIndex { index: usize, n: usize },
    #[error("node {0} is not part of this reconstruction session")]
    UnknownNode(usize),
    #[error("shard of node {node} has {actual} symbols, expected {expected}")]
    ShardLength { node: usize, expected: usize, actual: usize },
    #[error("shard of node {node} is over modulus {actual}, expected {expected}")]
    Modulus { node: usize, expected: u32, actual: u32 },
    #[error(
        "nodes {first} and {second} have equal e^(k-1); this node set cannot be reconstructed \
         under the chosen field and evaluation points"
    )]
    LambdaCollision { first: usize, second: usize },
    #[error("decoding failed (corrupted shards?): {0}")]
    Solve(#[from] MatrixError),
}

/// Precomputed decoder for one fixed set of `k` accessed nodes.
#[derive(Debug, Clone)]
pub struct ReconstructionSession {
    params: CodeParams,
    nodes: Vec<usize>,
    psi_dc_blocks: Vec<Matrix>,
    lambda_dc: Matrix,
    /// One solver per step `i`, with `Phi = Psi_DC(i)`.
    solvers: Vec<SymmetricPairSolver>,
}

impl ReconstructionSession {
    pub fn new(params: &CodeParams, nodes: &[usize]) -> Result<Self, ReconstructError> {
        let k = params.k();
        if nodes.len() != k {
            return Err(ReconstructError::ShardCount {
                expected: k,
                actual: nodes.len(),
            });
        }
        for (i, &node) in nodes.iter().enumerate() {
            if node == 0 || node > params.n() {
                return Err(ReconstructError::NodeIndex { index: node, n: params.n() });
            }
            if nodes[..i].contains(&node) {
                return Err(ReconstructError::DuplicateNode(node));
            }
        }
        let b = k - 1;
        let rows: Vec<usize> = nodes.iter().map(|&j| j - 1).collect();
        let psi_dc = params.coefficient_matrix().select_rows(&rows)?;
        let psi_dc_blocks = (0..=params.z_delta())
            .map(|i| psi_dc.submatrix(0, i * b, k, b))
            .collect::<Result<Vec<_>, _>>()?;

        let lambda: Vec<FieldElement> = nodes
            .iter()
            .map(|&j| params.eval_point(j).pow(b as u64))
            .collect();
        for i in 0..k {
            for j in i + 1..k {
                if lambda[i] == lambda[j] {
                    return Err(ReconstructError::LambdaCollision {
                        first: nodes[i],
                        second: nodes[j],
                    });
                }
            }
        }
        let lambda_dc = Matrix::diagonal(&lambda)?;
        let solvers = psi_dc_blocks[..params.z_delta()]
            .iter()
            .map(|phi| SymmetricPairSolver::new(phi, &lambda_dc))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            params: params.clone(),
            nodes: nodes.to_vec(),
            psi_dc_blocks,
            lambda_dc,
            solvers,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// `Psi_DC(i)` for 1-based `i` in `1..=z+1`.
    pub fn psi_dc_block(&self, i: usize) -> &Matrix {
        &self.psi_dc_blocks[i - 1]
    }

    pub fn lambda_dc(&self) -> &Matrix {
        &self.lambda_dc
    }

    /// Recovers the `F` source symbols in encoder fill order. Shards may be
    /// given in any order but must come from exactly the session's nodes.
    pub fn reconstruct(&self, shards: &[NodeShard]) -> Result<Vec<FieldElement>, ReconstructError> {
        let k = self.params.k();
        if shards.len() != k {
            return Err(ReconstructError::ShardCount {
                expected: k,
                actual: shards.len(),
            });
        }
        let q = self.params.q();
        let mut rows: Vec<Option<Vec<u32>>> = vec![None; k];
        for shard in shards {
            let pos = self
                .nodes
                .iter()
                .position(|&j| j == shard.node_index)
                .ok_or(ReconstructError::UnknownNode(shard.node_index))?;
            if rows[pos].is_some() {
                return Err(ReconstructError::DuplicateNode(shard.node_index));
            }
            if let Some(bad) = shard.symbols.iter().find(|s| s.field().modulus() != q) {
                return Err(ReconstructError::Modulus {
                    node: shard.node_index,
                    expected: q,
                    actual: bad.field().modulus(),
                });
            }
            rows[pos] = Some(shard.raw_symbols());
        }
        let rows: Vec<Vec<u32>> = rows.into_iter().map(Option::unwrap).collect();
        let field = self.params.field();
        Ok(self
            .reconstruct_raw(&rows)?
            .into_iter()
            .map(|v| field.element(v as u64))
            .collect())
    }

    /// Raw form: `rows[i]` is the stripe content of `self.nodes()[i]`.
    pub(crate) fn reconstruct_raw(&self, rows: &[Vec<u32>]) -> Result<Vec<u32>, ReconstructError> {
        let params = &self.params;
        let (k, b, alpha) = (params.k(), params.k() - 1, params.alpha());
        for (row, &node) in rows.iter().zip(&self.nodes) {
            if row.len() != alpha {
                return Err(ReconstructError::ShardLength {
                    node,
                    expected: alpha,
                    actual: row.len(),
                });
            }
        }
        let field = params.field();
        let x_dc = Matrix::from_raw(field, k, alpha, rows.concat());
        let mut blocks: Vec<Matrix> = Vec::with_capacity(2 * params.z_delta());
        for i in 1..=params.z_delta() {
            let mut x_i = x_dc.submatrix(0, (i - 1) * b, k, b)?;
            if i >= 2 {
                let prior = self.psi_dc_block(i - 1).mul(&blocks[2 * (i - 1) - 1])?;
                x_i = x_i.sub(&prior)?;
            }
            let (odd, even) = self.solvers[i - 1].solve(&x_i)?;
            blocks.push(odd);
            blocks.push(even);
        }
        Ok(flatten_blocks(&blocks))
    }
}

pub fn reconstruct(shards: &[NodeShard], params: &CodeParams) -> Result<Vec<FieldElement>, ReconstructError> {
    let nodes: Vec<usize> = shards.iter().map(|s| s.node_index).collect();
    ReconstructionSession::new(params, &nodes)?.reconstruct(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Encoder;
    use crate::field::PrimeField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example() -> CodeParams {
        CodeParams::derive(3, 2, 7, Some(11)).unwrap()
    }

    fn random_source(p: &CodeParams, rng: &mut impl Rng) -> Vec<FieldElement> {
        (0..p.file_symbols())
            .map(|_| p.field().element(rng.random_range(0..p.q() as u64)))
            .collect()
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for j in start..=n {
                cur.push(j);
                go(j + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(1, n, k, &mut Vec::new(), &mut out);
        out
    }

    /// Rank of the linear map source -> (x_j for j in nodes), computed by
    /// encoding unit vectors and plain Gaussian elimination.
    fn access_rank(p: &CodeParams, nodes: &[usize]) -> usize {
        let q = p.q() as u64;
        let enc = Encoder::new(p);
        let big_f = p.file_symbols();
        let mut cols: Vec<Vec<u64>> = Vec::new();
        for s in 0..big_f {
            let mut unit = vec![p.field().zero(); big_f];
            unit[s] = p.field().one();
            let shards = enc.encode_stripe(&unit).unwrap();
            let col: Vec<u64> = nodes
                .iter()
                .flat_map(|&j| shards[j - 1].symbols.iter().map(|v| v.value() as u64))
                .collect();
            cols.push(col);
        }
        let mut rank = 0;
        let rows = cols[0].len();
        for r in 0..rows {
            let Some(pivot) = (rank..cols.len()).find(|&c| !cols[c][r].is_multiple_of(q)) else {
                continue;
            };
            cols.swap(rank, pivot);
            let inv = (1..q).find(|&x| x * cols[rank][r] % q == 1).unwrap();
            let pivot_col = cols[rank].clone();
            for (c, col) in cols.iter_mut().enumerate() {
                if c != rank && col[r] != 0 {
                    let factor = col[r] * inv % q;
                    for (v, &p) in col.iter_mut().zip(&pivot_col) {
                        *v = (*v + q * q - factor * p) % q;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn worked_example_session() {
        let p = example();
        let session = ReconstructionSession::new(&p, &[1, 2, 4]).unwrap();
        assert_eq!(session.lambda_dc().to_rows(), vec![vec![1, 0, 0], vec![0, 4, 0], vec![0, 0, 5]]);
        assert_eq!(session.psi_dc_block(1).to_rows(), vec![vec![1, 1], vec![1, 2], vec![1, 4]]);
        assert_eq!(session.psi_dc_block(2).to_rows(), vec![vec![1, 1], vec![4, 8], vec![5, 9]]);
        assert_eq!(session.psi_dc_block(3).to_rows(), vec![vec![1, 1], vec![5, 10], vec![3, 1]]);
        for i in 1..=p.z_delta() {
            let next = session.lambda_dc().mul(session.psi_dc_block(i)).unwrap();
            assert_eq!(&next, session.psi_dc_block(i + 1));
        }
        let src: Vec<_> = (1..=12u64).map(|i| p.field().element(i)).collect();
        let shards = Encoder::new(&p).encode_stripe(&src).unwrap();
        let picked = vec![shards[0].clone(), shards[1].clone(), shards[3].clone()];
        assert_eq!(session.reconstruct(&picked).unwrap(), src);
    }

    #[test]
    fn zero_shards_give_zero_source() {
        let p = example();
        let zeros = vec![p.field().zero(); 12];
        let shards = Encoder::new(&p).encode_stripe(&zeros).unwrap();
        let got = reconstruct(&shards[..3], &p).unwrap();
        assert_eq!(got, zeros);
    }

    #[test]
    fn example_field_fails_exactly_on_rank_deficient_subsets() {
        let p = example();
        let enc = Encoder::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_source(&p, &mut rng);
        let shards = enc.encode_stripe(&src).unwrap();
        let mut failed = Vec::new();
        for subset in subsets(7, 3) {
            let full_rank = access_rank(&p, &subset) == p.file_symbols();
            let picked: Vec<_> = subset.iter().map(|&j| shards[j - 1].clone()).collect();
            match reconstruct(&picked, &p) {
                Ok(got) => {
                    assert!(full_rank);
                    assert_eq!(got, src);
                }
                Err(ReconstructError::LambdaCollision { .. }) => {
                    assert!(!full_rank, "{subset:?} is full rank but was refused");
                    failed.push(subset);
                }
                Err(e) => panic!("{subset:?}: {e}"),
            }
        }
        assert_eq!(failed.len(), 10);
        assert!(failed.iter().all(|s| (s.contains(&4) && s.contains(&7)) || (s.contains(&5) && s.contains(&6))));
    }

    #[test]
    fn mds_exhaustive_when_powers_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, delta, n, q) in [(3, 2, 10, 263), (2, 3, 5, 7), (4, 2, 10, 263), (3, 1, 8, 11)] {
            let p = CodeParams::derive(k, delta, n, Some(q)).unwrap();
            assert!(p.lambda_collisions().is_empty() || q == 11);
            let enc = Encoder::new(&p);
            for subset in subsets(n, k) {
                if ReconstructionSession::new(&p, &subset).is_err() {
                    assert!(!p.lambda_collisions().is_empty());
                    continue;
                }
                let src = random_source(&p, &mut rng);
                let shards = enc.encode_stripe(&src).unwrap();
                let picked: Vec<_> = subset.iter().map(|&j| shards[j - 1].clone()).collect();
                assert_eq!(reconstruct(&picked, &p).unwrap(), src, "k={k} delta={delta} {subset:?}");
            }
        }
    }

    #[test]
    fn order_independent() {
        let p = CodeParams::derive(3, 2, 7, Some(263)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = random_source(&p, &mut rng);
        let shards = Encoder::new(&p).encode_stripe(&src).unwrap();
        let orders = [[1usize, 5, 6], [6, 1, 5], [5, 6, 1]];
        for order in orders {
            let picked: Vec<_> = order.iter().map(|&j| shards[j - 1].clone()).collect();
            assert_eq!(reconstruct(&picked, &p).unwrap(), src);
            // Same session, shuffled shard order.
            let session = ReconstructionSession::new(&p, &[1, 5, 6]).unwrap();
            assert_eq!(session.reconstruct(&picked).unwrap(), src);
        }
    }

    #[test]
    fn single_step_at_delta_one() {
        let p = CodeParams::derive(4, 1, 7, None).unwrap();
        assert_eq!(p.z_delta(), 1);
        let session = ReconstructionSession::new(&p, &[2, 4, 6, 7]).unwrap();
        assert_eq!(session.solvers.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = random_source(&p, &mut rng);
        let shards = Encoder::new(&p).encode_stripe(&src).unwrap();
        let picked: Vec<_> = [2, 4, 6, 7].iter().map(|&j| shards[j - 1].clone()).collect();
        assert_eq!(session.reconstruct(&picked).unwrap(), src);
    }

    #[test]
    fn input_errors() {
        let p = example();
        let src: Vec<_> = (1..=12u64).map(|i| p.field().element(i)).collect();
        let shards = Encoder::new(&p).encode_stripe(&src).unwrap();
        assert_eq!(
            reconstruct(&shards[..2], &p),
            Err(ReconstructError::ShardCount { expected: 3, actual: 2 })
        );
        let dup = vec![shards[0].clone(), shards[0].clone(), shards[1].clone()];
        assert_eq!(reconstruct(&dup, &p), Err(ReconstructError::DuplicateNode(1)));
        let mut short = shards[..3].to_vec();
        short[1].symbols.pop();
        assert_eq!(
            reconstruct(&short, &p),
            Err(ReconstructError::ShardLength { node: 2, expected: 4, actual: 3 })
        );
        assert!(matches!(
            ReconstructionSession::new(&p, &[1, 2, 9]),
            Err(ReconstructError::NodeIndex { index: 9, .. })
        ));
        let session = ReconstructionSession::new(&p, &[1, 2, 3]).unwrap();
        assert_eq!(
            session.reconstruct(&[shards[0].clone(), shards[1].clone(), shards[4].clone()]),
            Err(ReconstructError::UnknownNode(5))
        );
        let mut foreign = shards[..3].to_vec();
        foreign[2].symbols[0] = PrimeField::new(13).unwrap().one();
        assert!(matches!(reconstruct(&foreign, &p), Err(ReconstructError::Modulus { node: 3, .. })));
        assert_eq!(
            ReconstructionSession::new(&p, &[4, 1, 7]).unwrap_err(),
            ReconstructError::LambdaCollision { first: 4, second: 7 }
        );
    }
}
