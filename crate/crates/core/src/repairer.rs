//! Bandwidth-adaptive exact repair.
//!
//! For `d = (m+1)(k-1)` helpers, each helper splits its `alpha` symbols into
//! `beta = alpha / (m(k-1))` segments and sends one inner product per segment
//! with the matching segment of the failed node's coefficient vector. The
//! decoder runs `beta` steps; in step `i` the stacked column
//! `Upsilon_H(i)` (after cancelling the `S_{2(i-1)m}` term carried over from
//! step `i-1`) equals `Omega_H(i) [M_i ; 0 .. S_{2im}] psi_f(i)^T`, so
//! multiplying by `Omega_H(i)^-1` yields `M_i psi_f(i)^T` from the top rows and
//! a projection of `S_{2im}` from the bottom `k-1` rows.

use thiserror::Error;

use crate::encoder::NodeShard;
use crate::field::FieldElement;
use crate::matrix::{build_gvm, Matrix, MatrixError};
use crate::params::CodeParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("helper count {d} is not in D = {valid:?}")]
    HelperCount { d: usize, valid: Vec<usize> },
    #[error("failed node {0} cannot be its own helper")]
    FailedIsHelper(usize),
    #[error("helper {0} supplied more than once")]
    DuplicateHelper(usize),
    #[error("node index {index} out of range 1..={n}")]
    NodeIndex { index: usize, n: usize },
    #[error("expected {expected} repair bundles, got {actual}")]
    BundleCount { expected: usize, actual: usize },
    #[error("bundle from helper {helper} targets node {actual}, expected {expected}")]
    BundleTarget { helper: usize, expected: usize, actual: usize },
    #[error("bundle from helper {helper} was built for d = {actual}, expected {expected}")]
    InconsistentD { helper: usize, expected: usize, actual: usize },
    #[error("bundle from helper {helper} has {actual} symbols, expected {expected}")]
    BundleLength { helper: usize, expected: usize, actual: usize },
    #[error("helper {0} is not part of this repair session")]
    UnknownHelper(usize),
    #[error("helper shard has {actual} symbols, expected {expected}")]
    ShardLength { expected: usize, actual: usize },
    #[error("symbol modulus {actual} does not match code modulus {expected}")]
    Modulus { expected: u32, actual: u32 },
    #[error("no repair bundles supplied")]
    NoBundles,
    #[error("internal repair failure: {0}")]
    Matrix(#[from] MatrixError),
}

/// The `beta(d)` symbols one helper sends towards one failed node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairBundle {
    pub helper_index: usize,
    pub failed_index: usize,
    pub d: usize,
    pub symbols: Vec<FieldElement>,
}

fn check_index(params: &CodeParams, index: usize) -> Result<(), RepairError> {
    if index == 0 || index > params.n() {
        return Err(RepairError::NodeIndex { index, n: params.n() });
    }
    Ok(())
}

fn check_d(params: &CodeParams, d: usize) -> Result<usize, RepairError> {
    params.repair_degree(d).ok_or_else(|| RepairError::HelperCount {
        d,
        valid: params.helper_counts().to_vec(),
    })
}

/// Helper-side computation: `r_i = x_h(i) . psi_f(i)` for each segment.
pub fn make_repair_bundle(
    helper: &NodeShard,
    failed: usize,
    d: usize,
    params: &CodeParams,
) -> Result<RepairBundle, RepairError> {
    check_index(params, helper.node_index)?;
    check_index(params, failed)?;
    check_d(params, d)?;
    if helper.node_index == failed {
        return Err(RepairError::FailedIsHelper(failed));
    }
    if helper.symbols.len() != params.alpha() {
        return Err(RepairError::ShardLength {
            expected: params.alpha(),
            actual: helper.symbols.len(),
        });
    }
    let q = params.q();
    if let Some(bad) = helper.symbols.iter().find(|s| s.field().modulus() != q) {
        return Err(RepairError::Modulus {
            expected: q,
            actual: bad.field().modulus(),
        });
    }
    let field = params.field();
    let raw = repair_symbols_raw(params, &helper.raw_symbols(), failed, d);
    Ok(RepairBundle {
        helper_index: helper.node_index,
        failed_index: failed,
        d,
        symbols: raw.into_iter().map(|v| field.element(v as u64)).collect(),
    })
}

/// Raw form of [`make_repair_bundle`]; inputs are assumed validated.
pub(crate) fn repair_symbols_raw(params: &CodeParams, helper: &[u32], failed: usize, d: usize) -> Vec<u32> {
    let field = params.field();
    let seg = d - params.k() + 1;
    let e_f = params.eval_point(failed).value();
    let mut coeff = 1u32;
    helper
        .chunks(seg)
        .map(|chunk| {
            let mut acc = 0u32;
            for &x in chunk {
                acc = field.add_raw(acc, field.mul_raw(x, coeff));
                coeff = field.mul_raw(coeff, e_f);
            }
            acc
        })
        .collect()
}

/// Decoder state for one failed node and one ordered helper set.
#[derive(Debug, Clone)]
pub struct RepairSession {
    params: CodeParams,
    failed: usize,
    helpers: Vec<usize>,
    m: usize,
    beta: usize,
    omega: Vec<Matrix>,
    omega_inv: Vec<Matrix>,
    /// `cancel[i-2]` has rows `e_h^((i-1)m(k-1)-(k-1)) phi_h`, used from step 2 on.
    cancel: Vec<Matrix>,
    /// `e_f^(k-1)`.
    e_f_pow: u32,
}

impl RepairSession {
    pub fn new(params: &CodeParams, failed: usize, helpers: &[usize]) -> Result<Self, RepairError> {
        check_index(params, failed)?;
        let d = helpers.len();
        let m = check_d(params, d)?;
        for (i, &h) in helpers.iter().enumerate() {
            check_index(params, h)?;
            if h == failed {
                return Err(RepairError::FailedIsHelper(failed));
            }
            if helpers[..i].contains(&h) {
                return Err(RepairError::DuplicateHelper(h));
            }
        }
        let b = params.k() - 1;
        let beta = params.beta(d).expect("d checked");
        let points: Vec<FieldElement> = helpers.iter().map(|&h| params.eval_point(h)).collect();
        let mut omega = Vec::with_capacity(beta);
        let mut omega_inv = Vec::with_capacity(beta);
        let mut cancel = Vec::with_capacity(beta.saturating_sub(1));
        for i in 1..=beta {
            let start = ((i - 1) * m * b) as u64;
            let om = build_gvm(&points, start, d)?;
            omega_inv.push(om.invert()?);
            omega.push(om);
            if i >= 2 {
                cancel.push(build_gvm(&points, start - b as u64, b)?);
            }
        }
        Ok(Self {
            params: params.clone(),
            failed,
            helpers: helpers.to_vec(),
            m,
            beta,
            omega,
            omega_inv,
            cancel,
            e_f_pow: params.eval_point(failed).pow(b as u64).value(),
        })
    }

    pub fn failed(&self) -> usize {
        self.failed
    }

    pub fn helpers(&self) -> &[usize] {
        &self.helpers
    }

    pub fn d(&self) -> usize {
        self.helpers.len()
    }

    /// `m` with `d = (m+1)(k-1)`.
    pub fn repair_degree(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// `Omega_H(i)` for 1-based step `i`.
    pub fn omega(&self, i: usize) -> &Matrix {
        &self.omega[i - 1]
    }

    pub fn omega_inverse(&self, i: usize) -> &Matrix {
        &self.omega_inv[i - 1]
    }

    /// Top `(d-k+1) x d` rows of `Omega_H(i)^-1`.
    pub fn theta(&self, i: usize) -> Matrix {
        let d = self.d();
        self.omega_inv[i - 1]
            .submatrix(0, 0, d - self.params.k() + 1, d)
            .expect("in bounds")
    }

    /// Bottom `(k-1) x d` rows of `Omega_H(i)^-1`.
    pub fn xi(&self, i: usize) -> Matrix {
        let d = self.d();
        let b = self.params.k() - 1;
        self.omega_inv[i - 1].submatrix(d - b, 0, b, d).expect("in bounds")
    }

    /// Rebuilds the failed node's shard from one bundle per helper, in any
    /// order.
    pub fn repair(&self, bundles: &[RepairBundle]) -> Result<NodeShard, RepairError> {
        let d = self.d();
        if bundles.len() != d {
            return Err(RepairError::BundleCount {
                expected: d,
                actual: bundles.len(),
            });
        }
        let q = self.params.q();
        let mut upsilon: Vec<Option<Vec<u32>>> = vec![None; d];
        for bundle in bundles {
            if bundle.failed_index != self.failed {
                return Err(RepairError::BundleTarget {
                    helper: bundle.helper_index,
                    expected: self.failed,
                    actual: bundle.failed_index,
                });
            }
            if bundle.d != d {
                return Err(RepairError::InconsistentD {
                    helper: bundle.helper_index,
                    expected: d,
                    actual: bundle.d,
                });
            }
            let pos = self
                .helpers
                .iter()
                .position(|&h| h == bundle.helper_index)
                .ok_or(RepairError::UnknownHelper(bundle.helper_index))?;
            if upsilon[pos].is_some() {
                return Err(RepairError::DuplicateHelper(bundle.helper_index));
            }
            if bundle.symbols.len() != self.beta {
                return Err(RepairError::BundleLength {
                    helper: bundle.helper_index,
                    expected: self.beta,
                    actual: bundle.symbols.len(),
                });
            }
            if let Some(bad) = bundle.symbols.iter().find(|s| s.field().modulus() != q) {
                return Err(RepairError::Modulus {
                    expected: q,
                    actual: bad.field().modulus(),
                });
            }
            upsilon[pos] = Some(bundle.symbols.iter().map(|s| s.value()).collect());
        }
        let upsilon: Vec<Vec<u32>> = upsilon.into_iter().map(Option::unwrap).collect();
        let field = self.params.field();
        Ok(NodeShard {
            node_index: self.failed,
            eval_point: self.params.eval_point(self.failed),
            symbols: self
                .repair_raw(&upsilon)
                .into_iter()
                .map(|v| field.element(v as u64))
                .collect(),
        })
    }

    /// `upsilon[h]` holds the `beta` repair symbols of `self.helpers()[h]`.
    pub(crate) fn repair_raw(&self, upsilon: &[Vec<u32>]) -> Vec<u32> {
        let f = self.params.field();
        let b = self.params.k() - 1;
        let d = self.d();
        let seg_len = self.m * b;
        let mut out = Vec::with_capacity(self.params.alpha());
        // Xi_H(i-1) times the cancelled column of the previous step, which is
        // S_{2(i-1)m} (e_f^(((i-1)m-1)(k-1)) phi_f)^T.
        let mut prev_xi: Option<Vec<u32>> = None;
        for i in 1..=self.beta {
            let mut column: Vec<u32> = upsilon.iter().map(|r| r[i - 1]).collect();
            if let Some(xi) = &prev_xi {
                let carry: Vec<u32> = xi.iter().map(|&v| f.mul_raw(v, self.e_f_pow)).collect();
                let contribution = self.cancel[i - 2].mul_vec(&carry);
                for (c, t) in column.iter_mut().zip(contribution) {
                    *c = f.sub_raw(*c, t);
                }
            }
            let solved = self.omega_inv[i - 1].mul_vec(&column);
            let (theta_part, xi_part) = solved.split_at(d - b);
            debug_assert_eq!(theta_part.len(), seg_len);
            let mut segment = theta_part.to_vec();
            // Block row (i-1)m of M meets the first block of segment i.
            if let Some(xi) = &prev_xi {
                for (s, &v) in segment[..b].iter_mut().zip(xi) {
                    *s = f.add_raw(*s, v);
                }
            }
            for (s, &v) in segment[seg_len - b..].iter_mut().zip(xi_part) {
                *s = f.add_raw(*s, f.mul_raw(v, self.e_f_pow));
            }
            out.extend_from_slice(&segment);
            prev_xi = Some(xi_part.to_vec());
        }
        out
    }
}

/// Rebuilds node `failed` from `d` bundles produced by distinct helpers.
pub fn repair(failed: usize, bundles: &[RepairBundle], params: &CodeParams) -> Result<NodeShard, RepairError> {
    let first = bundles.first().ok_or(RepairError::NoBundles)?;
    for b in bundles {
        if b.failed_index != failed {
            return Err(RepairError::BundleTarget {
                helper: b.helper_index,
                expected: failed,
                actual: b.failed_index,
            });
        }
        if b.d != first.d {
            return Err(RepairError::InconsistentD {
                helper: b.helper_index,
                expected: first.d,
                actual: b.d,
            });
        }
    }
    if bundles.len() != first.d {
        check_d(params, first.d)?;
        return Err(RepairError::BundleCount {
            expected: first.d,
            actual: bundles.len(),
        });
    }
    let helpers: Vec<usize> = bundles.iter().map(|b| b.helper_index).collect();
    RepairSession::new(params, failed, &helpers)?.repair(bundles)
}
