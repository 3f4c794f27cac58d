//! Code parameters derived from the design inputs `(k, delta)` plus `n`.
//!
//! With `z = lcm(1..=delta)`:
//!
//! * subpacketization `alpha = (k-1) z`, file size `F = k alpha`;
//! * helper counts `D = { (i+1)(k-1) : i = 1..=delta }`;
//! * per-helper bandwidth `beta(d) = alpha / (d-k+1)`, total `gamma(d) = d beta(d)`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::field::{smallest_prime_geq, FieldElement, FieldError, PrimeField};
use crate::matrix::{self, Matrix, MatrixError};

/// Smallest default modulus; lets each byte map to one symbol.
pub const MIN_DEFAULT_MODULUS: u64 = 257;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("k must satisfy k >= 2 (got k = {0})")]
    KTooSmall(usize),
    #[error("delta must satisfy delta >= 1 (got delta = {0})")]
    DeltaTooSmall(usize),
    #[error("n must satisfy n >= (delta+1)(k-1)+1 = {required} (got n = {n})")]
    TooFewNodes { n: usize, required: usize },
    #[error("q must be prime (got q = {0})")]
    ModulusNotPrime(u64),
    #[error("q must satisfy q >= n+1 = {required} (got q = {q})")]
    ModulusTooSmall { q: u64, required: u64 },
    #[error("expected {expected} evaluation points, got {actual}")]
    EvalPointCount { expected: usize, actual: usize },
    #[error("invalid evaluation points: {0}")]
    EvalPoints(MatrixError),
    #[error("parameters overflow: {0}")]
    Overflow(&'static str),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `lcm(1, 2, ..., delta)`; `None` on overflow.
pub fn lcm_upto(delta: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for i in 1..=delta as u64 {
        acc = (acc / gcd(acc, i)).checked_mul(i)?;
    }
    Some(acc)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeParams {
    n: usize,
    k: usize,
    delta: usize,
    field: PrimeField,
    z_delta: usize,
    alpha: usize,
    file_symbols: usize,
    helper_counts: Vec<usize>,
    eval_points: Vec<FieldElement>,
}

impl CodeParams {
    /// Derives every parameter. Without an explicit `q`, picks the smallest
    /// prime `>= max(n+1, 257)` under which the points `1..=n` keep distinct
    /// `(k-1)`-th powers (so every `k` nodes can reconstruct).
    pub fn derive(k: usize, delta: usize, n: usize, q: Option<u64>) -> Result<Self, ParamsError> {
        if k < 2 {
            return Err(ParamsError::KTooSmall(k));
        }
        if delta < 1 {
            return Err(ParamsError::DeltaTooSmall(delta));
        }
        let required = (delta + 1)
            .checked_mul(k - 1)
            .and_then(|v| v.checked_add(1))
            .ok_or(ParamsError::Overflow("(delta+1)(k-1)+1"))?;
        if n < required {
            return Err(ParamsError::TooFewNodes { n, required });
        }
        let min_q = n as u64 + 1;
        let field = match q {
            Some(q) => {
                if !crate::field::is_prime(q) {
                    return Err(ParamsError::ModulusNotPrime(q));
                }
                if q < min_q {
                    return Err(ParamsError::ModulusTooSmall { q, required: min_q });
                }
                PrimeField::new(q)?
            }
            None => {
                let mut q = smallest_prime_geq(min_q.max(MIN_DEFAULT_MODULUS));
                loop {
                    let field = PrimeField::new(q)?;
                    if power_collisions(&default_points(field, n), k - 1).is_empty() {
                        break field;
                    }
                    q = smallest_prime_geq(q + 1);
                }
            }
        };
        let z_delta = lcm_upto(delta)
            .and_then(|z| usize::try_from(z).ok())
            .ok_or(ParamsError::Overflow("lcm(1..delta)"))?;
        let alpha = (k - 1)
            .checked_mul(z_delta)
            .ok_or(ParamsError::Overflow("alpha"))?;
        let file_symbols = k.checked_mul(alpha).ok_or(ParamsError::Overflow("F"))?;
        let helper_counts = (1..=delta).map(|i| (i + 1) * (k - 1)).collect();
        Ok(Self {
            n,
            k,
            delta,
            field,
            z_delta,
            alpha,
            file_symbols,
            helper_counts,
            eval_points: default_points(field, n),
        })
    }

    /// Replaces the evaluation points `e_1..e_n`.
    pub fn with_eval_points(mut self, points: Vec<FieldElement>) -> Result<Self, ParamsError> {
        if points.len() != self.n {
            return Err(ParamsError::EvalPointCount {
                expected: self.n,
                actual: points.len(),
            });
        }
        let field = matrix::check_points(&points).map_err(ParamsError::EvalPoints)?;
        if field != self.field {
            return Err(ParamsError::Field(FieldError::ModulusMismatch {
                left: self.field.modulus(),
                right: field.modulus(),
            }));
        }
        self.eval_points = points;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn q(&self) -> u32 {
        self.field.modulus()
    }

    pub fn z_delta(&self) -> usize {
        self.z_delta
    }

    /// Symbols stored per node.
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Source symbols per stripe, `F = k alpha`.
    pub fn file_symbols(&self) -> usize {
        self.file_symbols
    }

    /// The helper-count set `D`, ascending.
    pub fn helper_counts(&self) -> &[usize] {
        &self.helper_counts
    }

    pub fn is_helper_count(&self, d: usize) -> bool {
        self.helper_counts.contains(&d)
    }

    /// `m` with `d = (m+1)(k-1)`, if `d` is in `D`.
    pub fn repair_degree(&self, d: usize) -> Option<usize> {
        self.is_helper_count(d).then(|| d / (self.k - 1) - 1)
    }

    /// Per-helper repair symbols `beta(d)`.
    pub fn beta(&self, d: usize) -> Option<usize> {
        self.is_helper_count(d).then(|| self.alpha / (d - self.k + 1))
    }

    /// Total repair symbols `gamma(d) = d beta(d)`.
    pub fn gamma(&self, d: usize) -> Option<usize> {
        self.beta(d).map(|b| d * b)
    }

    pub fn eval_points(&self) -> &[FieldElement] {
        &self.eval_points
    }

    /// Evaluation point of the 1-based `node`.
    pub fn eval_point(&self, node: usize) -> FieldElement {
        self.eval_points[node - 1]
    }

    /// Rows of the message matrix, `(z+1)(k-1)`, which is also the length of
    /// each node's coefficient vector.
    pub fn message_rows(&self) -> usize {
        (self.z_delta + 1) * (self.k - 1)
    }

    /// The `n x (z+1)(k-1)` coefficient matrix with rows `[1, e_j, e_j^2, ...]`.
    pub fn coefficient_matrix(&self) -> Matrix {
        matrix::build_gvm(&self.eval_points, 0, self.message_rows())
            .expect("evaluation points validated at construction")
    }

    /// Pairs of 1-based nodes whose points have equal `(k-1)`-th powers. Any
    /// `k`-subset containing such a pair cannot be reconstructed; empty means
    /// the code is MDS.
    pub fn lambda_collisions(&self) -> Vec<(usize, usize)> {
        power_collisions(&self.eval_points, self.k - 1)
    }

    /// Subpacketization of the alternative construction, `z^n`, for
    /// comparison in reports. `None` if it exceeds `u128`.
    pub fn alternative_alpha(&self) -> Option<u128> {
        (self.z_delta as u128).checked_pow(self.n as u32)
    }

    /// `lcm(d_1-k+1, ..., d_delta-k+1)^n`, the same comparison taken over
    /// the helper-count offsets.
    pub fn alternative_alpha_over_offsets(&self) -> Option<u128> {
        let l = self
            .helper_counts
            .iter()
            .try_fold(1u64, |acc, &d| {
                let v = (d - self.k + 1) as u64;
                (acc / gcd(acc, v)).checked_mul(v)
            })?;
        (l as u128).checked_pow(self.n as u32)
    }

    /// Aligned key/value listing of every derived quantity.
    pub fn report(&self, compare: bool) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("n".into(), self.n.to_string()),
            ("k".into(), self.k.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("q".into(), self.q().to_string()),
            ("z_delta".into(), self.z_delta.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("F".into(), self.file_symbols.to_string()),
            ("D".into(), join(&self.helper_counts)),
        ];
        for &d in &self.helper_counts {
            rows.push((format!("beta({d})"), self.beta(d).unwrap().to_string()));
            rows.push((format!("gamma({d})"), self.gamma(d).unwrap().to_string()));
        }
        rows.push((
            "eval_points".into(),
            join(&self.eval_points.iter().map(|e| e.value()).collect::<Vec<_>>()),
        ));
        let collisions = self.lambda_collisions();
        rows.push((
            "mds".into(),
            if collisions.is_empty() {
                "yes".into()
            } else {
                let pairs: Vec<String> = collisions.iter().map(|(a, b)| format!("{a}/{b}")).collect();
                format!("no (equal e^(k-1) at nodes {})", pairs.join(" "))
            },
        ));
        if compare {
            let fmt = |v: Option<u128>| v.map_or_else(|| "overflow".to_string(), |v| v.to_string());
            rows.push(("compare.alpha".into(), self.alpha.to_string()));
            rows.push((
                format!("compare.alternative_alpha (z_delta^n = {}^{})", self.z_delta, self.n),
                fmt(self.alternative_alpha()),
            ));
            rows.push((
                format!("compare.alternative_alpha_offsets (lcm(d-k+1)^{})", self.n),
                fmt(self.alternative_alpha_over_offsets()),
            ));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (key, value) in rows {
            let _ = writeln!(out, "{key:<width$}  {value}");
        }
        out
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn default_points(field: PrimeField, n: usize) -> Vec<FieldElement> {
    (1..=n as u64).map(|i| field.element(i)).collect()
}

fn power_collisions(points: &[FieldElement], exponent: usize) -> Vec<(usize, usize)> {
    let powers: Vec<u32> = points.iter().map(|p| p.pow(exponent as u64).value()).collect();
    let mut out = Vec::new();
    for i in 0..powers.len() {
        for j in i + 1..powers.len() {
            if powers[i] == powers[j] {
                out.push((i + 1, j + 1));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_parameters() {
        let p = CodeParams::derive(3, 2, 7, Some(11)).unwrap();
        assert_eq!(p.z_delta(), 2);
        assert_eq!(p.alpha(), 4);
        assert_eq!(p.file_symbols(), 12);
        assert_eq!(p.helper_counts(), &[4, 6]);
        assert_eq!(p.beta(4), Some(2));
        assert_eq!(p.beta(6), Some(1));
        assert_eq!(p.gamma(4), Some(8));
        assert_eq!(p.gamma(6), Some(6));
        assert_eq!(p.beta(5), None);
        assert_eq!(p.repair_degree(4), Some(1));
        assert_eq!(p.repair_degree(6), Some(2));
        let e: Vec<u32> = p.eval_points().iter().map(|e| e.value()).collect();
        assert_eq!(e, vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn degenerate_parameters() {
        let p = CodeParams::derive(2, 1, 4, None).unwrap();
        assert_eq!((p.z_delta(), p.alpha(), p.file_symbols()), (1, 1, 2));
        assert_eq!(p.helper_counts(), &[2]);
        assert_eq!(p.beta(2), Some(1));
        assert_eq!(p.q(), 257);
    }

    #[test]
    fn larger_parameters() {
        let p = CodeParams::derive(4, 3, 13, Some(17)).unwrap();
        assert_eq!((p.z_delta(), p.alpha(), p.file_symbols()), (6, 18, 72));
        assert_eq!(p.helper_counts(), &[6, 9, 12]);
        assert_eq!((p.beta(6), p.beta(9), p.beta(12)), (Some(6), Some(3), Some(2)));
    }

    fn lcm_oracle(delta: u64) -> u64 {
        // Pairwise reduction: lcm(a, b) = a * b / gcd(a, b) with gcd by subtraction.
        fn gcd_sub(mut a: u64, mut b: u64) -> u64 {
            while a != b {
                if a > b {
                    a -= b
                } else {
                    b -= a
                }
            }
            a
        }
        (1..=delta).fold(1, |acc, i| acc * i / gcd_sub(acc, i))
    }

    #[test]
    fn lcm_examples() {
        assert_eq!(lcm_upto(2), Some(2));
        assert_eq!(lcm_upto(1), Some(1));
        assert_eq!(lcm_upto(6), Some(60));
        for d in 1..=20 {
            assert_eq!(lcm_upto(d), Some(lcm_oracle(d as u64)));
        }
        assert_eq!(lcm_upto(200), None);
    }

    #[test]
    fn distinct_diagnostics() {
        assert_eq!(CodeParams::derive(1, 2, 7, None), Err(ParamsError::KTooSmall(1)));
        assert_eq!(CodeParams::derive(3, 0, 7, None), Err(ParamsError::DeltaTooSmall(0)));
        assert_eq!(
            CodeParams::derive(3, 2, 6, None),
            Err(ParamsError::TooFewNodes { n: 6, required: 7 })
        );
        assert_eq!(CodeParams::derive(3, 2, 7, Some(12)), Err(ParamsError::ModulusNotPrime(12)));
        assert_eq!(
            CodeParams::derive(3, 2, 7, Some(7)),
            Err(ParamsError::ModulusTooSmall { q: 7, required: 8 })
        );
        let msgs: Vec<String> = [
            CodeParams::derive(1, 2, 7, None),
            CodeParams::derive(3, 0, 7, None),
            CodeParams::derive(3, 2, 6, None),
            CodeParams::derive(3, 2, 7, Some(12)),
            CodeParams::derive(3, 2, 7, Some(7)),
        ]
        .into_iter()
        .map(|r| r.unwrap_err().to_string())
        .collect();
        assert!(msgs[0].contains("k >= 2"));
        assert!(msgs[1].contains("delta >= 1"));
        assert!(msgs[2].contains("n >= (delta+1)(k-1)+1"));
        assert!(msgs[3].contains("prime"));
        assert!(msgs[4].contains("q >= n+1"));
    }

    #[test]
    fn msr_characteristic_and_monotone_gamma() {
        for k in 2..=6 {
            for delta in 1..=5 {
                let n = (delta + 1) * (k - 1) + 1;
                let p = CodeParams::derive(k, delta, n, None).unwrap();
                assert_eq!(p.file_symbols(), k * p.alpha());
                let mut last = usize::MAX;
                for &d in p.helper_counts() {
                    let beta = p.beta(d).unwrap();
                    assert_eq!((d - k + 1) * beta, p.alpha());
                    let gamma = p.gamma(d).unwrap();
                    assert!(gamma < last);
                    last = gamma;
                }
            }
        }
    }

    #[test]
    fn lcm_growth_bounds() {
        for delta in 7..=30 {
            let z = lcm_upto(delta).unwrap() as u128;
            assert!(1u128 << delta <= z && z <= 1u128 << (2 * delta), "delta={delta}");
        }
    }

    #[test]
    fn default_modulus_keeps_mds() {
        let p = CodeParams::derive(3, 2, 7, None).unwrap();
        assert_eq!(p.q(), 257);
        assert!(p.lambda_collisions().is_empty());
        // 16^4 = 1 mod 257, so points 1 and 16 collide for k = 5.
        let p = CodeParams::derive(5, 1, 20, None).unwrap();
        assert!(p.q() > 257);
        assert!(p.lambda_collisions().is_empty());
        let explicit = CodeParams::derive(3, 2, 7, Some(11)).unwrap();
        assert_eq!(explicit.lambda_collisions(), vec![(4, 7), (5, 6)]);
    }

    #[test]
    fn eval_point_override() {
        let p = CodeParams::derive(3, 2, 7, Some(11)).unwrap();
        let f = p.field();
        let pts: Vec<_> = [2u64, 3, 4, 5, 6, 7, 8].iter().map(|&v| f.element(v)).collect();
        assert!(p.clone().with_eval_points(pts.clone()).is_ok());
        assert!(matches!(
            p.clone().with_eval_points(pts[..6].to_vec()),
            Err(ParamsError::EvalPointCount { .. })
        ));
        let mut dup = pts.clone();
        dup[1] = dup[0];
        assert!(matches!(p.clone().with_eval_points(dup), Err(ParamsError::EvalPoints(_))));
        let other = PrimeField::new(13).unwrap();
        let wrong: Vec<_> = (1..=7u64).map(|v| other.element(v)).collect();
        assert!(p.with_eval_points(wrong).is_err());
    }

    #[test]
    fn report_lists_everything() {
        let p = CodeParams::derive(3, 2, 14, None).unwrap();
        let r = p.report(true);
        assert!(r.contains("alpha"));
        assert!(r.contains("beta(4)"));
        assert!(r.contains("16384"));
        assert!(r.contains("268435456"));
        assert_eq!(p.alternative_alpha(), Some(16384));
        assert!(!p.report(false).contains("compare"));
    }
}
