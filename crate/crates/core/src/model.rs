//! Discrete graphical models stored in log space.
//!
//! A [`GraphicalModel`] is immutable once built. Factor tables are laid out
//! row-major with the last scope variable fastest, which is also the order the
//! UAI format lists them in. Zero-probability entries are `f64::NEG_INFINITY`;
//! ordinary float arithmetic already gives `-inf + finite = -inf`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A log-potential table over an ordered scope.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    log_table: Vec<f64>,
    strides: Vec<usize>,
}

impl Factor {
    /// Builds a factor, checking the scope against `cardinalities` and the table length
    /// against the scope's joint domain size.
    pub fn new(scope: Vec<usize>, log_table: Vec<f64>, cardinalities: &[usize]) -> Result<Self> {
        for (k, &v) in scope.iter().enumerate() {
            if v >= cardinalities.len() {
                return Err(Error::contract(format!(
                    "scope variable {v} out of range (model has {} variables)",
                    cardinalities.len()
                )));
            }
            if scope[..k].contains(&v) {
                return Err(Error::contract(format!("variable {v} repeated in factor scope")));
            }
        }
        let mut strides = vec![0; scope.len()];
        let mut size = 1usize;
        for k in (0..scope.len()).rev() {
            strides[k] = size;
            size *= cardinalities[scope[k]];
        }
        if log_table.len() != size {
            return Err(Error::contract(format!(
                "table-size mismatch: scope {:?} needs {size} entries, got {}",
                scope,
                log_table.len()
            )));
        }
        if let Some(bad) = log_table.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(Error::contract(format!("non-finite log potential {bad}")));
        }
        Ok(Factor {
            scope,
            log_table,
            strides,
        })
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn log_table(&self) -> &[f64] {
        &self.log_table
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Flat table index of the instantiation selected by a full assignment.
    #[inline]
    pub fn index_of(&self, values: &[usize]) -> usize {
        self.scope.iter().zip(&self.strides).map(|(&v, &s)| values[v] * s).sum()
    }

    #[inline]
    pub fn value_at(&self, values: &[usize]) -> f64 {
        self.log_table[self.index_of(values)]
    }

    /// Largest entry of the table.
    pub fn max_entry(&self) -> f64 {
        self.log_table.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One factor touching a variable, with the stride of that variable inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Incidence {
    factor: usize,
    stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalModel {
    cardinalities: Vec<usize>,
    factors: Vec<Factor>,
    var_to_factors: Vec<Vec<usize>>,
    incidence: Vec<Vec<Incidence>>,
}

impl GraphicalModel {
    pub fn new(cardinalities: Vec<usize>, factors: Vec<Factor>) -> Result<Self> {
        if let Some(i) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::contract(format!("variable {i} has an empty domain")));
        }
        let mut var_to_factors = vec![Vec::new(); cardinalities.len()];
        let mut incidence = vec![Vec::new(); cardinalities.len()];
        for (fi, f) in factors.iter().enumerate() {
            for (k, &v) in f.scope.iter().enumerate() {
                if v >= cardinalities.len() {
                    return Err(Error::contract(format!(
                        "factor {fi} references variable {v} out of range"
                    )));
                }
                var_to_factors[v].push(fi);
                incidence[v].push(Incidence {
                    factor: fi,
                    stride: f.strides[k],
                });
            }
            let expected: usize = f.scope.iter().map(|&v| cardinalities[v]).product();
            if expected != f.log_table.len() {
                return Err(Error::contract(format!(
                    "factor {fi}: table-size mismatch ({} vs {expected})",
                    f.log_table.len()
                )));
            }
        }
        Ok(GraphicalModel {
            cardinalities,
            factors,
            var_to_factors,
            incidence,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cardinalities[var]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Indices of the factors whose scope contains `var`.
    pub fn var_to_factors(&self, var: usize) -> &[usize] {
        &self.var_to_factors[var]
    }

    pub fn check_assignment(&self, x: &Assignment) -> Result<()> {
        if x.len() != self.num_vars() {
            return Err(Error::contract(format!(
                "assignment has {} values, model has {} variables",
                x.len(),
                self.num_vars()
            )));
        }
        for (i, (&v, &c)) in x.values().iter().zip(&self.cardinalities).enumerate() {
            if v >= c {
                return Err(Error::contract(format!(
                    "variable {i} has value {v} outside domain of size {c}"
                )));
            }
        }
        Ok(())
    }

    /// F(x): the sum over all factors of the entry selected by `x`.
    pub fn log_potential_sum(&self, x: &Assignment) -> f64 {
        self.factors.iter().map(|f| f.value_at(x.values())).sum()
    }

    /// Sum of the incident factors' entries if `var` took `value`, everything else as in `x`.
    #[inline]
    pub fn local_sum(&self, x: &[usize], var: usize, value: usize) -> f64 {
        let cur = x[var];
        self.incidence[var]
            .iter()
            .map(|inc| {
                let f = &self.factors[inc.factor];
                let idx = f.index_of(x) + value * inc.stride - cur * inc.stride;
                f.log_table[idx]
            })
            .sum()
    }

    /// F(x') - F(x) for the flip `m`, touching only factors incident to `m.var`.
    ///
    /// If both the old and new incident sums are `-inf` the gain is reported as 0.
    pub fn ll_gain(&self, x: &Assignment, m: Move) -> Result<f64> {
        if m.var >= self.num_vars() || m.value >= self.cardinalities[m.var] {
            return Err(Error::contract(format!("move {m} out of range")));
        }
        if x[m.var] == m.value {
            return Err(Error::contract(format!("move {m} does not change the current value")));
        }
        Ok(self.gain_unchecked(x.values(), m))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, x: &[usize], m: Move) -> f64 {
        let old = self.local_sum(x, m.var, x[m.var]);
        let new = self.local_sum(x, m.var, m.value);
        if old == f64::NEG_INFINITY && new == f64::NEG_INFINITY {
            0.0
        } else {
            new - old
        }
    }

    /// `(factor index, stride of var in that factor)` for every factor touching `var`.
    pub(crate) fn incidence(&self, var: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.incidence[var].iter().map(|i| (i.factor, i.stride))
    }

    /// Stable hex digest of the model content (cardinalities, scopes, table bits).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_vars() as u64).to_le_bytes());
        for &c in &self.cardinalities {
            h.update((c as u64).to_le_bytes());
        }
        h.update((self.factors.len() as u64).to_le_bytes());
        for f in &self.factors {
            h.update((f.scope.len() as u64).to_le_bytes());
            for &v in &f.scope {
                h.update((v as u64).to_le_bytes());
            }
            for &t in &f.log_table {
                h.update(t.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// A full assignment of value indices, one per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(values: Vec<usize>) -> Self {
        Assignment(values)
    }

    pub fn zeros(n: usize) -> Self {
        Assignment(vec![0; n])
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn set(&mut self, var: usize, value: usize) {
        self.0[var] = value;
    }

    /// Applies `m` in place, returning the previous value.
    pub fn apply(&mut self, m: Move) -> usize {
        std::mem::replace(&mut self.0[m.var], m.value)
    }

    pub fn with_move(&self, m: Move) -> Assignment {
        let mut y = self.clone();
        y.apply(m);
        y
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl std::ops::Index<usize> for Assignment {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

/// A 1-flip move: set `var` to `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub var: usize,
    pub value: usize,
}

impl Move {
    pub fn new(var: usize, value: usize) -> Self {
        Move { var, value }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.var, self.value)
    }
}

/// Query variables plus evidence on the remaining ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    query_vars: Vec<usize>,
    evidence: BTreeMap<usize, usize>,
    is_query: Vec<bool>,
}

impl QuerySpec {
    /// Builds a query from explicit evidence; every non-evidence variable becomes a query variable.
    pub fn from_evidence(model: &GraphicalModel, evidence: BTreeMap<usize, usize>) -> Result<Self> {
        let n = model.num_vars();
        let mut is_query = vec![true; n];
        for (&v, &val) in &evidence {
            if v >= n {
                return Err(Error::contract(format!("evidence variable {v} out of range")));
            }
            if val >= model.cardinality(v) {
                return Err(Error::contract(format!(
                    "evidence value {val} outside domain of variable {v}"
                )));
            }
            is_query[v] = false;
        }
        let query_vars = (0..n).filter(|&v| is_query[v]).collect();
        Ok(QuerySpec {
            query_vars,
            evidence,
            is_query,
        })
    }

    /// Every variable is a query variable.
    pub fn all_query(model: &GraphicalModel) -> Self {
        QuerySpec {
            query_vars: (0..model.num_vars()).collect(),
            evidence: BTreeMap::new(),
            is_query: vec![true; model.num_vars()],
        }
    }

    /// Query set `query_vars`, evidence taken from `x` on every other variable.
    pub fn project(model: &GraphicalModel, query_vars: &[usize], x: &Assignment) -> Result<Self> {
        model.check_assignment(x)?;
        let mut is_query = vec![false; model.num_vars()];
        for &v in query_vars {
            if v >= model.num_vars() {
                return Err(Error::contract(format!("query variable {v} out of range")));
            }
            is_query[v] = true;
        }
        let evidence = (0..model.num_vars())
            .filter(|&v| !is_query[v])
            .map(|v| (v, x[v]))
            .collect();
        QuerySpec::from_evidence(model, evidence)
    }

    pub fn query_vars(&self) -> &[usize] {
        &self.query_vars
    }

    pub fn evidence(&self) -> &BTreeMap<usize, usize> {
        &self.evidence
    }

    pub fn num_vars(&self) -> usize {
        self.is_query.len()
    }

    #[inline]
    pub fn is_query(&self, var: usize) -> bool {
        self.is_query[var]
    }

    pub fn is_consistent(&self, x: &Assignment) -> bool {
        x.len() == self.num_vars() && self.evidence.iter().all(|(&v, &val)| x[v] == val)
    }

    pub fn check_consistent(&self, x: &Assignment) -> Result<()> {
        if x.len() != self.num_vars() {
            return Err(Error::contract(format!(
                "assignment length {} does not match query over {} variables",
                x.len(),
                self.num_vars()
            )));
        }
        match self.evidence.iter().find(|(&v, &val)| x[v] != val) {
            Some((v, val)) => Err(Error::contract(format!(
                "assignment sets evidence variable {v} to {} instead of {val}",
                x[*v]
            ))),
            None => Ok(()),
        }
    }
}

/// Number of query variables on which `a` and `b` differ.
pub fn hamming_distance(a: &Assignment, b: &Assignment, q: &QuerySpec) -> Result<usize> {
    if a.len() != b.len() || a.len() != q.num_vars() {
        return Err(Error::contract("assignments of different lengths"));
    }
    if let Some(v) = q.evidence().keys().find(|&&v| a[v] != b[v]) {
        return Err(Error::contract(format!(
            "assignments disagree on evidence variable {v}"
        )));
    }
    Ok(hamming_unchecked(a, b, q))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &Assignment, b: &Assignment, q: &QuerySpec) -> usize {
    q.query_vars().iter().filter(|&&v| a[v] != b[v]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_var() -> GraphicalModel {
        let table = [0.1f64, 0.2, 0.3, 0.4].iter().map(|p| p.ln()).collect();
        let f = Factor::new(vec![0, 1], table, &[2, 2]).unwrap();
        GraphicalModel::new(vec![2, 2], vec![f]).unwrap()
    }

    #[test]
    fn unary_sum() {
        let f = Factor::new(vec![0], vec![0.0, 2f64.ln()], &[2]).unwrap();
        let m = GraphicalModel::new(vec![2], vec![f]).unwrap();
        assert_eq!(m.log_potential_sum(&Assignment::new(vec![1])), 2f64.ln());
    }

    #[test]
    fn pairwise_lookup_row_major() {
        let m = two_var();
        assert_eq!(m.log_potential_sum(&Assignment::new(vec![1, 0])), 0.3f64.ln());
        assert_eq!(m.log_potential_sum(&Assignment::new(vec![0, 1])), 0.2f64.ln());
    }

    #[test]
    fn gain_two_lookups() {
        let m = two_var();
        let x = Assignment::new(vec![0, 0]);
        let g = m.ll_gain(&x, Move::new(1, 1)).unwrap();
        assert!((g - (0.2f64.ln() - 0.1f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn gain_isolated_variable_is_zero() {
        let f = Factor::new(vec![0], vec![0.5, 1.5], &[2, 3]).unwrap();
        let m = GraphicalModel::new(vec![2, 3], vec![f]).unwrap();
        let x = Assignment::new(vec![0, 0]);
        assert_eq!(m.ll_gain(&x, Move::new(1, 2)).unwrap(), 0.0);
    }

    #[test]
    fn gain_rejects_noop_move() {
        let m = two_var();
        let x = Assignment::new(vec![0, 1]);
        assert!(matches!(m.ll_gain(&x, Move::new(1, 1)), Err(Error::Contract(_))));
    }

    #[test]
    fn sentinel_propagates() {
        let f = Factor::new(vec![0], vec![f64::NEG_INFINITY, 0.0], &[2]).unwrap();
        let m = GraphicalModel::new(vec![2], vec![f]).unwrap();
        assert_eq!(m.log_potential_sum(&Assignment::new(vec![0])), f64::NEG_INFINITY);
        let g = m.ll_gain(&Assignment::new(vec![0]), Move::new(0, 1)).unwrap();
        assert_eq!(g, f64::INFINITY);
    }

    #[test]
    fn factor_rejects_bad_table() {
        assert!(Factor::new(vec![0, 1], vec![0.0; 3], &[2, 2]).is_err());
        assert!(Factor::new(vec![0, 0], vec![0.0; 4], &[2, 2]).is_err());
        assert!(Factor::new(vec![0, 2], vec![0.0; 4], &[2, 2]).is_err());
    }

    #[test]
    fn var_to_factors_matches_scopes() {
        let cards = vec![2, 3, 2];
        let f0 = Factor::new(vec![0, 1], vec![0.0; 6], &cards).unwrap();
        let f1 = Factor::new(vec![2], vec![0.0; 2], &cards).unwrap();
        let f2 = Factor::new(vec![1, 2], vec![0.0; 6], &cards).unwrap();
        let m = GraphicalModel::new(cards, vec![f0, f1, f2]).unwrap();
        assert_eq!(m.var_to_factors(0), &[0]);
        assert_eq!(m.var_to_factors(1), &[0, 2]);
        assert_eq!(m.var_to_factors(2), &[1, 2]);
    }

    #[test]
    fn hamming_counts_query_positions() {
        let m = GraphicalModel::new(vec![2; 4], vec![]).unwrap();
        let q = QuerySpec::all_query(&m);
        let a = Assignment::new(vec![0, 0, 0, 0]);
        let b = Assignment::new(vec![1, 0, 1, 0]);
        assert_eq!(hamming_distance(&a, &a, &q).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &b, &q).unwrap(), 2);
    }

    #[test]
    fn hamming_rejects_evidence_mismatch() {
        let m = GraphicalModel::new(vec![2; 3], vec![]).unwrap();
        let q = QuerySpec::from_evidence(&m, BTreeMap::from([(1, 0)])).unwrap();
        let a = Assignment::new(vec![0, 0, 0]);
        let b = Assignment::new(vec![0, 1, 0]);
        assert!(hamming_distance(&a, &b, &q).is_err());
    }

    #[test]
    fn query_partition() {
        let m = GraphicalModel::new(vec![2, 3, 2, 2], vec![]).unwrap();
        let q = QuerySpec::from_evidence(&m, BTreeMap::from([(1, 2), (3, 0)])).unwrap();
        assert_eq!(q.query_vars(), &[0, 2]);
        assert!(q.is_consistent(&Assignment::new(vec![1, 2, 0, 0])));
        assert!(!q.is_consistent(&Assignment::new(vec![1, 1, 0, 0])));
        assert!(QuerySpec::from_evidence(&m, BTreeMap::from([(1, 3)])).is_err());
    }
}
