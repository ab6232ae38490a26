//! Parameter sets shared by the benchmarks.

use scencert::MultiIndex;

/// Two criteria with unequal dataset sizes, as used for region plots.
pub fn two_criteria() -> (MultiIndex, MultiIndex) {
    (MultiIndex::new(vec![800, 1200]).unwrap(), MultiIndex::new(vec![120, 80]).unwrap())
}

/// (N, k) of a large homogeneous problem: 100 criteria of 3000 scenarios.
pub fn many_criteria() -> (MultiIndex, MultiIndex) {
    (MultiIndex::filled(100, 3000).unwrap(), MultiIndex::filled(100, 1).unwrap())
}

/// (N̲, K*, β) of the a-priori sweep.
pub const APRIORI: (usize, usize, f64) = (1000, 100, 1e-5);
