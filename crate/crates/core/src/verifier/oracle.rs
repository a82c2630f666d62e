//! Feasibility oracles: predicates deciding whether a candidate hidden state
//! could actually arise at a given environment state.

/// Point predicate over (state encoding, hidden state).
pub trait FeasibilityOracle: Sync {
    fn accepts(&self, state_enc: &[f64], hidden: &[f64]) -> bool;

    /// Block form over `count` hidden vectors packed row-major; must agree
    /// with `accepts` pointwise. Implementations may batch or parallelize
    /// over fixed-size chunks.
    fn accepts_block(&self, state_enc: &[f64], hiddens: &[f64], count: usize) -> Vec<bool> {
        let dim = if count == 0 { 0 } else { hiddens.len() / count };
        (0..count)
            .map(|i| self.accepts(state_enc, &hiddens[i * dim..(i + 1) * dim]))
            .collect()
    }

    /// Short name recorded in certificates.
    fn describe(&self) -> String;
}

/// Accepts everything; turns the filtered estimator into naive Monte Carlo.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassAll;

impl FeasibilityOracle for PassAll {
    fn accepts(&self, _state_enc: &[f64], _hidden: &[f64]) -> bool {
        true
    }

    fn describe(&self) -> String {
        "pass-all".into()
    }
}
