use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Engineering effort of agent-based versus conventional control over `n` layout changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortModel {
    /// Initial effort of the agent-based system.
    pub ie_mas: f64,
    /// Initial effort of conventional control.
    pub ie_con: f64,
    /// Manual change effort per layout change, conventional control only.
    pub ce_man: f64,
    pub n: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Breakeven {
    At(u64),
    /// Conventional effort never catches up.
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortResult {
    pub te_con: f64,
    pub te_mas: f64,
    pub n_breakeven: Breakeven,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("effort parameter `{0}` must be finite and nonnegative")]
pub struct EffortError(pub &'static str);

/// Total efforts after `n` changes and the smallest `n` where conventional effort reaches the agent-based one.
pub fn effort_model(model: &EffortModel) -> Result<EffortResult, EffortError> {
    for (name, v) in [("ie_mas", model.ie_mas), ("ie_con", model.ie_con), ("ce_man", model.ce_man)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(EffortError(name));
        }
    }
    let gap = model.ie_mas - model.ie_con;
    let n_breakeven = if gap <= 0.0 {
        Breakeven::At(0)
    } else if model.ce_man == 0.0 {
        Breakeven::Unbounded
    } else {
        Breakeven::At((gap / model.ce_man).ceil() as u64)
    };
    Ok(EffortResult { te_con: model.ie_con + f64::from(model.n) * model.ce_man, te_mas: model.ie_mas, n_breakeven })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(ie_mas: f64, ie_con: f64, ce_man: f64, n: u32) -> EffortModel {
        EffortModel { ie_mas, ie_con, ce_man, n }
    }

    #[test]
    fn worked_example() {
        let r = effort_model(&m(100.0, 20.0, 10.0, 5)).unwrap();
        assert_eq!((r.te_con, r.te_mas, r.n_breakeven), (70.0, 100.0, Breakeven::At(8)));
    }

    #[test]
    fn edge_cases() {
        assert_eq!(effort_model(&m(50.0, 50.0, 0.0, 0)).unwrap().n_breakeven, Breakeven::At(0));
        assert_eq!(effort_model(&m(50.0, 20.0, 0.0, 3)).unwrap().n_breakeven, Breakeven::Unbounded);
        assert_eq!(effort_model(&m(10.0, 20.0, 5.0, 1)).unwrap().n_breakeven, Breakeven::At(0));
        assert_eq!(effort_model(&m(-1.0, 0.0, 1.0, 0)), Err(EffortError("ie_mas")));
    }
}
