//! Shared plumbing for the acceptance suite: running seeded workflows and
//! reporting one verdict per criterion.

use std::time::Instant;

use asymptote::workflow::{run_asymptotic, write_summary_csv};
use asymptote::{model_by_id, EvalStore, Result, SurrogateDb, WorkflowConfig, WorkflowResult};

/// A finished in-memory run together with everything the criteria inspect.
pub struct Run {
    pub result: WorkflowResult,
    pub summary_csv: Vec<u8>,
    pub store: EvalStore,
    pub seconds: f64,
}

pub fn run(model_id: &str, cfg: &WorkflowConfig) -> Result<Run> {
    let model = model_by_id(model_id, None)?;
    let mut store = EvalStore::in_memory(model.dim());
    let mut db = SurrogateDb::in_memory();
    let start = Instant::now();
    let result = run_asymptotic(&*model, cfg, &mut store, &mut db)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut summary_csv = Vec::new();
    write_summary_csv(&result.summaries, &mut summary_csv)?;
    Ok(Run { result, summary_csv, store, seconds })
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Collects verdicts and prints each as it arrives.
#[derive(Default)]
pub struct Verdicts {
    failed: Vec<u32>,
}

impl Verdicts {
    pub fn record(&mut self, criterion: u32, pass: bool, detail: impl AsRef<str>) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {criterion:>2}: {tag}  {}", detail.as_ref());
        if !pass {
            self.failed.push(criterion);
        }
    }

    pub fn failed(&self) -> &[u32] {
        &self.failed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
