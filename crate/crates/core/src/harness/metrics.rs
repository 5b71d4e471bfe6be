use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Mean global cost over the final half of the iterations.
    pub cost: f64,
    /// Best global cost over all iterations, including the initial one.
    pub anytime: f64,
    /// Mean fraction of satisfied constraints over the final half.
    pub satisfaction: f64,
    /// Best fraction of satisfied constraints over all iterations.
    pub anytime_satisfaction: f64,
    pub total_queries: u64,
    pub queries_per_agent: f64,
    /// Seconds, when a timing sidecar was available.
    pub runtime: Option<f64>,
}

/// Mean of the trailing `⌈len/2⌉` values.
pub fn window_mean(series: &[f64]) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let k = series.len().div_ceil(2);
    let tail = &series[series.len() - k..];
    Some(tail.iter().sum::<f64>() / k as f64)
}

/// Summary metrics of a run. The final-half window covers iterations
/// `1..=T`; the initial random assignment only counts towards the anytime
/// columns.
pub fn metrics(record: &RunRecord) -> Result<MetricsSummary, HarnessError> {
    let its = &record.iterations;
    if its.len() < 2 {
        return Err(HarnessError::Data(format!("{}: record has fewer than two iterations", record.run_id)));
    }
    let costs: Vec<f64> = its[1..].iter().map(|i| i.cost as f64).collect();
    let sats: Vec<f64> = its[1..].iter().map(|i| i.satisfaction()).collect();
    let agents = record.queries.len().max(1);
    let total_queries = record.total_queries();
    Ok(MetricsSummary {
        cost: window_mean(&costs).expect("non-empty"),
        anytime: its.iter().map(|i| i.cost).min().expect("non-empty") as f64,
        satisfaction: window_mean(&sats).expect("non-empty"),
        anytime_satisfaction: its.iter().map(|i| i.satisfaction()).fold(0.0, f64::max),
        total_queries,
        queries_per_agent: total_queries as f64 / agents as f64,
        runtime: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_arithmetic() {
        assert_eq!(window_mean(&[10.0, 10.0, 2.0, 2.0]), Some(2.0));
        assert_eq!(window_mean(&[5.0; 7]), Some(5.0));
        assert_eq!(window_mean(&[1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(window_mean(&[]), None);
    }

    proptest! {
        #[test]
        fn window_uses_ceil_half_trailing_points(xs in proptest::collection::vec(0u32..1000, 1..200)) {
            let series: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let k = series.len().div_ceil(2);
            let expect = series[series.len() - k..].iter().sum::<f64>() / k as f64;
            prop_assert!((window_mean(&series).unwrap() - expect).abs() < 1e-9);
            let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min <= window_mean(&series).unwrap());
        }
    }
}
