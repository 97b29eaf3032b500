//! Complexity/performance Pareto fronts and the budget-optimal model.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub macs: f64,
    /// BER or SER.
    pub metric: f64,
    pub model_id: String,
    pub dominated: bool,
}

impl ParetoPoint {
    pub fn new(macs: f64, metric: f64, model_id: impl Into<String>) -> Self {
        Self {
            macs,
            metric,
            model_id: model_id.into(),
            dominated: false,
        }
    }
}

fn order(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.macs
        .total_cmp(&b.macs)
        .then(a.metric.total_cmp(&b.metric))
        .then_with(|| a.model_id.cmp(&b.model_id))
}

/// Points not dominated in `(macs, metric)`, both minimized, sorted by MACs.
///
/// Among points with equal MACs only the lowest metric survives; exact
/// duplicates keep one representative (smallest `model_id`).
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| order(a, b));
    let mut front: Vec<ParetoPoint> = Vec::new();
    let mut best = f64::INFINITY;
    for p in sorted {
        if p.metric < best {
            best = p.metric;
            front.push(ParetoPoint {
                dominated: false,
                ..p.clone()
            });
        }
    }
    front
}

/// Sets `dominated` on every point that is not the kept representative of
/// a front member.
pub fn mark_dominated(points: &mut [ParetoPoint]) {
    let front = pareto_front(points);
    for p in points.iter_mut() {
        p.dominated = !front.iter().any(|f| order(f, p) == Ordering::Equal);
    }
}

/// Lowest metric among points with `macs <= budget`; ties go to fewer MACs,
/// then the smaller `model_id`. The result always lies on the front.
pub fn budget_optimum(points: &[ParetoPoint], budget: f64) -> Option<ParetoPoint> {
    points
        .iter()
        .filter(|p| p.macs <= budget && !p.metric.is_nan())
        .min_by(|a, b| {
            a.metric
                .total_cmp(&b.metric)
                .then(a.macs.total_cmp(&b.macs))
                .then_with(|| a.model_id.cmp(&b.model_id))
        })
        .cloned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<ParetoPoint> {
        v.iter()
            .enumerate()
            .map(|(i, &(m, e))| ParetoPoint::new(m, e, format!("m{i}")))
            .collect()
    }

    fn coords(v: &[ParetoPoint]) -> Vec<(f64, f64)> {
        v.iter().map(|p| (p.macs, p.metric)).collect()
    }

    #[test]
    fn worked_example() {
        let p = pts(&[(10.0, 1e-2), (15.0, 2e-2), (20.0, 1e-3)]);
        assert_eq!(coords(&pareto_front(&p)), [(10.0, 1e-2), (20.0, 1e-3)]);
        assert_eq!(budget_optimum(&p, 16.0).unwrap().model_id, "m0");
        assert_eq!(budget_optimum(&p, 5.0), None);
    }

    #[test]
    fn single_and_identical() {
        let one = pts(&[(3.0, 0.1)]);
        assert_eq!(pareto_front(&one).len(), 1);
        let same = pts(&[(3.0, 0.1), (3.0, 0.1), (3.0, 0.1)]);
        let f = pareto_front(&same);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].model_id, "m0");
    }

    #[test]
    fn equal_macs_keep_lower_metric() {
        let p = pts(&[(5.0, 0.2), (5.0, 0.1), (8.0, 0.1)]);
        assert_eq!(coords(&pareto_front(&p)), [(5.0, 0.1)]);
    }

    #[test]
    fn marks_dominated() {
        let mut p = pts(&[(10.0, 1e-2), (15.0, 2e-2), (20.0, 1e-3)]);
        mark_dominated(&mut p);
        assert_eq!(p.iter().map(|x| x.dominated).collect::<Vec<_>>(), [false, true, false]);
    }
}
