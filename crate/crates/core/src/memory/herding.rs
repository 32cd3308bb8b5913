//! Greedy herding: pick exemplars whose running mean tracks the class mean.

use std::collections::BTreeMap;

use nalgebra::DVector;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HerdingSelection {
    /// Selected ids per class, in selection order.
    pub per_class: BTreeMap<usize, Vec<u64>>,
    /// Classes that had no embeddings and were skipped.
    pub skipped: Vec<usize>,
}

/// Herds at most `cap` exemplars from one class. Ties go to the smaller id.
pub fn herd_class(items: &[(u64, DVector<f64>)], cap: usize) -> Vec<u64> {
    if items.is_empty() || cap == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| items[i].0);
    let dim = items[0].1.len();

    let mut mean = DVector::zeros(dim);
    for &i in &order {
        mean += &items[i].1;
    }
    mean /= items.len() as f64;

    let target = cap.min(items.len());
    let mut taken = vec![false; items.len()];
    let mut running = DVector::zeros(dim);
    let mut selected = Vec::with_capacity(target);
    for m in 0..target {
        let denom = (m + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for &i in &order {
            if taken[i] {
                continue;
            }
            let z = &items[i].1;
            let dist = (0..dim)
                .map(|k| {
                    let d = mean[k] - (running[k] + z[k]) / denom;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((i, dist));
            }
        }
        let (i, _) = best.expect("candidates remain while m < class size");
        taken[i] = true;
        running += &items[i].1;
        selected.push(items[i].0);
    }
    selected
}

/// Herding applied independently to every class with a shared cap.
pub fn herding_select(by_class: &BTreeMap<usize, Vec<(u64, DVector<f64>)>>, cap: usize) -> HerdingSelection {
    let mut out = HerdingSelection::default();
    for (&label, items) in by_class {
        if items.is_empty() {
            log::warn!("herding: class {label} has no embeddings, skipped");
            out.skipped.push(label);
            continue;
        }
        out.per_class.insert(label, herd_class(items, cap));
    }
    out
}
