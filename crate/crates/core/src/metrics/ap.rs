use std::cmp::Ordering;

/// All-point (uninterpolated) average precision of scored items.
///
/// Items are ranked by descending score; equal scores keep their input order.
/// AP is the sum of precision at each relevant rank divided by the number of
/// relevant items. Returns `None` when no item is relevant.
pub fn average_precision<I>(items: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    let mut ranked: Vec<(f64, bool)> = items.into_iter().collect();
    // Stable: ties stay in input order.
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let positives = ranked.iter().filter(|(_, rel)| *rel).count();
    if positives == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, &(_, relevant)) in ranked.iter().enumerate() {
        if relevant {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Some(total / positives as f64)
}
