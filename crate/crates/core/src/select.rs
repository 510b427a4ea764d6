//! Deterministic Top-r selection.

use crate::error::{Error, Result};

/// Indices of the `r` largest values. Total order: value descending, then
/// index ascending, so ties always resolve to the lower index. The result is
/// a pure function of `(values, r)`.
pub fn top_r(values: &[f64], r: usize) -> Result<Vec<usize>> {
    if r > values.len() {
        return Err(Error::TopROutOfRange { r, len: values.len() });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("top_r: values must be comparable (no NaN)")
            .then(a.cmp(&b))
    });
    order.truncate(r);
    Ok(order)
}
