//! Sign-unit timelines for nursery rhymes.

use serde::{Deserialize, Serialize};

use super::{AgentError, PrimitiveBehavior};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineUnit<T> {
    pub gloss: String,
    pub start_ms: T,
    pub end_ms: T,
}

/// Lays the rhyme's sign units end to end: each nucleus lasts `1000 / nucleus_hz`
/// ms and consecutive units are separated by `padding_ms`.
pub fn rhyme_timeline<T: Scalar>(
    rhyme: &PrimitiveBehavior,
    nucleus_hz: T,
    padding_ms: T,
) -> Result<Vec<TimelineUnit<T>>, AgentError> {
    if !rhyme.is_rhyme() {
        return Err(AgentError::NotARhyme(rhyme.name.clone()));
    }
    let nucleus = T::lit(1000.0) / nucleus_hz;
    let step = nucleus + padding_ms;
    Ok(rhyme
        .sign_units
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let start = T::from_usize(k).expect("unit index") * step;
            TimelineUnit { gloss: u.gloss.clone(), start_ms: start, end_ms: start + nucleus }
        })
        .collect())
}

/// Successive differences of nucleus onsets.
pub fn inter_onset_intervals<T: Scalar>(timeline: &[TimelineUnit<T>]) -> Vec<T> {
    timeline.windows(2).map(|w| w[1].start_ms - w[0].start_ms).collect()
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(values.len()).expect("len");
    let mean = values.iter().copied().sum::<T>() / n;
    if mean == T::zero() {
        return T::zero();
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    var.sqrt() / mean
}
