//! Thermal perception: nose-tip temperature slope over a sliding window,
//! classified into the five readiness-to-learn values.
//!
//! A rising temperature reads as a parasympathetic (engaged) response, a
//! falling one as sympathetic (distress/disengagement). A trend held for
//! `sustain` consecutive windows is promoted to its "very" grade.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThermalError {
    #[error("window has {got} valid samples, at least {needed} required")]
    InsufficientValidSamples { needed: usize, got: usize },
}

/// Readiness-to-learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Readiness {
    VeryNegative,
    Negative,
    Positive,
    VeryPositive,
    None,
}

/// Binary autonomic class the policy branches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReadinessClass {
    Parasympathetic,
    Sympathetic,
    Neutral,
}

impl Readiness {
    pub const ALL: [Readiness; 5] = [
        Readiness::VeryNegative,
        Readiness::Negative,
        Readiness::Positive,
        Readiness::VeryPositive,
        Readiness::None,
    ];

    pub fn class(self) -> ReadinessClass {
        match self {
            Readiness::Positive | Readiness::VeryPositive => ReadinessClass::Parasympathetic,
            Readiness::Negative | Readiness::VeryNegative => ReadinessClass::Sympathetic,
            Readiness::None => ReadinessClass::Neutral,
        }
    }

    /// +1, −1 or 0.
    pub fn sign(self) -> i8 {
        match self.class() {
            ReadinessClass::Parasympathetic => 1,
            ReadinessClass::Sympathetic => -1,
            ReadinessClass::Neutral => 0,
        }
    }
}

impl fmt::Display for Readiness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for ReadinessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSample<T> {
    pub t: u64,
    /// Degrees Celsius.
    pub temp: T,
    pub valid: bool,
}

impl<T: Scalar> ThermalSample<T> {
    pub fn at(t: u64, temp: T) -> Self {
        Self { t, temp, valid: true }
    }

    pub fn lost(t: u64) -> Self {
        Self { t, temp: T::zero(), valid: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalParams<T> {
    pub window_ms: u64,
    pub hop_ms: u64,
    /// Slopes with magnitude at or below this (°C/s) carry no signal.
    pub deadband: T,
    /// Consecutive same-sign windows needed for the "very" grade.
    pub sustain: usize,
    pub min_valid_fraction: T,
    pub sample_rate_hz: T,
    pub min_temp: T,
    pub max_temp: T,
}

impl<T: Scalar> Default for ThermalParams<T> {
    fn default() -> Self {
        Self {
            window_ms: 10_000,
            hop_ms: 1_000,
            deadband: T::lit(0.003),
            sustain: 3,
            min_valid_fraction: T::lit(0.8),
            sample_rate_hz: T::lit(50.0),
            min_temp: T::lit(25.0),
            max_temp: T::lit(40.0),
        }
    }
}

impl<T: Scalar> ThermalParams<T> {
    /// Nominal sample count of a full window.
    pub fn expected_samples(&self) -> usize {
        (T::from_u64(self.window_ms).expect("ms") * self.sample_rate_hz / T::lit(1000.0))
            .round()
            .to_usize()
            .unwrap_or(0)
    }

    fn usable(&self, s: &ThermalSample<T>) -> bool {
        s.valid && s.temp >= self.min_temp && s.temp <= self.max_temp
    }
}

/// Least-squares slope (°C/s) of temperature against time over valid samples.
/// `None` with fewer than two valid samples or no spread in time.
pub fn regression_slope<T: Scalar>(samples: &[ThermalSample<T>]) -> Option<T> {
    let valid: Vec<_> = samples.iter().filter(|s| s.valid).collect();
    if valid.len() < 2 {
        return None;
    }
    let n = T::from_usize(valid.len())?;
    let secs = |s: &ThermalSample<T>| T::from_u64(s.t).expect("ms") / T::lit(1000.0);
    let t_mean = valid.iter().map(|s| secs(s)).sum::<T>() / n;
    let y_mean = valid.iter().map(|s| s.temp).sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for s in &valid {
        let dt = secs(s) - t_mean;
        sxy = sxy + dt * (s.temp - y_mean);
        sxx = sxx + dt * dt;
    }
    if sxx <= T::zero() {
        return None;
    }
    Some(sxy / sxx)
}

/// Slope over a full analysis window, refusing windows without enough valid data.
pub fn estimate_slope<T: Scalar>(window: &[ThermalSample<T>], params: &ThermalParams<T>) -> Result<T, ThermalError> {
    let needed = (params.min_valid_fraction * T::from_usize(params.expected_samples()).expect("count"))
        .ceil()
        .to_usize()
        .unwrap_or(usize::MAX)
        .max(2);
    let usable: Vec<_> = window.iter().filter(|s| params.usable(s)).copied().collect();
    if usable.len() < needed {
        return Err(ThermalError::InsufficientValidSamples { needed, got: usable.len() });
    }
    regression_slope(&usable).ok_or(ThermalError::InsufficientValidSamples { needed, got: usable.len() })
}

/// One analysed window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate<T> {
    pub window_end: u64,
    pub slope: Option<T>,
    pub valid_fraction: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadinessEvent<T> {
    pub window_end: u64,
    pub state: Readiness,
    pub slope: Option<T>,
    pub valid_fraction: T,
}

/// Sustain-count state machine over successive slope estimates.
#[derive(Debug, Clone)]
pub struct ReadinessClassifier<T> {
    params: ThermalParams<T>,
    run_sign: i8,
    run_len: usize,
}

impl<T: Scalar> ReadinessClassifier<T> {
    pub fn new(params: ThermalParams<T>) -> Self {
        Self { params, run_sign: 0, run_len: 0 }
    }

    pub fn reset(&mut self) {
        self.run_sign = 0;
        self.run_len = 0;
    }

    pub fn push(&mut self, est: &SlopeEstimate<T>) -> ReadinessEvent<T> {
        let sign = match est.slope {
            Some(s) if est.valid_fraction >= self.params.min_valid_fraction => {
                if s > self.params.deadband {
                    1
                } else if s < -self.params.deadband {
                    -1
                } else {
                    0
                }
            }
            _ => 0,
        };
        if sign == 0 {
            self.reset();
        } else if sign == self.run_sign {
            self.run_len += 1;
        } else {
            self.run_sign = sign;
            self.run_len = 1;
        }
        let sustained = self.run_len >= self.params.sustain;
        let state = match (sign, sustained) {
            (1, true) => Readiness::VeryPositive,
            (1, false) => Readiness::Positive,
            (-1, true) => Readiness::VeryNegative,
            (-1, false) => Readiness::Negative,
            _ => Readiness::None,
        };
        ReadinessEvent { window_end: est.window_end, state, slope: est.slope, valid_fraction: est.valid_fraction }
    }
}

/// Classification of the most recent estimate given the full history.
pub fn classify_readiness<T: Scalar>(
    history: &[SlopeEstimate<T>],
    params: &ThermalParams<T>,
) -> Option<ReadinessEvent<T>> {
    let mut clf = ReadinessClassifier::new(params.clone());
    history.iter().map(|e| clf.push(e)).last()
}

/// Sliding-window stream processor emitting one event per hop.
#[derive(Debug, Clone)]
pub struct ThermalStream<T> {
    params: ThermalParams<T>,
    buffer: VecDeque<ThermalSample<T>>,
    classifier: ReadinessClassifier<T>,
}

impl<T: Scalar> ThermalStream<T> {
    pub fn new(params: ThermalParams<T>) -> Self {
        Self { classifier: ReadinessClassifier::new(params.clone()), params, buffer: VecDeque::new() }
    }

    pub fn params(&self) -> &ThermalParams<T> {
        &self.params
    }

    pub fn push(&mut self, sample: ThermalSample<T>) {
        self.buffer.push_back(sample);
    }

    /// Analyses the window `[now − W, now)` and emits a classification. Before a
    /// full window has elapsed the state is `None`.
    pub fn emit(&mut self, now: u64) -> ReadinessEvent<T> {
        let start = now.saturating_sub(self.params.window_ms);
        while self.buffer.front().is_some_and(|s| s.t < start) {
            self.buffer.pop_front();
        }
        let window: Vec<_> = self
            .buffer
            .iter()
            .filter(|s| s.t < now && self.params.usable(s))
            .copied()
            .collect();
        let expected = self.params.expected_samples().max(1);
        let valid_fraction =
            (T::from_usize(window.len()).expect("len") / T::from_usize(expected).expect("len")).min(T::one());
        let slope = regression_slope(&window);
        let est = SlopeEstimate { window_end: now, slope, valid_fraction };
        if now < self.params.window_ms {
            self.classifier.reset();
            return ReadinessEvent { window_end: now, state: Readiness::None, slope, valid_fraction };
        }
        self.classifier.push(&est)
    }
}

/// Runs a complete sample stream, emitting at every hop boundary up to the end
/// of the last sample's period.
pub fn run_thermal_stream<T: Scalar>(
    samples: &[ThermalSample<T>],
    params: &ThermalParams<T>,
) -> Vec<ReadinessEvent<T>> {
    let mut stream = ThermalStream::new(params.clone());
    let mut out = Vec::new();
    let hop = params.hop_ms.max(1);
    let mut next = hop;
    for s in samples {
        while s.t >= next {
            out.push(stream.emit(next));
            next += hop;
        }
        stream.push(*s);
    }
    if let Some(last) = samples.last() {
        let period = (T::lit(1000.0) / params.sample_rate_hz).ceil().to_u64().unwrap_or(1);
        let end = last.t + period;
        while next <= end {
            out.push(stream.emit(next));
            next += hop;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ramp(from: f64, to: f64, secs: u64) -> Vec<ThermalSample<f64>> {
        let n = secs * 50;
        (0..n).map(|k| ThermalSample::at(k * 20, from + (to - from) * (k as f64 * 0.02) / secs as f64)).collect()
    }

    fn est(slope: f64) -> SlopeEstimate<f64> {
        SlopeEstimate { window_end: 0, slope: Some(slope), valid_fraction: 1.0 }
    }

    #[test]
    fn flat_and_linear_slopes() {
        let p = ThermalParams::default();
        let flat: Vec<_> = (0..500).map(|k| ThermalSample::at(k * 20, 34.0)).collect();
        assert_eq!(estimate_slope(&flat, &p).unwrap(), 0.0);
        let r = ramp(34.0, 34.1, 10);
        assert!((estimate_slope(&r, &p).unwrap() - 0.01).abs() < 1e-9);
    }

    #[test]
    fn noisy_ramp_matches_closed_form() {
        let p = ThermalParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let samples: Vec<_> = ramp(34.0, 34.1, 10)
            .into_iter()
            .map(|s| ThermalSample::at(s.t, s.temp + noise.sample(&mut rng)))
            .collect();
        // Closed-form slope: cov(t, y) / var(t) with explicit sums.
        let n = samples.len() as f64;
        let ts: Vec<f64> = samples.iter().map(|s| s.t as f64 / 1000.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.temp).collect();
        let st: f64 = ts.iter().sum();
        let sy: f64 = ys.iter().sum();
        let stt: f64 = ts.iter().map(|t| t * t).sum();
        let sty: f64 = ts.iter().zip(&ys).map(|(t, y)| t * y).sum();
        let oracle = (n * sty - st * sy) / (n * stt - st * st);
        let got = estimate_slope(&samples, &p).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 0.01).abs() < 0.002);
    }

    #[test]
    fn insufficient_valid_samples() {
        let p = ThermalParams::default();
        let s: Vec<_> = (0..500)
            .map(|k| if k % 2 == 0 { ThermalSample::at(k * 20, 34.0) } else { ThermalSample::lost(k * 20) })
            .collect();
        assert_eq!(estimate_slope(&s, &p), Err(ThermalError::InsufficientValidSamples { needed: 400, got: 250 }));
    }

    #[test]
    fn promotion_rules() {
        let p = ThermalParams::default();
        assert_eq!(classify_readiness(&[est(0.01)], &p).unwrap().state, Readiness::Positive);
        assert_eq!(classify_readiness(&[est(0.01); 3], &p).unwrap().state, Readiness::VeryPositive);
        let seq = [est(-0.01), est(-0.01), est(0.001), est(-0.01)];
        assert_eq!(classify_readiness(&seq, &p).unwrap().state, Readiness::Negative);
        assert_eq!(classify_readiness(&[est(0.002)], &p).unwrap().state, Readiness::None);
        assert!(classify_readiness::<f64>(&[], &p).is_none());
        let weak = SlopeEstimate { window_end: 0, slope: Some(0.05), valid_fraction: 0.79 };
        assert_eq!(classify_readiness(&[weak], &p).unwrap().state, Readiness::None);
    }

    #[test]
    fn warming_ramp_stream_ends_very_positive() {
        let p = ThermalParams::default();
        let events = run_thermal_stream(&ramp(34.0, 34.6, 30), &p);
        assert_eq!(events.len(), 30);
        assert!(events.iter().take_while(|e| e.window_end < 10_000).all(|e| e.state == Readiness::None));
        assert_eq!(events[9].state, Readiness::Positive);
        assert_eq!(events[10].state, Readiness::Positive);
        assert_eq!(events[11].state, Readiness::VeryPositive);
        assert_eq!(events.last().unwrap().state, Readiness::VeryPositive);
    }

    #[test]
    fn half_invalid_stream_is_all_none() {
        let p = ThermalParams::default();
        let s: Vec<_> = ramp(34.0, 35.0, 30)
            .into_iter()
            .enumerate()
            .map(|(i, s)| if i % 2 == 0 { s } else { ThermalSample::lost(s.t) })
            .collect();
        assert!(run_thermal_stream(&s, &p).iter().all(|e| e.state == Readiness::None));
    }

    #[test]
    fn out_of_range_temperatures_are_ignored() {
        let p = ThermalParams::default();
        let s: Vec<_> = (0..500).map(|k| ThermalSample::at(k * 20, 45.0)).collect();
        assert!(estimate_slope(&s, &p).is_err());
    }

    #[test]
    fn single_precision_stream() {
        let p = ThermalParams::<f32>::default();
        let s: Vec<_> = (0..1500u64).map(|k| ThermalSample::at(k * 20, 34.0f32 + 0.02 * k as f32 * 0.02)).collect();
        assert_eq!(run_thermal_stream(&s, &p).last().unwrap().state, Readiness::VeryPositive);
    }
}
