//! Gaze perception: AOI geometry, calibration, half-second majority-vote
//! windows and a dispersion-based fixation test.
//!
//! Coordinates are normalized scene coordinates in `[0, 1]²` as seen from the
//! infant's point of view. `Outside` is the complement of the three regions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("calibration landmarks are collinear or coincident")]
    DegenerateCalibration,
    #[error("calibration needs at least {needed} valid landmark/sample pairs, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("gaze sample at t={0} ms is not valid")]
    InvalidSample(u64),
    #[error("window must contain exactly {expected} samples, got {got}")]
    WrongWindowSize { expected: usize, got: usize },
    #[error("invalid AOI geometry: {0}")]
    InvalidGeometry(String),
}

/// Area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aoi {
    Robot,
    Avatar,
    InBetween,
    Outside,
}

impl Aoi {
    pub const ALL: [Aoi; 4] = [Aoi::Robot, Aoi::Avatar, Aoi::InBetween, Aoi::Outside];

    /// Tie-break priority used when counts or region boundaries coincide.
    pub const DEFAULT_PRIORITY: [Aoi; 4] = [Aoi::Avatar, Aoi::Robot, Aoi::InBetween, Aoi::Outside];

    /// One of the two agents.
    pub fn is_agent(self) -> bool {
        matches!(self, Aoi::Robot | Aoi::Avatar)
    }
}

impl fmt::Display for Aoi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn center(&self) -> Point<T> {
        let two = T::lit(2.0);
        Point::new((self.x0 + self.x1) / two, (self.y0 + self.y1) / two)
    }

    /// Overlap of interiors, ignoring shared edges up to rounding.
    fn interiors_overlap(&self, other: &Rect<T>) -> bool {
        let tol = T::epsilon().sqrt();
        self.x0 + tol < other.x1 && other.x0 + tol < self.x1 && self.y0 + tol < other.y1 && other.y0 + tol < self.y1
    }

    fn in_unit_square(&self) -> bool {
        let (zero, one) = (T::zero(), T::one());
        [self.x0, self.y0, self.x1, self.y1].iter().all(|&v| v >= zero && v <= one)
    }
}

/// Region layout for Robot, Avatar and InBetween plus the tie-break order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiGeometry<T> {
    pub robot: Rect<T>,
    pub avatar: Rect<T>,
    pub in_between: Rect<T>,
    #[serde(default = "default_priority")]
    pub priority: [Aoi; 4],
}

fn default_priority() -> [Aoi; 4] {
    Aoi::DEFAULT_PRIORITY
}

impl<T: Scalar> AoiGeometry<T> {
    pub fn new(robot: Rect<T>, avatar: Rect<T>, in_between: Rect<T>) -> Result<Self, GazeError> {
        let g = Self { robot, avatar, in_between, priority: Aoi::DEFAULT_PRIORITY };
        g.validate()?;
        Ok(g)
    }

    /// Robot on the infant's left, Avatar on the right, the gap between them
    /// sharing an edge with each.
    pub fn default_layout() -> Self {
        let r = |a: f64, b: f64, c: f64, d: f64| Rect::new(T::lit(a), T::lit(b), T::lit(c), T::lit(d));
        Self {
            robot: r(0.05, 0.25, 0.35, 0.75),
            avatar: r(0.55, 0.15, 0.95, 0.85),
            in_between: r(0.35, 0.25, 0.55, 0.75),
            priority: Aoi::DEFAULT_PRIORITY,
        }
    }

    pub fn validate(&self) -> Result<(), GazeError> {
        let regions = [(Aoi::Robot, &self.robot), (Aoi::Avatar, &self.avatar), (Aoi::InBetween, &self.in_between)];
        for (label, r) in regions {
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return Err(GazeError::InvalidGeometry(format!("{label} rectangle is empty")));
            }
            if !r.in_unit_square() {
                return Err(GazeError::InvalidGeometry(format!("{label} rectangle leaves [0,1]²")));
            }
        }
        for i in 0..regions.len() {
            for j in i + 1..regions.len() {
                if regions[i].1.interiors_overlap(regions[j].1) {
                    return Err(GazeError::InvalidGeometry(format!(
                        "{} and {} overlap",
                        regions[i].0, regions[j].0
                    )));
                }
            }
        }
        let mut seen = self.priority.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != 4 {
            return Err(GazeError::InvalidGeometry("priority must list each AOI once".into()));
        }
        Ok(())
    }

    pub fn region(&self, label: Aoi) -> Option<&Rect<T>> {
        match label {
            Aoi::Robot => Some(&self.robot),
            Aoi::Avatar => Some(&self.avatar),
            Aoi::InBetween => Some(&self.in_between),
            Aoi::Outside => None,
        }
    }

    /// Region containing the point, checked in priority order.
    pub fn label_of(&self, x: T, y: T) -> Aoi {
        self.priority
            .iter()
            .copied()
            .find(|&a| self.region(a).is_some_and(|r| r.contains(x, y)))
            .unwrap_or(Aoi::Outside)
    }

    /// A representative point for the label: region centre, or a point in the
    /// bottom margin for `Outside`.
    pub fn anchor(&self, label: Aoi) -> Point<T> {
        match self.region(label) {
            Some(r) => r.center(),
            None => {
                let candidates = [(0.5, 0.05), (0.5, 0.95), (0.02, 0.02), (0.98, 0.98)];
                candidates
                    .iter()
                    .map(|&(x, y)| Point::new(T::lit(x), T::lit(y)))
                    .find(|p| self.label_of(p.x, p.y) == Aoi::Outside)
                    .unwrap_or(Point::new(T::lit(0.5), T::lit(0.05)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample<T> {
    pub t: u64,
    pub x: T,
    pub y: T,
    pub valid: bool,
}

impl<T: Scalar> GazeSample<T> {
    pub fn at(t: u64, x: T, y: T) -> Self {
        Self { t, x, y, valid: true }
    }

    pub fn lost(t: u64) -> Self {
        Self { t, x: T::zero(), y: T::zero(), valid: false }
    }
}

/// Least-squares affine map `p ↦ A·p + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine<T> {
    pub a: [[T; 2]; 2],
    pub b: [T; 2],
}

impl<T: Scalar> Affine<T> {
    pub fn identity() -> Self {
        Self { a: [[T::one(), T::zero()], [T::zero(), T::one()]], b: [T::zero(), T::zero()] }
    }

    pub fn apply(&self, p: Point<T>) -> Point<T> {
        Point::new(
            self.a[0][0] * p.x + self.a[0][1] * p.y + self.b[0],
            self.a[1][0] * p.x + self.a[1][1] * p.y + self.b[1],
        )
    }

    fn map_rect(&self, r: &Rect<T>) -> Rect<T> {
        let corners = [
            self.apply(Point::new(r.x0, r.y0)),
            self.apply(Point::new(r.x1, r.y0)),
            self.apply(Point::new(r.x0, r.y1)),
            self.apply(Point::new(r.x1, r.y1)),
        ];
        let clamp = |v: T| v.max(T::zero()).min(T::one());
        let fold = |f: fn(T, T) -> T, init: T, sel: fn(&Point<T>) -> T| corners.iter().map(sel).fold(init, f);
        Rect::new(
            clamp(fold(T::min, T::infinity(), |p| p.x)),
            clamp(fold(T::min, T::infinity(), |p| p.y)),
            clamp(fold(T::max, T::neg_infinity(), |p| p.x)),
            clamp(fold(T::max, T::neg_infinity(), |p| p.y)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint<T> {
    /// True position of the on-screen landmark.
    pub landmark: Point<T>,
    /// Gaze sample recorded while the infant looked at the landmark.
    pub measured: GazeSample<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T> {
    pub geometry: AoiGeometry<T>,
    /// Fit from measured gaze positions to true landmark positions.
    pub transform: Affine<T>,
    pub residual_rms: T,
}

pub const MIN_CALIBRATION_POINTS: usize = 4;

/// Fits an affine map from measured gaze to true landmark positions and maps
/// the configured layout through it.
pub fn calibrate<T: Scalar>(
    layout: &AoiGeometry<T>,
    points: &[CalibrationPoint<T>],
) -> Result<Calibration<T>, GazeError> {
    let pts: Vec<_> = points.iter().filter(|p| p.measured.valid).collect();
    if pts.len() < MIN_CALIBRATION_POINTS {
        return Err(GazeError::InsufficientPoints { needed: MIN_CALIBRATION_POINTS, got: pts.len() });
    }
    let n = T::from_usize(pts.len()).expect("point count");
    let mean = |f: &dyn Fn(&CalibrationPoint<T>) -> T| pts.iter().map(|p| f(p)).sum::<T>() / n;
    let (mx, my) = (mean(&|p| p.measured.x), mean(&|p| p.measured.y));
    let (tx, ty) = (mean(&|p| p.landmark.x), mean(&|p| p.landmark.y));

    // Centered scatter of measurements and cross-covariance with landmarks.
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    let mut cross = [[T::zero(); 2]; 2];
    for p in &pts {
        let (dx, dy) = (p.measured.x - mx, p.measured.y - my);
        let (ex, ey) = (p.landmark.x - tx, p.landmark.y - ty);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
        cross[0][0] = cross[0][0] + ex * dx;
        cross[0][1] = cross[0][1] + ex * dy;
        cross[1][0] = cross[1][0] + ey * dx;
        cross[1][1] = cross[1][1] + ey * dy;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy) * (sxx + syy);
    if scale <= T::zero() || det <= T::epsilon().sqrt() * scale {
        return Err(GazeError::DegenerateCalibration);
    }
    let inv = [[syy / det, -sxy / det], [-sxy / det, sxx / det]];
    let mut a = [[T::zero(); 2]; 2];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = cross[r][0] * inv[0][c] + cross[r][1] * inv[1][c];
        }
    }
    let b = [tx - (a[0][0] * mx + a[0][1] * my), ty - (a[1][0] * mx + a[1][1] * my)];
    let transform = Affine { a, b };

    let sq: T = pts
        .iter()
        .map(|p| {
            let q = transform.apply(Point::new(p.measured.x, p.measured.y));
            (q.x - p.landmark.x).powi(2) + (q.y - p.landmark.y).powi(2)
        })
        .sum();
    let residual_rms = (sq / n).sqrt();

    let geometry = AoiGeometry {
        robot: transform.map_rect(&layout.robot),
        avatar: transform.map_rect(&layout.avatar),
        in_between: transform.map_rect(&layout.in_between),
        priority: layout.priority,
    };
    geometry.validate()?;
    Ok(Calibration { geometry, transform, residual_rms })
}

/// Label of the region containing a valid sample.
pub fn classify_point<T: Scalar>(geometry: &AoiGeometry<T>, sample: &GazeSample<T>) -> Result<Aoi, GazeError> {
    if !sample.valid {
        return Err(GazeError::InvalidSample(sample.t));
    }
    Ok(geometry.label_of(sample.x, sample.y))
}

/// Tunables for windowing and fixation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeParams<T> {
    pub sample_rate_hz: T,
    pub window_ms: u64,
    pub window_samples: usize,
    /// Below this valid fraction a window reports `Outside`, not fixated.
    pub min_valid_fraction: T,
    pub fixation_containment: T,
    pub fixation_max_dispersion: T,
}

impl<T: Scalar> Default for GazeParams<T> {
    fn default() -> Self {
        Self {
            sample_rate_hz: T::lit(120.0),
            window_ms: 500,
            window_samples: 60,
            min_valid_fraction: T::lit(0.5),
            fixation_containment: T::lit(0.75),
            fixation_max_dispersion: T::lit(0.05),
        }
    }
}

/// Per-label counts over the valid samples of a window, plus the invalid count.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AoiCounts {
    pub labels: BTreeMap<Aoi, u32>,
    pub invalid: u32,
}

impl AoiCounts {
    pub fn get(&self, label: Aoi) -> u32 {
        self.labels.get(&label).copied().unwrap_or(0)
    }

    pub fn valid(&self) -> u32 {
        self.labels.values().sum()
    }

    pub fn total(&self) -> u32 {
        self.valid() + self.invalid
    }

    /// Argmax over labels; ties resolved by `priority`. `Outside` when empty.
    pub fn majority(&self, priority: &[Aoi; 4]) -> Aoi {
        let mut best = (Aoi::Outside, 0u32);
        for &label in priority {
            let c = self.get(label);
            if c > best.1 {
                best = (label, c);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiWindowEvent<T> {
    pub window_start: u64,
    pub window_end: u64,
    pub label: Aoi,
    pub fixated: bool,
    pub counts: AoiCounts,
    pub valid_fraction: T,
}

/// Geometry plus windowing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeClassifier<T> {
    pub geometry: AoiGeometry<T>,
    pub params: GazeParams<T>,
}

impl<T: Scalar> GazeClassifier<T> {
    pub fn new(geometry: AoiGeometry<T>, params: GazeParams<T>) -> Self {
        Self { geometry, params }
    }

    fn count(&self, samples: &[GazeSample<T>]) -> AoiCounts {
        let mut counts = AoiCounts::default();
        for label in Aoi::ALL {
            counts.labels.insert(label, 0);
        }
        for s in samples {
            if s.valid {
                *counts.labels.entry(self.geometry.label_of(s.x, s.y)).or_insert(0) += 1;
            } else {
                counts.invalid += 1;
            }
        }
        counts
    }

    /// Majority-vote AOI over one window of exactly `window_samples` samples.
    pub fn classify_window(&self, samples: &[GazeSample<T>]) -> Result<AoiWindowEvent<T>, GazeError> {
        if samples.len() != self.params.window_samples {
            return Err(GazeError::WrongWindowSize { expected: self.params.window_samples, got: samples.len() });
        }
        let counts = self.count(samples);
        let valid_fraction =
            T::from_u32(counts.valid()).expect("count") / T::from_usize(samples.len()).expect("len");
        let window_start = samples[0].t;
        let (label, fixated) = if valid_fraction < self.params.min_valid_fraction {
            (Aoi::Outside, false)
        } else {
            (counts.majority(&self.geometry.priority), self.detect_fixation(samples))
        };
        Ok(AoiWindowEvent {
            window_start,
            window_end: window_start + self.params.window_ms,
            label,
            fixated,
            counts,
            valid_fraction,
        })
    }

    /// True iff enough valid samples fall in the majority region and those
    /// samples are tightly clustered.
    pub fn detect_fixation(&self, samples: &[GazeSample<T>]) -> bool {
        let counts = self.count(samples);
        let valid = counts.valid();
        if valid == 0 {
            return false;
        }
        let majority = counts.majority(&self.geometry.priority);
        let inside: Vec<_> = samples
            .iter()
            .filter(|s| s.valid && self.geometry.label_of(s.x, s.y) == majority)
            .collect();
        let containment = T::from_usize(inside.len()).expect("len") / T::from_u32(valid).expect("count");
        if containment < self.params.fixation_containment {
            return false;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (T::infinity(), T::neg_infinity(), T::infinity(), T::neg_infinity());
        for s in &inside {
            x0 = x0.min(s.x);
            x1 = x1.max(s.x);
            y0 = y0.min(s.y);
            y1 = y1.max(s.y);
        }
        (x1 - x0) + (y1 - y0) <= self.params.fixation_max_dispersion
    }
}

/// Streaming windower: groups consecutive samples into fixed-size windows that
/// tile the timeline without gaps, starting at the first sample's timestamp.
#[derive(Debug, Clone)]
pub struct GazeWindower<T> {
    classifier: GazeClassifier<T>,
    buffer: Vec<GazeSample<T>>,
    origin: Option<u64>,
    emitted: u64,
}

impl<T: Scalar> GazeWindower<T> {
    pub fn new(classifier: GazeClassifier<T>) -> Self {
        let cap = classifier.params.window_samples;
        Self { classifier, buffer: Vec::with_capacity(cap), origin: None, emitted: 0 }
    }

    pub fn push(&mut self, sample: GazeSample<T>) -> Option<AoiWindowEvent<T>> {
        let origin = *self.origin.get_or_insert(sample.t);
        self.buffer.push(sample);
        if self.buffer.len() < self.classifier.params.window_samples {
            return None;
        }
        let mut event = self.classifier.classify_window(&self.buffer).expect("full window");
        event.window_start = origin + self.emitted * self.classifier.params.window_ms;
        event.window_end = event.window_start + self.classifier.params.window_ms;
        self.emitted += 1;
        self.buffer.clear();
        Some(event)
    }
}

/// Classifies a whole sample stream into consecutive window events.
pub fn run_gaze_stream<T: Scalar>(
    classifier: &GazeClassifier<T>,
    samples: impl IntoIterator<Item = GazeSample<T>>,
) -> Vec<AoiWindowEvent<T>> {
    let mut w = GazeWindower::new(classifier.clone());
    samples.into_iter().filter_map(|s| w.push(s)).collect()
}

/// Timestamp in ms of the `k`-th sample of a stream at `rate_hz`.
pub fn sample_time(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * 1000.0 / rate_hz).floor() as u64
}
