//! Multiparty infant–agent dialogue manager: perception pipelines, an
//! information-state dialogue manager with a rule-based policy, simulated
//! Avatar/Robot executors and a deterministic session harness.
//!
//! The numeric perception code is generic over [`scalar::Scalar`] (`f32` or
//! `f64`); the aliases below fix it to `f64`, which the rest of the system uses.

pub mod agents;
pub mod behavior;
pub mod bus;
pub mod config;
pub mod dm;
pub mod events;
pub mod gaze;
pub mod scalar;
pub mod sim;
pub mod thermal;

pub use agents::{Agent, AgentCatalog, AgentCommand, AgentLifecycleSignal, PrimitiveBehavior, Target};
pub use behavior::{BabyBehaviorEvent, BehaviorCatalog, PolicyClass};
pub use bus::{BusError, Topic, TopicRegistry};
pub use gaze::Aoi;
pub use thermal::{Readiness, ReadinessClass};

pub type GazeSample = gaze::GazeSample<f64>;
pub type AoiGeometry = gaze::AoiGeometry<f64>;
pub type AoiWindowEvent = gaze::AoiWindowEvent<f64>;
pub type GazeClassifier = gaze::GazeClassifier<f64>;
pub type GazeParams = gaze::GazeParams<f64>;
pub type ThermalSample = thermal::ThermalSample<f64>;
pub type ThermalParams = thermal::ThermalParams<f64>;
pub type ReadinessEvent = thermal::ReadinessEvent<f64>;
pub type ThermalStream = thermal::ThermalStream<f64>;
pub type TimelineUnit = agents::TimelineUnit<f64>;

pub type EventBus = bus::Bus<events::Payload>;
