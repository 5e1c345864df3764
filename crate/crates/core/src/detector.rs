//! Pluggable violation detectors over simulated scene frames.
//!
//! Two implementations are provided: a scripted detector that replays a
//! scenario's ground-truth labels with configurable confidence noise, and a
//! toy linear detector whose weight vector can run in float or int8-quantized
//! form. Real image tensors are out of scope; a frame carries a fixed-size
//! feature vector and the pipeline only ever consumes
//! (class, bounding box, confidence) triples.

use crate::quantkit::{self, QuantError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Confidence below which the toy detector emits nothing. Far under the
/// 0.80 decision threshold, so it only trims noise from detection lists.
pub const TOY_EMISSION_FLOOR: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("weight vector has {weights} entries but frames carry {features} features")]
    DimensionMismatch { weights: usize, features: usize },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Day,
    Night,
}

/// Object classes the pipeline recognizes. Wire encodings (envelope class
/// byte) use the discriminant values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionClass {
    Driver = 0,
    Passenger = 1,
    Violation = 2,
}

impl DetectionClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DetectionClass::Driver),
            1 => Some(DetectionClass::Passenger),
            2 => Some(DetectionClass::Violation),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectionClass::Driver => "Driver",
            DetectionClass::Passenger => "Passenger",
            DetectionClass::Violation => "Violation",
        }
    }
}

impl std::fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalized bounding box; `x + w <= 1` and `y + h <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Option<Self> {
        let unit = 0.0..=1.0;
        let ok = unit.contains(&x)
            && unit.contains(&y)
            && unit.contains(&w)
            && unit.contains(&h)
            && x + w <= 1.0
            && y + h <= 1.0;
        ok.then_some(BBox { x, y, w, h })
    }

    pub fn full_frame() -> Self {
        BBox {
            x: 0.0,
            y: 0.0,
            w: 1.0,
            h: 1.0,
        }
    }
}

/// Ground-truth label attached to a simulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthLabel {
    pub class: DetectionClass,
    pub bbox: BBox,
}

/// One time-stamped simulated camera sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub frame_id: u64,
    /// Milliseconds since session start; non-decreasing within a session.
    pub t_ms: u64,
    pub lighting: Lighting,
    pub features: Vec<f64>,
    /// Simulation-only ground truth; absent on "live" frames.
    pub truth: Option<Vec<TruthLabel>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: DetectionClass,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Latency and noise model for a simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    /// Mean simulated inference latency in milliseconds.
    pub inference_ms: f64,
    /// Standard deviation of the gaussian confidence jitter.
    pub noise_sigma: f64,
    /// Subtracted from confidence when lighting is night.
    pub night_penalty: f64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        DetectorProfile {
            inference_ms: 28.0,
            noise_sigma: 0.0,
            night_penalty: 0.0,
        }
    }
}

pub trait Detector {
    /// Run detection on one frame. Deterministic for identical
    /// (detector, frame, seed) triples; every confidence is in [0, 1].
    /// Returns the detections plus the simulated inference latency in ms.
    fn detect(
        &self,
        frame: &SceneFrame,
        rng_seed: u64,
    ) -> Result<(Vec<Detection>, f64), DetectorError>;
}

/// Replays the frame's ground-truth labels as detections, degrading
/// confidence at night and jittering it with seeded gaussian noise.
#[derive(Debug, Clone)]
pub struct ScriptedDetector {
    pub base_confidence: f64,
    pub profile: DetectorProfile,
}

impl ScriptedDetector {
    pub fn new(base_confidence: f64, profile: DetectorProfile) -> Self {
        ScriptedDetector {
            base_confidence,
            profile,
        }
    }
}

impl Detector for ScriptedDetector {
    fn detect(
        &self,
        frame: &SceneFrame,
        rng_seed: u64,
    ) -> Result<(Vec<Detection>, f64), DetectorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let penalty = match frame.lighting {
            Lighting::Day => 0.0,
            Lighting::Night => self.profile.night_penalty,
        };
        let detections = frame
            .truth
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|label| {
                let noise = if self.profile.noise_sigma > 0.0 {
                    let normal = Normal::new(0.0, self.profile.noise_sigma)
                        .expect("noise_sigma is finite and non-negative");
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                Detection {
                    class: label.class,
                    bbox: label.bbox,
                    confidence: (self.base_confidence - penalty + noise).clamp(0.0, 1.0),
                }
            })
            .collect();
        // The profile carries a mean with no spread parameter, so the latency
        // draw is the mean itself.
        Ok((detections, self.profile.inference_ms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Float,
    Quantized,
}

/// Linear scorer: emits a Violation detection with confidence
/// `sigmoid(w . features + b)` whenever that exceeds the emission floor.
/// In quantized mode the weights are frozen through an int8 quantize /
/// dequantize round trip at construction; the detector is read-only after.
#[derive(Debug, Clone)]
pub struct ToyDetector {
    weights: Vec<f64>,
    bias: f64,
    mode: WeightMode,
    profile: DetectorProfile,
    /// Quantum size of the weight grid in quantized mode; drives the
    /// confidence-gap bound vs the float detector.
    weight_scale: Option<f64>,
}

impl ToyDetector {
    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    /// Effective weights after any quantization round trip.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_scale(&self) -> Option<f64> {
        self.weight_scale
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Build a toy linear detector over `weights.len()`-dimensional frames.
pub fn build_toy_detector(
    weights: &[f64],
    bias: f64,
    mode: WeightMode,
) -> Result<ToyDetector, DetectorError> {
    let (weights, weight_scale) = match mode {
        WeightMode::Float => (weights.to_vec(), None),
        WeightMode::Quantized => {
            let qt = quantkit::quantize_affine(weights, 8)?;
            let scale = qt.scale();
            (quantkit::dequantize(&qt), Some(scale))
        }
    };
    Ok(ToyDetector {
        weights,
        bias,
        mode,
        profile: DetectorProfile::default(),
        weight_scale,
    })
}

impl Detector for ToyDetector {
    fn detect(
        &self,
        frame: &SceneFrame,
        _rng_seed: u64,
    ) -> Result<(Vec<Detection>, f64), DetectorError> {
        if self.weights.len() != frame.features.len() {
            return Err(DetectorError::DimensionMismatch {
                weights: self.weights.len(),
                features: frame.features.len(),
            });
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(&frame.features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias;
        let confidence = sigmoid(z);
        let detections = if confidence >= TOY_EMISSION_FLOOR {
            vec![Detection {
                class: DetectionClass::Violation,
                bbox: BBox::full_frame(),
                confidence,
            }]
        } else {
            Vec::new()
        };
        Ok((detections, self.profile.inference_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_with_truth(lighting: Lighting, labels: Vec<TruthLabel>) -> SceneFrame {
        SceneFrame {
            frame_id: 1,
            t_ms: 0,
            lighting,
            features: vec![0.0; 16],
            truth: Some(labels),
        }
    }

    fn violation_label() -> TruthLabel {
        TruthLabel {
            class: DetectionClass::Violation,
            bbox: BBox::new(0.2, 0.2, 0.5, 0.5).unwrap(),
        }
    }

    #[test]
    fn scripted_passes_base_confidence_through_at_zero_noise() {
        let det = ScriptedDetector::new(0.9, DetectorProfile::default());
        let frame = frame_with_truth(Lighting::Day, vec![violation_label()]);
        let (detections, inference_ms) = det.detect(&frame, 42).unwrap();
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].class, DetectionClass::Violation);
        assert_eq!(detections[0].confidence, 0.9);
        assert_eq!(inference_ms, 28.0);
    }

    #[test]
    fn scripted_applies_night_penalty() {
        let profile = DetectorProfile {
            night_penalty: 0.2,
            ..DetectorProfile::default()
        };
        let det = ScriptedDetector::new(0.9, profile);
        let frame = frame_with_truth(Lighting::Night, vec![violation_label()]);
        let (detections, _) = det.detect(&frame, 42).unwrap();
        assert!((detections[0].confidence - 0.7).abs() < 1e-12);
    }

    #[test]
    fn scripted_emits_one_detection_per_label() {
        let det = ScriptedDetector::new(0.9, DetectorProfile::default());
        let labels = vec![
            TruthLabel {
                class: DetectionClass::Driver,
                bbox: BBox::new(0.0, 0.0, 0.4, 0.9).unwrap(),
            },
            violation_label(),
            violation_label(),
        ];
        let frame = frame_with_truth(Lighting::Day, labels);
        let (detections, _) = det.detect(&frame, 0).unwrap();
        assert_eq!(detections.len(), 3);
    }

    #[test]
    fn scripted_is_deterministic_given_seed() {
        let profile = DetectorProfile {
            noise_sigma: 0.05,
            ..DetectorProfile::default()
        };
        let det = ScriptedDetector::new(0.85, profile);
        let frame = frame_with_truth(Lighting::Day, vec![violation_label(); 3]);
        let a = det.detect(&frame, 1234).unwrap();
        let b = det.detect(&frame, 1234).unwrap();
        assert_eq!(a, b);
        let c = det.detect(&frame, 1235).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn toy_with_zero_weights_scores_half() {
        let det = build_toy_detector(&[0.0; 16], 0.0, WeightMode::Float).unwrap();
        let frame = frame_with_truth(Lighting::Day, vec![]);
        let (detections, _) = det.detect(&frame, 0).unwrap();
        assert_eq!(detections.len(), 1);
        assert_eq!(detections[0].confidence, 0.5);
        assert_eq!(detections[0].bbox, BBox::full_frame());
    }

    #[test]
    fn toy_zero_weights_identical_under_quantization() {
        let float = build_toy_detector(&[0.0; 16], 0.3, WeightMode::Float).unwrap();
        let quant = build_toy_detector(&[0.0; 16], 0.3, WeightMode::Quantized).unwrap();
        let frame = SceneFrame {
            frame_id: 9,
            t_ms: 100,
            lighting: Lighting::Day,
            features: vec![1.5; 16],
            truth: None,
        };
        assert_eq!(
            float.detect(&frame, 0).unwrap(),
            quant.detect(&frame, 0).unwrap()
        );
    }

    #[test]
    fn toy_rejects_dimension_mismatch() {
        let det = build_toy_detector(&[0.1; 8], 0.0, WeightMode::Float).unwrap();
        let frame = frame_with_truth(Lighting::Day, vec![]);
        assert_eq!(
            det.detect(&frame, 0),
            Err(DetectorError::DimensionMismatch {
                weights: 8,
                features: 16
            })
        );
    }

    #[test]
    fn toy_suppresses_below_emission_floor() {
        // strongly negative logit: sigmoid(-10) ~ 4.5e-5 < 0.05
        let det = build_toy_detector(&[0.0; 4], -10.0, WeightMode::Float).unwrap();
        let frame = SceneFrame {
            frame_id: 0,
            t_ms: 0,
            lighting: Lighting::Day,
            features: vec![0.0; 4],
            truth: None,
        };
        let (detections, _) = det.detect(&frame, 0).unwrap();
        assert!(detections.is_empty());
    }

    #[test]
    fn quantized_agrees_with_float_oracle_on_threshold_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let dim = 16;
        let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let float = build_toy_detector(&weights, 0.1, WeightMode::Float).unwrap();
        let quant = build_toy_detector(&weights, 0.1, WeightMode::Quantized).unwrap();

        let mut agree = 0usize;
        let total = 1000usize;
        for i in 0..total {
            let frame = SceneFrame {
                frame_id: i as u64,
                t_ms: i as u64 * 100,
                lighting: Lighting::Day,
                features: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                truth: None,
            };
            let conf = |det: &ToyDetector| {
                let (d, _) = det.detect(&frame, 0).unwrap();
                d.first().map(|d| d.confidence).unwrap_or(0.0)
            };
            let f_hit = conf(&float) > 0.80;
            let q_hit = conf(&quant) > 0.80;
            if f_hit == q_hit {
                agree += 1;
            }
        }
        assert!(
            agree as f64 / total as f64 >= 0.98,
            "agreement {agree}/{total}"
        );
    }

    #[test]
    fn quantized_confidence_gap_within_propagated_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 16;
        let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let float = build_toy_detector(&weights, 0.0, WeightMode::Float).unwrap();
        let quant = build_toy_detector(&weights, 0.0, WeightMode::Quantized).unwrap();
        let scale = quant.weight_scale().unwrap();

        for i in 0..200 {
            let features: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let frame = SceneFrame {
                frame_id: i,
                t_ms: i * 10,
                lighting: Lighting::Day,
                features: features.clone(),
                truth: None,
            };
            let conf = |det: &ToyDetector| {
                let (d, _) = det.detect(&frame, 0).unwrap();
                d.first().map(|d| d.confidence).unwrap_or(0.0)
            };
            let max_feature = features.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let bound = dim as f64 * (scale / 2.0) * max_feature + 1e-9;
            assert!(
                (conf(&float) - conf(&quant)).abs() <= bound,
                "gap exceeded propagated bound at frame {i}"
            );
        }
    }

    #[test]
    fn bbox_rejects_out_of_frame_geometry() {
        assert!(BBox::new(0.8, 0.0, 0.3, 0.1).is_none());
        assert!(BBox::new(-0.1, 0.0, 0.3, 0.1).is_none());
        assert!(BBox::new(0.0, 0.9, 0.1, 0.2).is_none());
        assert!(BBox::new(0.0, 0.0, 1.0, 1.0).is_some());
    }

    proptest! {
        #[test]
        fn prop_confidence_always_clamped(
            base in -0.5f64..1.5,
            sigma in 0.0f64..0.5,
            penalty in 0.0f64..0.5,
            seed in any::<u64>(),
            night in any::<bool>(),
        ) {
            let profile = DetectorProfile {
                inference_ms: 28.0,
                noise_sigma: sigma,
                night_penalty: penalty,
            };
            let det = ScriptedDetector::new(base.clamp(0.0, 1.0), profile);
            let lighting = if night { Lighting::Night } else { Lighting::Day };
            let frame = frame_with_truth(lighting, vec![violation_label(); 4]);
            let (detections, _) = det.detect(&frame, seed).unwrap();
            for d in detections {
                prop_assert!((0.0..=1.0).contains(&d.confidence));
            }
        }

        #[test]
        fn prop_detect_deterministic(seed in any::<u64>(), sigma in 0.0f64..0.3) {
            let profile = DetectorProfile { noise_sigma: sigma, ..DetectorProfile::default() };
            let det = ScriptedDetector::new(0.8, profile);
            let frame = frame_with_truth(Lighting::Night, vec![violation_label(); 2]);
            prop_assert_eq!(det.detect(&frame, seed).unwrap(), det.detect(&frame, seed).unwrap());
        }
    }
}
