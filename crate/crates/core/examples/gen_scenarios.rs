//! Writes the demo scenario files used in the README and CLI tests.
//!
//! Usage: cargo run -p smr-core --example gen_scenarios -- <output dir>

use smr_core::detector::{BBox, DetectionClass, Lighting, TruthLabel};
use smr_core::simcore::{DetectorConfig, ScenarioBuilder};
use smr_core::transport::LinkInterval;

fn violation() -> TruthLabel {
    TruthLabel {
        class: DetectionClass::Violation,
        bbox: BBox::new(0.2, 0.15, 0.55, 0.6).expect("in-frame box"),
    }
}

fn passenger() -> TruthLabel {
    TruthLabel {
        class: DetectionClass::Passenger,
        bbox: BBox::new(0.55, 0.1, 0.4, 0.8).expect("in-frame box"),
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scenarios".to_string());
    let out = std::path::PathBuf::from(out);
    std::fs::create_dir_all(&out).expect("create output dir");

    // One daylight session with a single violation episode and a healthy link.
    let demo = ScenarioBuilder::new(0x01, "veh-001")
        .seed(7)
        .link_schedule(vec![LinkInterval {
            from_ms: 0,
            to_ms: 600_000,
            bandwidth_bytes_per_s: 1_000_000.0,
            rtt_ms: 50.0,
        }])
        .labeled_frame(0, Lighting::Day, vec![passenger()])
        .labeled_frame(500, Lighting::Day, vec![passenger()])
        .labeled_frame(1_000, Lighting::Day, vec![])
        .labeled_frame(2_000, Lighting::Day, vec![violation(), passenger()])
        .labeled_frame(2_500, Lighting::Day, vec![violation()])
        .labeled_frame(3_000, Lighting::Day, vec![])
        .labeled_frame(8_000, Lighting::Day, vec![passenger()])
        .labeled_frame(15_000, Lighting::Day, vec![])
        .labeled_frame(25_000, Lighting::Day, vec![passenger()])
        .build()
        .expect("demo scenario is valid");
    std::fs::write(out.join("demo.json"), demo.to_json()).expect("write demo.json");

    // Night session with a noisy detector and a second, suppressed episode.
    let night = ScenarioBuilder::new(0x02, "veh-002")
        .seed(21)
        .detector(DetectorConfig {
            inference_ms: 28.0,
            noise_sigma: 0.03,
            night_penalty: 0.08,
            base_confidence: 0.93,
        })
        .labeled_frame(0, Lighting::Night, vec![passenger()])
        .labeled_frame(700, Lighting::Night, vec![violation()])
        .labeled_frame(1_400, Lighting::Night, vec![violation()])
        .labeled_frame(2_100, Lighting::Night, vec![violation()])
        .labeled_frame(2_800, Lighting::Night, vec![])
        .labeled_frame(14_000, Lighting::Night, vec![])
        .labeled_frame(26_000, Lighting::Night, vec![passenger()])
        .build()
        .expect("night scenario is valid");
    std::fs::write(out.join("night.json"), night.to_json()).expect("write night.json");

    // Link dead until t=400s: the episode's envelope waits out the outage,
    // trips the 300s text fallback, and still delivers after reconnect.
    let mut builder = ScenarioBuilder::new(0x03, "veh-003")
        .seed(33)
        .link_schedule(vec![LinkInterval {
            from_ms: 400_000,
            to_ms: 1_000_000,
            bandwidth_bytes_per_s: 500_000.0,
            rtt_ms: 80.0,
        }])
        .labeled_frame(0, Lighting::Day, vec![])
        .labeled_frame(1_000, Lighting::Day, vec![violation()])
        .labeled_frame(1_500, Lighting::Day, vec![violation()])
        .labeled_frame(2_000, Lighting::Day, vec![]);
    for t in (50_000..=450_000).step_by(50_000) {
        builder = builder.labeled_frame(t, Lighting::Day, vec![]);
    }
    let outage = builder.build().expect("outage scenario is valid");
    std::fs::write(out.join("outage.json"), outage.to_json()).expect("write outage.json");

    println!("wrote demo.json, night.json, outage.json under {}", out.display());
}
