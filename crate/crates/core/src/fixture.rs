//! Deterministic synthetic occurrence corpora for tests, examples and CI.
//!
//! Each class has its own cue words mixed into generic flight-narrative
//! filler. A minority of cues are drawn from other classes, so the task
//! is learnable but not trivially separable.

use crate::ingest::{DamageLabel, OccurrenceRecord};
use crate::rng::SeededRng;

/// Class counts of the bundled 200-record fixture, in label-code order.
pub const FIXTURE_COUNTS: [usize; 4] = [17, 179, 2, 2];
pub const FIXTURE_SEED: u64 = 20_240_601;
pub const FIXTURE_FILE: &str = "fixture_200.json";

/// Class counts of the full-size reference corpus.
pub const REFERENCE_COUNTS: [usize; 4] = [1409, 15163, 195, 152];

const CUES: [&[&str]; 4] = [
    &["fire", "postcrash", "destroyed", "wreckage", "consumed", "fragmented", "burned", "explosion"],
    &["spar", "buckled", "firewall", "collapsed", "nosed", "bent", "fuselage", "wrinkled", "separated"],
    &["scratched", "dent", "tire", "scuffed", "chipped", "cracked", "lens"],
    &["uneventful", "undamaged", "precautionary", "diverted", "turbulence", "returned", "inspection"],
];

const FILLER: &[&str] = &[
    "pilot", "reported", "airplane", "runway", "landing", "approach", "wind", "engine", "flight",
    "takeoff", "taxi", "student", "instructor", "tower", "airport", "fuel", "power", "control",
    "ground", "terrain", "weather", "visual", "crosswind", "gust", "flaps", "altitude", "climb",
    "descent", "left", "right", "main", "gear", "wing", "propeller", "field", "pattern",
];

const GLUE: &[&str] = &["the", "and", "was", "during", "after", "with", "that", "of", "to"];

fn pick<'a>(rng: &mut SeededRng, words: &[&'a str]) -> &'a str {
    words[rng.below(words.len())]
}

fn narrative(rng: &mut SeededRng, label: DamageLabel) -> String {
    let n_words = 8 + rng.below(25);
    let n_cues = 1 + rng.below(3);
    let mut words: Vec<&str> = Vec::with_capacity(n_words + n_cues);
    for _ in 0..n_words {
        let w = if rng.below(4) == 0 { pick(rng, GLUE) } else { pick(rng, FILLER) };
        words.push(w);
    }
    for _ in 0..n_cues {
        let class = if rng.below(10) < 8 {
            label.code()
        } else {
            rng.below(4)
        };
        let at = rng.below(words.len() + 1);
        words.insert(at, pick(rng, CUES[class]));
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        text.replace_range(..1, &first.to_ascii_uppercase());
    }
    text.push('.');
    text
}

/// `counts[c]` records of class `c`, shuffled with `seed`. All records are
/// completed investigations.
pub fn synthetic_corpus(counts: [usize; 4], seed: u64) -> Vec<OccurrenceRecord> {
    let mut rng = SeededRng::new(seed);
    let mut labels: Vec<DamageLabel> = DamageLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect();
    rng.shuffle(&mut labels);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| OccurrenceRecord {
            report_id: format!("SYN{seed}-{i:05}"),
            narrative: narrative(&mut rng, label),
            damage_level: label,
            investigation_complete: true,
        })
        .collect()
}

/// The JSON array accepted by the ingest loader.
pub fn corpus_to_json(records: &[OccurrenceRecord]) -> String {
    let entries: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "report_id": r.report_id,
                "narrative": r.narrative,
                "damage_level": r.damage_level.name(),
                "investigation_complete": r.investigation_complete,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("json values serialize");
    s.push('\n');
    s
}

pub fn fixture_corpus() -> Vec<OccurrenceRecord> {
    synthetic_corpus(FIXTURE_COUNTS, FIXTURE_SEED)
}
