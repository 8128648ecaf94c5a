//! Fixtures shared by the criterion benches.

use lexborrow_core::classify::{classify_corpus, ClassifierConfig, Classification};
use lexborrow_core::synth::{generate, SynthConfig, SynthOutput};

pub struct Fixture {
    pub synth: SynthOutput,
    pub classes: Classification,
    pub words: Vec<String>,
}

/// Full-size synthetic corpus, classified with default thresholds.
pub fn fixture(seed: u64) -> Fixture {
    let synth = generate(&SynthConfig { seed, ..SynthConfig::default() });
    let classes = classify_corpus(&synth.corpus, &ClassifierConfig::default());
    let words = synth.truth.iter().map(|(w, _)| w.clone()).collect();
    Fixture { synth, classes, words }
}
