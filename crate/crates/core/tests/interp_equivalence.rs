mod common;

use common::corpus::{compare, generated, hand_written};

#[test]
fn monitored_participant_matches_ideal_at_depth_ten() {
    let mut corpus = hand_written();
    corpus.extend(generated(12));
    assert!(corpus.len() >= 20);
    let mut failures = Vec::new();
    for e in &corpus {
        let t0 = std::time::Instant::now();
        let c = compare(e, 10);
        println!(
            "{:<16} ideal={:<4} monitored={:<4} inattentive={:<5} {:?}",
            e.name,
            c.ideal,
            c.monitored,
            c.inattentive,
            t0.elapsed()
        );
        if !c.equivalent || !c.contained {
            failures.push(e.name.clone());
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}
