mod support;

use support::{char_insert_fraction, replay, trace};

#[test]
fn incremental_matches_full_every_event() {
    for seed in 0..150 {
        let t = trace(seed);
        if let Err(e) = replay(&t, true) {
            panic!("{e}");
        }
    }
}

#[test]
fn incremental_matches_full_over_1000_seeds() {
    let traces: Vec<_> = (1000..2000).map(trace).collect();
    assert!(char_insert_fraction(&traces) >= 0.6);
    for t in &traces {
        if let Err(e) = replay(t, false) {
            panic!("{e}");
        }
    }
}

#[test]
fn traces_survive_the_file_format() {
    for seed in 0..200 {
        let t = trace(seed);
        let text = rvlive_core::write_trace(&t.events);
        assert_eq!(rvlive_core::read_trace(&text).unwrap(), t.events, "seed {seed}");
    }
}
