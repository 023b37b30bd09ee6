mod common;

use activity_miner::pipeline::{mine_database, PipelineConfig};
use common::{syms, worked_example_database};

#[test]
fn named_patterns_survive_the_filter() {
    let mut cfg = PipelineConfig::default();
    cfg.set("minsup", "2").unwrap();
    cfg.set("minpro", "0.3").unwrap();
    let (art, counts) = mine_database(&worked_example_database(), &cfg).unwrap();
    let kept: Vec<_> = art.patterns.iter().map(|p| p.pattern.seq.clone()).collect();
    assert!(kept.contains(&syms("E+ F+ F- E-")));
    assert!(kept.contains(&syms("A+ A- B+ C+ C- B-")));
    assert!(counts.kept < counts.found);
    // Spread-out combinations fall below the proximity threshold.
    assert!(!kept.contains(&syms("A+ A- F+ F-")));
}
