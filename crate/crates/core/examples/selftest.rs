//! Runs the full-size property suites and prints one line per suite.
use std::time::Instant;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let start = Instant::now();
    for r in hetindex::suites::selftest(seed) {
        println!(
            "{} {}: {}/{} passed, {} resampled {:?}",
            if r.ok() { "PASS" } else { "FAIL" },
            r.name, r.passed, r.cases, r.resampled, r.failures
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
}
