#![no_main]

use hetindex::expr::{Env, MatrixExpr};
use libfuzzer_sys::fuzz_target;

// Rows are separated by newlines, entries by `;`.
fuzz_target!(|data: &str| {
    let rows: Vec<Vec<String>> = data
        .lines()
        .map(|l| l.split(';').map(str::to_string).collect())
        .collect();
    if let Ok(m) = MatrixExpr::parse(&rows) {
        let (r, c) = m.shape();
        if let Ok(v) = m.eval(&Env::new(0.8, 0.0)) {
            assert_eq!(v.shape(), (r, c));
        }
    }
});
