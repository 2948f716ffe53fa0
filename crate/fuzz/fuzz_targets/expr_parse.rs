#![no_main]

use hetindex::expr::{parse, Env};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(expr) = parse(data) else {
        return;
    };
    // Printing and re-parsing must give back the same tree.
    let printed = expr.to_string();
    let reparsed = parse(&printed).expect("printed expressions parse");
    assert_eq!(expr, reparsed, "{data:?} printed as {printed:?}");
    let z = [0.5, -1.5, 2.0];
    let _ = expr.eval(&Env::with_state(0.3, -0.7, &z));
});
