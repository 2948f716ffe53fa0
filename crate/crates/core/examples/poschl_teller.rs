//! Runs the index-theorem verifier on the Pöschl–Teller family at the
//! acceptance resolution and prints both sides with the timing.

use std::time::Instant;

use hetindex::expr::MatrixExpr;
use hetindex::flow::LinearFamily;
use hetindex::parity::{verify_index_theorem, ParityOptions};
use hetindex::z2index::IndexOptions;

fn main() {
    let m = MatrixExpr::from_strs(&[["0", "1"], ["1-2.5*lambda*sech(t)^2", "0"]]).unwrap();
    let fam = LinearFamily::from_expr(m, 1).unwrap();
    let start = Instant::now();
    let r = verify_index_theorem(&fam, &ParityOptions::default(), &IndexOptions::default()).unwrap();
    println!(
        "parity = {}, iota = {}, flips = {:?}, candidates = {:?}, {:.2?}",
        r.lhs.value,
        r.rhs.value,
        r.lhs.flips,
        r.lambda_candidates,
        start.elapsed()
    );
}
