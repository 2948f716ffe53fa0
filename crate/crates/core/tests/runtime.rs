//! Criterion 1's runtime bound, in its own test binary so that no other test
//! competes for the cores while it is timed.

use std::time::Instant;

use hetindex::expr::MatrixExpr;
use hetindex::flow::LinearFamily;
use hetindex::parity::{verify_index_theorem, ParityOptions};
use hetindex::z2index::{IndexOptions, Z2};

#[test]
fn poschl_teller_verification_runs_under_a_minute() {
    let fam = LinearFamily::from_expr(
        MatrixExpr::from_strs(&[["0", "1"], ["1 - 2.5*lambda*sech(t)^2", "0"]]).unwrap(),
        1,
    )
    .unwrap();
    let opts = ParityOptions::default();
    assert_eq!((opts.tau, opts.n_intervals, opts.grid_points), (15.0, 3000, 201));
    let start = Instant::now();
    let r = verify_index_theorem(&fam, &opts, &IndexOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = secs < 60.0 && r.lhs.value == Z2::One && r.rhs.value == Z2::One;
    println!(
        "{} criterion 1 (runtime): {secs:.2} s at tau = 15, N = 3000, 201 lambda points",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "took {secs:.2} s");
}
