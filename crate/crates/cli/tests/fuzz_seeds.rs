//! Replays the checked-in fuzz corpus through the fuzz targets' checks on
//! stable, so the seeds stay meaningful.

use std::path::{Path, PathBuf};

use hetindex::expr::{parse, Env, MatrixExpr};
use hetindex_cli::config::{Config, ProblemKind};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn expr_parse_seeds_round_trip() {
    let mut parsed = 0;
    for (p, src) in seeds("expr_parse") {
        let Ok(expr) = parse(&src) else { continue };
        parsed += 1;
        let printed = expr.to_string();
        assert_eq!(parse(&printed).unwrap(), expr, "{}: {printed}", p.display());
        let z = [0.5, -1.5, 2.0];
        let _ = expr.eval(&Env::with_state(0.3, -0.7, &z));
    }
    assert!(parsed > 0);
}

#[test]
fn matrix_expr_seeds_evaluate_to_their_shape() {
    for (p, src) in seeds("matrix_expr") {
        let rows: Vec<Vec<String>> = src
            .lines()
            .map(|l| l.split(';').map(str::to_string).collect())
            .collect();
        if let Ok(m) = MatrixExpr::parse(&rows) {
            let v = m.eval(&Env::new(0.8, 0.0)).unwrap();
            assert_eq!(v.shape(), m.shape(), "{}", p.display());
        }
    }
}

#[test]
fn config_json_seeds_resolve_and_reload() {
    for (p, text) in seeds("config_json") {
        let Ok(config) = Config::from_json(&text) else { continue };
        let _ = match config.kind {
            ProblemKind::LinearFamily => config.linear_family().map(|_| ()),
            ProblemKind::NonlinearFamily => config.nonlinear_family().map(|_| ()),
            ProblemKind::SubspacePaths | ProblemKind::LagrangianPaths => config.pair().map(|_| ()),
        };
        let resolved = config.resolved();
        let again = Config::from_json(&serde_json::to_string(&resolved).unwrap()).unwrap();
        assert_eq!(again, resolved, "{}", p.display());
    }
}
