#![no_main]

use hetindex_cli::config::{Config, ProblemKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(config) = Config::from_json(data) else {
        return;
    };
    // Building the problem validates dimensions and expressions; no
    // computation is run.
    let _ = match config.kind {
        ProblemKind::LinearFamily => config.linear_family().map(|_| ()),
        ProblemKind::NonlinearFamily => config.nonlinear_family().map(|_| ()),
        ProblemKind::SubspacePaths | ProblemKind::LagrangianPaths => config.pair().map(|_| ()),
    };
    let resolved = config.resolved();
    let text = serde_json::to_string(&resolved).expect("configs serialize");
    assert_eq!(Config::from_json(&text).expect("resolved configs load"), resolved);
});
