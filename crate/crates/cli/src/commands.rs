//! The subcommands. Each returns a JSON result (embedded in the report by the
//! caller), a list of CSV traces to write, summary lines for stdout, and
//! whether the outcome counts as success.

use hetindex::bifurcation::detect_bifurcation;
use hetindex::maslov::maslov_index;
use hetindex::parity::{decomposition_check, verify_index_theorem, ParitySample};
use hetindex::suites;
use hetindex::z2index::{
    bundle_orientability, close_loop, geometric_parity, z2_index, z2_index_unbounded, DetSample,
    Domain, Z2,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, DomainConfig};
use crate::error::CliError;

/// A CSV trace: file-name suffix (empty for the main trace), header, rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub suffix: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Trace {
    fn det(suffix: &str, samples: &[DetSample]) -> Trace {
        Trace {
            suffix: suffix.to_string(),
            header: vec!["t", "det"],
            rows: samples
                .iter()
                .map(|s| vec![fmt_f64(s.t), fmt_f64(s.det)])
                .collect(),
        }
    }

    fn parity(suffix: &str, samples: &[ParitySample]) -> Trace {
        Trace {
            suffix: suffix.to_string(),
            header: vec!["lambda", "detsign", "sigma_min"],
            rows: samples
                .iter()
                .map(|s| {
                    vec![
                        fmt_f64(s.lambda),
                        s.det_sign.to_string(),
                        s.sigma_min.map(fmt_f64).unwrap_or_default(),
                    ]
                })
                .collect(),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// The outcome of a command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub traces: Vec<Trace>,
    pub summary: Vec<String>,
    /// `false` when the computation ran but its check failed (exit 1).
    pub success: bool,
}

fn to_value<T: Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::internal(format!("cannot serialize result: {e}")))
}

/// `hetindex index`: the Z2-index of a pair of paths (bounded or
/// unbounded domain), plus the orientability of the closed loop on bounded
/// intervals.
pub fn index(config: &Config) -> Result<Outcome, CliError> {
    let (pair, domain) = config.pair()?;
    let opts = config.tolerances.index();
    let report = match domain {
        DomainConfig::Interval { .. } => z2_index(&pair, &opts)?,
        DomainConfig::HalfLine { start, tail_t } => {
            z2_index_unbounded(&pair, Domain::HalfLine { start }, tail_t, &opts)?
        }
        DomainConfig::Line { tail_t } => z2_index_unbounded(&pair, Domain::Line, tail_t, &opts)?,
    };
    let mut summary = vec![format!(
        "z2 index = {} ({} sign change(s) of det M)",
        report.value,
        report.sign_changes()
    )];
    let orientability = match domain {
        DomainConfig::Interval { .. } => {
            match close_loop(&pair, &opts).and_then(|lp| bundle_orientability(&lp.v)) {
                Ok(w1) => {
                    summary.push(format!("orientability of the closed loop = {w1}"));
                    json!({ "value": w1 })
                }
                Err(e) => {
                    log::warn!("closed loop not available: {e}");
                    json!({ "error": e.to_string() })
                }
            }
        }
        _ => Value::Null,
    };
    Ok(Outcome {
        result: json!({
            "index": to_value(&report)?,
            "orientability": orientability,
        }),
        traces: vec![Trace::det("", &report.det_trace)],
        summary,
        success: true,
    })
}

/// `hetindex geometric-parity`: `iota_geo` at `lambda` (default: both ends of
/// the range).
pub fn geometric(config: &Config) -> Result<Outcome, CliError> {
    let fam = config.linear_family()?;
    let lambdas = match config.lambda {
        Some(l) => vec![l],
        None => vec![config.lambda_range[0], config.lambda_range[1]],
    };
    let opts = config.tolerances.index();
    let mut results = Vec::new();
    let mut traces = Vec::new();
    let mut summary = Vec::new();
    for (i, &l) in lambdas.iter().enumerate() {
        let r = geometric_parity(&fam, l, &opts)?;
        summary.push(format!("geometric parity at lambda = {l}: {}", r.value));
        let suffix = if lambdas.len() > 1 { format!("-{i}") } else { String::new() };
        traces.push(Trace::det(&suffix, &r.det_trace));
        results.push(json!({ "lambda": l, "report": to_value(&r)? }));
    }
    Ok(Outcome {
        result: Value::Array(results),
        traces,
        summary,
        success: true,
    })
}

/// `hetindex verify-theorem`: both sides of the index theorem, plus the
/// decomposition identity when the boundary condition holds.
pub fn verify_theorem(config: &Config) -> Result<Outcome, CliError> {
    let fam = config.linear_family()?;
    let index_opts = config.tolerances.index();
    let report = verify_index_theorem(&fam, &config.tolerances.parity(), &index_opts)?;
    let decomposition = match decomposition_check(&fam, &index_opts) {
        Ok(d) => to_value(&d)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let stable = [&report.lhs.tau_doubling, &report.lhs.n_doubling]
        .iter()
        .all(|d| d.as_ref().is_none_or(|d| d.agrees));
    let mut summary = vec![
        format!(
            "parity(A_lambda) = {}, iota(E^s(0), E^u(0)) = {}: {}",
            report.lhs.value,
            report.rhs.value,
            if report.agree { "agree" } else { "DISAGREE" }
        ),
        format!("determinant sign flips at lambda = {:?}", report.lhs.flips),
        format!("det M_lambda(0) sign changes near lambda = {:?}", report.lambda_candidates),
        format!("doubling checks stable: {stable}"),
    ];
    if let Some(holds) = decomposition.get("holds") {
        summary.push(format!("decomposition identity holds: {holds}"));
    }
    Ok(Outcome {
        result: json!({
            "theorem": to_value(&report)?,
            "stable_under_doubling": stable,
            "decomposition": decomposition,
        }),
        traces: vec![
            Trace::parity("", &report.lhs.det_sign_trace),
            Trace::det("-index", &report.rhs.det_trace),
        ],
        summary,
        success: report.agree && stable,
    })
}

/// `hetindex bifurcate`: the bifurcation verdict.
pub fn bifurcate(config: &Config) -> Result<Outcome, CliError> {
    let (nf, branch) = config.nonlinear_family()?;
    let verdict = detect_bifurcation(&nf, &branch, &config.tolerances.bifurcation())?;
    let summary = vec![
        format!(
            "verdict: {} (index {}, bifurcates = {})",
            verdict.verdict, verdict.index, verdict.bifurcates
        ),
        format!("lambda* candidates: {:?}", verdict.lambda_candidates),
    ];
    Ok(Outcome {
        result: to_value(&verdict)?,
        traces: Vec::new(),
        summary,
        success: true,
    })
}

/// `hetindex maslov`: Maslov index via crossing forms and its mod-2
/// comparison with the Z2-index.
pub fn maslov(config: &Config) -> Result<Outcome, CliError> {
    let (pair, domain) = config.pair()?;
    if !matches!(domain, DomainConfig::Interval { .. }) {
        return Err(CliError::invalid("maslov needs a bounded interval domain"));
    }
    let z2 = z2_index(&pair, &config.tolerances.index())?;
    let m = maslov_index(&pair)?;
    let agree = Z2::from_parity(m.value) == z2.value;
    Ok(Outcome {
        result: json!({
            "maslov": to_value(&m)?,
            "z2": to_value(&z2)?,
            "agree_mod_2": agree,
        }),
        traces: vec![Trace::det("", &z2.det_trace)],
        summary: vec![format!(
            "Maslov index = {} ({} crossing(s)), z2 index = {}: {}",
            m.value,
            m.crossings.len(),
            z2.value,
            if agree { "agree mod 2" } else { "DISAGREE mod 2" }
        )],
        success: agree,
    })
}

/// `hetindex selftest`: the property suites at their acceptance sizes.
pub fn selftest(seed: u64) -> Result<Outcome, CliError> {
    let results = suites::selftest(seed);
    let summary = results
        .iter()
        .map(|r| {
            format!(
                "{} {}: {}/{} passed ({} redrawn){}",
                if r.ok() { "PASS" } else { "FAIL" },
                r.name,
                r.passed,
                r.cases,
                r.resampled,
                if r.failures.is_empty() {
                    String::new()
                } else {
                    format!(" first failures: {:?}", r.failures)
                }
            )
        })
        .collect();
    Ok(Outcome {
        success: results.iter().all(|r| r.ok()),
        result: to_value(&results)?,
        traces: Vec::new(),
        summary,
    })
}
