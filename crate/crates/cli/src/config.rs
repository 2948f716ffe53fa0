//! JSON configuration: problem definition (as expression matrices) plus
//! tolerances. Loading resolves every default so that reports can embed the
//! exact settings that produced them.

use std::path::Path;

use hetindex::bifurcation::{BifurcationOptions, Branch, NonlinearFamily};
use hetindex::expr::{parse, Env, MatrixExpr, Scope};
use hetindex::flow::{IntegratorOptions, LinearFamily, DEFAULT_T_MAX};
use hetindex::linalg::{spectral_split, DEFAULT_EPS_TRANS, DEFAULT_HYPERBOLICITY};
use hetindex::maslov::graph_pair;
use hetindex::parity::ParityOptions;
use hetindex::z2index::{IndexOptions, SubspacePathPair, MAX_DEPTH};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// What the configuration describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `u' = S(lambda, t) u` on `R^n`.
    LinearFamily,
    /// `z' = g(lambda, t, z)` with a branch of heteroclinic orbits.
    NonlinearFamily,
    /// A pair `(V(t), W(t))` of subspace paths spanned by matrix columns.
    SubspacePaths,
    /// A pair of Lagrangian paths `(graph A(t), graph B(t))` in `R^{2k}`.
    LagrangianPaths,
}

/// Parameter domain of a subspace-path pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DomainConfig {
    Interval {
        a: f64,
        b: f64,
    },
    /// `[start, +inf)`, truncated at `tail_t` (checked up to `2 tail_t`).
    HalfLine {
        start: f64,
        tail_t: f64,
    },
    /// `(-inf, +inf)`, truncated at `±tail_t`.
    Line {
        tail_t: f64,
    },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Interval { a: 0.0, b: 1.0 }
    }
}

/// Numerical settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative `sigma_min` threshold below which a pair matrix counts as
    /// non-transversal.
    pub eps_trans: f64,
    /// Residual tolerance of the heteroclinic branch.
    pub branch_tol: f64,
    /// Integrator relative tolerance.
    pub rtol: f64,
    /// Integrator absolute tolerance.
    pub atol: f64,
    /// Initial truncation horizon (grown automatically when unresolved).
    pub t_max: f64,
    /// BVP truncation `tau` of the operator parity.
    pub tau: f64,
    /// Number of BVP mesh intervals.
    pub n_intervals: usize,
    /// Number of lambda points of the determinant-sign sweep.
    pub lambda_points: usize,
    /// Localization tolerance of determinant sign flips in lambda.
    pub lambda_tol: f64,
    /// Re-run the sweep at `(2 tau, 2N)` and `(tau, 2N)`.
    pub check_doubling: bool,
    /// Hyperbolicity threshold `delta` of the asymptotic limits.
    pub hyperbolicity: f64,
    /// Bisection depth cap of the subspace sampler.
    pub max_depth: usize,
    /// Initial uniform samples of the subspace sampler.
    pub initial_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let integ = IntegratorOptions::default();
        let parity = ParityOptions::default();
        let index = IndexOptions::default();
        Tolerances {
            eps_trans: DEFAULT_EPS_TRANS,
            branch_tol: BifurcationOptions::default().branch_tol,
            rtol: integ.rtol,
            atol: integ.atol,
            t_max: DEFAULT_T_MAX,
            tau: parity.tau,
            n_intervals: parity.n_intervals,
            lambda_points: parity.grid_points,
            lambda_tol: parity.lambda_tol,
            check_doubling: parity.check_doubling,
            hyperbolicity: DEFAULT_HYPERBOLICITY,
            max_depth: MAX_DEPTH,
            initial_points: index.initial_points,
        }
    }
}

impl Tolerances {
    pub fn index(&self) -> IndexOptions {
        IndexOptions {
            eps_trans: self.eps_trans,
            max_depth: self.max_depth,
            initial_points: self.initial_points,
            ..IndexOptions::default()
        }
    }

    pub fn parity(&self) -> ParityOptions {
        ParityOptions {
            tau: self.tau,
            n_intervals: self.n_intervals,
            grid_points: self.lambda_points,
            lambda_tol: self.lambda_tol,
            eps_trans: self.eps_trans,
            check_doubling: self.check_doubling,
            record_sigma: true,
        }
    }

    pub fn integrator(&self) -> IntegratorOptions {
        IntegratorOptions {
            rtol: self.rtol,
            atol: self.atol,
            ..IntegratorOptions::default()
        }
    }

    pub fn bifurcation(&self) -> BifurcationOptions {
        BifurcationOptions {
            branch_tol: self.branch_tol,
            index: self.index(),
            ..BifurcationOptions::default()
        }
    }
}

/// File names of the outputs, relative to `--out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: String,
    pub trace: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            report: "report.json".into(),
            trace: "trace.csv".into(),
        }
    }
}

/// A `hetindex` configuration. Expressions follow `docs/expression-grammar.md`;
/// matrix entries may use `t` and `lambda`, vector fields also `z1..zn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kind: ProblemKind,
    /// Free-form label copied into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Ambient dimension (`R^n`; `n = 2k` for Lagrangian paths).
    pub n: usize,
    /// `dim V` for subspace paths, `dim E^u` (unstable dimension of `S^-`)
    /// for families; inferred when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// `S(lambda, t)`, `n x n` (linear-family).
    #[serde(default, rename = "S", skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<String>>>,
    /// `g(lambda, t, z)`, `n` components (nonlinear-family).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<String>>,
    /// Branch `z_lambda(t)`, `n` components; the zero branch when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Vec<String>>,
    /// Rest point `z_-` (nonlinear-family; zero when omitted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_minus: Option<Vec<f64>>,
    /// Rest point `z_+` (nonlinear-family; zero when omitted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_plus: Option<Vec<f64>>,
    /// Columns spanning `V(t)`, `n x k` (subspace-paths).
    #[serde(default, rename = "V", skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<String>>>,
    /// Columns spanning `W(t)`, `n x (n - k)` (subspace-paths).
    #[serde(default, rename = "W", skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<Vec<String>>>,
    /// Symmetric `A(t)`, `k x k`: the first path is `graph A(t)`
    /// (lagrangian-paths).
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    /// Symmetric `B(t)`, `k x k`: the second path is `graph B(t)`
    /// (lagrangian-paths).
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<String>>>,
    /// Parameter domain of path pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    /// Parameter range of families.
    #[serde(default = "default_lambda_range")]
    pub lambda_range: [f64; 2],
    /// Parameter value for `geometric-parity` (default: both ends of the range).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_lambda_range() -> [f64; 2] {
    [0.0, 1.0]
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::invalid(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    fn require<'a, T>(&self, field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        field.as_ref().ok_or_else(|| {
            CliError::invalid(format!(
                "config of kind {:?} needs the field '{name}'",
                self.kind
            ))
        })
    }

    fn expect_kind(&self, kinds: &[ProblemKind], command: &str) -> Result<(), CliError> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(CliError::invalid(format!(
                "command '{command}' does not apply to a config of kind {:?} (expected one of {kinds:?})",
                self.kind
            )))
        }
    }

    fn check_range(&self) -> Result<(), CliError> {
        let [lo, hi] = self.lambda_range;
        if !(lo < hi) {
            return Err(CliError::invalid(format!("lambda_range [{lo}, {hi}] is empty")));
        }
        Ok(())
    }

    fn matrix(&self, src: &[Vec<String>], name: &str, rows: usize, cols: usize) -> Result<MatrixExpr, CliError> {
        let m = MatrixExpr::parse(src).map_err(|e| CliError::from(e.in_entry(name)))?;
        if m.shape() != (rows, cols) {
            return Err(CliError::invalid(format!(
                "{name} must be {rows}x{cols}, got {}x{}",
                m.shape().0,
                m.shape().1
            )));
        }
        m.check_scope(Scope::Parameters)
            .map_err(|e| CliError::from(e.in_entry(name)))?;
        Ok(m)
    }

    /// The linear family of a `linear-family` config.
    pub fn linear_family(&self) -> Result<LinearFamily, CliError> {
        self.expect_kind(&[ProblemKind::LinearFamily], "linear-family commands")?;
        self.check_range()?;
        let m = self.matrix(self.require(&self.s, "S")?, "S", self.n, self.n)?;
        let [lo, hi] = self.lambda_range;
        let t_max = self.tolerances.t_max;
        let k = match self.k {
            Some(k) => k,
            None => {
                let s_minus = m.eval(&Env::new(lo, -t_max))?;
                spectral_split(&s_minus, self.tolerances.hyperbolicity)?
                    .v_plus
                    .dim()
            }
        };
        let mut fam = LinearFamily::from_expr(m, k)?
            .with_t_max(t_max)
            .with_lambda_range(lo, hi)
            .with_integrator(self.tolerances.integrator());
        fam.delta = self.tolerances.hyperbolicity;
        Ok(fam)
    }

    /// The nonlinear family and branch of a `nonlinear-family` config.
    pub fn nonlinear_family(&self) -> Result<(NonlinearFamily, Branch), CliError> {
        self.expect_kind(&[ProblemKind::NonlinearFamily], "bifurcate")?;
        self.check_range()?;
        let n = self.n;
        let parse_vec = |src: &[String], name: &str| -> Result<Vec<_>, CliError> {
            if src.len() != n {
                return Err(CliError::invalid(format!(
                    "{name} must have {n} components, got {}",
                    src.len()
                )));
            }
            src.iter()
                .enumerate()
                .map(|(i, s)| {
                    parse(s).map_err(|e| CliError::from(e.in_entry(&format!("{name}[{i}]"))))
                })
                .collect()
        };
        let g = parse_vec(self.require(&self.g, "g")?, "g")?;
        let zero = vec![0.0; n];
        let z_minus = self.z_minus.clone().unwrap_or_else(|| zero.clone());
        let z_plus = self.z_plus.clone().unwrap_or(zero);
        let [lo, hi] = self.lambda_range;
        let nf = NonlinearFamily::from_exprs(g, z_minus, z_plus)?
            .with_t_max(self.tolerances.t_max)
            .with_lambda_range(lo, hi);
        let branch = match &self.branch {
            Some(b) => Branch::from_exprs(parse_vec(b, "branch")?)?,
            None => Branch::zero(n),
        };
        Ok((nf, branch))
    }

    /// The pair of a `subspace-paths` or `lagrangian-paths` config, and its
    /// domain.
    pub fn pair(&self) -> Result<(SubspacePathPair, DomainConfig), CliError> {
        self.expect_kind(
            &[ProblemKind::SubspacePaths, ProblemKind::LagrangianPaths],
            "index",
        )?;
        let domain = self.domain.unwrap_or_default();
        let (a, b) = match domain {
            DomainConfig::Interval { a, b } => (a, b),
            DomainConfig::HalfLine { start, .. } => (start, f64::INFINITY),
            DomainConfig::Line { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        };
        if !(a < b) {
            return Err(CliError::invalid(format!("domain [{a}, {b}] is empty")));
        }
        let eval = |m: MatrixExpr| {
            move |t: f64| {
                // Expressions are checked at load time; evaluation errors
                // (e.g. log of a negative number) surface as NaN, which the
                // orthonormalization rejects with a rank error.
                m.eval(&Env::new(0.0, t))
                    .unwrap_or_else(|_| nalgebra::DMatrix::from_element(m.shape().0, m.shape().1, f64::NAN))
            }
        };
        let pair = match self.kind {
            ProblemKind::SubspacePaths => {
                let n = self.n;
                let k = self.k.ok_or_else(|| {
                    CliError::invalid("subspace-paths configs need 'k' (dim V)")
                })?;
                if k > n {
                    return Err(CliError::invalid(format!("k = {k} exceeds n = {n}")));
                }
                let v = self.matrix(self.require(&self.v, "V")?, "V", n, k)?;
                let w = self.matrix(self.require(&self.w, "W")?, "W", n, n - k)?;
                SubspacePathPair::from_matrix_fns(a, b, eval(v), eval(w))?
            }
            _ => {
                if !self.n.is_multiple_of(2) {
                    return Err(CliError::invalid(format!(
                        "lagrangian-paths live in R^(2k); n = {} is odd",
                        self.n
                    )));
                }
                let k = self.n / 2;
                let ma = self.matrix(self.require(&self.a, "A")?, "A", k, k)?;
                let mb = self.matrix(self.require(&self.b, "B")?, "B", k, k)?;
                graph_pair(a, b, eval(ma), eval(mb), None)?
            }
        };
        Ok((pair, domain))
    }

    /// Fills in every defaulted field that depends on the problem so the
    /// report records what was actually used.
    pub fn resolved(&self) -> Config {
        let mut c = self.clone();
        if matches!(
            c.kind,
            ProblemKind::SubspacePaths | ProblemKind::LagrangianPaths
        ) && c.domain.is_none()
        {
            c.domain = Some(DomainConfig::default());
        }
        if c.kind == ProblemKind::LinearFamily && c.k.is_none() {
            if let Ok(fam) = c.linear_family() {
                c.k = Some(fam.k());
            }
        }
        if c.kind == ProblemKind::NonlinearFamily {
            c.z_minus.get_or_insert_with(|| vec![0.0; self.n]);
            c.z_plus.get_or_insert_with(|| vec![0.0; self.n]);
            c.branch
                .get_or_insert_with(|| vec!["0".to_string(); self.n]);
        }
        c
    }
}

/// JSON schema of [`Config`], as shipped in `crates/cli/config.schema.json`.
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(Config);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}
