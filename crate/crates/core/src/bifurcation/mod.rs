//! Nonlinear front-end: vector-field families `g(lambda, t, z)`,
//! user-supplied trivial branches `z_lambda`, the linearization,
//! restpoint checks and the bifurcation verdict.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Env, Expr, ExprError, Scope};
use crate::flow::{check_a1_a3, FlowError, HypothesisReport, LinearFamily, DEFAULT_T_MAX};
use crate::linalg::{spectral_split, DEFAULT_HYPERBOLICITY};
use crate::parity::{endpoint_pair, resolved_family, ParityError};
use crate::z2index::{z2_index, IndexError, IndexOptions, Z2};

/// Default residual tolerance of a branch.
pub const DEFAULT_BRANCH_TOL: f64 = 1e-6;
/// Branch limits must be approached within this at `±t_max`.
pub const BRANCH_LIMIT_TOL: f64 = 1e-4;
/// `|g(lambda, t, z_±)|` above this is a restpoint violation.
pub const RESTPOINT_TOL: f64 = 1e-8;
/// Step of the central difference for `z'_lambda(t)`.
const BRANCH_DIFF_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum BifurcationError {
    #[error("branch residual {residual:e} exceeds the tolerance at lambda = {lambda}, t = {t}")]
    BranchResidualTooLarge { lambda: f64, t: f64, residual: f64 },
    #[error("branch does not approach z_{side} at lambda = {lambda} (distance {distance:e})")]
    BranchLimit {
        side: &'static str,
        lambda: f64,
        distance: f64,
    },
    #[error("hypothesis {assumption} fails: {detail}")]
    HypothesisFailure { assumption: String, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Parity(#[from] ParityError),
}

type FieldFn = dyn Fn(f64, f64, &[f64]) -> Result<DVector<f64>, BifurcationError> + Send + Sync;
type BranchFn = dyn Fn(f64, f64) -> Result<DVector<f64>, BifurcationError> + Send + Sync;

fn eval_exprs(exprs: &[Expr], env: &Env<'_>) -> Result<DVector<f64>, BifurcationError> {
    let mut out = DVector::zeros(exprs.len());
    for (i, e) in exprs.iter().enumerate() {
        out[i] = e.eval(env)?;
    }
    Ok(out)
}

/// `z' = g(lambda, t, z)` with restpoints `z_-`, `z_+`.
#[derive(Clone)]
pub struct NonlinearFamily {
    n: usize,
    g: Arc<FieldFn>,
    pub z_minus: DVector<f64>,
    pub z_plus: DVector<f64>,
    pub t_max: f64,
    pub lambda_range: (f64, f64),
}

impl fmt::Debug for NonlinearFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearFamily")
            .field("n", &self.n)
            .field("z_minus", &self.z_minus.as_slice())
            .field("z_plus", &self.z_plus.as_slice())
            .field("t_max", &self.t_max)
            .field("lambda_range", &self.lambda_range)
            .finish_non_exhaustive()
    }
}

impl NonlinearFamily {
    /// `g` given componentwise by expressions in `lambda`, `t`, `z1 .. zn`.
    pub fn from_exprs(
        g: Vec<Expr>,
        z_minus: Vec<f64>,
        z_plus: Vec<f64>,
    ) -> Result<Self, BifurcationError> {
        let n = g.len();
        for e in &g {
            e.check_scope(Scope::State { n })?;
        }
        let g = Arc::new(g);
        Self::from_fn(n, z_minus, z_plus, move |lambda, t, z| {
            eval_exprs(&g, &Env::with_state(lambda, t, z))
        })
    }

    pub fn from_fn<F>(
        n: usize,
        z_minus: Vec<f64>,
        z_plus: Vec<f64>,
        g: F,
    ) -> Result<Self, BifurcationError>
    where
        F: Fn(f64, f64, &[f64]) -> Result<DVector<f64>, BifurcationError> + Send + Sync + 'static,
    {
        if n == 0 || z_minus.len() != n || z_plus.len() != n {
            return Err(BifurcationError::Invalid(format!(
                "g has {n} components but the restpoints have {} and {}",
                z_minus.len(),
                z_plus.len()
            )));
        }
        Ok(NonlinearFamily {
            n,
            g: Arc::new(g),
            z_minus: DVector::from_vec(z_minus),
            z_plus: DVector::from_vec(z_plus),
            t_max: DEFAULT_T_MAX,
            lambda_range: (0.0, 1.0),
        })
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_lambda_range(mut self, lo: f64, hi: f64) -> Self {
        self.lambda_range = (lo, hi);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn field(&self, lambda: f64, t: f64, z: &[f64]) -> Result<DVector<f64>, BifurcationError> {
        let v = (self.g)(lambda, t, z)?;
        if v.len() != self.n || v.iter().any(|x| !x.is_finite()) {
            return Err(BifurcationError::Invalid(format!(
                "g(lambda = {lambda}, t = {t}, z) is not a finite {}-vector",
                self.n
            )));
        }
        Ok(v)
    }

    /// `D_z g(lambda, t, z)` by central differences with steps
    /// `h_j = 1e-6 (1 + |z_j|)`.
    pub fn jacobian(&self, lambda: f64, t: f64, z: &[f64]) -> Result<DMatrix<f64>, BifurcationError> {
        let n = self.n;
        let mut jac = DMatrix::zeros(n, n);
        let mut zp = z.to_vec();
        for j in 0..n {
            let h = 1e-6 * (1.0 + z[j].abs());
            zp[j] = z[j] + h;
            let fp = self.field(lambda, t, &zp)?;
            zp[j] = z[j] - h;
            let fm = self.field(lambda, t, &zp)?;
            zp[j] = z[j];
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// A solution `t -> z_lambda(t)` of `z' = g(lambda, t, z)` connecting `z_-` to `z_+`.
#[derive(Clone)]
pub struct Branch {
    n: usize,
    z: Arc<BranchFn>,
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Branch").field("n", &self.n).finish_non_exhaustive()
    }
}

impl Branch {
    pub fn from_exprs(z: Vec<Expr>) -> Result<Self, BifurcationError> {
        for e in &z {
            e.check_scope(Scope::Parameters)?;
        }
        let n = z.len();
        let z = Arc::new(z);
        Ok(Branch {
            n,
            z: Arc::new(move |lambda, t| eval_exprs(&z, &Env::new(lambda, t))),
        })
    }

    pub fn from_fn<F>(n: usize, z: F) -> Self
    where
        F: Fn(f64, f64) -> Result<DVector<f64>, BifurcationError> + Send + Sync + 'static,
    {
        Branch { n, z: Arc::new(z) }
    }

    /// The trivial branch `z ≡ 0`.
    pub fn zero(n: usize) -> Self {
        Branch::from_fn(n, move |_, _| Ok(DVector::zeros(n)))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn at(&self, lambda: f64, t: f64) -> Result<DVector<f64>, BifurcationError> {
        let v = (self.z)(lambda, t)?;
        if v.len() != self.n || v.iter().any(|x| !x.is_finite()) {
            return Err(BifurcationError::Invalid(format!(
                "branch at (lambda = {lambda}, t = {t}) is not a finite {}-vector",
                self.n
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BifurcationOptions {
    pub branch_tol: f64,
    pub lambda_samples: usize,
    pub t_samples: usize,
    pub index: IndexOptions,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        BifurcationOptions {
            branch_tol: DEFAULT_BRANCH_TOL,
            lambda_samples: 11,
            t_samples: 201,
            index: IndexOptions::default(),
        }
    }
}

fn samples(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    crate::parity::lambda_grid(lo, hi, m)
}

/// Checks the branch invariants: residual `|z' - g(lambda, t, z)|_inf` at
/// most `branch_tol` and the limits `z_±` approached within
/// [`BRANCH_LIMIT_TOL`] at `±t_max`, on a sampled grid.
pub fn check_branch(
    nf: &NonlinearFamily,
    branch: &Branch,
    opts: &BifurcationOptions,
) -> Result<f64, BifurcationError> {
    if branch.dim() != nf.dim() {
        return Err(BifurcationError::Invalid(format!(
            "branch has {} components, g has {}",
            branch.dim(),
            nf.dim()
        )));
    }
    let (lo, hi) = nf.lambda_range;
    let mut worst: f64 = 0.0;
    for lambda in samples(lo, hi, opts.lambda_samples) {
        for t in samples(-nf.t_max, nf.t_max, opts.t_samples) {
            let h = BRANCH_DIFF_STEP * (1.0 + t.abs());
            let dz = (branch.at(lambda, t + h)? - branch.at(lambda, t - h)?) / (2.0 * h);
            let z = branch.at(lambda, t)?;
            let r = (dz - nf.field(lambda, t, z.as_slice())?).amax();
            if r > opts.branch_tol {
                return Err(BifurcationError::BranchResidualTooLarge {
                    lambda,
                    t,
                    residual: r,
                });
            }
            worst = worst.max(r);
        }
        for (side, t, target) in [
            ("-", -nf.t_max, &nf.z_minus),
            ("+", nf.t_max, &nf.z_plus),
        ] {
            let distance = (branch.at(lambda, t)? - target).amax();
            if distance > BRANCH_LIMIT_TOL {
                return Err(BifurcationError::BranchLimit {
                    side,
                    lambda,
                    distance,
                });
            }
        }
    }
    Ok(worst)
}

/// `S_lambda(t) = D_z g(lambda, t, z_lambda(t))` as a [`LinearFamily`], with
/// `k` read off the limit at `-t_max` for the first `lambda`.
pub fn linearize_along(
    nf: &NonlinearFamily,
    branch: &Branch,
    opts: &BifurcationOptions,
) -> Result<LinearFamily, BifurcationError> {
    check_branch(nf, branch, opts)?;
    let (lo, hi) = nf.lambda_range;
    let s_minus = nf.jacobian(lo, -nf.t_max, branch.at(lo, -nf.t_max)?.as_slice())?;
    let split = spectral_split(&s_minus, DEFAULT_HYPERBOLICITY).map_err(|e| {
        BifurcationError::HypothesisFailure {
            assumption: "(A1)".into(),
            detail: format!("limit at -infinity: {e}"),
        }
    })?;
    let k = split.v_plus.dim();
    let (g, z) = (nf.clone(), branch.clone());
    let fam = LinearFamily::from_try_fn(nf.dim(), k, move |lambda, t| {
        let zt = z
            .at(lambda, t)
            .map_err(|e| FlowError::Invalid(e.to_string()))?;
        g.jacobian(lambda, t, zt.as_slice())
            .map_err(|e| FlowError::Invalid(e.to_string()))
    })?;
    Ok(fam.with_t_max(nf.t_max).with_lambda_range(lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestpointReport {
    pub residual_minus: f64,
    pub residual_plus: f64,
    pub hyperbolic: bool,
    /// `D_z g(lambda_0, -t_max, z_-)`.
    pub limit_minus: DMatrix<f64>,
    /// `D_z g(lambda_0, t_max, z_+)`.
    pub limit_plus: DMatrix<f64>,
    pub min_real_part: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Residuals of `g` at `z_±` and hyperbolicity of `D_z g(lambda, ±t_max, z_±)`
/// on sampled `lambda` (and `t` for the residuals).
pub fn check_restpoints(nf: &NonlinearFamily) -> Result<RestpointReport, BifurcationError> {
    let (lo, hi) = nf.lambda_range;
    let mut violations = Vec::new();
    let (mut res_m, mut res_p): (f64, f64) = (0.0, 0.0);
    let mut min_re = f64::INFINITY;
    for lambda in samples(lo, hi, 11) {
        for t in samples(-nf.t_max, nf.t_max, 41) {
            res_m = res_m.max(nf.field(lambda, t, nf.z_minus.as_slice())?.amax());
            res_p = res_p.max(nf.field(lambda, t, nf.z_plus.as_slice())?.amax());
        }
        for (side, t, z) in [("-", -nf.t_max, &nf.z_minus), ("+", nf.t_max, &nf.z_plus)] {
            let jac = nf.jacobian(lambda, t, z.as_slice())?;
            match spectral_split(&jac, DEFAULT_HYPERBOLICITY) {
                Ok(s) => min_re = min_re.min(s.gap),
                Err(e) => {
                    min_re = 0.0;
                    violations.push(format!(
                        "restpoint z_{side} is not hyperbolic at lambda = {lambda}: {e}"
                    ));
                }
            }
        }
    }
    if res_m > RESTPOINT_TOL {
        violations.push(format!("g(lambda, t, z_-) != 0 (residual {res_m:e})"));
    }
    if res_p > RESTPOINT_TOL {
        violations.push(format!("g(lambda, t, z_+) != 0 (residual {res_p:e})"));
    }
    let limit_minus = nf.jacobian(lo, -nf.t_max, nf.z_minus.as_slice())?;
    let limit_plus = nf.jacobian(lo, nf.t_max, nf.z_plus.as_slice())?;
    Ok(RestpointReport {
        residual_minus: res_m,
        residual_plus: res_p,
        hyperbolic: violations.iter().all(|v| !v.contains("hyperbolic")),
        limit_minus,
        limit_plus,
        min_real_part: min_re,
        passed: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub restpoints: RestpointReport,
    pub branch_residual: f64,
    pub a1_a3: HypothesisReport,
    pub endpoints_nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationVerdict {
    pub bifurcates: bool,
    pub index: Z2,
    /// `"bifurcation"` when the index is 1, `"inconclusive"` otherwise:
    /// The criterion is sufficient only.
    pub verdict: String,
    pub lambda_candidates: Vec<f64>,
    pub hypotheses: HypothesisSummary,
}

/// Bifurcation from the branch when
/// `iota(E^s_lambda(0), E^u_lambda(0)) != 0` for the linearization.
pub fn detect_bifurcation(
    nf: &NonlinearFamily,
    branch: &Branch,
    opts: &BifurcationOptions,
) -> Result<BifurcationVerdict, BifurcationError> {
    let restpoints = check_restpoints(nf)?;
    if let Some(v) = restpoints.violations.first() {
        return Err(BifurcationError::HypothesisFailure {
            assumption: "restpoints".into(),
            detail: v.clone(),
        });
    }
    let branch_residual = check_branch(nf, branch, opts)?;
    let fam = linearize_along(nf, branch, opts)?;
    let a1_a3 = check_a1_a3(&fam);
    if let Some(v) = a1_a3.violations.first() {
        return Err(BifurcationError::HypothesisFailure {
            assumption: format!("({})", v.assumption),
            detail: format!("lambda = {}: {}", v.lambda, v.detail),
        });
    }
    let fam = resolved_family(&fam)?;
    let report = match z2_index(&endpoint_pair(&fam)?, &opts.index) {
        Ok(r) => r,
        Err(IndexError::DegenerateEndpoint { at, margin }) => {
            return Err(BifurcationError::HypothesisFailure {
                assumption: "(A2)".into(),
                detail: format!(
                    "E^s(0) and E^u(0) are not transversal at lambda = {at} (margin {margin:e})"
                ),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let bifurcates = report.value == Z2::One;
    Ok(BifurcationVerdict {
        bifurcates,
        index: report.value,
        verdict: if bifurcates {
            "bifurcation".into()
        } else {
            "inconclusive".into()
        },
        lambda_candidates: report.crossings,
        hypotheses: HypothesisSummary {
            restpoints,
            branch_residual,
            a1_a3,
            endpoints_nondegenerate: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use nalgebra::dmatrix;

    fn cubic() -> NonlinearFamily {
        let g = vec![
            parse("z2").unwrap(),
            parse("z1 - 2.5*lambda*sech(t)^2*z1 + z1^3").unwrap(),
        ];
        NonlinearFamily::from_exprs(g, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn linearization_of_cubic_family() {
        let nf = cubic();
        let fam = linearize_along(&nf, &Branch::zero(2), &BifurcationOptions::default()).unwrap();
        assert_eq!(fam.k(), 1);
        for &(l, t) in &[(0.3_f64, -1.0_f64), (0.9, 0.5), (1.0, 4.0)] {
            let q = 1.0 - 2.5 * l / t.cosh().powi(2);
            let expect = dmatrix![0.0, 1.0; q, 0.0];
            assert!((fam.matrix(l, t).unwrap() - expect).amax() < 1e-7);
        }
    }

    #[test]
    fn jacobian_matches_hand_derivative() {
        let g = vec![
            parse("z1^2*z2 - lambda*z2^3").unwrap(),
            parse("sin(t)*z1 + z1*z2").unwrap(),
        ];
        let nf = NonlinearFamily::from_exprs(g, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let (l, t, z) = (0.7, 0.3, [1.3, -0.4]);
        let jac = nf.jacobian(l, t, &z).unwrap();
        let expect = dmatrix![
            2.0 * z[0] * z[1], z[0] * z[0] - 3.0 * l * z[1] * z[1];
            t.sin() + z[1], z[0]
        ];
        assert!((jac - expect).amax() < 1e-7);
    }

    #[test]
    fn restpoint_checks() {
        let r = check_restpoints(&cubic()).unwrap();
        assert!(r.passed && r.hyperbolic);
        assert!((&r.limit_minus - dmatrix![0.0, 1.0; 1.0, 0.0]).amax() < 1e-8);
        let center = NonlinearFamily::from_exprs(
            vec![parse("z2").unwrap(), parse("-z1").unwrap()],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let r = check_restpoints(&center).unwrap();
        assert!(!r.hyperbolic && !r.passed);
        let shifted = NonlinearFamily::from_exprs(
            vec![parse("z2").unwrap(), parse("z1 - 1e-3").unwrap()],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let r = check_restpoints(&shifted).unwrap();
        assert!(r.violations.iter().any(|v| v.contains("residual")));
    }

    #[test]
    fn bad_branch_is_rejected() {
        let nf = cubic();
        let b = Branch::from_exprs(vec![parse("0.1*sech(t)").unwrap(), parse("0").unwrap()]).unwrap();
        assert!(matches!(
            linearize_along(&nf, &b, &BifurcationOptions::default()),
            Err(BifurcationError::BranchResidualTooLarge { .. })
        ));
    }

    #[test]
    fn cubic_family_bifurcates() {
        let v = detect_bifurcation(&cubic(), &Branch::zero(2), &BifurcationOptions::default())
            .unwrap();
        assert!(v.bifurcates);
        assert_eq!(v.lambda_candidates.len(), 1);
        assert!((v.lambda_candidates[0] - 0.8).abs() < 2e-3);
        let v = detect_bifurcation(
            &cubic().with_lambda_range(0.0, 0.5),
            &Branch::zero(2),
            &BifurcationOptions::default(),
        )
        .unwrap();
        assert!(!v.bifurcates);
        assert_eq!((v.index, v.verdict.as_str()), (Z2::Zero, "inconclusive"));
    }

    #[test]
    fn linear_diagonal_family_is_inconclusive() {
        let g = vec![
            parse("(-1-lambda)*z1").unwrap(),
            parse("(1+lambda)*z2").unwrap(),
        ];
        let nf = NonlinearFamily::from_exprs(g, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let v = detect_bifurcation(&nf, &Branch::zero(2), &BifurcationOptions::default()).unwrap();
        assert!(!v.bifurcates);
        assert_eq!(v.index, Z2::Zero);
    }
}
