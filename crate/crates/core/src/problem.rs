//! SOCP instances `min f(x)  s.t.  g(x) ∈ Q` with polynomial data, their JSON
//! format and base-point validation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lorentz::{ConePoint, ConeTol};
use crate::poly::{FBundle, GBundle, PolyError, PolyFunc, Term, DEFAULT_MAX_DEGREE};
use crate::subsolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub zero: f64,
    pub cone: f64,
    /// Relative SVD cutoff.
    pub rank: f64,
    /// Strict-inequality margin used by every verdict.
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { zero: 1e-9, cone: 1e-9, rank: 1e-8, margin: 1e-7 }
    }
}

impl Tolerances {
    pub fn cone_tol(&self) -> ConeTol {
        ConeTol { zero: self.zero, cone_abs: self.cone, cone_rel: self.cone }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl From<PolyError> for ModelError {
    fn from(e: PolyError) -> Self {
        ModelError::Schema(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyFile {
    pub terms: Vec<Term>,
}

/// On-disk layout of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub x_base: Vec<f64>,
    pub sigma: f64,
    pub f: PolyFile,
    pub g: Vec<PolyFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub f: PolyFunc,
    /// `g[0]` is `g₀`, the rest form `g_r`.
    pub g: Vec<PolyFunc>,
    pub x_base: DVector<f64>,
    /// Declared MSCQ modulus.
    pub sigma: f64,
    pub tol: Tolerances,
    pub seed: u64,
    fb: FBundle,
    gb: GBundle,
}

impl Instance {
    /// Builds and validates an instance. Stationarity is checked as well.
    pub fn new(
        f: PolyFunc,
        g: Vec<PolyFunc>,
        x_base: DVector<f64>,
        sigma: f64,
        tol: Tolerances,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let inst = Self::unchecked(f, g, x_base, sigma, tol, seed)?;
        let gv = ConePoint::from_vec(&inst.gb.value);
        if gv.norm() > tol.zero {
            return Err(ModelError::Validation(format!(
                "g(x_base) must vanish, got norm {:.3e}",
                gv.norm()
            )));
        }
        if validate_stationarity(&inst).is_none() {
            return Err(ModelError::Validation("x_base is not stationary: the multiplier set is empty".into()));
        }
        Ok(inst)
    }

    /// Shape checks only; used by tests that need a nonstationary instance.
    pub fn unchecked(
        f: PolyFunc,
        g: Vec<PolyFunc>,
        x_base: DVector<f64>,
        sigma: f64,
        tol: Tolerances,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let n = x_base.len();
        if n == 0 {
            return Err(ModelError::Validation("n must be positive".into()));
        }
        if g.len() < 2 {
            return Err(ModelError::Validation("m must be at least 1 (g needs 1+m components)".into()));
        }
        if f.n != n || g.iter().any(|p| p.n != n) {
            return Err(ModelError::Validation("polynomial arity differs from the length of x_base".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ModelError::Validation(format!("sigma must be positive, got {sigma}")));
        }
        if x_base.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Validation("x_base has non-finite entries".into()));
        }
        let m = g.len() - 1;
        let fb = f.bundle(&x_base);
        let gb = GBundle::eval(&g, &x_base);
        Ok(Instance { n, m, f, g, x_base, sigma, tol, seed, fb, gb })
    }

    pub fn base_f(&self) -> &FBundle {
        &self.fb
    }

    pub fn base_g(&self) -> &GBundle {
        &self.gb
    }

    pub fn g_bundle(&self, x: &DVector<f64>) -> GBundle {
        GBundle::eval(&self.g, x)
    }

    pub fn g_value(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.g.len(), self.g.iter().map(|p| p.eval(x)))
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n: self.n,
            m: self.m,
            x_base: self.x_base.iter().cloned().collect(),
            sigma: self.sigma,
            f: PolyFile { terms: self.f.terms.clone() },
            g: self.g.iter().map(|p| PolyFile { terms: p.terms.clone() }).collect(),
            tolerances: Some(self.tol),
            seed: Some(self.seed),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn with_tolerances(&self, tol: Tolerances) -> Self {
        Instance { tol, ..self.clone() }
    }
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance, ModelError> {
        if self.m == 0 {
            return Err(ModelError::Validation("m must be at least 1".into()));
        }
        if self.x_base.len() != self.n {
            return Err(ModelError::Schema(format!("x_base has length {}, expected n = {}", self.x_base.len(), self.n)));
        }
        if self.g.len() != 1 + self.m {
            return Err(ModelError::Schema(format!("g has {} components, expected 1+m = {}", self.g.len(), 1 + self.m)));
        }
        let f = PolyFunc::new(self.n, self.f.terms, DEFAULT_MAX_DEGREE)?;
        let g = self
            .g
            .into_iter()
            .map(|p| PolyFunc::new(self.n, p.terms, DEFAULT_MAX_DEGREE))
            .collect::<Result<Vec<_>, _>>()?;
        Instance::new(
            f,
            g,
            DVector::from_vec(self.x_base),
            self.sigma,
            self.tolerances.unwrap_or_default(),
            self.seed.unwrap_or(0),
        )
    }
}

pub fn parse_instance(text: &str) -> Result<Instance, ModelError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
    file.into_instance()
}

/// A multiplier in `Λ(x̄, -∇f(x̄))`, or `None` when the set is empty.
pub fn validate_stationarity(inst: &Instance) -> Option<DVector<f64>> {
    let slice = subsolver::build_slice(&inst.gb.jac, &(-&inst.fb.grad), inst.tol.rank);
    subsolver::feasibility(&slice)
}
