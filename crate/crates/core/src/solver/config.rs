use crate::error::{Error, Result};
use crate::real::Precision;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    GaussNewton,
    #[default]
    LevenbergMarquardt,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gn" | "gauss_newton" => Ok(Method::GaussNewton),
            "lm" | "levenberg_marquardt" => Ok(Method::LevenbergMarquardt),
            other => Err(format!("unknown method `{other}` (expected gn or lm)")),
        }
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GaussNewton => "gn",
            Method::LevenbergMarquardt => "lm",
        }
    }
}

/// How PCG applies the normal-equations operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Materialize {
    /// Recompute partials in every product (`applyJTJ` kernels).
    #[default]
    None,
    /// Store J once per nonlinear iteration; `A v = 2 Jᵀ(J v)`.
    J,
    /// Also assemble `H = 2JᵀJ`; `A v = H v`.
    JtJ,
}

impl std::str::FromStr for Materialize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Materialize::None),
            "j" => Ok(Materialize::J),
            "jtj" => Ok(Materialize::JtJ),
            other => Err(format!("unknown materialization `{other}` (expected none, j or jtj)")),
        }
    }
}

impl Materialize {
    pub fn name(self) -> &'static str {
        match self {
            Materialize::None => "none",
            Materialize::J => "j",
            Materialize::JtJ => "jtj",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub method: Method,
    pub precision: Precision,
    pub nonlinear_iters: usize,
    pub linear_iters: usize,
    pub pcg_rel_tol: f64,
    pub pcg_abs_tol: f64,
    pub use_preconditioner: bool,
    pub materialize: Materialize,
    pub parallel: bool,
    pub initial_radius: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub min_diagonal: f64,
    pub max_diagonal: f64,
    pub min_relative_decrease: f64,
    /// Stop once the relative cost decrease of an iteration falls below this; 0 disables.
    pub cost_stop_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig::for_precision(Precision::F64)
    }
}

impl SolveConfig {
    pub fn for_precision(precision: Precision) -> Self {
        SolveConfig {
            method: Method::LevenbergMarquardt,
            precision,
            nonlinear_iters: 8,
            linear_iters: 100,
            pcg_rel_tol: Self::default_rel_tol(precision),
            pcg_abs_tol: 0.0,
            use_preconditioner: true,
            materialize: Materialize::None,
            parallel: false,
            initial_radius: 1e4,
            min_radius: 1e-32,
            max_radius: 1e16,
            min_diagonal: 1e-6,
            max_diagonal: 1e32,
            min_relative_decrease: 1e-3,
            cost_stop_tol: 0.0,
        }
    }

    pub fn default_rel_tol(precision: Precision) -> f64 {
        match precision {
            Precision::F32 => 1e-4,
            Precision::F64 => 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.nonlinear_iters == 0 {
            return bad("nonlinear_iters must be at least 1");
        }
        if !(self.min_radius <= self.initial_radius && self.initial_radius <= self.max_radius) {
            return bad("radii must satisfy min_radius <= initial_radius <= max_radius");
        }
        if !(self.min_diagonal <= self.max_diagonal) {
            return bad("min_diagonal exceeds max_diagonal");
        }
        for (name, v) in [
            ("pcg_rel_tol", self.pcg_rel_tol),
            ("pcg_abs_tol", self.pcg_abs_tol),
            ("min_relative_decrease", self.min_relative_decrease),
            ("cost_stop_tol", self.cost_stop_tol),
            ("min_radius", self.min_radius),
            ("min_diagonal", self.min_diagonal),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}
