//! Run configuration: defaults, per-solver completeness validation, and the
//! flat `key=value` config-file format with `[section]` headers. The
//! metadata file written after a run is itself a valid config file, which is
//! what makes bit-identical replay possible.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "OPAVE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    InverseIntegration,
    Unmixing,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Fb,
    Pd,
    Pnp,
    Admm,
    Condat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingKind {
    Scalar,
    SsnVariable,
    FixedHessian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictChoice {
    Gaussian,
    SyntheticSmooth,
}

macro_rules! str_enum {
    ($ty:ty, $(($variant:path, $name:literal)),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of: ",
                                $($name, " ",)+),
                        other
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $($variant => write!(f, $name),)+
                }
            }
        }
    };
}

str_enum!(
    Experiment,
    (Experiment::InverseIntegration, "inverse_integration"),
    (Experiment::Unmixing, "unmixing"),
    (Experiment::Custom, "custom")
);
str_enum!(
    SolverKind,
    (SolverKind::Fb, "fb"),
    (SolverKind::Pd, "pd"),
    (SolverKind::Pnp, "pnp"),
    (SolverKind::Admm, "admm"),
    (SolverKind::Condat, "condat")
);
str_enum!(
    AveragingKind,
    (AveragingKind::Scalar, "scalar"),
    (AveragingKind::SsnVariable, "ssn_variable"),
    (AveragingKind::FixedHessian, "fixed_hessian")
);
str_enum!(
    DictChoice,
    (DictChoice::Gaussian, "gaussian"),
    (DictChoice::SyntheticSmooth, "synthetic_smooth")
);

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub solver: SolverKind,
    pub averaging: AveragingKind,
    /// Scalar relaxation for the scalar strategy.
    pub lambda: Option<f64>,
    /// Primal step / metric scale (pd, pnp, condat; also the forward step of
    /// the B-differential residual map for those solvers).
    pub tau: Option<f64>,
    /// FB step, and the PnP coupling weight.
    pub gamma: Option<f64>,
    /// Dual step (pd, condat).
    pub sigma: Option<f64>,
    /// ADMM penalty; doubles as the optional fixed-Hessian scale.
    pub rho: Option<f64>,
    pub eps: f64,
    pub eps_reg: f64,
    /// The averaging band is [band_eps, 1].
    pub band_eps: f64,
    pub seed: u64,
    pub snr_db: f64,
    /// Problem size for generated instances (P = bands for unmixing).
    pub n: usize,
    pub dict: DictChoice,
    pub k_sparse: usize,
    /// Regularization weight for generated unmixing instances.
    pub mu: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub record_stride: usize,
    pub instance: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub output: PathBuf,
}

/// Default output path: `$OPAVE_OUTPUT_DIR/run.csv` or `./run.csv`.
pub fn default_output(file: &str) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(file),
        None => PathBuf::from(file),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::InverseIntegration,
            solver: SolverKind::Pd,
            averaging: AveragingKind::Scalar,
            lambda: None,
            tau: None,
            gamma: None,
            sigma: None,
            rho: None,
            eps: 1e-6,
            eps_reg: 1e2,
            band_eps: 1e-4,
            seed: 0,
            snr_db: 30.0,
            n: 200,
            dict: DictChoice::Gaussian,
            k_sparse: 5,
            mu: None,
            max_iters: 100_000,
            tol: 1e-9,
            record_stride: 1,
            instance: None,
            reference: None,
            output: default_output("run.csv"),
        }
    }
}

impl RunConfig {
    /// Rejects configs whose parameter set is incomplete for the chosen
    /// solver or averaging strategy.
    pub fn validate(&self) -> Result<(), String> {
        let need = |name: &str, v: Option<f64>| -> Result<f64, String> {
            v.ok_or_else(|| {
                format!(
                    "solver {} with averaging {} requires --{name}",
                    self.solver, self.averaging
                )
            })
        };
        let positive = |name: &str, v: f64| -> Result<(), String> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("--{name} must be positive and finite, got {v}"))
            }
        };
        match self.solver {
            SolverKind::Fb => {
                positive("gamma", need("gamma", self.gamma)?)?;
            }
            SolverKind::Pd => {
                positive("tau", need("tau", self.tau)?)?;
                positive("sigma", need("sigma", self.sigma)?)?;
            }
            SolverKind::Pnp => {
                positive("tau", need("tau", self.tau)?)?;
                positive("gamma", need("gamma", self.gamma)?)?;
            }
            SolverKind::Admm => {
                positive("rho", need("rho", self.rho)?)?;
            }
            SolverKind::Condat => {
                positive("tau", need("tau", self.tau)?)?;
                positive("sigma", need("sigma", self.sigma)?)?;
            }
        }
        let uses_averaging = matches!(
            self.solver,
            SolverKind::Fb | SolverKind::Pd | SolverKind::Pnp
        );
        if uses_averaging {
            match self.averaging {
                AveragingKind::Scalar => {
                    let l = need("lambda", self.lambda)?;
                    if !(l > 0.0 && l <= 1.0) {
                        return Err(format!("--lambda must be in (0, 1], got {l}"));
                    }
                }
                AveragingKind::SsnVariable => {
                    // The residual-map step: FB reuses gamma, pd/pnp reuse tau.
                    if self.solver == SolverKind::Fb {
                        need("gamma", self.gamma)?;
                    } else {
                        need("tau", self.tau)?;
                    }
                }
                AveragingKind::FixedHessian => {
                    if let Some(r) = self.rho {
                        positive("rho", r)?;
                    }
                }
            }
        }
        if self.experiment == Experiment::Custom && self.instance.is_none() {
            return Err("experiment custom requires --instance".into());
        }
        if !(self.band_eps > 0.0 && self.band_eps < 0.5) {
            return Err(format!("--band-eps must be in (0, 0.5), got {}", self.band_eps));
        }
        if self.max_iters == 0 {
            return Err("--max-iters must be at least 1".into());
        }
        if self.tol < 0.0 || !self.tol.is_finite() {
            return Err(format!("--tol must be nonnegative, got {}", self.tol));
        }
        Ok(())
    }

    /// The `[run]` section body of the metadata/config format.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("experiment".into(), self.experiment.to_string()),
            ("solver".into(), self.solver.to_string()),
            ("averaging".into(), self.averaging.to_string()),
        ];
        let mut opt = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                kv.push((name.into(), format!("{v:.17e}")));
            }
        };
        opt("lambda", self.lambda);
        opt("tau", self.tau);
        opt("gamma", self.gamma);
        opt("sigma", self.sigma);
        opt("rho", self.rho);
        opt("mu", self.mu);
        kv.push(("eps".into(), format!("{:.17e}", self.eps)));
        kv.push(("eps-reg".into(), format!("{:.17e}", self.eps_reg)));
        kv.push(("band-eps".into(), format!("{:.17e}", self.band_eps)));
        kv.push(("seed".into(), self.seed.to_string()));
        kv.push(("snr-db".into(), format!("{:.17e}", self.snr_db)));
        kv.push(("n".into(), self.n.to_string()));
        kv.push(("dict".into(), self.dict.to_string()));
        kv.push(("k-sparse".into(), self.k_sparse.to_string()));
        kv.push(("max-iters".into(), self.max_iters.to_string()));
        kv.push(("tol".into(), format!("{:.17e}", self.tol)));
        kv.push(("record-stride".into(), self.record_stride.to_string()));
        if let Some(p) = &self.instance {
            kv.push(("instance".into(), p.display().to_string()));
        }
        if let Some(p) = &self.reference {
            kv.push(("reference".into(), p.display().to_string()));
        }
        kv.push(("out".into(), self.output.display().to_string()));
        kv
    }

    /// Applies one `[run]` key. Unknown keys are rejected so typos do not
    /// silently fall back to defaults.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("bad value for {key}: {e}"))
        }
        match key {
            "experiment" => self.experiment = value.parse()?,
            "solver" => self.solver = value.parse()?,
            "averaging" => self.averaging = value.parse()?,
            "lambda" => self.lambda = Some(num(key, value)?),
            "tau" => self.tau = Some(num(key, value)?),
            "gamma" => self.gamma = Some(num(key, value)?),
            "sigma" => self.sigma = Some(num(key, value)?),
            "rho" => self.rho = Some(num(key, value)?),
            "mu" => self.mu = Some(num(key, value)?),
            "eps" => self.eps = num(key, value)?,
            "eps-reg" => self.eps_reg = num(key, value)?,
            "band-eps" => self.band_eps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "snr-db" => {
                self.snr_db = if value == "inf" {
                    f64::INFINITY
                } else {
                    num(key, value)?
                }
            }
            "n" => self.n = num(key, value)?,
            "dict" => self.dict = value.parse()?,
            "k-sparse" => self.k_sparse = num(key, value)?,
            "max-iters" => self.max_iters = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "record-stride" => self.record_stride = num(key, value)?,
            "instance" => self.instance = Some(PathBuf::from(value)),
            "reference" => self.reference = Some(PathBuf::from(value)),
            "out" => self.output = PathBuf::from(value),
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}

/// Parses the flat `key=value` format with `[section]` headers into
/// section -> ordered key/value list. Blank lines and `#` comments allowed.
pub fn parse_sections(text: &str) -> Result<BTreeMap<String, Vec<(String, String)>>, String> {
    let mut out: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut current = String::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            out.entry(current.clone()).or_default();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", ln + 1))?;
        if current.is_empty() {
            return Err(format!("line {}: key outside any [section]", ln + 1));
        }
        out.get_mut(&current)
            .unwrap()
            .push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Reads a config (or run-metadata) file; only the `[run]` section is
/// interpreted, so metadata files replay as-is.
pub fn read_config_file(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let sections = parse_sections(&text)?;
    let run = sections
        .get("run")
        .ok_or_else(|| format!("config {} has no [run] section", path.display()))?;
    let mut cfg = RunConfig::default();
    for (k, v) in run {
        cfg.apply(k, v)?;
    }
    Ok(cfg)
}
