//! Experiment specification files.
//!
//! A spec is plain text with one `key = value` pair per line. Blank lines and
//! lines starting with `#` are ignored; unknown or repeated keys are errors.
//! See the README for the full grammar.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use sylgraph_core::GraphSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    /// 1-based line of the offending entry, when there is one.
    pub line: Option<usize>,
    pub message: String,
}

impl SpecError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "spec line {l}: {}", self.message),
            None => write!(f, "spec: {}", self.message),
        }
    }
}

impl std::error::Error for SpecError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Convergence,
    LambdaSweep,
    Mismatch,
    FitExternal,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Convergence => "convergence",
            Kind::LambdaSweep => "lambda_sweep",
            Kind::Mismatch => "mismatch",
            Kind::FitExternal => "fit_external",
        }
    }
}

/// Precision structure used to draw synthetic data from the mode factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `(sum Psi_k)^2`, the model the estimator assumes.
    SquaredKs,
    /// Kronecker sum `sum Psi_k`.
    Ks,
    /// Kronecker product `Psi_K (x) ... (x) Psi_1`.
    Kp,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::SquaredKs => "squared_ks",
            Generator::Ks => "ks",
            Generator::Kp => "kp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub modes: Vec<GraphSpec>,
    pub n_obs: usize,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub max_sweeps: usize,
    pub generator: Generator,
    pub standardize: bool,
    pub input: Option<PathBuf>,
    pub sparsity: f64,
    pub output: PathBuf,
}

const KEYS: &[&str] = &[
    "kind",
    "modes",
    "n_obs",
    "lambdas",
    "seeds",
    "tol",
    "max_sweeps",
    "generator",
    "standardize",
    "input",
    "sparsity",
    "output",
];

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::global(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::parse(&text)?;
        // relative input paths are taken from the spec's directory
        if let (Some(input), Some(dir)) = (&spec.input, path.parent()) {
            if input.is_relative() {
                spec.input = Some(dir.join(input));
            }
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| SpecError::at(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(SpecError::at(line, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(SpecError::at(line, format!("empty value for `{key}`")));
            }
            if entries.insert(key, (line, value)).is_some() {
                return Err(SpecError::at(line, format!("`{key}` given twice")));
            }
        }

        let get = |key: &str| entries.get(key).copied();
        let kind = match get("kind") {
            Some((line, v)) => parse_kind(v).map_err(|m| SpecError::at(line, m))?,
            None => return Err(SpecError::global("missing `kind`")),
        };
        let modes = match get("modes") {
            Some((line, v)) => parse_modes(v).map_err(|m| SpecError::at(line, m))?,
            None => Vec::new(),
        };
        let n_obs = match get("n_obs") {
            Some((line, v)) => parse_positive(v).map_err(|m| SpecError::at(line, m))?,
            None => 1,
        };
        let lambdas = match get("lambdas") {
            Some((line, v)) => parse_lambdas(v).map_err(|m| SpecError::at(line, m))?,
            None => return Err(SpecError::global("missing `lambdas`")),
        };
        let seeds = match get("seeds") {
            Some((line, v)) => parse_seeds(v).map_err(|m| SpecError::at(line, m))?,
            None => vec![0],
        };
        let tol = match get("tol") {
            Some((line, v)) => parse_f64(v)
                .and_then(|t| {
                    if t > 0.0 {
                        Ok(t)
                    } else {
                        Err(format!("tol {t} must be > 0"))
                    }
                })
                .map_err(|m| SpecError::at(line, m))?,
            None => 1e-6,
        };
        let max_sweeps = match get("max_sweeps") {
            Some((line, v)) => parse_positive(v).map_err(|m| SpecError::at(line, m))?,
            None => 500,
        };
        let generator = match get("generator") {
            Some((line, v)) => parse_generator(v).map_err(|m| SpecError::at(line, m))?,
            None => Generator::SquaredKs,
        };
        let standardize = match get("standardize") {
            Some((line, v)) => match v {
                "true" => true,
                "false" => false,
                _ => {
                    return Err(SpecError::at(
                        line,
                        format!("expected true or false, got `{v}`"),
                    ))
                }
            },
            None => true,
        };
        let input = get("input").map(|(_, v)| PathBuf::from(v));
        let sparsity = match get("sparsity") {
            Some((line, v)) => parse_f64(v)
                .and_then(|s| {
                    if (0.0..=1.0).contains(&s) {
                        Ok(s)
                    } else {
                        Err(format!("sparsity {s} outside [0, 1]"))
                    }
                })
                .map_err(|m| SpecError::at(line, m))?,
            None => 0.05,
        };
        let output = get("output").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));

        let spec = Self {
            kind,
            modes,
            n_obs,
            lambdas,
            seeds,
            tol,
            max_sweeps,
            generator,
            standardize,
            input,
            sparsity,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SpecError> {
        match self.kind {
            Kind::FitExternal => {
                if self.input.is_none() {
                    return Err(SpecError::global("fit_external needs `input`"));
                }
                if self.lambdas.len() != 1 {
                    return Err(SpecError::global("fit_external takes exactly one lambda"));
                }
            }
            _ => {
                if self.modes.is_empty() {
                    return Err(SpecError::global(format!(
                        "{} needs `modes`",
                        self.kind.name()
                    )));
                }
            }
        }
        if self.kind == Kind::Convergence && self.lambdas.len() != 1 {
            return Err(SpecError::global("convergence takes exactly one lambda"));
        }
        for g in &self.modes {
            g.generate()
                .map_err(|e| SpecError::global(format!("invalid mode {g:?}: {e}")))?;
        }
        Ok(())
    }

    /// Shape of one observation.
    pub fn shape(&self) -> Vec<usize> {
        self.modes.iter().map(GraphSpec::mode_size).collect()
    }

    /// Normalized text form: one `key = value` per line in a fixed order, with
    /// every default spelled out. Two specs that parse to the same experiment
    /// have the same canonical form.
    pub fn canonical(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("kind", self.kind.name().into());
        put("modes", join(self.modes.iter().map(format_mode).collect()));
        put("n_obs", self.n_obs.to_string());
        put(
            "lambdas",
            join(self.lambdas.iter().map(|l| format!("{l:e}")).collect()),
        );
        put(
            "seeds",
            join(self.seeds.iter().map(u64::to_string).collect()),
        );
        put("tol", format!("{:e}", self.tol));
        put("max_sweeps", self.max_sweeps.to_string());
        put("generator", self.generator.name().into());
        put("standardize", self.standardize.to_string());
        if let Some(input) = &self.input {
            put("input", input.display().to_string());
        }
        put("sparsity", format!("{:e}", self.sparsity));
        out
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded. The output
    /// directory is not part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn format_mode(g: &GraphSpec) -> String {
    match *g {
        GraphSpec::Ar1 { m, rho } => format!("ar1:{m}:{rho}"),
        GraphSpec::StarBlock { m, block, rho } => format!("sb:{m}:{block}:{rho}"),
        GraphSpec::ErdosRenyi { m, edges, seed } => format!("er:{m}:{edges}:{seed}"),
    }
}

fn parse_kind(v: &str) -> Result<Kind, String> {
    Ok(match v {
        "convergence" => Kind::Convergence,
        "lambda_sweep" => Kind::LambdaSweep,
        "mismatch" => Kind::Mismatch,
        "fit_external" => Kind::FitExternal,
        _ => return Err(format!("unknown kind `{v}`")),
    })
}

fn parse_generator(v: &str) -> Result<Generator, String> {
    Ok(match v {
        "squared_ks" | "native" => Generator::SquaredKs,
        "ks" => Generator::Ks,
        "kp" => Generator::Kp,
        _ => return Err(format!("unknown generator `{v}`")),
    })
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !x.is_finite() {
        return Err(format!("`{v}` is not finite"));
    }
    Ok(x)
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_positive(v: &str) -> Result<usize, String> {
    match parse_usize(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn parse_modes(v: &str) -> Result<Vec<GraphSpec>, String> {
    v.split(',').map(|item| parse_mode(item.trim())).collect()
}

fn parse_mode(item: &str) -> Result<GraphSpec, String> {
    let parts: Vec<&str> = item.split(':').collect();
    match parts.as_slice() {
        ["ar1", m, rho] => Ok(GraphSpec::Ar1 {
            m: parse_positive(m)?,
            rho: parse_f64(rho)?,
        }),
        ["sb", m, block, rho] => Ok(GraphSpec::StarBlock {
            m: parse_positive(m)?,
            block: parse_positive(block)?,
            rho: parse_f64(rho)?,
        }),
        ["er", m, edges] => Ok(GraphSpec::ErdosRenyi {
            m: parse_positive(m)?,
            edges: parse_usize(edges)?,
            seed: 0,
        }),
        ["er", m, edges, seed] => Ok(GraphSpec::ErdosRenyi {
            m: parse_positive(m)?,
            edges: parse_usize(edges)?,
            seed: seed.parse().map_err(|_| format!("bad seed `{seed}`"))?,
        }),
        _ => Err(format!(
            "bad mode `{item}`; expected ar1:m:rho, sb:m:block:rho or er:m:edges[:seed]"
        )),
    }
}

fn parse_lambdas(v: &str) -> Result<Vec<f64>, String> {
    let out = if let Some(rest) = v.strip_prefix("logspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err("expected logspace:lo_exp:hi_exp:count".into());
        };
        let (lo, hi, count) = (parse_f64(lo)?, parse_f64(hi)?, parse_positive(count)?);
        if count == 1 {
            vec![10f64.powf(lo)]
        } else {
            (0..count)
                .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
                .collect()
        }
    } else {
        v.split(',')
            .map(|s| parse_f64(s.trim()))
            .collect::<Result<Vec<_>, _>>()?
    };
    if let Some(l) = out.iter().find(|l| **l < 0.0) {
        return Err(format!("lambda {l} is negative"));
    }
    Ok(out)
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let bad = |s: &str| format!("bad seed `{s}`");
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(a))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(b))?;
        if a >= b {
            return Err(format!("empty seed range {v}"));
        }
        return Ok((a..b).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(s)))
        .collect()
}
