//! TOML problem files.
//!
//! A file either describes a problem directly:
//!
//! ```toml
//! space = "banach"          # or "hilbert" together with `spectrum`
//! norm = "l2"
//! B = [["-1", "cos(t)"], ["0", "-2"]]
//! alpha = "exp(-t)"
//! alpha_decay = { kind = "exponential", rate = 1.0 }
//! beta = "0"
//! p = 2
//! u0 = [1e-3, 0.0]
//! f = ["0", "0"]
//! T_max = 20
//!
//! [run]
//! theorems = ["A1-T2.1", "C2.5"]
//! tol = 1e-8
//! ```
//!
//! or names a built-in scenario with `scenario = "example2"` and an
//! optional `[overrides]` table taking the same function keys.

use std::ops::Range;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::coeffs::{DecayClass, MatrixFunction, ProblemSpec, ScalarFunction, Space};
use crate::linalg::NormKind;
use crate::scenarios::{Overrides, ScenarioId};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub theorems: Option<Vec<String>>,
    pub tmax: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub formats: Option<Vec<String>>,
    pub out: Option<String>,
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Spec(Box<ProblemSpec>),
    Scenario { id: ScenarioId, overrides: Overrides },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub problem: Problem,
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FnSrc {
    Number(f64),
    Expr(String),
    Table { t: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverrides {
    alpha: Option<Spanned<FnSrc>>,
    alpha_decay: Option<DecayClass>,
    beta: Option<Spanned<FnSrc>>,
    beta_decay: Option<DecayClass>,
    f: Option<Vec<Spanned<FnSrc>>>,
    p: Option<f64>,
    u0: Option<Vec<f64>>,
    #[serde(rename = "T_max")]
    t_max: Option<f64>,
    #[serde(rename = "T")]
    t_matrix: Option<[[f64; 2]; 2]>,
    spectrum: Option<Vec<f64>>,
    gamma: Option<Spanned<FnSrc>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Spanned<String>>,
    overrides: Option<RawOverrides>,
    space: Option<Spanned<String>>,
    norm: Option<Spanned<String>>,
    dim: Option<Spanned<usize>>,
    spectrum: Option<Vec<f64>>,
    #[serde(rename = "B")]
    b: Option<Spanned<Vec<Vec<Spanned<FnSrc>>>>>,
    alpha: Option<Spanned<FnSrc>>,
    alpha_decay: Option<DecayClass>,
    beta: Option<Spanned<FnSrc>>,
    beta_decay: Option<DecayClass>,
    p: Option<f64>,
    u0: Option<Spanned<Vec<f64>>>,
    f: Option<Spanned<Vec<Spanned<FnSrc>>>>,
    #[serde(rename = "T_max")]
    t_max: Option<f64>,
    #[serde(default)]
    run: RunSection,
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn at(&self, offset: usize, message: impl Into<String>) -> ConfigError {
        let offset = offset.min(self.src.len());
        let before = &self.src[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        ConfigError {
            line,
            column: self.src[line_start..offset].chars().count() + 1,
            message: message.into(),
        }
    }

    fn span(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        self.at(span.start, message)
    }

    fn top(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: 1,
            column: 1,
            message: message.into(),
        }
    }

    fn function(&self, src: &Spanned<FnSrc>, what: &str) -> Result<ScalarFunction, ConfigError> {
        let span = src.span();
        match src.get_ref() {
            FnSrc::Number(c) => Ok(ScalarFunction::constant(*c)),
            // Skip the opening quote so expression columns land on the text.
            FnSrc::Expr(s) => ScalarFunction::parse(s)
                .map_err(|e| self.at(span.start + e.column, format!("{what}: {}", e.message))),
            FnSrc::Table { t, v } => {
                ScalarFunction::tabulated(t.clone(), v.clone()).map_err(|e| self.span(span, format!("{what}: {e}")))
            }
        }
    }

    fn with_decay(
        &self,
        src: &Spanned<FnSrc>,
        decay: Option<DecayClass>,
        what: &str,
    ) -> Result<ScalarFunction, ConfigError> {
        let f = self.function(src, what)?;
        Ok(match decay {
            Some(d) => f.with_decay(d),
            None => f,
        })
    }
}

fn toml_error(src: &str, e: toml::de::Error) -> ConfigError {
    let ctx = Ctx { src };
    match e.span() {
        Some(span) => ctx.span(span, e.message().to_string()),
        None => ctx.top(e.message().to_string()),
    }
}

/// Parses a problem file. Errors carry the 1-based line and column of the
/// offending value.
pub fn parse_config(src: &str) -> Result<Config, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    let ctx = Ctx { src };
    let problem = match &raw.scenario {
        Some(name) => scenario_problem(&ctx, &raw, name)?,
        None => Problem::Spec(Box::new(spec_problem(&ctx, &raw)?)),
    };
    Ok(Config { problem, run: raw.run })
}

fn scenario_problem(ctx: &Ctx, raw: &RawConfig, name: &Spanned<String>) -> Result<Problem, ConfigError> {
    if raw.b.is_some() || raw.alpha.is_some() || raw.u0.is_some() {
        return Err(ctx.span(name.span(), "a scenario file cannot also define B, alpha or u0; use [overrides]"));
    }
    let id: ScenarioId = name.get_ref().parse().map_err(|e: String| ctx.span(name.span(), e))?;
    let mut overrides = Overrides::default();
    if let Some(o) = &raw.overrides {
        if let Some(a) = &o.alpha {
            overrides.alpha = Some(ctx.with_decay(a, o.alpha_decay, "alpha")?);
        }
        if let Some(b) = &o.beta {
            overrides.beta = Some(ctx.with_decay(b, o.beta_decay, "beta")?);
        }
        if let Some(f) = &o.f {
            overrides.forcing = Some(f.iter().map(|x| ctx.function(x, "f")).collect::<Result<_, _>>()?);
        }
        if let Some(g) = &o.gamma {
            overrides.gamma = Some(ctx.function(g, "gamma")?);
        }
        overrides.p = o.p;
        overrides.u0 = o.u0.clone();
        overrides.t_max = o.t_max;
        overrides.t_matrix = o.t_matrix;
        overrides.spectrum = o.spectrum.clone();
    }
    Ok(Problem::Scenario { id, overrides })
}

fn spec_problem(ctx: &Ctx, raw: &RawConfig) -> Result<ProblemSpec, ConfigError> {
    let b_src = raw.b.as_ref().ok_or_else(|| ctx.top("missing key 'B' (or 'scenario')"))?;
    let rows = b_src.get_ref();
    let n = rows.len();
    if let Some(d) = &raw.dim {
        if *d.get_ref() != n {
            return Err(ctx.span(d.span(), format!("dim = {} but B has {n} rows", d.get_ref())));
        }
    }
    let mut entries = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ctx.span(b_src.span(), format!("B row {i} has {} entries, expected {n}", row.len())));
        }
        for (j, e) in row.iter().enumerate() {
            entries.push(ctx.function(e, &format!("B[{i}][{j}]"))?);
        }
    }
    let b = MatrixFunction::new(n, entries).map_err(|e| ctx.span(b_src.span(), e.to_string()))?;

    let alpha = match &raw.alpha {
        Some(a) => ctx.with_decay(a, raw.alpha_decay, "alpha")?,
        None => return Err(ctx.top("missing key 'alpha'")),
    };
    let p = raw.p.ok_or_else(|| ctx.top("missing key 'p'"))?;
    let t_max = raw.t_max.ok_or_else(|| ctx.top("missing key 'T_max'"))?;
    let u0_src = raw.u0.as_ref().ok_or_else(|| ctx.top("missing key 'u0'"))?;

    let space = match raw.space.as_ref().map(|s| (s.get_ref().as_str(), s.span())) {
        None | Some(("banach", _)) => {
            let norm = match &raw.norm {
                Some(s) => NormKind::parse(s.get_ref())
                    .ok_or_else(|| ctx.span(s.span(), format!("unknown norm '{}' (l2, l1, linf)", s.get_ref())))?,
                None => NormKind::L2,
            };
            if raw.spectrum.is_some() {
                return Err(ctx.top("'spectrum' requires space = \"hilbert\""));
            }
            Space::BanachFinite { norm }
        }
        Some(("hilbert", span)) => {
            let spectrum = raw
                .spectrum
                .clone()
                .ok_or_else(|| ctx.span(span, "space = \"hilbert\" needs 'spectrum'"))?;
            Space::HilbertSplit { spectrum }
        }
        Some((other, span)) => return Err(ctx.span(span, format!("unknown space '{other}' (banach, hilbert)"))),
    };

    let mut spec = ProblemSpec::new(b, alpha, p, u0_src.get_ref().clone(), t_max).with_space(space);
    if spec.u0.len() != spec.state_dim() {
        return Err(ctx.span(
            u0_src.span(),
            format!("u0 has {} entries, expected {}", spec.u0.len(), spec.state_dim()),
        ));
    }
    if let Some(b) = &raw.beta {
        spec = spec.with_beta(ctx.with_decay(b, raw.beta_decay, "beta")?);
    }
    if let Some(f) = &raw.f {
        let forcing: Vec<_> = f.get_ref().iter().map(|x| ctx.function(x, "f")).collect::<Result<_, _>>()?;
        if forcing.len() != spec.state_dim() {
            return Err(ctx.span(
                f.span(),
                format!("f has {} entries, expected {}", forcing.len(), spec.state_dim()),
            ));
        }
        spec = spec.with_forcing(forcing);
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
space = "banach"
B = [["-1", "0"], ["cos(t)", "-2"]]
alpha = "exp(-t)"
alpha_decay = { kind = "exponential", rate = 1.0 }
p = 2
u0 = [1e-3, 0.0]
T_max = 10

[run]
theorems = ["T2.1"]
tol = 1e-9
"#;

    #[test]
    fn parses_direct_problem() {
        let c = parse_config(EXAMPLE).unwrap();
        let Problem::Spec(spec) = c.problem else { panic!() };
        assert_eq!(spec.b.dim(), 2);
        assert_eq!(spec.b.entry(1, 0).eval(0.0), 1.0);
        assert_eq!(spec.alpha.decay(), DecayClass::Exponential { rate: 1.0 });
        assert_eq!(c.run.tol, Some(1e-9));
        assert_eq!(c.run.theorems.unwrap(), vec!["T2.1"]);
    }

    #[test]
    fn expression_errors_point_into_the_string() {
        let src = "B = [[\"-1 + \"]]\nalpha = 1\np = 2\nu0 = [1]\nT_max = 1\n";
        let e = parse_config(src).unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.column > 7, "{e}");
        let src = "B = [[\"-1\"]]\nalpha = \"exp(-t\"\np = 2\nu0 = [1]\nT_max = 1\n";
        let e = parse_config(src).unwrap_err();
        assert_eq!(e.line, 2, "{e}");
    }

    #[test]
    fn toml_errors_have_positions() {
        let e = parse_config("B = [[\"1\"]]\np = = 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_config("B = [[\"1\"]]\nbogus = 3\n").unwrap_err();
        assert_eq!(e.line, 2, "{e}");
    }

    #[test]
    fn dimension_checks() {
        let src = "B = [[\"-1\", \"0\"], [\"0\", \"-1\"]]\nalpha = 1\np = 2\nu0 = [1]\nT_max = 1\n";
        let e = parse_config(src).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("u0"));
    }

    #[test]
    fn scenario_with_overrides() {
        let src = "scenario = \"example1\"\n[overrides]\nu0 = [1e-4, 0]\nalpha = \"exp(-2*t)\"\n";
        let c = parse_config(src).unwrap();
        let Problem::Scenario { id, overrides } = c.problem else { panic!() };
        assert_eq!(id, ScenarioId::Example1);
        assert_eq!(overrides.u0, Some(vec![1e-4, 0.0]));
        assert!(parse_config("scenario = \"nope\"\n").is_err());
    }

    #[test]
    fn hilbert_space() {
        let src = "space = \"hilbert\"\nspectrum = [-1, -4]\nB = [[\"0\"]]\nalpha = 0\np = 2\nu0 = [1, 0]\nT_max = 1\n";
        let Problem::Spec(spec) = parse_config(src).unwrap().problem else { panic!() };
        assert!(spec.space.is_hilbert());
        assert_eq!(spec.state_dim(), 2);
    }
}
