use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use evocert::certificates::{Analysis, CertOptions, Certificate, Envelope, TheoremId, Verdict};
use evocert::coeffs::{validate_spec, ProblemSpec, ValidationReport};
use evocert::config::{parse_config, Problem, RunSection};
use evocert::par::Exec;
use evocert::propagator::{propagate, PropagatorTable};
use evocert::report::to_json;
use evocert::scenarios::{self, OutcomeCheck, Overrides, Scenario, ScenarioId};
use evocert::simulate::{
    integrate, lyapunov_sample, verify_envelope, EnvelopeReport, LyapunovOptions, SolverMeta, StabilityReport,
    Trajectory, TrajectoryStatus,
};

const DEFAULT_TOL: f64 = 1e-8;
const DEFAULT_OUT: &str = "evocert-out";
/// A blow-up certificate is confirmed when the simulation escapes before
/// `t0·BLOWUP_SLACK`.
const BLOWUP_SLACK: f64 = 1.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone)]
pub enum Input {
    File(PathBuf),
    Scenario(String),
}

/// Command-line settings; unset values fall back to the file's `[run]`
/// table, then to defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Input,
    pub theorems: Vec<String>,
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub sequential: bool,
}

pub struct Outcome {
    pub summary: String,
    pub soundness_failures: Vec<String>,
}

#[derive(Serialize)]
struct Settings {
    t_max: f64,
    tol: f64,
    seed: u64,
    trials: Option<usize>,
    theorems: Vec<TheoremId>,
    epsilon: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Serialize)]
struct PropagatorSummary {
    grid_points: usize,
    /// `max ‖U·U⁻¹ − I‖` over the grid.
    consistency: f64,
    /// Relative gap between `det U` and `exp ∫ tr B`.
    liouville_deviation: Option<f64>,
    sup_norm_u: f64,
}

#[derive(Serialize)]
struct ScenarioSection {
    id: ScenarioId,
    oracle_deviation: Option<f64>,
    expectations: Vec<OutcomeCheck>,
    mismatches: usize,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct TrajectorySummary {
    status: TrajectoryStatus,
    samples: usize,
    sup_norm: f64,
    meta: SolverMeta,
}

#[derive(Serialize)]
struct StabilitySection {
    theorem: TheoremId,
    report: StabilityReport,
}

#[derive(Serialize)]
struct BlowupCheck {
    t0: Option<f64>,
    t_escape: Option<f64>,
    consistent: bool,
}

#[derive(Serialize)]
struct Report {
    tool: &'static str,
    version: &'static str,
    input: String,
    settings: Settings,
    validation: ValidationReport,
    propagator: PropagatorSummary,
    scenario: Option<ScenarioSection>,
    certificates: Vec<Certificate>,
    trajectory: TrajectorySummary,
    envelope_checks: Vec<EnvelopeReport>,
    stability_samples: Vec<StabilitySection>,
    blowup: Option<BlowupCheck>,
    soundness_failures: Vec<String>,
}

struct Loaded {
    label: String,
    spec: ProblemSpec,
    scenario: Option<Scenario>,
    run: RunSection,
}

fn load(input: &Input, t_max: Option<f64>) -> anyhow::Result<Loaded> {
    let (label, problem, run) = match input {
        Input::File(path) => {
            let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = parse_config(&src).with_context(|| format!("parsing {}", path.display()))?;
            (path.display().to_string(), cfg.problem, cfg.run)
        }
        Input::Scenario(name) => {
            let id: ScenarioId = name.parse().map_err(anyhow::Error::msg)?;
            (
                format!("scenario:{id}"),
                Problem::Scenario {
                    id,
                    overrides: Overrides::default(),
                },
                RunSection::default(),
            )
        }
    };
    let t_max = t_max.or(run.tmax);
    match problem {
        Problem::Spec(spec) => {
            let mut spec = *spec;
            if let Some(t) = t_max {
                spec = spec.with_t_max(t);
            }
            Ok(Loaded {
                label,
                spec,
                scenario: None,
                run,
            })
        }
        Problem::Scenario { id, mut overrides } => {
            if t_max.is_some() {
                overrides.t_max = t_max;
            }
            let sc = scenarios::build(id, &overrides).with_context(|| format!("building scenario {id}"))?;
            Ok(Loaded {
                label,
                spec: sc.spec.clone(),
                scenario: Some(sc),
                run,
            })
        }
    }
}

fn resolve_theorems(names: &[String], spec: &ProblemSpec) -> anyhow::Result<Vec<TheoremId>> {
    if names.is_empty() {
        return Ok(TheoremId::defaults_for(spec));
    }
    let mut ids = Vec::new();
    for name in names {
        let id: TheoremId = name.parse().map_err(anyhow::Error::msg)?;
        if !id.applies_to(spec) {
            bail!(
                "theorem {id} does not apply to this problem ({})",
                if spec.space.is_hilbert() { "split Hilbert space" } else { "Banach space" }
            );
        }
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    Ok(ids)
}

fn liouville(spec: &ProblemSpec, table: &PropagatorTable) -> Option<f64> {
    table.liouville_deviation(&spec.b, 200).ok()
}

fn envelope_column(cert: &Certificate, traj: &Trajectory, table: &PropagatorTable) -> Option<Vec<f64>> {
    let env = cert.envelope.as_ref()?;
    traj.samples
        .iter()
        .map(|s| env.eval(table, s.t.min(table.t_max())).ok())
        .collect()
}

pub fn run(cfg: RunConfig) -> anyhow::Result<Outcome> {
    let loaded = load(&cfg.input, cfg.t_max)?;
    let spec = &loaded.spec;
    let run = &loaded.run;
    let tol = cfg.tol.or(run.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        bail!("tol must lie in (0, 1), got {tol}");
    }
    let seed = cfg.seed.or(run.seed).unwrap_or(0);
    let trials = cfg.trials.or(run.trials);
    let theorem_names = if cfg.theorems.is_empty() {
        run.theorems.clone().unwrap_or_default()
    } else {
        cfg.theorems.clone()
    };
    let formats = if !cfg.formats.is_empty() {
        cfg.formats.clone()
    } else if let Some(f) = &run.formats {
        f.iter()
            .map(|s| <Format as clap::ValueEnum>::from_str(s, true).map_err(anyhow::Error::msg))
            .collect::<anyhow::Result<_>>()?
    } else {
        vec![Format::Json, Format::Csv, Format::Text]
    };
    let out_dir = cfg
        .output_dir
        .clone()
        .or_else(|| run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let exec = if cfg.sequential { Exec::Sequential } else { Exec::default() };

    let validation = validate_spec(spec)?;
    if !validation.usable() {
        let failed: Vec<String> = validation.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        bail!("problem validation failed:\n  {}", failed.join("\n  "));
    }
    let theorems = resolve_theorems(&theorem_names, spec)?;

    let table = propagate(&spec.b, spec.t_max, tol, spec.norm()).context("computing the propagator")?;
    let opts = CertOptions {
        epsilon: cfg.epsilon.or(run.epsilon),
        kappa: cfg.kappa.or(run.kappa),
        ..CertOptions::default()
    }
    .with_exec(exec);
    let analysis = Analysis::new(spec, &table, opts);
    let certs = analysis.check_all(&theorems);

    let traj = integrate(spec, spec.t_max, tol);
    let mut soundness = Vec::new();
    let mut envelope_checks = Vec::new();
    for c in certs.iter().filter(|c| c.is_certified() && c.envelope.is_some()) {
        match verify_envelope(&traj, c, &table) {
            Ok(r) => {
                if !r.pass {
                    soundness.push(format!(
                        "{}: trajectory leaves the envelope (ratio {:.6e} at t = {:.6e}{})",
                        c.theorem,
                        r.max_ratio,
                        r.argmax_t,
                        if r.blew_up { ", blew up" } else { "" }
                    ));
                }
                envelope_checks.push(r);
            }
            Err(e) => soundness.push(format!("{}: envelope check failed: {e}", c.theorem)),
        }
    }

    let mut stability_samples = Vec::new();
    if let Some(n) = trials {
        let lo = LyapunovOptions {
            trials: n,
            seed,
            tol,
            exec,
            ..LyapunovOptions::default()
        };
        let uniform = |c: &&Certificate| {
            c.is_certified() && matches!(c.envelope, Some(Envelope::Uniform { .. })) && c.delta.is_some() && c.budget.is_some()
        };
        for c in certs.iter().filter(uniform) {
            let report = lyapunov_sample(spec, &table, c, &lo)?;
            if report.violations > 0 {
                soundness.push(format!(
                    "{}: {} of {} stability trials exceeded ε",
                    c.theorem,
                    report.violations,
                    report.trials.len()
                ));
            }
            stability_samples.push(StabilitySection {
                theorem: c.theorem,
                report,
            });
        }
    }

    let blowup = certs.iter().find(|c| c.theorem == TheoremId::Blowup && c.verdict == Verdict::Certified).map(|c| {
        let t0 = c.constants.get("t0").copied();
        let t_escape = match traj.status {
            TrajectoryStatus::BlewUp { t_escape } => Some(t_escape),
            _ => None,
        };
        let consistent = match (t0, t_escape) {
            (Some(t0), Some(te)) => te < t0 * BLOWUP_SLACK,
            (None, None) => true,
            _ => false,
        };
        if !consistent {
            soundness.push(format!("BLOWUP: predicted t0 = {t0:?}, simulation escaped at {t_escape:?}"));
        }
        BlowupCheck { t0, t_escape, consistent }
    });

    let scenario = match &loaded.scenario {
        Some(sc) => {
            let oracle_deviation = match &sc.oracle {
                Some(o) => Some(scenarios::oracle_deviation(&table, o, spec.t_max.min(4.0 * std::f64::consts::PI), 20)?),
                None => None,
            };
            let expectations = scenarios::compare_expected(sc, &certs);
            Some(ScenarioSection {
                id: sc.id,
                oracle_deviation,
                mismatches: expectations.iter().filter(|o| !o.pass).count(),
                expectations,
                notes: sc.notes.clone(),
            })
        }
        None => None,
    };

    let report = Report {
        tool: "evocert",
        version: env!("CARGO_PKG_VERSION"),
        input: loaded.label.clone(),
        settings: Settings {
            t_max: spec.t_max,
            tol,
            seed,
            trials,
            theorems: theorems.clone(),
            epsilon: opts.epsilon,
            kappa: opts.kappa,
        },
        validation,
        propagator: PropagatorSummary {
            grid_points: table.grid().len(),
            consistency: table.consistency(),
            liouville_deviation: liouville(spec, &table),
            sup_norm_u: table.u_norms().iter().copied().fold(0.0, f64::max),
        },
        scenario,
        certificates: certs,
        trajectory: TrajectorySummary {
            status: traj.status.clone(),
            samples: traj.samples.len(),
            sup_norm: traj.sup_norm(),
            meta: traj.meta,
        },
        envelope_checks,
        stability_samples,
        blowup,
        soundness_failures: soundness,
    };

    let summary = summary(&report);
    write_outputs(&out_dir, &formats, &report, &traj, &table, &summary)?;
    Ok(Outcome {
        summary,
        soundness_failures: report.soundness_failures,
    })
}

fn write_outputs(
    dir: &Path,
    formats: &[Format],
    report: &Report,
    traj: &Trajectory,
    table: &PropagatorTable,
    summary: &str,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let p = dir.join(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    };
    if formats.contains(&Format::Json) {
        fs::write(dir.join("report.json"), to_json(report)?)?;
    }
    if formats.contains(&Format::Csv) {
        let envelopes: Vec<(String, Vec<f64>)> = report
            .certificates
            .iter()
            .filter(|c| c.is_certified())
            .filter_map(|c| envelope_column(c, traj, table).map(|v| (c.theorem.to_string(), v)))
            .collect();
        traj.write_csv(create("trajectory.csv")?, &envelopes)?;
        table.write_csv(create("propagator.csv")?)?;
    }
    if formats.contains(&Format::Text) {
        fs::write(dir.join("summary.txt"), summary)?;
    }
    Ok(())
}

/// Constants shown in the summary table, in order of preference.
const KEY_CONSTANTS: [&str; 10] = ["M", "epsilon", "delta", "omega", "Theta", "M3", "C2", "kappa", "t0", "J"];

fn summary(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "evocert {}  input: {}  T_max = {}  tol = {:e}", r.version, r.input, r.settings.t_max, r.settings.tol);
    let _ = writeln!(s, "{:<9} {:<14} {:<13} {:<12} constants", "theorem", "verdict", "tail", "margin");
    for c in &r.certificates {
        let margin = match c.checks.iter().map(|k| k.margin).reduce(f64::min) {
            Some(m) => format!("{m:.4e}"),
            None => "-".into(),
        };
        let consts: Vec<String> = KEY_CONSTANTS
            .iter()
            .filter_map(|k| c.constants.get(*k).map(|v| format!("{k}={v:.6}")))
            .collect();
        let _ = writeln!(
            s,
            "{:<9} {:<14} {:<13} {:<12} {}",
            c.theorem.as_str(),
            c.verdict.as_str(),
            c.tail_status.as_str(),
            margin,
            consts.join(" ")
        );
        if !c.is_certified() && !c.reason.is_empty() {
            let _ = writeln!(s, "          {}", c.reason);
        }
    }
    for e in &r.envelope_checks {
        let _ = writeln!(
            s,
            "envelope {}: max ratio {:.6e} at t = {:.4} ({})",
            e.theorem,
            e.max_ratio,
            e.argmax_t,
            if e.pass { "ok" } else { "VIOLATED" }
        );
    }
    for st in &r.stability_samples {
        let _ = writeln!(
            s,
            "stability {}: {} trials, {} violations, max sup‖u‖/ε = {:.4e}",
            st.theorem,
            st.report.trials.len(),
            st.report.violations,
            st.report.max_ratio
        );
    }
    if let Some(b) = &r.blowup {
        let _ = writeln!(s, "blow-up: t0 = {:?}, simulation escape at {:?}", b.t0, b.t_escape);
    }
    if let Some(sc) = &r.scenario {
        let _ = writeln!(s, "scenario {}: {} expectation mismatches", sc.id, sc.mismatches);
        if let Some(d) = sc.oracle_deviation {
            let _ = writeln!(s, "  propagator vs closed form: {d:.3e}");
        }
    }
    if r.soundness_failures.is_empty() {
        let _ = writeln!(s, "no soundness failures");
    } else {
        for f in &r.soundness_failures {
            let _ = writeln!(s, "SOUNDNESS FAILURE: {f}");
        }
    }
    s
}

pub fn list() {
    println!("scenarios:");
    for id in ScenarioId::ALL {
        println!("  {id}");
    }
    println!("theorems:");
    for id in TheoremId::ALL {
        println!("  {id}{}", if id.is_hilbert() { "  (split Hilbert space or l2)" } else { "" });
    }
}
