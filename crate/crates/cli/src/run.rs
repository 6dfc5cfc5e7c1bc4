use std::fs::File;
use std::io::Write;
use std::path::Path;

use dosebounds::asymptotics::{self, DgpSpec};
use dosebounds::dgp::{BuiltinDgp, SamplerRef};
use dosebounds::gamma::{self, GammaSchedule, ScheduleJson};
use dosebounds::pairs::{ingest_csv, CsvSchema, DoseLink, EffectModel, MatchedSample};
use dosebounds::scores::{score, Phi, ScoreKind, ScoreSpec};
use dosebounds::sharp::{
    self, confidence_region, worst_case_pvalue, CiReport, Method, SearchRegion, WorstCaseReport,
};
use dosebounds::sim::{self, PowerCurve, Scenario, SimConfig};
use dosebounds::weak_null::{weak_null_ci, weak_null_test, ObjectiveForm, SolverConfig};
use dosebounds::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::settings::{parse_grid, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Ci,
    DesignSens,
    Bahadur,
    WeakNull,
    PowerSim,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Ci => "ci",
            Command::DesignSens => "design-sens",
            Command::Bahadur => "bahadur",
            Command::WeakNull => "weak-null",
            Command::PowerSim => "power-sim",
        }
    }

    fn accepts(self) -> &'static [&'static str] {
        match self {
            Command::Analyze => &[
                "input",
                "test",
                "phi",
                "normalize_ranks",
                "link",
                "gamma_bar",
                "gamma",
                "gamma_file",
                "alpha",
                "seed",
                "reps",
                "method",
                "sensitivity_value",
            ],
            Command::Ci => &[
                "input",
                "test",
                "phi",
                "normalize_ranks",
                "link",
                "gamma_bar",
                "gamma",
                "gamma_file",
                "alpha",
                "seed",
                "reps",
                "method",
                "grid",
                "tol",
            ],
            Command::WeakNull => &[
                "input",
                "link",
                "gamma_bar",
                "gamma",
                "gamma_file",
                "alpha",
                "lambda0",
                "ci",
                "grid",
                "form",
                "node_limit",
            ],
            Command::DesignSens => &["dgp", "test", "phi", "link", "seed", "reps", "tol"],
            Command::Bahadur => &[
                "dgp",
                "test",
                "phi",
                "link",
                "gamma_bar",
                "seed",
                "reps",
                "tol",
            ],
            Command::PowerSim => &[
                "dgp",
                "test",
                "phi",
                "normalize_ranks",
                "link",
                "gamma_bar",
                "grid",
                "pairs",
                "alpha",
                "seed",
                "reps",
                "mc_reps",
                "method",
            ],
        }
    }
}

/// Top-level report envelope shared by every command.
#[derive(Debug, Serialize)]
pub struct Report<T> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub settings: Settings,
    pub result: T,
}

pub struct Outcome {
    pub report: String,
    pub summary: String,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Flags merged over the config file, after checking every flag applies.
pub fn resolve(cmd: Command, flags: Settings) -> Result<Settings> {
    let allowed = cmd.accepts();
    if let Some(k) = flags.set_keys().into_iter().find(|k| !allowed.contains(k)) {
        return Err(config(format!(
            "--{} does not apply to {}",
            k.replace('_', "-"),
            cmd.name()
        )));
    }
    if flags.csv.is_some() && !matches!(cmd, Command::Analyze | Command::PowerSim) {
        return Err(config(format!("--csv does not apply to {}", cmd.name())));
    }
    let base = match &flags.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Ok(flags.merged_over(base))
}

pub fn run(cmd: Command, s: Settings) -> Result<Outcome> {
    match cmd {
        Command::Analyze => analyze(s),
        Command::Ci => ci(s),
        Command::WeakNull => weak_null(s),
        Command::DesignSens => design_sens(s),
        Command::Bahadur => bahadur(s),
        Command::PowerSim => power_sim(s),
    }
}

fn render<T: Serialize>(
    cmd: Command,
    seed: Option<u64>,
    reps: Option<u64>,
    s: Settings,
    result: T,
) -> Result<String> {
    let report = Report {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        reps,
        settings: s,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    Ok(text)
}

fn sample(s: &Settings) -> Result<MatchedSample> {
    let path = s
        .input
        .as_ref()
        .ok_or_else(|| config("--input is required"))?;
    ingest_csv(path, &CsvSchema::default())
}

fn link(s: &Settings) -> Result<DoseLink> {
    match s.link.as_deref().unwrap_or("identity") {
        "identity" => Ok(DoseLink::Identity),
        "log" => Ok(DoseLink::Log),
        other => match other.strip_prefix("table:") {
            Some(path) => read_link_table(Path::new(path)),
            None => Err(Error::InvalidLink(format!("unknown link `{other}`"))),
        },
    }
}

fn read_link_table(path: &Path) -> Result<DoseLink> {
    #[derive(Deserialize)]
    struct Row {
        dose: f64,
        value: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let entries = rdr
        .deserialize::<Row>()
        .map(|r| r.map(|r| (r.dose, r.value)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    DoseLink::table(entries)
}

fn score_spec(name: &str, s: &Settings) -> Result<ScoreSpec> {
    let kind = ScoreKind::parse(name)?;
    let spec = match (kind, &s.phi) {
        (ScoreKind::General, Some(phi)) => ScoreSpec::general(Phi::named_or_expr(phi)?),
        (ScoreKind::General, None) => return Err(config("--test general needs --phi")),
        (_, Some(_)) => return Err(config("--phi only applies to --test general")),
        (_, None) => ScoreSpec::new(kind),
    };
    Ok(spec.normalized(s.normalize_ranks.unwrap_or(false)))
}

fn single_spec(s: &Settings) -> Result<ScoreSpec> {
    score_spec(s.test.as_deref().unwrap_or("wilcoxon"), s)
}

fn schedule(s: &Settings, sample: &MatchedSample, link: &DoseLink) -> Result<GammaSchedule> {
    let given = [
        s.gamma_bar.is_some(),
        s.gamma.is_some(),
        s.gamma_file.is_some(),
    ];
    if given.iter().filter(|g| **g).count() != 1 {
        return Err(config(
            "exactly one bias parameter must be given: --gamma-bar, --gamma or --gamma-file",
        ));
    }
    if let Some(gb) = s.gamma_bar {
        return gamma::schedule_from_gamma_bar(gb, sample, link, gamma::DEFAULT_TOL);
    }
    if let Some(g) = s.gamma {
        return gamma::schedule_from_gamma(g, sample, link);
    }
    let path = s.gamma_file.as_ref().expect("checked above");
    read_gamma_file(path, sample)
}

fn read_gamma_file(path: &Path, sample: &MatchedSample) -> Result<GammaSchedule> {
    #[derive(Deserialize)]
    struct Row {
        pair_id: String,
        #[serde(rename = "Gamma_i")]
        gamma_i: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let rows = rdr
        .deserialize::<Row>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut values = Vec::with_capacity(sample.len());
    let mut ids = Vec::with_capacity(sample.len());
    for p in sample.pairs() {
        let row = rows
            .iter()
            .find(|r| r.pair_id == p.pair_id)
            .ok_or_else(|| {
                config(format!(
                    "{}: no Gamma_i for pair `{}`",
                    path.display(),
                    p.pair_id
                ))
            })?;
        values.push(row.gamma_i);
        ids.push(p.pair_id.clone());
    }
    if rows.len() != sample.len() {
        return Err(Error::LengthMismatch(format!(
            "{} lists {} pairs, the sample has {}",
            path.display(),
            rows.len(),
            sample.len()
        )));
    }
    GammaSchedule::from_explicit(values, ids)
}

fn method(s: &Settings, pairs: usize, mc_reps: u64) -> Result<Method> {
    let mc = |seed: Option<u64>| -> Result<Method> {
        Ok(Method::MonteCarlo {
            reps: mc_reps,
            seed: seed.ok_or_else(|| config("--seed is required for Monte-Carlo p-values"))?,
        })
    };
    match s.method.as_deref().unwrap_or("auto") {
        "auto" => match Method::auto(pairs, s.seed)? {
            Method::MonteCarlo { seed, .. } => mc(Some(seed)),
            m => Ok(m),
        },
        "exact" => Ok(Method::Exact),
        "normal" => Ok(Method::Normal),
        "monte-carlo" => mc(s.seed),
        other => Err(config(format!("unknown method `{other}`"))),
    }
}

fn mc_provenance(m: Method) -> (Option<u64>, Option<u64>) {
    match m {
        Method::MonteCarlo { reps, seed } => (Some(seed), Some(reps)),
        _ => (None, None),
    }
}

fn alpha(s: &Settings) -> f64 {
    s.alpha.unwrap_or(0.05)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v}"))
}

#[derive(Debug, Serialize)]
struct AnalyzeResult {
    pairs: usize,
    test: String,
    link: DoseLink,
    worst_case: WorstCaseReport,
    schedule: ScheduleJson,
}

#[derive(Debug, Serialize)]
struct SensitivityValue {
    pairs: usize,
    test: String,
    link: DoseLink,
    alpha: f64,
    method: String,
    /// Greater-side p-value at Γ̄ = 1.
    p_at_one: f64,
    /// Largest Γ̄ at which the greater-side test rejects; `None` when it does
    /// not reject at Γ̄ = 1.
    gamma_bar: Option<f64>,
    /// The test still rejected at the largest Γ̄ tried.
    unbounded: bool,
    gamma_bar_max_tried: f64,
}

const SV_MAX: f64 = 1e6;
const SIM_MC_REPS: u64 = 10_000;

fn analyze(s: Settings) -> Result<Outcome> {
    let data = sample(&s)?;
    let link = link(&s)?;
    let spec = single_spec(&s)?;
    let m = method(&s, data.len(), s.reps.unwrap_or(sharp::DEFAULT_MC_REPS))?;
    let (seed, reps) = mc_provenance(m);
    let scored = score(&data, &spec)?;
    if s.sensitivity_value.unwrap_or(false) {
        if s.gamma_bar.is_some() || s.gamma.is_some() || s.gamma_file.is_some() {
            return Err(config(
                "--sensitivity-value searches over Γ̄ and takes no bias parameter",
            ));
        }
        let a = alpha(&s);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0,1), got {a}"
            )));
        }
        let p_at = |gb: f64| -> Result<f64> {
            let sched = gamma::schedule_from_gamma_bar(gb, &data, &link, gamma::DEFAULT_TOL)?;
            Ok(worst_case_pvalue(&scored, &sched, m)?.p_greater)
        };
        let p1 = p_at(1.0)?;
        let mut res = SensitivityValue {
            pairs: data.len(),
            test: spec.label(),
            link: link.clone(),
            alpha: a,
            method: m.name().to_string(),
            p_at_one: p1,
            gamma_bar: None,
            unbounded: false,
            gamma_bar_max_tried: 1.0,
        };
        if p1 <= a {
            let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
            loop {
                res.gamma_bar_max_tried = hi;
                match p_at(hi) {
                    Ok(p) if p > a => break,
                    Ok(_) if hi < SV_MAX => {
                        lo = hi;
                        hi *= 2.0;
                    }
                    Ok(_) | Err(Error::Range(_)) => {
                        res.unbounded = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if !res.unbounded {
                for _ in 0..200 {
                    if hi / lo - 1.0 < 1e-10 {
                        break;
                    }
                    let mid = (lo * hi).sqrt();
                    if p_at(mid)? <= a {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            res.gamma_bar = Some(lo);
        }
        let summary = format!(
            "analyze: {} pairs, test {}, sensitivity value {}{}",
            res.pairs,
            res.test,
            fmt_opt(res.gamma_bar),
            if res.unbounded {
                " (still rejecting at the search limit)"
            } else {
                ""
            }
        );
        if let Some(path) = &s.csv {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record([
                "test",
                "alpha",
                "method",
                "p_at_one",
                "sensitivity_value",
                "unbounded",
            ])?;
            w.write_record([
                res.test.clone(),
                a.to_string(),
                res.method.clone(),
                p1.to_string(),
                res.gamma_bar.map(|g| g.to_string()).unwrap_or_default(),
                res.unbounded.to_string(),
            ])?;
            w.flush()?;
        }
        return Ok(Outcome {
            report: render(Command::Analyze, seed, reps, s, res)?,
            summary,
        });
    }
    let sched = schedule(&s, &data, &link)?;
    let wc = worst_case_pvalue(&scored, &sched, m)?;
    if let Some(path) = &s.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "test",
            "gamma_bar",
            "method",
            "t_obs",
            "p_greater",
            "p_less",
            "p_two_sided",
        ])?;
        w.write_record([
            spec.label(),
            wc.gamma_bar.to_string(),
            wc.method.clone(),
            wc.t_obs.to_string(),
            wc.p_greater.to_string(),
            wc.p_less.to_string(),
            wc.p_two_sided.to_string(),
        ])?;
        w.flush()?;
    }
    let summary = format!(
        "analyze: {} pairs, test {}, gamma_bar {}, method {}: p_greater {}, p_less {}, p_two_sided {}",
        data.len(),
        spec.label(),
        wc.gamma_bar,
        wc.method,
        wc.p_greater,
        wc.p_less,
        wc.p_two_sided
    );
    let result = AnalyzeResult {
        pairs: data.len(),
        test: spec.label(),
        link,
        schedule: sched.to_json(),
        worst_case: wc,
    };
    Ok(Outcome {
        report: render(Command::Analyze, seed, reps, s, result)?,
        summary,
    })
}

#[derive(Debug, Serialize)]
struct CiResult {
    pairs: usize,
    test: String,
    link: DoseLink,
    gamma: Option<f64>,
    region: CiReport,
}

fn ci(s: Settings) -> Result<Outcome> {
    let data = sample(&s)?;
    let link = link(&s)?;
    let spec = single_spec(&s)?;
    let m = method(&s, data.len(), s.reps.unwrap_or(sharp::DEFAULT_MC_REPS))?;
    let (seed, reps) = mc_provenance(m);
    let sched = schedule(&s, &data, &link)?;
    let region = match (&s.grid, s.tol) {
        (Some(_), Some(_)) => {
            return Err(config(
                "--tol applies only to the automatic search, not to --grid",
            ))
        }
        (Some(g), None) => {
            SearchRegion::Grid(parse_grid(g)?.into_iter().map(|b| vec![b]).collect())
        }
        (None, Some(tol)) => SearchRegion::Auto {
            tol,
            coarse: match SearchRegion::auto() {
                SearchRegion::Auto { coarse, .. } => coarse,
                SearchRegion::Grid(_) => unreachable!(),
            },
        },
        (None, None) => SearchRegion::auto(),
    };
    let model = EffectModel::Constant { beta: 0.0 };
    let rep = confidence_region(&data, &model, &spec, &sched, alpha(&s), m, &region)?;
    let summary = format!(
        "ci: {} pairs, test {}, gamma_bar {}, {}% interval for beta {}{}",
        data.len(),
        spec.label(),
        rep.gamma_bar,
        100.0 * (1.0 - rep.alpha),
        match rep.interval {
            Some([a, b]) => format!("[{a}, {b}]"),
            None => "empty".to_string(),
        },
        if rep.contiguous {
            ""
        } else {
            " (accepted set not contiguous)"
        }
    );
    let result = CiResult {
        pairs: data.len(),
        test: spec.label(),
        link,
        gamma: sched.gamma(),
        region: rep,
    };
    Ok(Outcome {
        report: render(Command::Ci, seed, reps, s, result)?,
        summary,
    })
}

fn weak_null(s: Settings) -> Result<Outcome> {
    let data = sample(&s)?;
    let link = link(&s)?;
    let sched = schedule(&s, &data, &link)?;
    let mut cfg = SolverConfig::default();
    match s.form.as_deref() {
        None | Some("expectation") => cfg.form = ObjectiveForm::Expectation,
        Some("as-printed") => cfg.form = ObjectiveForm::AsPrinted,
        Some(other) => return Err(config(format!("unknown form `{other}`"))),
    }
    if let Some(n) = s.node_limit {
        cfg.node_limit = n;
    }
    let invert = s.ci.unwrap_or(false);
    match (s.lambda0, invert) {
        (Some(l), false) => {
            if s.grid.is_some() {
                return Err(config("--grid needs --ci"));
            }
            let rep = weak_null_test(&data, &sched, l, &cfg)?;
            let summary =
                format!(
                "weak-null: lambda0 {}, gamma_bar {}: p_greater {}, p_less {}, p_two_sided {}{}",
                rep.lambda0,
                rep.gamma_bar,
                rep.p_greater,
                rep.p_less,
                rep.p_two_sided,
                if rep.certified { "" } else { " (node limit reached; bounds only)" }
            );
            Ok(Outcome {
                report: render(Command::WeakNull, None, None, s, rep)?,
                summary,
            })
        }
        (None, true) => {
            let grid = parse_grid(
                s.grid
                    .as_deref()
                    .ok_or_else(|| config("--ci needs --grid lo:hi:step"))?,
            )?;
            let rep = weak_null_ci(&data, &sched, alpha(&s), &grid, &cfg)?;
            let summary = format!(
                "weak-null: gamma_bar {}, {}% set for lambda {} over {} grid points",
                rep.gamma_bar,
                100.0 * (1.0 - rep.alpha),
                match rep.interval {
                    Some([a, b]) => format!("[{a}, {b}]"),
                    None => "empty".to_string(),
                },
                grid.len()
            );
            Ok(Outcome {
                report: render(Command::WeakNull, None, None, s, rep)?,
                summary,
            })
        }
        _ => Err(config("weak-null needs exactly one of --lambda0 or --ci")),
    }
}

fn dgp_spec(s: &Settings, default_draws: usize) -> Result<(DgpSpec, u64, usize)> {
    let dgp: BuiltinDgp = s.dgp.ok_or_else(|| config("--dgp is required"))?;
    dgp.validate()?;
    let seed = s
        .seed
        .ok_or_else(|| config("--seed is required for stochastic commands"))?;
    let draws = s.reps.map_or(default_draws, |r| r as usize);
    let spec = single_spec(s)?;
    let out = DgpSpec {
        sampler: SamplerRef::new(dgp),
        link: link(s)?,
        phi: spec.as_phi()?,
        mc_draws: draws,
        seed,
        antithetic: false,
    };
    Ok((out, seed, draws))
}

fn design_sens(s: Settings) -> Result<Outcome> {
    let (dgp, seed, draws) = dgp_spec(&s, asymptotics::DEFAULT_DESIGN_DRAWS)?;
    let r = asymptotics::design_sensitivity(&dgp, s.tol.unwrap_or(asymptotics::DEFAULT_TOL))?;
    let summary = format!(
        "design-sens: gamma_bar* {} (mc s.e. {}), gamma* {}{}",
        r.gamma_bar_star,
        r.mc_std_err,
        r.gamma_star,
        if r.null_case {
            " (no effect in the tested direction)"
        } else {
            ""
        }
    );
    Ok(Outcome {
        report: render(Command::DesignSens, Some(seed), Some(draws as u64), s, r)?,
        summary,
    })
}

fn bahadur(s: Settings) -> Result<Outcome> {
    let gb = s
        .gamma_bar
        .ok_or_else(|| config("bahadur needs --gamma-bar"))?;
    let (dgp, seed, draws) = dgp_spec(&s, asymptotics::DEFAULT_SLOPE_DRAWS)?;
    let r = asymptotics::bahadur_slope(&dgp, gb, s.tol.unwrap_or(asymptotics::DEFAULT_TOL))?;
    let summary = format!("bahadur: gamma_bar {}, slope {}", r.gamma_bar, r.slope);
    Ok(Outcome {
        report: render(Command::Bahadur, Some(seed), Some(draws as u64), s, r)?,
        summary,
    })
}

#[derive(Debug, Serialize)]
struct PowerResult {
    link: DoseLink,
    dgp: BuiltinDgp,
    curves: Vec<PowerCurve>,
}

fn power_sim(s: Settings) -> Result<Outcome> {
    let dgp = s.dgp.ok_or_else(|| config("--dgp is required"))?;
    dgp.validate()?;
    let seed = s
        .seed
        .ok_or_else(|| config("--seed is required for stochastic commands"))?;
    let pairs = s.pairs.ok_or_else(|| config("--pairs is required"))?;
    let grid = match (&s.grid, s.gamma_bar) {
        (Some(g), None) => parse_grid(g)?,
        (None, Some(gb)) => vec![gb],
        _ => {
            return Err(config(
                "power-sim needs exactly one of --grid or --gamma-bar",
            ))
        }
    };
    let m = method(&s, pairs, s.mc_reps.unwrap_or(SIM_MC_REPS))?;
    let cfg = SimConfig {
        pairs,
        alpha: alpha(&s),
        replicates: s.reps.map_or(sim::DEFAULT_POWER_REPLICATES, |r| r as usize),
        seed,
        method: m,
    };
    let link = link(&s)?;
    let scn = Scenario::new(SamplerRef::new(dgp), link.clone());
    let names = s.test.as_deref().unwrap_or("wilcoxon");
    let mut curves = Vec::new();
    for name in names.split(',') {
        let spec = score_spec(name.trim(), &s)?;
        curves.push(sim::power_curve(&scn, &spec, &grid, &cfg)?);
    }
    if let Some(path) = &s.csv {
        sim::write_power_csv(&curves, File::create(path)?)?;
    }
    let mut summary = format!("power-sim: {} pairs, {} replicates", pairs, cfg.replicates);
    for c in &curves {
        let pts: Vec<String> = c
            .gamma_bar_grid
            .iter()
            .zip(&c.power)
            .map(|(g, p)| format!("{g}:{p}"))
            .collect();
        summary.push_str(&format!(
            "\n  {} power by gamma_bar {}",
            c.test,
            pts.join(" ")
        ));
    }
    let result = PowerResult { link, dgp, curves };
    Ok(Outcome {
        report: render(
            Command::PowerSim,
            Some(seed),
            Some(cfg.replicates as u64),
            s,
            result,
        )?,
        summary,
    })
}

pub fn emit(outcome: &Outcome, output: Option<&Path>) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match output {
        Some(path) => {
            std::fs::write(path, &outcome.report)?;
            writeln!(out, "{}", outcome.summary)?;
        }
        None => out.write_all(outcome.report.as_bytes())?,
    }
    Ok(())
}
