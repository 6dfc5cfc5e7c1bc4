//! Run settings: command-line flags merged over an optional JSON config file.

use std::path::{Path, PathBuf};

use clap::Args;
use dosebounds::dgp::BuiltinDgp;
use dosebounds::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Pair file (CSV with pair_id, unit_id, z, y and optional x_* columns).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,

    /// mcnemar, wilcoxon, dose-weighted, dose-weighted-rank, double-rank or
    /// general; comma-separated for power-sim.
    #[arg(long, global = true)]
    pub test: Option<String>,

    /// Score function for `--test general`, e.g. "r_z * r_y".
    #[arg(long, global = true)]
    pub phi: Option<String>,

    /// Rescale ranks to (0, 1].
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub normalize_ranks: Option<bool>,

    /// identity, log, or table:PATH (CSV with dose,value columns).
    #[arg(long, global = true)]
    pub link: Option<String>,

    #[arg(long, global = true)]
    pub gamma_bar: Option<f64>,

    #[arg(long, global = true)]
    pub gamma: Option<f64>,

    /// CSV with pair_id,Gamma_i columns.
    #[arg(long, global = true)]
    pub gamma_file: Option<PathBuf>,

    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte-Carlo size: p-value draws (analyze, ci), process draws
    /// (design-sens, bahadur) or replicate studies (power-sim).
    #[arg(long, global = true)]
    pub reps: Option<u64>,

    /// Monte-Carlo p-value draws inside each power-sim replicate.
    #[arg(long, global = true)]
    pub mc_reps: Option<u64>,

    /// auto, exact, normal or monte-carlo.
    #[arg(long, global = true)]
    pub method: Option<String>,

    /// lo:hi:step grid of effects (ci, weak-null --ci) or of Γ̄ (power-sim).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// Search for the largest Γ̄ at which the greater-side test still rejects.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub sensitivity_value: Option<bool>,

    #[arg(long, global = true)]
    pub lambda0: Option<f64>,

    /// Invert the weak-null test over `--grid`.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub ci: Option<bool>,

    /// expectation or as-printed.
    #[arg(long, global = true)]
    pub form: Option<String>,

    #[arg(long, global = true)]
    pub node_limit: Option<usize>,

    /// Data-generating process as JSON, e.g.
    /// {"kind":"paired-normal","dose":{"kind":"uniform","lo":0,"hi":1},"effect":0.5,"noise_sd":1}
    #[arg(long, global = true, value_parser = parse_dgp)]
    pub dgp: Option<BuiltinDgp>,

    /// Pairs per simulated study.
    #[arg(long, global = true)]
    pub pairs: Option<usize>,

    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Report file; without it the report goes to stdout.
    #[arg(long, global = true)]
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,

    /// Tidy CSV file (analyze, power-sim).
    #[arg(long, global = true)]
    #[serde(skip_serializing)]
    pub csv: Option<PathBuf>,

    /// JSON config file; flags win over its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, env = "DOSEBOUNDS_WORKERS")]
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

fn parse_dgp(s: &str) -> std::result::Result<BuiltinDgp, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

macro_rules! overlay {
    ($flags:expr, $base:expr, $($f:ident),*) => {
        Settings { $($f: $flags.$f.or($base.$f),)* }
    };
}

impl Settings {
    pub fn merged_over(self, base: Settings) -> Settings {
        overlay!(
            self,
            base,
            input,
            test,
            phi,
            normalize_ranks,
            link,
            gamma_bar,
            gamma,
            gamma_file,
            alpha,
            seed,
            reps,
            mc_reps,
            method,
            grid,
            sensitivity_value,
            lambda0,
            ci,
            form,
            node_limit,
            dgp,
            pairs,
            tol,
            output,
            csv,
            config,
            workers
        )
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Names of the flags that are set, for applicability checks.
    pub fn set_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => { $(if self.$f.is_some() { out.push(stringify!($f)); })* };
        }
        check!(
            input,
            test,
            phi,
            normalize_ranks,
            link,
            gamma_bar,
            gamma,
            gamma_file,
            alpha,
            seed,
            reps,
            mc_reps,
            method,
            grid,
            sensitivity_value,
            lambda0,
            ci,
            form,
            node_limit,
            dgp,
            pairs,
            tol
        );
        out
    }
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_grid(src: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("grid `{src}` is not lo:hi:step"));
    let parts: Vec<f64> = src
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(Error::Config(format!(
            "grid `{src}` has more than a million points"
        )));
    }
    Ok((0..=n).map(|k| lo + step * k as f64).collect())
}
