use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use marg_core::baselines::WeightingStrategy;
use marg_core::engine::{FinalMode, PlanMode};
use marg_core::gateway::{PriceTable, DEFAULT_MODEL, DEFAULT_TEMPERATURE, DEFAULT_TOP_P};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Live,
    Scripted,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(BackendKind::Live),
            "scripted" | "script" => Ok(BackendKind::Scripted),
            other => Err(format!("unknown backend `{other}` (expected live or scripted)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Live => "live",
            BackendKind::Scripted => "scripted",
        })
    }
}

/// Settings shared by every command. Any of them may also come from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// key=value file with defaults for the options below
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// live or scripted
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Script file for the scripted backend
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long = "top-p", global = true)]
    pub top_p: Option<f64>,
    /// compact or expanded
    #[arg(long, global = true)]
    pub plan: Option<String>,
    /// local or llm-check
    #[arg(long = "final-mode", global = true)]
    pub final_mode: Option<String>,
    /// dynamic, equal, subset:<dims>, without:<dims> or fixed:<t>,<d>,<c>
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// Persist responses here and reuse them on later runs
    #[arg(long = "cache-dir", global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Price per million input tokens
    #[arg(long = "price-in", global = true)]
    pub price_in: Option<f64>,
    /// Price per million output tokens
    #[arg(long = "price-out", global = true)]
    pub price_out: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Concurrent calls per pair and concurrent pairs per batch
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output file
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    /// `None` defers to the live backend's default.
    pub model: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub plan: PlanMode,
    pub final_mode: FinalMode,
    pub strategy: WeightingStrategy<f64>,
    pub cache_dir: Option<PathBuf>,
    pub prices: PriceTable,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendKind::Live,
            script: None,
            model: None,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            plan: PlanMode::Compact,
            final_mode: FinalMode::LlmCheck,
            strategy: WeightingStrategy::Dynamic,
            cache_dir: None,
            prices: PriceTable::default(),
            seed: None,
            jobs: 4,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn model_label(&self) -> &str {
        self.model.as_deref().unwrap_or(DEFAULT_MODEL)
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| config_error(format!("invalid value `{value}` for {key}: {e}")))
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<GlobalArgs, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut args = GlobalArgs::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("{}:{}: expected key = value", path.display(), idx + 1)))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "backend" => args.backend = Some(value.into()),
            "script" => args.script = Some(resolve(value)),
            "model" => args.model = Some(value.into()),
            "temperature" => args.temperature = Some(parse(&key, value)?),
            "top_p" => args.top_p = Some(parse(&key, value)?),
            "plan" => args.plan = Some(value.into()),
            "final_mode" => args.final_mode = Some(value.into()),
            "strategy" => args.strategy = Some(value.into()),
            "cache_dir" => args.cache_dir = Some(resolve(value)),
            "price_in" => args.price_in = Some(parse(&key, value)?),
            "price_out" => args.price_out = Some(parse(&key, value)?),
            "seed" => args.seed = Some(parse(&key, value)?),
            "jobs" => args.jobs = Some(parse(&key, value)?),
            "out" => args.out = Some(resolve(value)),
            other => {
                return Err(config_error(format!(
                    "{}:{}: unknown key `{other}`",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(args)
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),*) => {
        GlobalArgs {
            config: None,
            $($field: $flags.$field.clone().or($file.$field.clone()),)*
        }
    };
}

impl GlobalArgs {
    /// Flags over config file over built-in defaults.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => GlobalArgs::default(),
        };
        let a = overlay!(
            self, file, backend, script, model, temperature, top_p, plan, final_mode, strategy, cache_dir, price_in,
            price_out, seed, jobs, out
        );
        let d = RunConfig::default();
        let temperature = a.temperature.unwrap_or(d.temperature);
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(config_error(format!("temperature must be non-negative, got {temperature}")));
        }
        let top_p = a.top_p.unwrap_or(d.top_p);
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(config_error(format!("top-p must lie in (0, 1], got {top_p}")));
        }
        let jobs = a.jobs.unwrap_or(d.jobs);
        if jobs == 0 {
            return Err(config_error("jobs must be at least 1"));
        }
        let prices = PriceTable::new(
            a.price_in.unwrap_or(d.prices.input_price_per_1m),
            a.price_out.unwrap_or(d.prices.output_price_per_1m),
        )
        .map_err(|e| config_error(e.to_string()))?;
        let cfg = RunConfig {
            backend: a.backend.as_deref().map(|v| parse("backend", v)).transpose()?.unwrap_or(d.backend),
            script: a.script,
            model: a.model,
            temperature,
            top_p,
            plan: a.plan.as_deref().map(|v| parse("plan", v)).transpose()?.unwrap_or(d.plan),
            final_mode: a.final_mode.as_deref().map(|v| parse("final-mode", v)).transpose()?.unwrap_or(d.final_mode),
            strategy: a.strategy.as_deref().map(|v| parse("strategy", v)).transpose()?.unwrap_or(d.strategy),
            cache_dir: a.cache_dir,
            prices,
            seed: a.seed,
            jobs,
            out: a.out,
        };
        if cfg.backend == BackendKind::Scripted && cfg.script.is_none() {
            return Err(config_error("the scripted backend needs --script"));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = GlobalArgs::default().resolve().unwrap();
        assert_eq!(cfg.temperature, 0.2);
        assert_eq!(cfg.top_p, 1.0);
        assert_eq!(cfg.plan, PlanMode::Compact);
        assert_eq!(cfg.jobs, 4);
        assert_eq!(cfg.backend, BackendKind::Live);
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# comment\nbackend = scripted\nscript = s.jsonl\ntemperature = 0.5\nplan = expanded\ntop-p = 0.9\n",
        )
        .unwrap();
        let flags = GlobalArgs {
            config: Some(path),
            temperature: Some(0.0),
            ..GlobalArgs::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.backend, BackendKind::Scripted);
        assert_eq!(cfg.script.unwrap(), dir.path().join("s.jsonl"));
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.top_p, 0.9);
        assert_eq!(cfg.plan, PlanMode::Expanded);
    }

    #[test]
    fn invalid_settings() {
        let bad = |g: GlobalArgs| matches!(g.resolve(), Err(CliError::Config(_)));
        assert!(bad(GlobalArgs { jobs: Some(0), ..Default::default() }));
        assert!(bad(GlobalArgs { top_p: Some(0.0), ..Default::default() }));
        assert!(bad(GlobalArgs { plan: Some("wide".into()), ..Default::default() }));
        assert!(bad(GlobalArgs { backend: Some("scripted".into()), ..Default::default() }));
        assert!(bad(GlobalArgs { price_in: Some(-1.0), ..Default::default() }));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "colour = blue\n").unwrap();
        assert!(bad(GlobalArgs { config: Some(path), ..Default::default() }));
    }
}
