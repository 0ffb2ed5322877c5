//! Configuration loading and result files for the `cellfree` command.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cellfree::quantizer::{design_table, QuantizerDesign};
use cellfree::simulator::{summarize, RateReport, ReportSummary, SimConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "CELLFREE_CONFIG";

pub const RATES_HEADER: &str = "detector,alpha,drop,user,rate_bits_per_s_per_Hz";
pub const CDF_HEADER: &str = "detector,alpha,rate,empirical_cdf";
pub const TABLE1_HEADER: &str = "alpha,delta_opt,a_tilde,var_bussgang,var_max";

/// Label used in the `alpha` column for the unquantized baseline.
pub const PERFECT_LABEL: &str = "perfect";

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))?;
        match toml::Value::try_from(value).with_context(|| format!("unsupported value in {}", path.display()))? {
            toml::Value::Table(t) => Ok(t),
            _ => bail!("{}: top level must be an object", path.display()),
        }
    } else {
        text.parse::<toml::Table>()
            .with_context(|| format!("invalid TOML in {}", path.display()))
    }
}

/// Parse `key=value`. The value is read as a TOML value, falling back to a
/// bare string, so `alphas=[1,2]`, `seed=3` and `detectors=["ZF"]` all work.
/// Dotted keys address nested tables (`pathloss.d0_m=20`).
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        bail!("override `{spec}` has an empty key");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("nonempty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key `{}`: `{p}` is not a table", path.join(".")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Merge `over` into `base`. A nested table whose `model` tag changes
/// replaces the old one wholesale, so switching path-loss models does not
/// inherit the previous model's parameters.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if o.get("model").is_none_or(|m| b.get("model") == Some(m)) =>
            {
                merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Resolve the configuration: defaults, then the file (explicit path or the
/// `CELLFREE_CONFIG` variable), then `key=value` overrides. Unknown keys and
/// violated constraints are errors that name the key.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SimConfig> {
    let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let path = path.map(Path::to_path_buf).or(from_env);
    let mut table = match toml::Value::try_from(SimConfig::default())? {
        toml::Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    };
    if let Some(p) = &path {
        merge(&mut table, read_table(p)?);
    }
    for o in overrides {
        let (key, value) = parse_override(o)?;
        let mut single = toml::Table::new();
        apply_override(&mut single, &key, value)?;
        merge(&mut table, single);
    }
    let config: SimConfig = table.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        match &path {
            Some(p) => anyhow!("invalid config {}: {msg}", p.display()),
            None => anyhow!("invalid config: {msg}"),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Canonical JSON of the resolved config.
pub fn config_json(config: &SimConfig) -> Result<String> {
    Ok(serde_json::to_string(config)?)
}

/// Short content hash of the resolved config, `git`-style.
pub fn run_id(config: &SimConfig) -> Result<String> {
    let digest = Sha256::digest(config_json(config)?.as_bytes());
    Ok(digest.iter().take(6).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn alpha_label(alpha: Option<u32>) -> String {
    alpha.map_or_else(|| PERFECT_LABEL.to_string(), |a| a.to_string())
}

fn config_comment(config: &SimConfig) -> Result<String> {
    Ok(format!("# config: {}\n", config_json(config)?))
}

pub fn table1_csv(designs: &[QuantizerDesign]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for d in designs {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.7},{:.7}",
            d.alpha, d.delta, d.a_tilde, d.var_bussgang, d.var_max
        );
    }
    out
}

pub fn rates_csv(config: &SimConfig, reports: &[RateReport]) -> Result<String> {
    let mut out = config_comment(config)?;
    out.push_str(RATES_HEADER);
    out.push('\n');
    for r in reports {
        let alpha = alpha_label(r.alpha);
        for (drop, users) in r.per_drop_rates.iter().enumerate() {
            for (user, rate) in users.iter().enumerate() {
                let _ = writeln!(out, "{},{alpha},{drop},{user},{rate}", r.detector);
            }
        }
    }
    Ok(out)
}

pub fn cdf_csv(config: &SimConfig, reports: &[RateReport]) -> Result<String> {
    let mut out = config_comment(config)?;
    out.push_str(CDF_HEADER);
    out.push('\n');
    for r in reports {
        let alpha = alpha_label(r.alpha);
        let mut s = r.cdf_samples();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        for (i, rate) in s.iter().enumerate() {
            let _ = writeln!(out, "{},{alpha},{rate},{}", r.detector, (i + 1) as f64 / n);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub run_id: String,
    pub seed: u64,
    pub config: &'a SimConfig,
    pub results: Vec<ReportSummary>,
}

pub fn summary_json(config: &SimConfig, reports: &[RateReport]) -> Result<String> {
    let summary = Summary {
        run_id: run_id(config)?,
        seed: config.seed,
        config,
        results: summarize(reports)?,
    };
    Ok(serde_json::to_string_pretty(&summary)? + "\n")
}

/// Write every result file into `dir`, creating it if needed. Returns the
/// paths written.
pub fn write_outputs(dir: &Path, config: &SimConfig, reports: &[RateReport]) -> Result<Vec<PathBuf>> {
    let mut alphas: Vec<u32> = config.alphas.iter().chain(config.channel_bits.iter()).copied().collect();
    alphas.sort_unstable();
    alphas.dedup();
    let mut table = config_comment(config)?;
    table.push_str(&table1_csv(&design_table(alphas)?));
    let files = [
        ("table1.csv", table),
        ("rates.csv", rates_csv(config, reports)?),
        ("cdf.csv", cdf_csv(config, reports)?),
        ("summary.json", summary_json(config, reports)?),
    ];
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))?;
            Ok(p)
        })
        .collect()
}

/// Parse `1..9` (inclusive), `3`, or `1,2,5`.
pub fn parse_alpha_list(spec: &str) -> Result<Vec<u32>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u32 = a.trim().parse().with_context(|| format!("bad range start in `{spec}`"))?;
        let b: u32 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .with_context(|| format!("bad range end in `{spec}`"))?;
        if a > b {
            bail!("empty range `{spec}`");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad bit width `{s}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values_are_typed() {
        let (k, v) = parse_override("alphas=[1, 2]").unwrap();
        assert_eq!(k, vec!["alphas"]);
        assert_eq!(v, toml::Value::Array(vec![1.into(), 2.into()]));
        let (_, v) = parse_override("side_km = 0.5").unwrap();
        assert_eq!(v, toml::Value::Float(0.5));
        let (k, v) = parse_override("pathloss.model=log-distance").unwrap();
        assert_eq!(k, vec!["pathloss", "model"]);
        assert_eq!(v, toml::Value::String("log-distance".into()));
        assert!(parse_override("seed").is_err());
        assert!(parse_override("=3").is_err());
        assert!(parse_override("a..b=3").is_err());
    }

    #[test]
    fn alpha_lists() {
        assert_eq!(parse_alpha_list("1..9").unwrap(), (1..=9).collect::<Vec<_>>());
        assert_eq!(parse_alpha_list("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_alpha_list("4").unwrap(), vec![4]);
        assert_eq!(parse_alpha_list("1, 5").unwrap(), vec![1, 5]);
        assert!(parse_alpha_list("5..1").is_err());
        assert!(parse_alpha_list("x").is_err());
    }

    #[test]
    fn run_id_tracks_config() {
        let a = SimConfig::default();
        let b = SimConfig { seed: 2, ..a.clone() };
        assert_eq!(run_id(&a).unwrap(), run_id(&a.clone()).unwrap());
        assert_ne!(run_id(&a).unwrap(), run_id(&b).unwrap());
        assert_eq!(run_id(&a).unwrap().len(), 12);
    }
}
