//! Command-line frontend: simulate data, fit models, inspect archives,
//! and export choropleth maps.
//!
//! Exit codes: 0 success (including fits that only warn about
//! convergence), 1 runtime failure, 2 usage or configuration error.
//! Errors print as a single `error: ...` line on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use riskmap::diagnostics::{
    self, gelman_rubin_by_node, posterior_risk, summarize, NodeSelector,
};
use riskmap::io::archive::{is_completed_archive, Manifest, RunArchive};
use riskmap::io::choropleth::export_choropleth;
use riskmap::io::config::RunConfig;
use riskmap::io::dataset::{load_dataset, save_dataset, DatasetSchema};
use riskmap::io::geojson::read_feature_collection;
use riskmap::io::table::render_table;
use riskmap::contiguity::{build_graph_from_polygons_with, ContiguityRule};
use riskmap::mcmc::run_chains;
use riskmap::sim::{simulate_dataset, simulate_inputs};
use riskmap::{Dataset64, Error, Graph64, Params64, Result};

/// Split R-hat at or above this flags a convergence warning.
const RHAT_WARN: f64 = 1.1;

#[derive(Parser)]
#[command(
    name = "riskmap",
    version,
    about = "Bayesian disease mapping over areal count data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset (and truth file) from the configured model
    Simulate(RunArgs),
    /// Fit the configured model and write a run archive
    Fit(RunArgs),
    /// Report convergence and DIC from an existing run archive
    Diagnose(DiagnoseArgs),
    /// Export a choropleth GeoJSON of posterior relative risk
    ExportMap(ExportMapArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (key = value lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Overwrite completed outputs
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Run archive directory written by `fit`
    #[arg(long)]
    archive: PathBuf,
}

#[derive(Args)]
struct ExportMapArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run archive directory written by `fit`
    #[arg(long)]
    archive: PathBuf,
    /// Output GeoJSON file
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::ExportMap(args) => cmd_export_map(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.set)?;
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

/// Graph named by the `graph` key: a lattice spec, an edge CSV, or a
/// boundary GeoJSON (whose raw document is returned for map export).
fn load_graph(cfg: &RunConfig) -> Result<Option<(Graph64, Option<serde_json::Value>)>> {
    let Some(source) = cfg.get("graph") else {
        return Ok(None);
    };
    if let Some(dims) = source.strip_prefix("lattice:") {
        let (rows, cols) = dims
            .split_once(['x', 'X'])
            .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)))
            .ok_or_else(|| {
                Error::Config(format!(
                    "graph '{source}' is not of the form lattice:ROWSxCOLS"
                ))
            })?;
        return Ok(Some((Graph64::lattice(rows, cols)?, None)));
    }
    let path = Path::new(source);
    let is_geojson = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("geojson") || e.eq_ignore_ascii_case("json"));
    if is_geojson {
        let id_property = cfg.get("id_property").unwrap_or("id");
        let (features, doc) = read_feature_collection::<f64>(path, id_property)?;
        let rule = match cfg.get("contiguity") {
            Some(raw) => ContiguityRule::parse(raw)?,
            None => ContiguityRule::Queen,
        };
        let tolerance = cfg.get_f64("snap_tolerance", 1e-9)?;
        let graph = build_graph_from_polygons_with(&features, rule, tolerance)?;
        Ok(Some((graph, Some(doc))))
    } else {
        let n_regions = match cfg.get("graph_regions") {
            Some(_) => Some(cfg.get_usize("graph_regions", 0)?),
            None => None,
        };
        Ok(Some((Graph64::from_edge_csv(path, n_regions)?, None)))
    }
}

/// Region ids for a graph-free fit: first-appearance order in the file.
fn region_ids_from_csv(path: &Path, schema: &DatasetSchema) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path).map_err(Error::from)?;
    let headers = reader.headers().map_err(Error::from)?.clone();
    let col = headers
        .iter()
        .position(|h| h == schema.region_id)
        .ok_or_else(|| {
            Error::Data(format!(
                "dataset file {} has no column '{}'",
                path.display(),
                schema.region_id
            ))
        })?;
    let mut ids: Vec<String> = Vec::new();
    for record in reader.records() {
        let rec = record.map_err(Error::from)?;
        let id = rec.get(col).unwrap_or("").trim();
        if !id.is_empty() && !ids.iter().any(|x| x == id) {
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("dataset file {} has no rows", path.display())));
    }
    Ok(ids)
}

fn require_new_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Archive(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.model_spec()?;
    let seed = cfg.get_u64("seed", 1)?;
    let graph = load_graph(&cfg)?.map(|(g, _)| g);
    if spec.tier.is_spatial() && graph.is_none() {
        return Err(Error::Config(format!(
            "tier '{}' requires the 'graph' key",
            spec.tier
        )));
    }

    let n_regions = match &graph {
        Some(g) => g.n_regions(),
        None => match cfg.get_usize("graph_regions", 0)? {
            0 => {
                return Err(Error::Config(
                    "simulate without a graph needs 'graph_regions'".into(),
                ))
            }
            n => n,
        },
    };
    let n_periods = cfg.get_usize("sim_periods", 1)?;
    if spec.tier.is_temporal() && n_periods < 2 {
        return Err(Error::Config(
            "spatio-temporal simulation needs sim_periods >= 2".into(),
        ));
    }
    let periods: Option<Vec<u32>> = spec
        .tier
        .is_temporal()
        .then(|| (1..=n_periods as u32).collect());
    let n_obs = n_regions * if spec.tier.is_temporal() { n_periods } else { 1 };

    let beta = {
        let mut beta = vec![cfg.get_f64("sim_alpha0", 0.0)?];
        if let Some(raw) = cfg.get("sim_beta") {
            for part in raw.split(',') {
                beta.push(part.trim().parse().map_err(|_| {
                    Error::Config(format!("config key 'sim_beta' has invalid value '{raw}'"))
                })?);
            }
        }
        if spec.tier.is_temporal() {
            beta.push(cfg.get_f64("sim_alpha3", 0.0)?);
        }
        if beta.len() != spec.n_beta() {
            return Err(Error::Config(format!(
                "sim_beta supplies {} coefficients, tier '{}' with {} covariates needs {}",
                beta.len() - 1 - usize::from(spec.tier.is_temporal()),
                spec.tier,
                spec.n_covariates,
                spec.n_covariates
            )));
        }
        beta
    };
    let truth = Params64 {
        beta,
        phi: Vec::new(),
        theta: Vec::new(),
        tau_phi: cfg.get_f64("sim_tau_phi", 1.0)?,
        tau_theta: cfg.get_f64("sim_tau_theta", 1.0)?,
    };

    let low = cfg.get_f64("sim_expected_low", 100.0)?;
    let high = cfg.get_f64("sim_expected_high", 100.0)?;
    let inputs = simulate_inputs::<f64>(n_obs, spec.n_covariates, (low, high), seed)?;
    let (dataset, realized) = simulate_dataset(
        &spec,
        &truth,
        graph.as_ref(),
        &inputs.expected,
        &inputs.covariates,
        periods.as_deref(),
        seed,
    )?;

    let mut schema = cfg.schema();
    if schema.covariates.is_empty() && spec.n_covariates > 0 {
        schema.covariates = (1..=spec.n_covariates).map(|k| format!("x{k}")).collect();
    }
    if spec.tier.is_temporal() && schema.period.is_none() {
        schema.period = Some("period".to_string());
    }

    std::fs::create_dir_all(&args.out)?;
    let data_path = args.out.join("dataset.csv");
    let truth_path = args.out.join("truth.json");
    require_new_file(&data_path, args.force)?;
    require_new_file(&truth_path, args.force)?;
    save_dataset(&data_path, &dataset, &schema)?;
    std::fs::write(
        &truth_path,
        serde_json::to_string_pretty(&json!({
            "seed": seed,
            "tier": spec.tier.to_string(),
            "params": realized,
        }))?,
    )?;
    println!(
        "simulated {} observations over {} regions into {}",
        dataset.n_obs(),
        n_regions,
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.model_spec()?;
    let mcmc = cfg.mcmc_config()?;
    let schema = cfg.schema();

    let loaded = load_graph(&cfg)?;
    let graph = loaded.map(|(g, _)| g);
    if spec.tier.is_spatial() && graph.is_none() {
        return Err(Error::Config(format!(
            "tier '{}' requires the 'graph' key",
            spec.tier
        )));
    }
    let data_path = cfg
        .get("data")
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config("config key 'data' is required for fit".into()))?;
    let region_ids: Vec<String> = match &graph {
        Some(g) => g.regions().iter().map(|r| r.id.clone()).collect(),
        None => region_ids_from_csv(&data_path, &schema)?,
    };
    let data: Dataset64 = load_dataset(&data_path, &schema, &region_ids)?;

    // Fail the overwrite check before spending minutes sampling.
    if is_completed_archive(&args.out) && !args.force {
        return Err(Error::Archive(format!(
            "{} already holds a completed run; pass --force to overwrite",
            args.out.display()
        )));
    }

    let chains = run_chains(&spec, &data, graph.as_ref(), &mcmc)?;

    let scope = match cfg.get("monitor").unwrap_or("monitored") {
        "monitored" => NodeSelector::Monitored,
        "all" => NodeSelector::All,
        other => {
            return Err(Error::Config(format!(
                "config key 'monitor' has invalid value '{other}'"
            )))
        }
    };
    let summary = summarize(&chains, &scope)?;
    let rhat = gelman_rubin_by_node(&chains, &NodeSelector::Monitored)?;
    let dic = diagnostics::dic(&chains, &data)?;
    let risk = posterior_risk(&chains, &data)?;

    let mut warnings = Vec::new();
    for (node, r) in &rhat {
        if *r >= RHAT_WARN {
            warnings.push(format!(
                "split R-hat for '{node}' is {r:.4} (>= {RHAT_WARN}); chains have not converged"
            ));
        }
    }
    if let Some(g) = &graph {
        let isolated = g.isolated_regions();
        if !isolated.is_empty() {
            let ids: Vec<&str> =
                isolated.iter().map(|&i| g.regions()[i].id.as_str()).collect();
            warnings.push(format!(
                "isolated regions with no neighbors (structured effect pinned to zero): {}",
                ids.join(", ")
            ));
        }
    }
    let convergence_warning = rhat.iter().any(|(_, r)| *r >= RHAT_WARN);

    let manifest = Manifest {
        version: 0, // save() stamps the real version
        tier: spec.tier.to_string(),
        seed: mcmc.seed,
        n_chains: mcmc.n_chains,
        n_iterations: mcmc.n_iterations,
        burn_in: mcmc.burn_in,
        thin: mcmc.thin,
        graph_fingerprint: graph.as_ref().map(|g| g.fingerprint()),
        config: cfg.entries().clone(),
        convergence_warning,
        warnings: warnings.clone(),
        trace_files: BTreeMap::new(),
        complete: false,
    };
    let mut archive = RunArchive { manifest, summary, rhat, dic, risk };
    let mut trace_nodes = chains.monitored_nodes();
    trace_nodes.push("deviance".to_string());
    archive.save(&args.out, Some((&chains, &trace_nodes)), args.force)?;

    print!("{}", render_table(&archive.summary));
    println!(
        "DIC: dic = {:.4}, d_bar = {:.4}, d_hat = {:.4}, p_d = {:.4}",
        archive.dic.dic, archive.dic.d_bar, archive.dic.d_hat, archive.dic.p_d
    );
    for w in &warnings {
        println!("warning: {w}");
    }
    println!("archive written to {}", args.out.display());
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let archive = RunArchive::load(&args.archive)?;
    println!("node  rhat");
    for (node, r) in &archive.rhat {
        println!("{node}  {r:.4}");
    }
    if archive.manifest.convergence_warning {
        println!("convergence: WARNING (split R-hat >= {RHAT_WARN} on some nodes)");
    } else {
        println!("convergence: ok (all split R-hat < {RHAT_WARN})");
    }
    println!(
        "DIC: dic = {:.4}, d_bar = {:.4}, d_hat = {:.4}, p_d = {:.4}",
        archive.dic.dic, archive.dic.d_bar, archive.dic.d_hat, archive.dic.p_d
    );
    for w in &archive.manifest.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn cmd_export_map(args: &ExportMapArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let archive = RunArchive::load(&args.archive)?;
    let Some((graph, Some(doc))) = load_graph(&cfg)? else {
        return Err(Error::Config(
            "export-map needs the 'graph' key to point at a boundary GeoJSON file".into(),
        ));
    };
    // Region-level posterior mean risk: average over periods where present.
    let region_ids: Vec<String> = graph.regions().iter().map(|r| r.id.clone()).collect();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for row in &archive.risk {
        let entry = sums.entry(row.region.as_str()).or_insert((0.0, 0));
        entry.0 += row.mean;
        entry.1 += 1;
    }
    let values: Vec<f64> = region_ids
        .iter()
        .map(|id| {
            sums.get(id.as_str())
                .map(|(s, n)| s / *n as f64)
                .ok_or_else(|| {
                    Error::Data(format!("archive has no risk summary for region '{id}'"))
                })
        })
        .collect::<Result<_>>()?;

    let breaks = cfg.class_breaks()?;
    let id_property = cfg.get("id_property").unwrap_or("id");
    let annotated =
        export_choropleth(&doc, id_property, &region_ids, &values, &breaks, cfg.get("units"))?;

    require_new_file(&args.out, args.force)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&annotated)?)?;
    println!(
        "choropleth with {} regions written to {}",
        region_ids.len(),
        args.out.display()
    );
    Ok(())
}
