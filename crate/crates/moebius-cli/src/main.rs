//! Batch front end for the light-cone geometry library.
//!
//! Subcommands: `generate` samples a constructed chart to disk, `transform`
//! runs a Combescure/Christoffel/Ribaucour/Darboux transform on it, `verify`
//! runs the residual checks and writes a machine-readable report, `export`
//! writes an OBJ mesh or CSV point cloud.
//!
//! Exit codes: 0 all good, 1 verification failure, 2 configuration or
//! artifact error, 3 transform degeneracy.

mod artifact;
mod builder;
mod checks;
mod config;
mod export;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use moebius::transforms::{
    check_christoffel, check_darboux, combescure_transform, ribaucour_transform,
    ChristoffelVerdict, DarbouxVerdict,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "moebius", version, about = "Conformal geometry batch tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Job configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and MOEBIUS_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the sampled probes recorded in reports.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-axis sample count override.
    #[arg(long)]
    resolution: Option<usize>,
    /// Multiplies every check tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured chart and write it as an artifact.
    Generate(CommonArgs),
    /// Run the configured transform on the generated chart artifact.
    Transform(CommonArgs),
    /// Run the verification checks and write a report.
    Verify(CommonArgs),
    /// Export the chart artifact as OBJ (2d charts in R^3) or CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output format; `auto` picks OBJ when the chart allows it.
    #[arg(long, default_value = "auto")]
    format: String,
}

fn out_dir(args: &CommonArgs, cfg: &config::JobConfig) -> PathBuf {
    if let Some(d) = &args.out {
        return d.clone();
    }
    if let Some(d) = cfg.output.as_ref().and_then(|o| o.dir.clone()) {
        return PathBuf::from(d);
    }
    if let Ok(d) = std::env::var("MOEBIUS_OUT_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from(".")
}

fn load_config(args: &CommonArgs) -> Result<config::JobConfig> {
    let mut cfg = config::JobConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(r) = args.resolution {
        cfg.resolution = Some(r);
        cfg.validate()?;
    }
    if let Some(t) = args.tolerance_scale {
        cfg.tolerance_scale = Some(t);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn build_chart(cfg: &config::JobConfig, res: usize) -> Result<builder::BuiltChart> {
    let mut built = builder::build_construction(&cfg.construction, res)?;
    if let Some(eps) = cfg.perturbation {
        built.chart = moebius::constructions::perturb_chart(&built.chart, eps);
    }
    Ok(built)
}

fn cmd_generate(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let res = cfg.resolution();
    let built = build_chart(&cfg, res)?;
    let dir = out_dir(args, &cfg);
    let paths = artifact::paths(&dir, &cfg.basename());
    let art = artifact::chart_artifact(&cfg.construction, res, &built.chart);
    artifact::write_json(&paths.chart, &art)?;
    println!(
        "wrote {} ({} samples into R^{})",
        paths.chart.display(),
        art.values.len(),
        art.ambient.dim
    );
    Ok(0)
}

fn cmd_transform(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let spec = cfg
        .transform
        .clone()
        .ok_or_else(|| anyhow!("config has no transform section"))?;
    let dir = out_dir(args, &cfg);
    let paths = artifact::paths(&dir, &cfg.basename());
    let chart_art: artifact::ChartArtifact = artifact::read_json(&paths.chart)?;
    let built = builder::build_construction(&chart_art.construction, chart_art.resolution)?;
    let t = builder::build_transform(&spec, &chart_art.construction, &built)?;

    let christoffel = check_christoffel(&t.data, cfg.tolerance("christoffel-conformality")?)?;
    let grid = t.host.domain.grid();
    let phi: Vec<f64> = grid.iter().map(|u| t.data.phi.value(u)).collect();
    let congruence: Vec<Vec<f64>> = grid
        .iter()
        .map(|u| t.data.cal_f.value(u).iter().copied().collect())
        .collect();

    // Darboux kinds and trivial data produce the second envelope of the
    // sphere congruence; the Christoffel kinds produce the dual immersion.
    let is_ribaucour_kind = matches!(
        spec,
        config::TransformSpec::DarbouxSphereFactor { .. }
            | config::TransformSpec::DarbouxCurveFactor { .. }
            | config::TransformSpec::DarbouxWarped {}
            | config::TransformSpec::Trivial { .. }
    );
    let (values, nu, verdict, excluded) = if is_ribaucour_kind {
        let (tilde, rdata) = ribaucour_transform(&t.data)?;
        let verdict = if matches!(spec, config::TransformSpec::Trivial { .. }) {
            match christoffel.verdict {
                ChristoffelVerdict::Trivial => "trivial".to_string(),
                ChristoffelVerdict::Christoffel => "christoffel".to_string(),
                ChristoffelVerdict::Neither => "neither".to_string(),
            }
        } else {
            let darboux = check_darboux(&t.data, &rdata, cfg.tolerance("darboux-condition")?)?;
            match darboux.verdict {
                DarbouxVerdict::Darboux => "darboux".to_string(),
                DarbouxVerdict::NotDarboux(why) => format!("not-darboux: {why}"),
            }
        };
        let nu: Vec<f64> = grid
            .iter()
            .map(|u| rdata.nu(u).unwrap_or(f64::NAN))
            .collect();
        (
            artifact::sample_chart(&tilde),
            Some(nu),
            verdict,
            rdata.excluded,
        )
    } else {
        let out = combescure_transform(&t.data)?;
        let verdict = match christoffel.verdict {
            ChristoffelVerdict::Trivial => "trivial",
            ChristoffelVerdict::Christoffel => "christoffel",
            ChristoffelVerdict::Neither => "neither",
        }
        .to_string();
        (artifact::sample_chart(&out.chart), None, verdict, vec![])
    };

    let art = artifact::TransformArtifact {
        format_version: artifact::FORMAT_VERSION,
        construction: chart_art.construction.clone(),
        transform: spec,
        resolution: chart_art.resolution,
        domain: artifact::DomainHeader {
            lo: t.host.domain.lo.clone(),
            hi: t.host.domain.hi.clone(),
            res: t.host.domain.res.clone(),
        },
        values,
        phi,
        congruence,
        nu,
        verdict: verdict.clone(),
        first_integral_drift: t.drift,
        excluded_samples: excluded,
    };
    artifact::write_json(&paths.transform, &art)?;
    println!("wrote {} (verdict: {verdict})", paths.transform.display());
    Ok(0)
}

fn cmd_verify(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, &cfg);
    let paths = artifact::paths(&dir, &cfg.basename());
    let chart_art: artifact::ChartArtifact = artifact::read_json(&paths.chart)?;
    let built = build_chart(&cfg, chart_art.resolution)?;
    let transform = match &cfg.transform {
        Some(spec) => {
            // The transform artifact must exist before verification.
            let _t: artifact::TransformArtifact = artifact::read_json(&paths.transform)?;
            Some(builder::build_transform(
                spec,
                &chart_art.construction,
                &built,
            )?)
        }
        None => None,
    };
    let names = match &cfg.verify {
        Some(list) => list.clone(),
        None => checks::applicable_checks(&cfg, &built.chart),
    };
    let start = std::time::Instant::now();
    let results = checks::run_checks(&cfg, &built, transform.as_ref(), &names)?;
    let elapsed = start.elapsed().as_secs_f64();
    let report =
        artifact::VerificationReport::overall(results, config::config_hash(&cfg), cfg.seed());
    artifact::write_json(&paths.report, &report)?;
    for c in &report.checks {
        println!(
            "{:<24} residual {:>12.3e}  tolerance {:>8.1e}  {}",
            c.check,
            c.residual,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "report {} ({} checks in {elapsed:.2}s): {}",
        paths.report.display(),
        report.checks.len(),
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_export(args: &ExportArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    let dir = out_dir(&args.common, &cfg);
    let paths = artifact::paths(&dir, &cfg.basename());
    let chart_art: artifact::ChartArtifact = artifact::read_json(&paths.chart)?;
    let obj_ok = chart_art.domain.res.len() == 2 && chart_art.ambient.dim == 3;
    let format = match args.format.as_str() {
        "auto" => {
            if obj_ok {
                "obj"
            } else {
                "csv"
            }
        }
        other => other,
    };
    let mut jobs = vec![(cfg.basename(), chart_art.clone())];
    // Export the transformed chart alongside when it exists: same grid.
    if paths.transform.exists() {
        let t: artifact::TransformArtifact = artifact::read_json(&paths.transform)?;
        let twin = artifact::ChartArtifact {
            values: t.values,
            domain: t.domain,
            ..chart_art
        };
        jobs.push((format!("{}.transform", cfg.basename()), twin));
    }
    for (name, art) in jobs {
        match format {
            "obj" => {
                let text = export::to_obj(&art)?;
                let path = dir.join(format!("{name}.obj"));
                std::fs::write(&path, text)
                    .with_context(|| format!("write {}", path.display()))?;
                println!("wrote {}", path.display());
            }
            "csv" => {
                let text = export::to_csv(&art);
                let path = dir.join(format!("{name}.csv"));
                std::fs::write(&path, text)
                    .with_context(|| format!("write {}", path.display()))?;
                println!("wrote {}", path.display());
            }
            other => return Err(anyhow!("unknown export format {other}")),
        }
    }
    Ok(0)
}

/// Exit-code classification for failures.
fn classify_error(err: &anyhow::Error) -> i32 {
    if let Some(lib) = err.downcast_ref::<moebius::Error>() {
        match lib {
            moebius::Error::NullCongruence(_) | moebius::Error::DegenerateTransform(_) => 3,
            _ => 2,
        }
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify_error(&err) as u8)
        }
    }
}
