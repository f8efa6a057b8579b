use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use opeinf_core::domains::{
    generate_navigation, generate_tumor, tumor, NavigationConfig, TumorCase, TumorConfig,
};
use opeinf_core::validate::{validate, ValidationSummary};
use opeinf_core::{fixtures, save_dataset, Analysis, Dataset};
use opeinf_review::ReviewSession;

use crate::args::{AnalysisArgs, AnalyzeArgs, Domain, GenerateArgs, ServeArgs, ValidateArgs};
use crate::manifest::{DatasetInfo, RunManifest};
use crate::setup;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let dataset = match a.domain {
        Domain::Navigation => {
            let defaults = NavigationConfig::default();
            let cfg = NavigationConfig {
                seed: a.seed.unwrap_or(defaults.seed),
                num_trajectories: a.trajectories.unwrap_or(defaults.num_trajectories),
                trajectory_length: a.length.unwrap_or(defaults.trajectory_length),
                ..defaults
            };
            let data = generate_navigation(&cfg)?;
            let regions = sidecar(&a.out, "regions.jsonl");
            fs::write(&regions, data.regions_jsonl())
                .with_context(|| format!("writing {}", regions.display()))?;
            data.dataset
        }
        Domain::Tumor => {
            let case = a.case.map(TumorCase::from);
            let base = case.map(TumorCase::config).unwrap_or_default();
            let cfg = TumorConfig {
                seed: a.seed.unwrap_or(base.seed),
                num_trajectories: a.trajectories.unwrap_or(base.num_trajectories),
                horizon: a.length.unwrap_or(base.horizon),
                epsilon: a.epsilon.unwrap_or(base.epsilon),
                stochastic: a.noise.map_or(base.stochastic, |n| n > 0.0),
                noise: a.noise.unwrap_or(base.noise),
                ..base
            };
            let mut ds = generate_tumor(&cfg)?;
            if case == Some(TumorCase::Outliers) {
                let (d, ids) = tumor::inject_outliers(
                    &ds,
                    &tumor::OUTLIER_MONTHS,
                    tumor::OUTLIER_REWARD,
                    tumor::OUTLIER_TUMOR_FACTOR,
                )?;
                ds = d;
                let path = sidecar(&a.out, "injected.json");
                fs::write(&path, serde_json::to_string_pretty(&ids)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            ds
        }
        Domain::Chain3 => {
            if a.copies > 1 {
                fixtures::duplicated_chain3(a.copies)
            } else if a.open {
                fixtures::chain3_open()
            } else {
                fixtures::chain3()
            }
        }
    };
    save_dataset(&dataset, &a.out)?;
    println!(
        "wrote {} transitions in {} trajectories to {} (fingerprint {})",
        dataset.len(),
        dataset.trajectories().len(),
        a.out.display(),
        dataset.fingerprint()
    );
    Ok(())
}

/// Report files written by `analyze`, as `(name, contents)`.
pub fn report_files(analysis: &Analysis) -> Result<Vec<(&'static str, String)>> {
    let summary = serde_json::json!({
        "estimator": analysis.estimator,
        "v_hat": analysis.v_hat,
        "horizon": analysis.horizon,
        "outcome": analysis.diagnosis.outcome,
        "unit_kind": analysis.report.unit_kind,
        "basis": analysis.report.basis,
        "flagged": analysis.diagnosis.flagged.len(),
        "dead_ends": analysis.diagnosis.dead_ends.len(),
        "skipped": analysis.report.skipped_ids().len(),
    });
    Ok(vec![
        ("influence.jsonl", analysis.report.to_jsonl()),
        (
            "diagnosis.json",
            serde_json::to_string_pretty(&analysis.diagnosis)? + "\n",
        ),
        (
            "summary.json",
            serde_json::to_string_pretty(&summary)? + "\n",
        ),
    ])
}

fn print_analysis(analysis: &Analysis) {
    let d = &analysis.diagnosis;
    println!("estimator: {}", analysis.estimator);
    println!("v_hat: {}", analysis.v_hat);
    println!("outcome: {:?}", d.outcome);
    println!("flagged: {}", d.flagged.len());
    for e in d.presentation.iter().take(10) {
        println!(
            "  {} influence {} normalized {}{}{}",
            e.presented,
            e.influence
                .map_or("undefined".into(), |v| format!("{v:.6}")),
            e.normalized_influence
                .map_or("-".into(), |v| format!("{v:.4}")),
            if e.dead_end { " dead-end" } else { "" },
            if e.covered.is_empty() {
                String::new()
            } else {
                format!(" (covers {})", e.covered.join(", "))
            },
        );
    }
    if d.presentation.len() > 10 {
        println!("  ... {} more", d.presentation.len() - 10);
    }
}

/// Runs the analysis and writes the report files; returns the exit code.
pub fn analyze(a: &AnalyzeArgs) -> Result<i32> {
    let start = Instant::now();
    let dataset = setup::load(&a.dataset, &a.analysis)?;
    let setup = setup::build(&a.analysis, &dataset)?;
    let analysis = setup.analyze(&dataset)?;
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new("analyze");
    for (name, contents) in report_files(&analysis)? {
        manifest.write(&a.out, name, contents.as_bytes())?;
    }
    manifest.args = Some(a.analysis.clone());
    manifest.config = Some(setup.pinned_to(&dataset).config.clone());
    manifest.estimator = Some(analysis.estimator);
    manifest.dataset = Some(DatasetInfo::new(&a.dataset, &dataset));
    manifest.outcome = Some(analysis.diagnosis.outcome);
    manifest.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let path = manifest.save(&a.out, "manifest.json")?;
    print_analysis(&analysis);
    println!("manifest: {}", path.display());
    let code = analysis.diagnosis.outcome.exit_code();
    if let Some(port) = a.serve {
        serve_dataset(&a.analysis, dataset, port)?;
    }
    Ok(code)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:e}"))
}

pub fn validation_csv(s: &ValidationSummary) -> String {
    let mut out = String::from("id,closed_form,oracle,abs_dev,rel_dev,skipped,status_agrees\n");
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.id,
            fmt_opt(r.closed_form),
            fmt_opt(r.oracle),
            fmt_opt(r.abs_dev),
            fmt_opt(r.rel_dev),
            r.skipped,
            r.status_agrees
        );
    }
    out
}

pub fn validate_cmd(a: &ValidateArgs) -> Result<()> {
    let dataset = setup::load(&a.dataset, &a.analysis)?;
    let setup = setup::build(&a.analysis, &dataset)?;
    let s = validate(&setup, &dataset, a.oracle_budget)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        fs::write(
            dir.join("validation.json"),
            serde_json::to_string_pretty(&s)? + "\n",
        )?;
        fs::write(dir.join("validation.csv"), validation_csv(&s))?;
    }
    println!("estimator: {}", s.estimator);
    println!("v_hat: {}", s.v_hat);
    println!("units compared: {}", s.rows.len());
    println!("max abs deviation: {:e}", s.max_abs_dev);
    println!("max rel deviation: {:e}", s.max_rel_dev);
    println!(
        "abs deviation quantiles (min, 25%, median, 75%, max): {}",
        s.abs_dev_quantiles.map(|q| format!("{q:e}")).join(", ")
    );
    println!(
        "top-{} overlap: {}/{}; signs agree: {}",
        s.top_k, s.top_k_overlap, s.top_k, s.top_k_signs_agree
    );
    println!("status mismatches: {}", s.status_mismatches);
    if s.truncated {
        println!(
            "partial: oracle budget reached, table covers {} units",
            s.rows.len()
        );
    }
    Ok(())
}

fn serve_dataset(args: &AnalysisArgs, dataset: Dataset, port: u16) -> Result<()> {
    let setup = setup::build(args, &dataset)?;
    let session = ReviewSession::new(setup, dataset)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        println!(
            "review service listening on http://{}",
            listener.local_addr()?
        );
        std::io::stdout().flush()?;
        opeinf_review::serve(listener, session).await?;
        Ok(())
    })
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let dataset = setup::load(&a.dataset, &a.analysis)?;
    serve_dataset(&a.analysis, dataset, a.port)
}
