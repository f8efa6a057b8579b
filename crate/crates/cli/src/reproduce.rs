//! Figure data: navigation region influences, the four tumor cases, and the
//! importance-sampling comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use opeinf_core::domains::navigation::{self, region_influences};
use opeinf_core::domains::tumor::{self, TumorCase};
use opeinf_core::domains::{generate_navigation, generate_tumor, NavigationConfig, Region};
use opeinf_core::validate::{top_k, TOP_K};
use opeinf_core::{EstimatorKind, Outcome};
use opeinf_review::{Decision, ReviewSession, Verdict};

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub region: Region,
    pub count: usize,
    /// min, 25%, median, 75%, max of |I_j|.
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2 {
    pub seeds: usize,
    pub regions: Vec<RegionSummary>,
    /// median(II) / median(I)
    pub ratio_ii_i: f64,
    /// median(III) / median(I)
    pub ratio_iii_i: f64,
    #[serde(skip)]
    pub samples: Vec<(u64, Region, f64)>,
}

impl Fig2 {
    pub fn median(&self, region: Region) -> f64 {
        self.regions
            .iter()
            .find(|r| r.region == region)
            .map_or(f64::NAN, |r| r.quantiles[2])
    }
}

fn quantiles(mut xs: Vec<f64>) -> [f64; 5] {
    if xs.is_empty() {
        return [f64::NAN; 5];
    }
    xs.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = (xs.len() - 1) as f64 * q;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
    };
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

/// Navigation influences by region over seeds `0..seeds`.
pub fn fig2(seeds: usize) -> Result<Fig2> {
    let setup = navigation::evaluation_setup();
    let per_seed: Vec<Vec<(u64, Region, f64)>> = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let data = generate_navigation(&NavigationConfig {
                seed,
                ..NavigationConfig::default()
            })?;
            let analysis = setup.analyze(&data.dataset)?;
            Ok(region_influences(&data, &analysis)
                .into_iter()
                .map(|(r, v)| (seed, r, v))
                .collect())
        })
        .collect::<opeinf_core::Result<_>>()?;
    let samples: Vec<(u64, Region, f64)> = per_seed.into_iter().flatten().collect();
    let regions: Vec<RegionSummary> = Region::ALL
        .iter()
        .map(|&region| {
            let xs: Vec<f64> = samples
                .iter()
                .filter(|s| s.1 == region)
                .map(|s| s.2)
                .collect();
            RegionSummary {
                region,
                count: xs.len(),
                quantiles: quantiles(xs),
            }
        })
        .collect();
    let mut out = Fig2 {
        seeds,
        regions,
        ratio_ii_i: 0.0,
        ratio_iii_i: 0.0,
        samples,
    };
    let m1 = out.median(Region::I);
    out.ratio_ii_i = out.median(Region::II) / m1;
    out.ratio_iii_i = out.median(Region::III) / m1;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub case: TumorCase,
    pub outcome: Outcome,
    pub v_hat: f64,
    pub flagged: Vec<String>,
    pub dead_ends: Vec<String>,
    pub presented: Vec<String>,
    /// Corrupted transitions (outlier case).
    pub injected: Vec<String>,
    /// Every flag is a transition the simulator could have produced.
    pub flags_plausible: bool,
    /// Review-session annotation after representative verdicts on plausible flags
    /// (needs-expert-review cases only).
    pub annotation: Option<String>,
}

/// The four tumor cases. When a case needs review and all its flags are
/// plausible, each flag gets a representative verdict in a review session,
/// standing in for the expert.
pub fn cases() -> Result<Vec<CaseResult>> {
    TumorCase::ALL
        .par_iter()
        .map(|&case| {
            let data = tumor::tumor_case(case)?;
            let setup = tumor::evaluation_setup(EstimatorKind::KernelFqe);
            let mut session = ReviewSession::new(setup, data.dataset.clone())?;
            let a = session.versions()[0].analysis.clone();
            let d = &a.diagnosis;
            let plausible = |id: &String| {
                data.dataset
                    .by_id(id)
                    .is_some_and(|t| data.config.is_plausible(t))
            };
            let flags_plausible = d.flagged.iter().all(plausible);
            if flags_plausible && d.outcome == Outcome::NeedsExpertReview {
                for id in &d.flagged {
                    session.submit(&Verdict::new(id.clone(), Decision::Representative))?;
                }
            }
            let annotation = session.status(None)?.annotation;
            Ok(CaseResult {
                case,
                outcome: d.outcome,
                v_hat: a.v_hat,
                flagged: d.flagged.clone(),
                dead_ends: d.dead_ends.clone(),
                presented: d.presentation.iter().map(|e| e.presented.clone()).collect(),
                injected: data.injected,
                flags_plausible,
                annotation,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub estimator: EstimatorKind,
    pub v_hat: f64,
    pub top: Vec<String>,
    pub flagged: usize,
    #[serde(skip)]
    pub influences: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4 {
    pub methods: Vec<MethodResult>,
    /// Some pair of estimators has different top-k sets.
    pub top_sets_differ: bool,
}

pub const FIG4_METHODS: [EstimatorKind; 3] =
    [EstimatorKind::Is, EstimatorKind::Wis, EstimatorKind::Pdis];

/// Trajectory influences of IS, WIS and PDIS on one tumor dataset.
pub fn fig4() -> Result<Fig4> {
    let ds = generate_tumor(&tumor::method_comparison_config())?;
    let methods = FIG4_METHODS
        .iter()
        .map(|&m| {
            let a = tumor::evaluation_setup(m).analyze(&ds)?;
            let influences: Vec<(String, f64)> = a
                .report
                .units
                .iter()
                .filter_map(|u| Some((u.id.clone(), u.influence?)))
                .collect();
            Ok(MethodResult {
                estimator: m,
                v_hat: a.v_hat,
                top: top_k(&influences, TOP_K),
                flagged: a.diagnosis.flagged.len(),
                influences,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sets: Vec<BTreeSet<&String>> = methods.iter().map(|m| m.top.iter().collect()).collect();
    let top_sets_differ = sets.iter().any(|s| *s != sets[0]);
    Ok(Fig4 {
        methods,
        top_sets_differ,
    })
}

fn json(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn write_fig2(f: &Fig2, dir: &Path, m: &mut RunManifest) -> Result<()> {
    let mut csv = String::from("seed,region,abs_influence\n");
    for (seed, region, v) in &f.samples {
        let _ = writeln!(csv, "{seed},{},{v:e}", region.name());
    }
    m.write(dir, "fig2_influence.csv", csv.as_bytes())?;
    m.write(dir, "fig2_summary.json", json(f)?.as_bytes())?;
    Ok(())
}

pub fn write_cases(c: &[CaseResult], dir: &Path, m: &mut RunManifest) -> Result<()> {
    let mut csv = String::from("case,outcome,v_hat,flagged,dead_ends,annotation\n");
    for r in c {
        let _ = writeln!(
            csv,
            "{},{:?},{},{},{},{}",
            r.case.name(),
            r.outcome,
            r.v_hat,
            r.flagged.join(" "),
            r.dead_ends.join(" "),
            r.annotation.as_deref().unwrap_or("")
        );
    }
    m.write(dir, "cases.csv", csv.as_bytes())?;
    m.write(dir, "cases.json", json(&c)?.as_bytes())?;
    Ok(())
}

pub fn write_fig4(f: &Fig4, dir: &Path, m: &mut RunManifest) -> Result<()> {
    let mut csv = String::from("estimator,trajectory,influence\n");
    for r in &f.methods {
        for (id, v) in &r.influences {
            let _ = writeln!(csv, "{},{id},{v:e}", r.estimator);
        }
    }
    m.write(dir, "fig4_influence.csv", csv.as_bytes())?;
    m.write(dir, "fig4_summary.json", json(f)?.as_bytes())?;
    Ok(())
}

pub fn run(args: &crate::args::ReproduceArgs) -> Result<()> {
    use crate::args::Figure;
    let start = std::time::Instant::now();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut m;
    match args.figure {
        Figure::Fig2 => {
            m = RunManifest::new("reproduce fig2");
            let f = fig2(args.seeds)?;
            for r in &f.regions {
                println!(
                    "region {}: {} values, median |I| {:e}",
                    r.region.name(),
                    r.count,
                    r.quantiles[2]
                );
            }
            println!(
                "median II / I = {:.2}, III / I = {:.2e}",
                f.ratio_ii_i, f.ratio_iii_i
            );
            write_fig2(&f, &args.out, &mut m)?;
        }
        Figure::Cases => {
            m = RunManifest::new("reproduce cases");
            let c = cases()?;
            for r in &c {
                println!(
                    "{}: {:?}, {} flagged, dead ends [{}]{}",
                    r.case.name(),
                    r.outcome,
                    r.flagged.len(),
                    r.dead_ends.join(", "),
                    r.annotation
                        .as_deref()
                        .map(|a| format!(", {a}"))
                        .unwrap_or_default()
                );
            }
            write_cases(&c, &args.out, &mut m)?;
        }
        Figure::Fig4 => {
            m = RunManifest::new("reproduce fig4");
            let f = fig4()?;
            for r in &f.methods {
                println!(
                    "{}: v_hat {:.4}, top-{TOP_K} [{}]",
                    r.estimator,
                    r.v_hat,
                    r.top.join(", ")
                );
            }
            println!("top sets differ: {}", f.top_sets_differ);
            write_fig4(&f, &args.out, &mut m)?;
        }
    }
    m.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let name = match args.figure {
        Figure::Fig2 => "manifest-fig2.json",
        Figure::Cases => "manifest-cases.json",
        Figure::Fig4 => "manifest-fig4.json",
    };
    let path = m.save(&args.out, name)?;
    println!("manifest: {}", path.display());
    Ok(())
}
