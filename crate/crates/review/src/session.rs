//! Review session state: append-only dataset versions, verdicts and the audit log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use opeinf_core::diagnostics::{context_window, CONTEXT_STEPS};
use opeinf_core::{
    apply_patches, Analysis, Dataset, EvaluationSetup, FieldPatch, OpeError, Outcome, Transition,
    UnitKind, UnitRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown version {0}")]
    UnknownVersion(usize),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("unit `{unit}` is not flagged in version {version}")]
    NotFlagged { version: usize, unit: String },
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error(transparent)]
    Ope(#[from] OpeError),
}

pub type Result<T> = std::result::Result<T, ReviewError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Representative,
    ArtefactRemove,
    ArtefactCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Version the verdict is about; the latest version when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<usize>,
    pub unit_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correction: Vec<FieldPatch>,
    #[serde(default)]
    pub note: String,
}

impl Verdict {
    pub fn new(unit_id: impl Into<String>, decision: Decision) -> Self {
        Self {
            version: None,
            unit_id: unit_id.into(),
            decision,
            correction: Vec::new(),
            note: String::new(),
        }
    }

    fn check(&self) -> Result<()> {
        let has = !self.correction.is_empty();
        match (self.decision, has) {
            (Decision::ArtefactCorrect, false) => Err(ReviewError::InvalidVerdict(
                "artefact_correct needs a correction".into(),
            )),
            (Decision::Representative | Decision::ArtefactRemove, true) => Err(
                ReviewError::InvalidVerdict("only artefact_correct carries a correction".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: usize,
    /// Version the verdict was made against.
    pub version: usize,
    pub verdict: Verdict,
    /// Version created by the edit, if any.
    pub new_version: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Version {
    pub id: usize,
    pub parent: Option<usize>,
    /// Audit entry that produced this version.
    pub created_by: Option<usize>,
    pub dataset: Dataset,
    pub fingerprint: String,
    pub analysis: Analysis,
}

#[derive(Debug, Clone, Serialize)]
pub struct VersionSummary {
    pub id: usize,
    pub parent: Option<usize>,
    pub created_by: Option<usize>,
    pub fingerprint: String,
    pub transitions: usize,
    pub v_hat: f64,
    pub outcome: Outcome,
    pub flagged: usize,
}

impl Version {
    pub fn summary(&self) -> VersionSummary {
        VersionSummary {
            id: self.id,
            parent: self.parent,
            created_by: self.created_by,
            fingerprint: self.fingerprint.clone(),
            transitions: self.dataset.len(),
            v_hat: self.analysis.v_hat,
            outcome: self.analysis.diagnosis.outcome,
            flagged: self.analysis.diagnosis.flagged.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagEntry {
    pub presented: String,
    pub influence: Option<f64>,
    pub normalized_influence: Option<f64>,
    pub dead_end: bool,
    pub covered: Vec<String>,
    pub verdict: Option<Decision>,
    /// Transition records around the presented one (the whole trajectory for
    /// trajectory units), in step order.
    pub context: Vec<Transition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagList {
    pub version: usize,
    pub unit_kind: UnitKind,
    pub outcome: Outcome,
    pub v_hat: f64,
    pub entries: Vec<FlagEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub version: usize,
    pub latest: usize,
    pub outcome: Outcome,
    pub v_hat: f64,
    pub flagged: Vec<String>,
    pub dead_ends: Vec<String>,
    /// Flagged units with a representative verdict in this version.
    pub validated: Vec<String>,
    /// `"expert-validated"` once every flag has a representative verdict. The
    /// outcome itself is left unchanged.
    pub annotation: Option<String>,
    /// Versions from the original data up to this one.
    pub history: Vec<VersionSummary>,
    /// Audit entries that touched those versions.
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionView {
    pub version: usize,
    pub transition: Transition,
    /// Influence record of the unit containing the transition (the transition
    /// itself, or its trajectory for trajectory-based estimators).
    pub unit: Option<UnitRecord>,
    pub context: Vec<Transition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictResponse {
    pub seq: usize,
    pub version: usize,
    pub new_version: Option<usize>,
    pub v_hat_before: f64,
    pub v_hat_after: Option<f64>,
}

pub struct ReviewSession {
    setup: EvaluationSetup,
    versions: Vec<Version>,
    verdicts: BTreeMap<(usize, String), Decision>,
    audit: Vec<AuditEntry>,
}

/// The dataset obtained by applying `verdict` to `dataset`, or `None` when the
/// verdict records an opinion only.
pub fn apply_verdict(
    dataset: &Dataset,
    kind: UnitKind,
    verdict: &Verdict,
) -> Result<Option<Dataset>> {
    verdict.check()?;
    let unit = verdict.unit_id.as_str();
    let edited = match (verdict.decision, kind) {
        (Decision::Representative, _) => return Ok(None),
        (Decision::ArtefactRemove, UnitKind::Transition) => dataset.without_transition(unit)?,
        (Decision::ArtefactRemove, UnitKind::Trajectory) => dataset.without_trajectory(unit)?,
        (Decision::ArtefactCorrect, UnitKind::Transition) => {
            apply_patches(dataset, Some(unit), &verdict.correction)?
        }
        (Decision::ArtefactCorrect, UnitKind::Trajectory) => {
            let steps = dataset.trajectory(unit).unwrap_or_default();
            for p in &verdict.correction {
                let inside = p
                    .target
                    .as_deref()
                    .and_then(|t| dataset.position(t))
                    .is_some_and(|pos| steps.contains(&pos));
                if !inside {
                    return Err(ReviewError::InvalidVerdict(format!(
                        "corrections to trajectory `{unit}` must target one of its transitions"
                    )));
                }
            }
            apply_patches(dataset, None, &verdict.correction)?
        }
    };
    Ok(Some(edited))
}

/// Rebuilds every version's dataset from the original data and the audit log.
pub fn replay(original: &Dataset, kind: UnitKind, audit: &[AuditEntry]) -> Result<Vec<Dataset>> {
    let mut out = vec![original.clone()];
    for e in audit {
        let base = out
            .get(e.version)
            .ok_or(ReviewError::UnknownVersion(e.version))?;
        if let Some(ds) = apply_verdict(base, kind, &e.verdict)? {
            out.push(ds);
        }
    }
    Ok(out)
}

impl ReviewSession {
    pub fn new(setup: EvaluationSetup, dataset: Dataset) -> Result<Self> {
        let analysis = setup.analyze(&dataset)?;
        let version = Version {
            id: 0,
            parent: None,
            created_by: None,
            fingerprint: dataset.fingerprint(),
            dataset,
            analysis,
        };
        Ok(Self {
            setup,
            versions: vec![version],
            verdicts: BTreeMap::new(),
            audit: Vec::new(),
        })
    }

    pub fn setup(&self) -> &EvaluationSetup {
        &self.setup
    }

    pub fn latest(&self) -> usize {
        self.versions.len() - 1
    }

    pub fn versions(&self) -> &[Version] {
        &self.versions
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn version(&self, id: Option<usize>) -> Result<&Version> {
        let id = id.unwrap_or(self.latest());
        self.versions.get(id).ok_or(ReviewError::UnknownVersion(id))
    }

    fn unit_kind(&self) -> UnitKind {
        self.versions[0].analysis.report.unit_kind
    }

    fn context(&self, v: &Version, id: &str) -> Vec<Transition> {
        let ds = &v.dataset;
        let ids = match v.analysis.report.unit_kind {
            UnitKind::Transition => context_window(ds, id, CONTEXT_STEPS),
            UnitKind::Trajectory => ds
                .trajectory(id)
                .unwrap_or_default()
                .iter()
                .map(|&p| ds.get(p).id.clone())
                .collect(),
        };
        ids.iter().filter_map(|i| ds.by_id(i)).cloned().collect()
    }

    pub fn flags(&self, version: Option<usize>) -> Result<FlagList> {
        let v = self.version(version)?;
        let d = &v.analysis.diagnosis;
        let entries = d
            .presentation
            .iter()
            .map(|e| FlagEntry {
                presented: e.presented.clone(),
                influence: e.influence,
                normalized_influence: e.normalized_influence,
                dead_end: e.dead_end,
                covered: e.covered.clone(),
                verdict: self.verdicts.get(&(v.id, e.presented.clone())).copied(),
                context: self.context(v, &e.presented),
            })
            .collect();
        Ok(FlagList {
            version: v.id,
            unit_kind: d.unit_kind,
            outcome: d.outcome,
            v_hat: v.analysis.v_hat,
            entries,
        })
    }

    fn lineage(&self, id: usize) -> Vec<usize> {
        let mut chain = vec![id];
        while let Some(p) = self.versions[*chain.last().expect("nonempty")].parent {
            chain.push(p);
        }
        chain.reverse();
        chain
    }

    pub fn status(&self, version: Option<usize>) -> Result<Status> {
        let v = self.version(version)?;
        let d = &v.analysis.diagnosis;
        let validated: Vec<String> = d
            .flagged
            .iter()
            .filter(|u| self.verdicts.get(&(v.id, (*u).clone())) == Some(&Decision::Representative))
            .cloned()
            .collect();
        let annotation = (!d.flagged.is_empty() && validated.len() == d.flagged.len())
            .then(|| "expert-validated".to_string());
        let lineage = self.lineage(v.id);
        Ok(Status {
            version: v.id,
            latest: self.latest(),
            outcome: d.outcome,
            v_hat: v.analysis.v_hat,
            flagged: d.flagged.clone(),
            dead_ends: d.dead_ends.clone(),
            validated,
            annotation,
            history: lineage
                .iter()
                .map(|&i| self.versions[i].summary())
                .collect(),
            audit: self
                .audit
                .iter()
                .filter(|e| lineage.contains(&e.version))
                .cloned()
                .collect(),
        })
    }

    pub fn transition(&self, id: &str, version: Option<usize>) -> Result<TransitionView> {
        let v = self.version(version)?;
        let t = v
            .dataset
            .by_id(id)
            .ok_or_else(|| ReviewError::UnknownTransition(id.to_string()))?;
        let unit_id = match v.analysis.report.unit_kind {
            UnitKind::Transition => id,
            UnitKind::Trajectory => t.trajectory_id.as_str(),
        };
        Ok(TransitionView {
            version: v.id,
            transition: t.clone(),
            unit: v.analysis.report.unit(unit_id).cloned(),
            context: context_window(&v.dataset, id, CONTEXT_STEPS)
                .iter()
                .filter_map(|i| v.dataset.by_id(i))
                .cloned()
                .collect(),
        })
    }

    /// Validates `verdict` and computes the edited version it implies without
    /// touching the session. This is the expensive part of a submission.
    pub fn prepare(&self, verdict: &Verdict) -> Result<Prepared> {
        let v = self.version(verdict.version)?;
        let flagged = v
            .analysis
            .report
            .unit(&verdict.unit_id)
            .is_some_and(|u| u.flagged);
        if !flagged {
            return Err(ReviewError::NotFlagged {
                version: v.id,
                unit: verdict.unit_id.clone(),
            });
        }
        let edited = match apply_verdict(&v.dataset, self.unit_kind(), verdict)? {
            Some(ds) => {
                let analysis = self.setup.analyze(&ds)?;
                Some((ds, analysis))
            }
            None => None,
        };
        Ok(Prepared {
            base: v.id,
            versions_seen: self.versions.len(),
            verdict: Verdict {
                version: Some(v.id),
                ..verdict.clone()
            },
            edited,
        })
    }

    /// Records a prepared verdict. `prepared` must come from this session with no
    /// other commit in between.
    pub fn commit(&mut self, prepared: Prepared) -> VerdictResponse {
        assert_eq!(
            prepared.versions_seen,
            self.versions.len(),
            "stale prepared verdict"
        );
        let seq = self.audit.len();
        let base = prepared.base;
        let v_hat_before = self.versions[base].analysis.v_hat;
        let new_version = prepared.edited.map(|(dataset, analysis)| {
            let id = self.versions.len();
            self.versions.push(Version {
                id,
                parent: Some(base),
                created_by: Some(seq),
                fingerprint: dataset.fingerprint(),
                dataset,
                analysis,
            });
            id
        });
        self.verdicts.insert(
            (base, prepared.verdict.unit_id.clone()),
            prepared.verdict.decision,
        );
        self.audit.push(AuditEntry {
            seq,
            version: base,
            verdict: prepared.verdict,
            new_version,
        });
        VerdictResponse {
            seq,
            version: base,
            new_version,
            v_hat_before,
            v_hat_after: new_version.map(|i| self.versions[i].analysis.v_hat),
        }
    }

    pub fn submit(&mut self, verdict: &Verdict) -> Result<VerdictResponse> {
        let p = self.prepare(verdict)?;
        Ok(self.commit(p))
    }
}

/// A verdict that passed validation, with its recomputed analysis.
pub struct Prepared {
    base: usize,
    versions_seen: usize,
    verdict: Verdict,
    edited: Option<(Dataset, Analysis)>,
}
