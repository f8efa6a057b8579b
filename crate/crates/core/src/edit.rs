//! Field-level dataset edits. Each edit yields a new `Dataset`; the input is never
//! touched.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Transition};
use crate::error::{OpeError, Result};

/// Replace one numeric field of one transition.
///
/// `field` is `reward`, `action`, `behavior_prob`, `state.N` or `next_state.N`.
/// `target` names the transition to patch; when absent the patch applies to the
/// transition the edit is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub field: String,
    pub value: f64,
}

fn component(field: &str, prefix: &str) -> Option<Result<usize>> {
    let rest = field.strip_prefix(prefix)?.strip_prefix('.')?;
    Some(
        rest.parse::<usize>()
            .map_err(|_| OpeError::InvalidPatch(format!("bad component index in `{field}`"))),
    )
}

fn set(t: &mut Transition, field: &str, value: f64) -> Result<()> {
    let bad = |m: String| Err(OpeError::InvalidPatch(m));
    if field.is_empty() {
        return bad("empty field path".into());
    }
    match field {
        "reward" => t.reward = value,
        "behavior_prob" => t.behavior_prob = Some(value),
        "action" => {
            if !(value >= 0.0 && value.fract() == 0.0 && value < u32::MAX as f64) {
                return bad(format!("action must be a nonnegative integer, got {value}"));
            }
            t.action = value as usize;
        }
        _ => {
            let (vec, k) = if let Some(k) = component(field, "next_state") {
                (&mut t.next_state, k?)
            } else if let Some(k) = component(field, "state") {
                (&mut t.state, k?)
            } else {
                return bad(format!("unknown field `{field}`"));
            };
            let dim = vec.len();
            let Some(slot) = vec.get_mut(k) else {
                return bad(format!(
                    "`{field}` is out of range for state dimension {dim}"
                ));
            };
            *slot = value;
        }
    }
    Ok(())
}

/// Copy of `dataset` with `patches` applied in order. Patches without a target
/// apply to `default_target`.
pub fn apply_patches(
    dataset: &Dataset,
    default_target: Option<&str>,
    patches: &[FieldPatch],
) -> Result<Dataset> {
    if patches.is_empty() {
        return Err(OpeError::InvalidPatch("no patches given".into()));
    }
    let mut ts = dataset.transitions().to_vec();
    for p in patches {
        let id = p.target.as_deref().or(default_target).ok_or_else(|| {
            OpeError::InvalidPatch(format!("patch on `{}` needs a target transition", p.field))
        })?;
        let pos = dataset
            .position(id)
            .ok_or_else(|| OpeError::InvalidPatch(format!("no transition `{id}`")))?;
        set(&mut ts[pos], &p.field, p.value)?;
    }
    Dataset::with_validation(ts, dataset.validation())
}
