//! Benchmark scoring: multiple-choice accuracy with strict response
//! parsing, BFOV mean IoU, direction-hit rates, VLN metrics, and the
//! token-efficiency table. Invalid responses score zero, never error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere::{bfov_iou, deg_to_rad, wrap_angle, Bfov, SphericalDirection};
use crate::taskgen::{AnswerKind, TaskInstance, OPTION_LETTERS};

pub const VLN_SUCCESS_RADIUS_M: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("duplicate prediction for task '{0}'")]
    DuplicatePrediction(String),
    #[error("episode {0}: shortest_path_length must be positive, got {1}")]
    BadShortestPath(usize, f64),
    #[error("episode {0}: empty trajectory")]
    EmptyTrajectory(usize),
    #[error("efficiency baseline '{0}' not found")]
    MissingBaseline(String),
    #[error("efficiency row '{0}' has neither total_tokens nor steps*tokens_per_call")]
    MissingTokens(String),
    #[error("predictions parse error at line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// One raw model response for a task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub raw_text: String,
}

/// Extract the single standalone option letter (case-insensitive, wrappers
/// like "Answer: (b)." tolerated). Two distinct standalone letters are
/// ambiguous and therefore invalid.
pub fn parse_choice(raw: &str, n_options: usize) -> Option<usize> {
    assert!((2..=26).contains(&n_options));
    let bytes: Vec<char> = raw.chars().collect();
    let mut found: Option<usize> = None;
    for (i, &c) in bytes.iter().enumerate() {
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let prev_alnum = i > 0 && bytes[i - 1].is_alphanumeric();
        let next_alnum = i + 1 < bytes.len() && bytes[i + 1].is_alphanumeric();
        if prev_alnum || next_alnum {
            continue;
        }
        let idx = (c.to_ascii_uppercase() as u8 - b'A') as usize;
        if idx >= n_options {
            continue;
        }
        match found {
            None => found = Some(idx),
            Some(prev) if prev == idx => {}
            Some(_) => return None,
        }
    }
    found
}

/// Strict "[yaw, pitch, x_fov, y_fov]" degree form with range checks; any
/// deviation is invalid.
pub fn parse_bfov(raw: &str) -> Option<Bfov> {
    let s = raw.trim();
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 4 {
        return None;
    }
    let mut vals = [0.0f64; 4];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p.trim().parse().ok()?;
    }
    let [yaw, pitch, x_fov, y_fov] = vals;
    if !(-180.0..=180.0).contains(&yaw)
        || !(-90.0..=90.0).contains(&pitch)
        || !(x_fov > 0.0 && x_fov <= 360.0)
        || !(y_fov > 0.0 && y_fov <= 180.0)
    {
        return None;
    }
    Bfov::from_degrees(yaw, pitch, x_fov, y_fov).ok()
}

/// Parsed "[yaw, pitch]" degree form for direction answers.
pub fn parse_direction(raw: &str) -> Option<SphericalDirection> {
    let s = raw.trim();
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 2 {
        return None;
    }
    let yaw: f64 = parts[0].trim().parse().ok()?;
    let pitch: f64 = parts[1].trim().parse().ok()?;
    if !(-180.0..=180.0).contains(&yaw) || !(-90.0..=90.0).contains(&pitch) {
        return None;
    }
    SphericalDirection::from_degrees(yaw, pitch).ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub accuracy: f64,
    /// (category, accuracy, item count)
    pub per_category: Vec<(String, f64, usize)>,
    pub n_items: usize,
    pub n_invalid: usize,
}

fn index_predictions<'a>(
    preds: &'a [Prediction],
) -> Result<std::collections::BTreeMap<&'a str, &'a Prediction>, EvalError> {
    let mut map = std::collections::BTreeMap::new();
    for p in preds {
        if map.insert(p.task_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.task_id.clone()));
        }
    }
    Ok(map)
}

/// Accuracy over choice tasks; missing or unparsable predictions count as
/// incorrect. Categories are the task families.
pub fn score_mc(tasks: &[TaskInstance], preds: &[Prediction]) -> Result<McReport, EvalError> {
    let by_id = index_predictions(preds)?;
    let mut per: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    let mut correct = 0usize;
    let mut invalid = 0usize;
    let mut n = 0usize;
    for t in tasks.iter().filter(|t| t.answer_kind == AnswerKind::Choice) {
        n += 1;
        let parsed = by_id
            .get(t.id.as_str())
            .and_then(|p| parse_choice(&p.raw_text, t.options.len()));
        let hit = match parsed {
            Some(idx) => OPTION_LETTERS[idx] == t.answer,
            None => {
                invalid += 1;
                false
            }
        };
        let e = per.entry(t.family.name().to_string()).or_default();
        e.1 += 1;
        if hit {
            e.0 += 1;
            correct += 1;
        }
    }
    Ok(McReport {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        per_category: per
            .into_iter()
            .map(|(cat, (c, total))| (cat, c as f64 / total as f64, total))
            .collect(),
        n_items: n,
        n_invalid: invalid,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BfovReport {
    pub mean_iou: f64,
    pub n_items: usize,
    pub n_invalid: usize,
}

/// Mean wrap-aware IoU over bfov tasks; invalid predictions contribute 0.
pub fn score_bfov(tasks: &[TaskInstance], preds: &[Prediction]) -> Result<BfovReport, EvalError> {
    let by_id = index_predictions(preds)?;
    let mut total = 0.0f64;
    let mut n = 0usize;
    let mut invalid = 0usize;
    for t in tasks.iter().filter(|t| t.answer_kind == AnswerKind::Bfov) {
        let Some(truth) = t.bfov_deg else { continue };
        let truth = Bfov::from_degrees(truth[0], truth[1], truth[2], truth[3])
            .expect("task carries a valid ground-truth Bfov");
        n += 1;
        match by_id.get(t.id.as_str()).and_then(|p| parse_bfov(&p.raw_text)) {
            Some(pred) => total += bfov_iou(&pred, &truth),
            None => invalid += 1,
        }
    }
    Ok(BfovReport {
        mean_iou: if n == 0 { 0.0 } else { total / n as f64 },
        n_items: n,
        n_invalid: invalid,
    })
}

/// Target of a direction-hit item: an angular tolerance around a direction
/// or an explicit region rectangle.
#[derive(Debug, Clone, Copy)]
pub enum DirectionTarget {
    Tolerance { target: SphericalDirection, yaw_tol: f64, pitch_tol: f64 },
    Region(Bfov),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionHitReport {
    pub hit_rate: f64,
    pub yaw_hit_rate: f64,
    pub pitch_hit_rate: f64,
    pub n_items: usize,
    /// set when the shipped tolerance defaults were used; they are this
    /// toolkit's defaults, not values taken from the benchmark definition
    pub default_tolerances: bool,
}

pub fn default_direction_tolerances() -> (f64, f64) {
    (deg_to_rad(15.0), deg_to_rad(15.0))
}

/// Wrap-aware hit test per prediction, with yaw-only and pitch-only
/// marginal rates.
pub fn score_direction_hit(
    preds: &[Option<SphericalDirection>],
    targets: &[DirectionTarget],
    used_default_tolerances: bool,
) -> DirectionHitReport {
    assert_eq!(preds.len(), targets.len());
    let mut hits = 0usize;
    let mut yaw_hits = 0usize;
    let mut pitch_hits = 0usize;
    for (pred, target) in preds.iter().zip(targets) {
        let Some(p) = pred else { continue };
        let (yaw_ok, pitch_ok) = match target {
            DirectionTarget::Tolerance { target, yaw_tol, pitch_tol } => (
                wrap_angle(p.yaw() - target.yaw()).abs() <= *yaw_tol,
                (p.pitch() - target.pitch()).abs() <= *pitch_tol,
            ),
            DirectionTarget::Region(b) => {
                let r = b.rect();
                let off = (p.yaw() - r.yaw_start).rem_euclid(crate::sphere::TAU);
                (off <= r.yaw_width, p.pitch() >= r.pitch_lo && p.pitch() <= r.pitch_hi)
            }
        };
        if yaw_ok {
            yaw_hits += 1;
        }
        if pitch_ok {
            pitch_hits += 1;
        }
        if yaw_ok && pitch_ok {
            hits += 1;
        }
    }
    let n = preds.len();
    let rate = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    DirectionHitReport {
        hit_rate: rate(hits),
        yaw_hit_rate: rate(yaw_hits),
        pitch_hit_rate: rate(pitch_hits),
        n_items: n,
        default_tolerances: used_default_tolerances,
    }
}

/// One navigation episode in a metric scene frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub trajectory: Vec<[f64; 3]>,
    pub goal: [f64; 3],
    pub shortest_path_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_path_length: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VlnReport {
    /// mean final distance to goal, meters
    pub ne: f64,
    /// fraction of episodes that ever came within the success radius
    pub osr: f64,
    /// fraction of episodes ending within the success radius
    pub sr: f64,
    /// success weighted by path length
    pub spl: f64,
    pub n_episodes: usize,
    pub success_radius: f64,
}

fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// NE/OSR/SR/SPL with the success rule d <= tau. Positions are taken as
/// given; `dist` defaults to Euclidean but a caller may supply a geodesic.
pub fn score_vln_with(
    episodes: &[Episode],
    tau: f64,
    dist: impl Fn(&[f64; 3], &[f64; 3]) -> f64,
) -> Result<VlnReport, EvalError> {
    let mut ne = 0.0;
    let mut osr = 0;
    let mut sr = 0;
    let mut spl = 0.0;
    for (i, e) in episodes.iter().enumerate() {
        if e.trajectory.is_empty() {
            return Err(EvalError::EmptyTrajectory(i));
        }
        if !(e.shortest_path_length > 0.0) {
            return Err(EvalError::BadShortestPath(i, e.shortest_path_length));
        }
        let final_d = dist(e.trajectory.last().unwrap(), &e.goal);
        let min_d = e.trajectory.iter().map(|p| dist(p, &e.goal)).fold(f64::INFINITY, f64::min);
        let p = e.executed_path_length.unwrap_or_else(|| {
            e.trajectory.windows(2).map(|w| dist(&w[0], &w[1])).sum()
        });
        ne += final_d;
        if min_d <= tau {
            osr += 1;
        }
        if final_d <= tau {
            sr += 1;
            spl += e.shortest_path_length / e.shortest_path_length.max(p);
        }
    }
    let n = episodes.len();
    let frac = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    Ok(VlnReport {
        ne: frac(ne),
        osr: frac(osr as f64),
        sr: frac(sr as f64),
        spl: frac(spl),
        n_episodes: n,
        success_radius: tau,
    })
}

pub fn score_vln(episodes: &[Episode], tau: f64) -> Result<VlnReport, EvalError> {
    score_vln_with(episodes, tau, |a, b| euclid(a, b))
}

/// Input row for the token-efficiency table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyInput {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_per_call: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub name: String,
    pub effective_tokens: u64,
    pub rel_cost: f64,
    /// "1.79x"-style display string, 2 decimals
    pub rel_cost_text: String,
}

fn effective_tokens(r: &EfficiencyInput) -> Result<u64, EvalError> {
    match (r.total_tokens, r.steps, r.tokens_per_call) {
        (Some(t), _, _) => Ok(t),
        (None, Some(s), Some(per)) => Ok(s * per),
        _ => Err(EvalError::MissingTokens(r.name.clone())),
    }
}

/// Relative input-token cost of each pipeline against a named baseline.
pub fn efficiency_report(
    rows: &[EfficiencyInput],
    baseline: &str,
) -> Result<Vec<EfficiencyRow>, EvalError> {
    let base = rows
        .iter()
        .find(|r| r.name == baseline)
        .ok_or_else(|| EvalError::MissingBaseline(baseline.to_string()))?;
    let base_tokens = effective_tokens(base)? as f64;
    rows.iter()
        .map(|r| {
            let tokens = effective_tokens(r)?;
            let rel = tokens as f64 / base_tokens;
            let rounded = (rel * 100.0).round() / 100.0;
            Ok(EfficiencyRow {
                name: r.name.clone(),
                effective_tokens: tokens,
                rel_cost: rounded,
                rel_cost_text: format!("{rounded:.2}x"),
            })
        })
        .collect()
}

/// Aggregate report over whichever settings were scored.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bfov: Option<BfovReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionHitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vln: Option<VlnReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub efficiency: Vec<EfficiencyRow>,
}

impl EvalReport {
    /// Plain-text table for terminals; the machine form is the JSON
    /// serialization of the struct itself.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(mc) = &self.mc {
            out.push_str(&format!(
                "MC accuracy: {:.4} ({} items, {} invalid)\n",
                mc.accuracy, mc.n_items, mc.n_invalid
            ));
            for (cat, acc, n) in &mc.per_category {
                out.push_str(&format!("  {cat}: {acc:.4} ({n})\n"));
            }
        }
        if let Some(b) = &self.bfov {
            out.push_str(&format!(
                "BFOV mIoU: {:.4} ({} items, {} invalid)\n",
                b.mean_iou, b.n_items, b.n_invalid
            ));
        }
        if let Some(d) = &self.direction {
            if d.default_tolerances {
                out.push_str("direction-hit tolerances: toolkit defaults (15/15 deg), not from the benchmark definition\n");
            }
            out.push_str(&format!(
                "direction hit: {:.4} (yaw {:.4}, pitch {:.4}, {} items)\n",
                d.hit_rate, d.yaw_hit_rate, d.pitch_hit_rate, d.n_items
            ));
        }
        if let Some(v) = &self.vln {
            out.push_str(&format!(
                "VLN: NE {:.2} m, OSR {:.4}, SR {:.4}, SPL {:.4} ({} episodes, radius {} m)\n",
                v.ne, v.osr, v.sr, v.spl, v.n_episodes, v.success_radius
            ));
        }
        if !self.efficiency.is_empty() {
            out.push_str("efficiency:\n");
            for r in &self.efficiency {
                out.push_str(&format!(
                    "  {}: {} tokens, {}\n",
                    r.name, r.effective_tokens, r.rel_cost_text
                ));
            }
        }
        out
    }
}

/// Line-delimited predictions file.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| EvalError::Parse { line: i + 1, source }))
        .collect()
}

/// Line-delimited episodes file.
pub fn parse_episodes(text: &str) -> Result<Vec<Episode>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| EvalError::Parse { line: i + 1, source }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{gen_all, recompute_answer, default_seam_margin};
    use approx::assert_abs_diff_eq;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn choice_parser_corpus() {
        let cases: [(&str, Option<usize>); 12] = [
            ("B", Some(1)),
            ("b", Some(1)),
            ("The answer is (c).", Some(2)),
            ("Answer: B", Some(1)),
            ("maybe B or C", None),
            ("BB", None),
            ("", None),
            ("the final answer", None),
            ("B. the chair", Some(1)),
            ("I pick B, definitely B", Some(1)),
            ("option D", Some(3)),
            ("1", None),
        ];
        for (raw, want) in cases {
            assert_eq!(parse_choice(raw, 4), want, "raw = {raw:?}");
        }
        // letters beyond the option count are not options
        assert_eq!(parse_choice("E", 4), None);
        assert_eq!(parse_choice("E", 5), Some(4));
    }

    #[test]
    fn bfov_parser_corpus() {
        let b = parse_bfov("[30, -10, 40, 25]").unwrap();
        assert_abs_diff_eq!(b.center().yaw_deg(), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.center().pitch_deg(), -10.0, epsilon = 1e-9);
        assert!(parse_bfov(" [ 30 , -10 , 40 , 25 ] ").is_some());
        assert!(parse_bfov("[200, 0, 40, 25]").is_none(), "yaw out of range");
        assert!(parse_bfov("[0, 95, 40, 25]").is_none(), "pitch out of range");
        assert!(parse_bfov("[0, 0, 0, 25]").is_none(), "zero fov");
        assert!(parse_bfov("[0, 0, 40, 200]").is_none(), "y_fov out of range");
        assert!(parse_bfov("yaw=30 pitch=-10 fov=40x25").is_none());
        assert!(parse_bfov("[30, -10, 40]").is_none());
        assert!(parse_bfov("[30, -10, 40, 25, 7]").is_none());
    }

    fn mc_task(id: &str, answer: &str) -> TaskInstance {
        TaskInstance {
            id: id.to_string(),
            family: crate::taskgen::TaskFamily::Semantic,
            operator: crate::taskgen::TaskOperator::Identification,
            prompt: String::new(),
            answer_kind: AnswerKind::Choice,
            answer: answer.to_string(),
            options: vec!["w".into(), "x".into(), "y".into(), "z".into()],
            bfov_deg: None,
            panorama_id: "p".into(),
            node_ids: vec![],
            params: vec![],
            system_prompt_ref: String::new(),
        }
    }

    #[test]
    fn mc_three_of_four() {
        let tasks: Vec<TaskInstance> =
            (0..4).map(|i| mc_task(&format!("t{i}"), "A")).collect();
        let preds = vec![
            Prediction { task_id: "t0".into(), raw_text: "A".into() },
            Prediction { task_id: "t1".into(), raw_text: "a".into() },
            Prediction { task_id: "t2".into(), raw_text: "Answer: A".into() },
            Prediction { task_id: "t3".into(), raw_text: "B".into() },
        ];
        let r = score_mc(&tasks, &preds).unwrap();
        assert_abs_diff_eq!(r.accuracy, 0.75);
        assert_eq!(r.n_invalid, 0);
    }

    #[test]
    fn mc_invalid_and_missing_count_as_wrong() {
        let tasks: Vec<TaskInstance> =
            (0..3).map(|i| mc_task(&format!("t{i}"), "A")).collect();
        let preds = vec![Prediction { task_id: "t0".into(), raw_text: "B or C".into() }];
        let r = score_mc(&tasks, &preds).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.n_invalid, 3);
    }

    #[test]
    fn mc_duplicate_prediction_is_error() {
        let tasks = vec![mc_task("t0", "A")];
        let preds = vec![
            Prediction { task_id: "t0".into(), raw_text: "A".into() },
            Prediction { task_id: "t0".into(), raw_text: "B".into() },
        ];
        assert!(matches!(score_mc(&tasks, &preds), Err(EvalError::DuplicatePrediction(_))));
    }

    #[test]
    fn mc_permutation_invariant() {
        let tasks: Vec<TaskInstance> =
            (0..6).map(|i| mc_task(&format!("t{i}"), OPTION_LETTERS[i % 4])).collect();
        let preds: Vec<Prediction> = (0..6)
            .map(|i| Prediction { task_id: format!("t{i}"), raw_text: "B".into() })
            .collect();
        let a = score_mc(&tasks, &preds).unwrap().accuracy;
        let mut tasks2 = tasks.clone();
        tasks2.reverse();
        let mut preds2 = preds.clone();
        preds2.rotate_left(3);
        let b = score_mc(&tasks2, &preds2).unwrap().accuracy;
        assert_eq!(a, b);
    }

    fn bfov_task(id: &str, deg: [f64; 4]) -> TaskInstance {
        TaskInstance {
            answer_kind: AnswerKind::Bfov,
            bfov_deg: Some(deg),
            answer: format!("[{:.2}, {:.2}, {:.2}, {:.2}]", deg[0], deg[1], deg[2], deg[3]),
            options: vec![],
            ..mc_task(id, "A")
        }
    }

    #[test]
    fn bfov_perfect_and_invalid() {
        let tasks = vec![
            bfov_task("t0", [30.0, -10.0, 40.0, 25.0]),
            bfov_task("t1", [175.0, 0.0, 20.0, 20.0]),
        ];
        let perfect: Vec<Prediction> = tasks
            .iter()
            .map(|t| Prediction { task_id: t.id.clone(), raw_text: t.answer.clone() })
            .collect();
        let r = score_bfov(&tasks, &perfect).unwrap();
        assert!(r.mean_iou > 0.99, "{}", r.mean_iou);
        let garbage: Vec<Prediction> = tasks
            .iter()
            .map(|t| Prediction { task_id: t.id.clone(), raw_text: "no idea".into() })
            .collect();
        let r = score_bfov(&tasks, &garbage).unwrap();
        assert_eq!(r.mean_iou, 0.0);
        assert_eq!(r.n_invalid, 2);
    }

    #[test]
    fn bfov_seam_pair_scores_one_third() {
        let tasks = vec![bfov_task("t0", [175.0, 0.0, 20.0, 20.0])];
        let preds =
            vec![Prediction { task_id: "t0".into(), raw_text: "[-175, 0, 20, 20]".into() }];
        let r = score_bfov(&tasks, &preds).unwrap();
        assert_abs_diff_eq!(r.mean_iou, 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn direction_hit_wrap_and_marginals() {
        let d = |y: f64, p: f64| SphericalDirection::from_degrees(y, p).unwrap();
        let tol = |y: f64, p: f64| DirectionTarget::Tolerance {
            target: d(y, p),
            yaw_tol: deg_to_rad(5.0),
            pitch_tol: deg_to_rad(5.0),
        };
        let preds = vec![
            Some(d(179.0, 0.0)),  // wraps to hit the -179 target
            Some(d(0.0, 0.0)),    // exact
            Some(d(10.0, 0.0)),   // yaw miss, pitch hit
            None,                 // unparsable
        ];
        let targets = vec![tol(-179.0, 0.0), tol(0.0, 0.0), tol(0.0, 0.0), tol(0.0, 0.0)];
        let r = score_direction_hit(&preds, &targets, true);
        assert_abs_diff_eq!(r.hit_rate, 0.5);
        assert_abs_diff_eq!(r.yaw_hit_rate, 0.5);
        assert_abs_diff_eq!(r.pitch_hit_rate, 0.75);
        assert!(r.default_tolerances);
    }

    #[test]
    fn direction_hit_matches_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = |y: f64, p: f64| SphericalDirection::from_degrees(y, p).unwrap();
        let n = 500;
        let preds: Vec<Option<SphericalDirection>> = (0..n)
            .map(|_| Some(d(rng.gen_range(-180.0..180.0), rng.gen_range(-89.0..89.0))))
            .collect();
        let targets: Vec<DirectionTarget> = (0..n)
            .map(|_| DirectionTarget::Tolerance {
                target: d(rng.gen_range(-180.0..180.0), rng.gen_range(-89.0..89.0)),
                yaw_tol: deg_to_rad(30.0),
                pitch_tol: deg_to_rad(30.0),
            })
            .collect();
        let r = score_direction_hit(&preds, &targets, false);
        let mut manual = 0usize;
        for (p, t) in preds.iter().zip(&targets) {
            let DirectionTarget::Tolerance { target, yaw_tol, pitch_tol } = t else { unreachable!() };
            let p = p.unwrap();
            let dy = wrap_angle(p.yaw() - target.yaw()).abs();
            let dp = (p.pitch() - target.pitch()).abs();
            if dy <= *yaw_tol && dp <= *pitch_tol {
                manual += 1;
            }
        }
        assert_abs_diff_eq!(r.hit_rate, manual as f64 / n as f64, epsilon = 1e-12);
    }

    fn episode(traj: Vec<[f64; 3]>, goal: [f64; 3], l: f64) -> Episode {
        Episode { trajectory: traj, goal, shortest_path_length: l, executed_path_length: None }
    }

    #[test]
    fn vln_spl_formula() {
        // success with l=10, p=20 -> SPL 0.5
        let e = Episode {
            trajectory: vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]],
            goal: [10.0, 0.0, 0.0],
            shortest_path_length: 10.0,
            executed_path_length: Some(20.0),
        };
        let r = score_vln(&[e], VLN_SUCCESS_RADIUS_M).unwrap();
        assert_abs_diff_eq!(r.spl, 0.5);
        assert_abs_diff_eq!(r.sr, 1.0);
    }

    #[test]
    fn vln_threshold_is_inclusive() {
        for (d, want) in [(2.9, 1.0), (3.0, 1.0), (3.1, 0.0)] {
            let e = episode(vec![[0.0, 0.0, 0.0], [d, 0.0, 0.0]], [0.0, 0.0, 0.0], 1.0);
            let r = score_vln(&[e], VLN_SUCCESS_RADIUS_M).unwrap();
            assert_eq!(r.sr, want, "final distance {d}");
        }
    }

    #[test]
    fn vln_osr_hit_sr_miss() {
        // passes within 1 m of the goal, ends 5 m away
        let e = episode(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
            [1.0, 0.0, 1.0],
            2.0,
        );
        let r = score_vln(&[e], VLN_SUCCESS_RADIUS_M).unwrap();
        assert_eq!(r.osr, 1.0);
        assert_eq!(r.sr, 0.0);
        assert_eq!(r.spl, 0.0);
    }

    #[test]
    fn vln_bounds_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let eps: Vec<Episode> = (0..20)
                .map(|_| {
                    let traj: Vec<[f64; 3]> = (0..rng.gen_range(2..8))
                        .map(|_| {
                            [
                                rng.gen_range(-10.0..10.0),
                                0.0,
                                rng.gen_range(-10.0..10.0),
                            ]
                        })
                        .collect();
                    episode(
                        traj,
                        [rng.gen_range(-10.0..10.0), 0.0, rng.gen_range(-10.0..10.0)],
                        rng.gen_range(0.5..15.0),
                    )
                })
                .collect();
            let r = score_vln(&eps, VLN_SUCCESS_RADIUS_M).unwrap();
            assert!(r.spl <= r.sr + 1e-12, "SPL {} > SR {}", r.spl, r.sr);
            assert!(r.osr >= r.sr - 1e-12, "OSR {} < SR {}", r.osr, r.sr);
            for v in [r.osr, r.sr, r.spl] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn vln_bad_shortest_path_is_error() {
        let e = episode(vec![[0.0; 3]], [0.0; 3], 0.0);
        assert!(matches!(
            score_vln(&[e], VLN_SUCCESS_RADIUS_M),
            Err(EvalError::BadShortestPath(0, _))
        ));
    }

    #[test]
    fn efficiency_published_totals() {
        let rows = vec![
            EfficiencyInput { name: "direct".into(), steps: None, tokens_per_call: None, total_tokens: Some(16_500) },
            EfficiencyInput { name: "rot-a".into(), steps: None, tokens_per_call: None, total_tokens: Some(29_600) },
            EfficiencyInput { name: "rot-b".into(), steps: None, tokens_per_call: None, total_tokens: Some(29_900) },
            EfficiencyInput { name: "crop-a".into(), steps: None, tokens_per_call: None, total_tokens: Some(19_200) },
            EfficiencyInput { name: "crop-b".into(), steps: None, tokens_per_call: None, total_tokens: Some(18_700) },
        ];
        let out = efficiency_report(&rows, "direct").unwrap();
        let rel = |name: &str| out.iter().find(|r| r.name == name).unwrap().rel_cost;
        assert_eq!(rel("direct"), 1.00);
        let close = |a: f64, b: f64| (a - b).abs() <= 0.01 + 1e-9;
        assert!(close(rel("rot-a"), 1.80));
        assert!(close(rel("rot-b"), 1.81));
        assert!(close(rel("crop-a"), 1.16));
        assert!(close(rel("crop-b"), 1.13));
        assert_eq!(out[0].rel_cost_text, "1.00x");
    }

    #[test]
    fn efficiency_steps_times_per_call() {
        let rows = vec![
            EfficiencyInput { name: "base".into(), steps: Some(10), tokens_per_call: Some(100), total_tokens: None },
            EfficiencyInput { name: "twice".into(), steps: Some(20), tokens_per_call: Some(100), total_tokens: None },
        ];
        let out = efficiency_report(&rows, "base").unwrap();
        assert_eq!(out[1].effective_tokens, 2000);
        assert_eq!(out[1].rel_cost_text, "2.00x");
        assert!(matches!(
            efficiency_report(&rows, "missing"),
            Err(EvalError::MissingBaseline(_))
        ));
    }

    #[test]
    fn oracle_scores_perfectly_random_scores_chance() {
        let g = crate::taskgen::tests::fixture_graph();
        let (tasks, _) = gen_all(&g, 31, default_seam_margin());
        // oracle: answer letters recomputed from the graph
        let oracle: Vec<Prediction> = tasks
            .iter()
            .filter(|t| t.answer_kind == AnswerKind::Choice)
            .map(|t| Prediction { task_id: t.id.clone(), raw_text: recompute_answer(t, &g).unwrap() })
            .collect();
        let r = score_mc(&tasks, &oracle).unwrap();
        assert_eq!(r.accuracy, 1.0);
        // oracle bfov: serialized truth round-trips to near-perfect IoU
        let bfov_oracle: Vec<Prediction> = tasks
            .iter()
            .filter(|t| t.answer_kind == AnswerKind::Bfov)
            .map(|t| Prediction { task_id: t.id.clone(), raw_text: t.answer.clone() })
            .collect();
        let rb = score_bfov(&tasks, &bfov_oracle).unwrap();
        assert!(rb.mean_iou >= 0.99, "{}", rb.mean_iou);
        // random answerer: accuracy near per-item chance over many seeds
        let choice_tasks: Vec<&TaskInstance> =
            tasks.iter().filter(|t| t.answer_kind == AnswerKind::Choice).collect();
        let chance: f64 = choice_tasks.iter().map(|t| 1.0 / t.options.len() as f64).sum::<f64>()
            / choice_tasks.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 200;
        let mut total = 0.0;
        for _ in 0..trials {
            let preds: Vec<Prediction> = choice_tasks
                .iter()
                .map(|t| Prediction {
                    task_id: t.id.clone(),
                    raw_text: OPTION_LETTERS[rng.gen_range(0..t.options.len())].to_string(),
                })
                .collect();
            total += score_mc(&tasks, &preds).unwrap().accuracy;
        }
        let mean = total / trials as f64;
        // 99% interval on the mean of trials*len(choice_tasks) Bernoulli draws
        let n = (trials * choice_tasks.len()) as f64;
        let half = 2.5758 * (chance * (1.0 - chance) / n).sqrt();
        assert!((mean - chance).abs() <= half, "mean {mean} vs chance {chance} +- {half}");
    }

    #[test]
    fn report_round_trip_and_text() {
        let report = EvalReport {
            vln: Some(score_vln(&[episode(vec![[0.0; 3]], [0.0; 3], 1.0)], 3.0).unwrap()),
            ..Default::default()
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert!(back.vln.is_some());
        assert!(report.render_text().contains("VLN"));
    }

    #[test]
    fn episodes_and_predictions_files() {
        let text = "{\"task_id\": \"t0\", \"raw_text\": \"B\"}\n\n{\"task_id\": \"t1\", \"raw_text\": \"[0, 0, 10, 10]\"}\n";
        let preds = parse_predictions(text).unwrap();
        assert_eq!(preds.len(), 2);
        let etext = "{\"trajectory\": [[0,0,0],[1,0,0]], \"goal\": [1,0,0], \"shortest_path_length\": 1.0}\n";
        let eps = parse_episodes(etext).unwrap();
        assert_eq!(eps.len(), 1);
        assert!(parse_predictions("nope\n").is_err());
    }
}
