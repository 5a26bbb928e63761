//! Dataset manifests, AD/AC metrics, confusion matrices and Table-style
//! reports.
//!
//! AD F1 treats Abnormal as the positive class. AC F1 is the macro average
//! of per-label F1 over the label set; labels absent from both gold and
//! predictions are left out of the mean.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::MediaRef;
use crate::labels::{AdLabel, LabelSet};
use crate::orchestrator::SessionResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("manifest line {line}: {message}")]
    ManifestInvalid { line: usize, message: String },
    #[error("predictions line {line}: {message}")]
    PredictionsInvalid { line: usize, message: String },
    #[error("no gold label for video `{0}`")]
    MissingGold(String),
    #[error("no predictions to score")]
    EmptyInput,
    #[error("label `{0}` is not in the label set")]
    UnknownLabel(String),
    #[error("matrix shapes or label orders differ")]
    ShapeMismatch,
    #[error("baseline row `{0}` not found among the results")]
    UnknownBaselineRow(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    pub uri: String,
    pub gold_label: String,
    pub resolution: Resolution,
    pub dataset: String,
}

impl ManifestEntry {
    pub fn media(&self) -> MediaRef {
        MediaRef::new(self.video_id.clone(), self.uri.clone())
    }
}

/// Parses a JSONL manifest; gold labels are canonicalized against `labels`.
pub fn parse_manifest(text: &str, labels: &LabelSet) -> Result<Vec<ManifestEntry>, EvalError> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| EvalError::ManifestInvalid { line: line_no, message };
        let mut entry: ManifestEntry = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        entry.gold_label = labels
            .canonical(&entry.gold_label)
            .ok_or_else(|| invalid(format!("unknown gold label `{}`", entry.gold_label)))?
            .to_string();
        if entry.video_id.trim().is_empty() || entry.uri.trim().is_empty() {
            return Err(invalid("video_id and uri must be non-empty".into()));
        }
        if !seen.insert(entry.video_id.clone()) {
            return Err(invalid(format!("duplicate video_id `{}`", entry.video_id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_manifest(path: &Path, labels: &LabelSet) -> Result<Vec<ManifestEntry>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::ManifestInvalid { line: 0, message: format!("{}: {e}", path.display()) })?;
    parse_manifest(&text, labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub predicted_ac: String,
    pub predicted_ad: AdLabel,
    pub strategy: String,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub fallback: bool,
}

impl PredictionRecord {
    pub fn from_result(result: &SessionResult) -> Self {
        PredictionRecord {
            video_id: result.video_id.clone(),
            predicted_ac: result.classification.ac.clone(),
            predicted_ad: result.classification.ad,
            strategy: result.strategy.clone(),
            variant: result.variant.clone(),
            fallback: result.used_fallback(),
        }
    }

    pub fn row_name(&self) -> String {
        match &self.variant {
            Some(v) if self.strategy == "coat" => format!("coat-{v}"),
            _ => self.strategy.clone(),
        }
    }
}

/// Sorted by video id, one JSON object per line.
pub fn predictions_to_jsonl(preds: &[PredictionRecord]) -> String {
    let mut sorted: Vec<&PredictionRecord> = preds.iter().collect();
    sorted.sort_by(|a, b| (&a.video_id, a.row_name()).cmp(&(&b.video_id, b.row_name())));
    let mut out = String::new();
    for p in sorted {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str, labels: &LabelSet) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| EvalError::PredictionsInvalid { line: i + 1, message };
        let mut rec: PredictionRecord = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        rec.predicted_ac = labels
            .canonical(&rec.predicted_ac)
            .ok_or_else(|| invalid(format!("unknown label `{}`", rec.predicted_ac)))?
            .to_string();
        if labels.ad_of(&rec.predicted_ac) != rec.predicted_ad {
            return Err(invalid(format!(
                "predicted_ad {} contradicts predicted_ac {}",
                rec.predicted_ad.as_str(),
                rec.predicted_ac
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Gold labels keyed by video id, plus the label vocabulary.
#[derive(Debug, Clone)]
pub struct GoldSet {
    labels: LabelSet,
    gold: BTreeMap<String, String>,
}

impl GoldSet {
    pub fn new(labels: LabelSet, gold: impl IntoIterator<Item = (String, String)>) -> Result<Self, EvalError> {
        let mut map = BTreeMap::new();
        for (vid, label) in gold {
            let canon = labels.canonical(&label).ok_or(EvalError::UnknownLabel(label.clone()))?.to_string();
            map.insert(vid, canon);
        }
        Ok(GoldSet { labels, gold: map })
    }

    pub fn from_manifest(labels: LabelSet, entries: &[ManifestEntry]) -> Self {
        let gold = entries.iter().map(|e| (e.video_id.clone(), e.gold_label.clone())).collect();
        GoldSet { labels, gold }
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn get(&self, video_id: &str) -> Option<&str> {
        self.gold.get(video_id).map(String::as_str)
    }

    /// (gold index, predicted index) per prediction, in label-set order.
    fn index_pairs(&self, preds: &[PredictionRecord]) -> Result<Vec<(usize, usize)>, EvalError> {
        if preds.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        preds
            .iter()
            .map(|p| {
                let gold = self.get(&p.video_id).ok_or_else(|| EvalError::MissingGold(p.video_id.clone()))?;
                let g = self.labels.index_of(gold).ok_or_else(|| EvalError::UnknownLabel(gold.to_string()))?;
                let q = self
                    .labels
                    .index_of(&p.predicted_ac)
                    .ok_or_else(|| EvalError::UnknownLabel(p.predicted_ac.clone()))?;
                Ok((g, q))
            })
            .collect()
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Binary F1 with Abnormal as the positive class.
pub fn ad_f1(preds: &[PredictionRecord], gold: &GoldSet) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for p in preds {
        let g = gold.get(&p.video_id).ok_or_else(|| EvalError::MissingGold(p.video_id.clone()))?;
        let gold_abn = gold.labels.ad_of(g) == AdLabel::Abnormal;
        let pred_abn = p.predicted_ad == AdLabel::Abnormal;
        match (gold_abn, pred_abn) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1(tp, fp, fn_))
}

/// Macro F1 over the label set, Normal included.
pub fn ac_f1(preds: &[PredictionRecord], gold: &GoldSet) -> Result<f64, EvalError> {
    ac_f1_with(preds, gold, true)
}

pub fn ac_f1_with(preds: &[PredictionRecord], gold: &GoldSet, include_normal: bool) -> Result<f64, EvalError> {
    let cm = confusion(preds, gold)?;
    Ok(cm.macro_f1(if include_normal { None } else { Some(0) }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// Rows are gold labels, columns predicted labels.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix { labels, counts: vec![vec![0; k]; k] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Per-label (tp, fp, fn).
    pub fn per_label(&self) -> Vec<(u64, u64, u64)> {
        let k = self.labels.len();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c];
                let row: u64 = self.counts[c].iter().sum();
                let col: u64 = (0..k).map(|r| self.counts[r][c]).sum();
                (tp, col - tp, row - tp)
            })
            .collect()
    }

    /// Mean per-label F1 over labels that occur in gold or predictions,
    /// optionally skipping one label index. The mean is summed as an exact
    /// fraction and divided once, so e.g. 11/15 comes out as the nearest
    /// double rather than one ulp off.
    pub fn macro_f1(&self, skip: Option<usize>) -> f64 {
        let terms: Vec<(u128, u128)> = self
            .per_label()
            .into_iter()
            .enumerate()
            .filter(|(i, (tp, fp, fn_))| Some(*i) != skip && tp + fp + fn_ > 0)
            .map(|(_, (tp, fp, fn_))| (2 * tp as u128, (2 * tp + fp + fn_) as u128))
            .collect();
        if terms.is_empty() {
            return 0.0;
        }
        match exact_mean(&terms) {
            Some((num, den)) => num as f64 / den as f64,
            None => terms.iter().map(|(n, d)| *n as f64 / *d as f64).sum::<f64>() / terms.len() as f64,
        }
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self.counts.iter().map(|r| r.iter().map(u64::to_string).collect()).collect();
        matrix_csv(&self.labels, &rows)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions `n/d` as a reduced fraction, or `None` on overflow.
fn exact_mean(terms: &[(u128, u128)]) -> Option<(u128, u128)> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(n, d) in terms {
        let g = gcd(den, d);
        let lcm = (den / g).checked_mul(d)?;
        num = num.checked_mul(lcm / den)?.checked_add(n.checked_mul(lcm / d)?)?;
        den = lcm;
        let r = gcd(num, den).max(1);
        num /= r;
        den /= r;
    }
    let den = den.checked_mul(terms.len() as u128)?;
    let r = gcd(num, den).max(1);
    Some((num / r, den / r))
}

pub fn confusion(preds: &[PredictionRecord], gold: &GoldSet) -> Result<ConfusionMatrix, EvalError> {
    let pairs = gold.index_pairs(preds)?;
    let mut cm = ConfusionMatrix::zeros(gold.labels.all().iter().map(|s| s.to_string()).collect());
    for (g, p) in pairs {
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl RealMatrix {
    pub fn to_csv(&self) -> String {
        // `{}` on f64 prints the shortest string that parses back to the
        // same bits.
        let rows: Vec<Vec<String>> = self.values.iter().map(|r| r.iter().map(|v| format!("{v}")).collect()).collect();
        matrix_csv(&self.labels, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| EvalError::Csv("empty csv".into()))?;
        let labels: Vec<String> = split_csv(header).into_iter().skip(1).collect();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells = split_csv(line);
            if cells.len() != labels.len() + 1 {
                return Err(EvalError::Csv(format!("row {} has {} cells", i + 1, cells.len())));
            }
            if cells[0] != labels.get(i).cloned().unwrap_or_default() {
                return Err(EvalError::Csv(format!("row {} label `{}` out of order", i + 1, cells[0])));
            }
            let row = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| EvalError::Csv(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            values.push(row);
        }
        if values.len() != labels.len() {
            return Err(EvalError::Csv("matrix is not square".into()));
        }
        Ok(RealMatrix { labels, values })
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => cells.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    cells.push(cur);
    cells
}

fn matrix_csv(labels: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::from("gold\\predicted");
    for l in labels {
        out.push(',');
        out.push_str(&csv_cell(l));
    }
    out.push('\n');
    for (label, row) in labels.iter().zip(rows) {
        out.push_str(&csv_cell(label));
        for v in row {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
    }
    out
}

/// Divides each row with a positive sum by that sum; zero rows stay zero.
pub fn row_normalize(m: &ConfusionMatrix) -> RealMatrix {
    let values = m
        .counts
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&c| c as f64 / sum as f64).collect()
            }
        })
        .collect();
    RealMatrix { labels: m.labels.clone(), values }
}

/// Elementwise `high - low`.
pub fn diff_matrix(high: &RealMatrix, low: &RealMatrix) -> Result<RealMatrix, EvalError> {
    if high.labels != low.labels
        || high.values.len() != low.values.len()
        || high.values.iter().zip(&low.values).any(|(a, b)| a.len() != b.len())
    {
        return Err(EvalError::ShapeMismatch);
    }
    let values = high
        .values
        .iter()
        .zip(&low.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    Ok(RealMatrix { labels: high.labels.clone(), values })
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub samples: usize,
    pub ad_f1: f64,
    pub ac_f1: f64,
    /// Percentage points against the baseline row, when one is set.
    pub ad_delta_pp: Option<f64>,
    pub ac_delta_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub cells: BTreeMap<String, ReportCell>,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub row: String,
    /// Dataset name, or `all` for resolution splits.
    pub dataset: String,
    pub resolution: Option<Resolution>,
    pub counts: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionDiff {
    pub row: String,
    pub high: RealMatrix,
    pub low: RealMatrix,
    pub diff: RealMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ac_averaging: String,
    pub ac_include_normal: bool,
    pub datasets: Vec<String>,
    pub baseline: Option<String>,
    pub rows: Vec<ReportRow>,
    pub matrices: Vec<MatrixEntry>,
    pub resolution_diffs: Vec<ResolutionDiff>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub baseline_row: Option<String>,
    pub ac_include_normal: bool,
    pub split_by_resolution: bool,
}

pub fn format_pct(f: f64) -> String {
    format!("{:.2}", f * 100.0)
}

pub fn format_delta(pp: f64) -> String {
    // Avoid printing "-0.00".
    let rounded = (pp * 100.0).round() / 100.0;
    if rounded == 0.0 {
        "+0.00".into()
    } else {
        format!("{rounded:+.2}")
    }
}

pub fn build_report(
    preds: &[PredictionRecord],
    manifest: &[ManifestEntry],
    labels: &LabelSet,
    options: &ReportOptions,
) -> Result<MetricsReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let gold = GoldSet::from_manifest(labels.clone(), manifest);
    let by_id: BTreeMap<&str, &ManifestEntry> = manifest.iter().map(|e| (e.video_id.as_str(), e)).collect();
    for p in preds {
        if !by_id.contains_key(p.video_id.as_str()) {
            return Err(EvalError::MissingGold(p.video_id.clone()));
        }
    }
    let mut datasets: Vec<String> = Vec::new();
    for e in manifest {
        if !datasets.contains(&e.dataset) {
            datasets.push(e.dataset.clone());
        }
    }

    let mut grouped: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for p in preds {
        let name = p.row_name();
        if !grouped.contains_key(&name) {
            order.push(name.clone());
        }
        grouped.entry(name).or_default().push(p.clone());
    }
    if let Some(base) = &options.baseline_row {
        if !grouped.contains_key(base) {
            return Err(EvalError::UnknownBaselineRow(base.clone()));
        }
    }

    let mut rows = Vec::new();
    let mut matrices = Vec::new();
    let mut resolution_diffs = Vec::new();
    for name in &order {
        let row_preds = &grouped[name];
        let mut cells = BTreeMap::new();
        for ds in &datasets {
            let subset: Vec<PredictionRecord> =
                row_preds.iter().filter(|p| by_id[p.video_id.as_str()].dataset == *ds).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            let cm = confusion(&subset, &gold)?;
            cells.insert(
                ds.clone(),
                ReportCell {
                    samples: subset.len(),
                    ad_f1: ad_f1(&subset, &gold)?,
                    ac_f1: ac_f1_with(&subset, &gold, options.ac_include_normal)?,
                    ad_delta_pp: None,
                    ac_delta_pp: None,
                },
            );
            matrices.push(MatrixEntry { row: name.clone(), dataset: ds.clone(), resolution: None, counts: cm });
        }
        if options.split_by_resolution {
            let split = |res: Resolution| -> Vec<PredictionRecord> {
                row_preds.iter().filter(|p| by_id[p.video_id.as_str()].resolution == res).cloned().collect()
            };
            let empty = ConfusionMatrix::zeros(labels.all().iter().map(|s| s.to_string()).collect());
            let (hi, lo) = (split(Resolution::High), split(Resolution::Low));
            let hi_cm = if hi.is_empty() { empty.clone() } else { confusion(&hi, &gold)? };
            let lo_cm = if lo.is_empty() { empty } else { confusion(&lo, &gold)? };
            let (high, low) = (row_normalize(&hi_cm), row_normalize(&lo_cm));
            let diff = diff_matrix(&high, &low)?;
            matrices.push(MatrixEntry { row: name.clone(), dataset: "all".into(), resolution: Some(Resolution::High), counts: hi_cm });
            matrices.push(MatrixEntry { row: name.clone(), dataset: "all".into(), resolution: Some(Resolution::Low), counts: lo_cm });
            resolution_diffs.push(ResolutionDiff { row: name.clone(), high, low, diff });
        }
        rows.push(ReportRow { name: name.clone(), cells, fallbacks: row_preds.iter().filter(|p| p.fallback).count() });
    }

    if let Some(base) = &options.baseline_row {
        let base_cells = rows.iter().find(|r| &r.name == base).expect("checked above").cells.clone();
        for row in &mut rows {
            for (ds, cell) in row.cells.iter_mut() {
                if let Some(b) = base_cells.get(ds) {
                    cell.ad_delta_pp = Some((cell.ad_f1 - b.ad_f1) * 100.0);
                    cell.ac_delta_pp = Some((cell.ac_f1 - b.ac_f1) * 100.0);
                }
            }
        }
    }

    Ok(MetricsReport {
        ac_averaging: "macro".into(),
        ac_include_normal: options.ac_include_normal,
        datasets,
        baseline: options.baseline_row.clone(),
        rows,
        matrices,
        resolution_diffs,
    })
}

impl MetricsReport {
    /// Aligned text table: one row per method, A.D./A.C. columns per
    /// dataset, then deltas against the baseline row when one is set.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Method".to_string()];
        for ds in &self.datasets {
            header.push(format!("{ds} A.D."));
            header.push(format!("{ds} A.C."));
        }
        if let Some(base) = &self.baseline {
            for ds in &self.datasets {
                header.push(format!("Δ{ds} A.D. vs {base}"));
                header.push(format!("Δ{ds} A.C. vs {base}"));
            }
        }
        header.push("Fallbacks".into());

        let mut table = vec![header];
        for row in &self.rows {
            let mut line = vec![row.name.clone()];
            for ds in &self.datasets {
                match row.cells.get(ds) {
                    Some(c) => {
                        line.push(format_pct(c.ad_f1));
                        line.push(format_pct(c.ac_f1));
                    }
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            if self.baseline.is_some() {
                for ds in &self.datasets {
                    let cell = row.cells.get(ds);
                    for delta in [cell.and_then(|c| c.ad_delta_pp), cell.and_then(|c| c.ac_delta_pp)] {
                        line.push(delta.map(format_delta).unwrap_or_else(|| "-".into()));
                    }
                }
            }
            line.push(row.fallbacks.to_string());
            table.push(line);
        }

        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!(
            "F1-score (%). AC F1 is the {} average over labels ({}).\n",
            self.ac_averaging,
            if self.ac_include_normal { "Normal included" } else { "Normal excluded" }
        );
        for (i, r) in table.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| {
                    let pad = w - s.chars().count();
                    if c == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("-|-"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `report.txt`, `report.json` and one CSV per matrix into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> std::io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("report.txt".into(), report.to_text())?;
    put("report.json".into(), report.to_json())?;
    for m in &report.matrices {
        let suffix = match m.resolution {
            Some(Resolution::High) => "_high".to_string(),
            Some(Resolution::Low) => "_low".to_string(),
            None => String::new(),
        };
        put(format!("confusion_{}_{}{suffix}.csv", file_stem(&m.row), file_stem(&m.dataset)), m.counts.to_csv())?;
    }
    for d in &report.resolution_diffs {
        let row = file_stem(&d.row);
        put(format!("normalized_{row}_high.csv"), d.high.to_csv())?;
        put(format!("normalized_{row}_low.csv"), d.low.to_csv())?;
        put(format!("diff_{row}.csv"), d.diff.to_csv())?;
    }
    Ok(written)
}
