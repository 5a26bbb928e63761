//! Brute-force reference metrics, computed from raw (gold, predicted)
//! label strings with precision/recall rather than count shortcuts.

use coat_core::eval::{self, ConfusionMatrix, GoldSet, PredictionRecord, RealMatrix};
use coat_core::labels::LabelSet;
use rand::Rng;

pub struct Instance {
    pub labels: LabelSet,
    pub gold: GoldSet,
    pub preds: Vec<PredictionRecord>,
    /// (gold, predicted) per sample.
    pub pairs: Vec<(String, String)>,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let crimes = rng.random_range(1..=13usize);
    let labels = LabelSet::new("Normal", (0..crimes).map(|i| format!("C{i}")).collect()).unwrap();
    let names: Vec<String> = labels.all().iter().map(|s| s.to_string()).collect();
    let n = rng.random_range(1..=200usize);
    // Skew toward a few labels so some classes are absent.
    let live = rng.random_range(1..=names.len());
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let g = names[rng.random_range(0..live)].clone();
        let p = if rng.random_bool(0.4) { g.clone() } else { names[rng.random_range(0..names.len())].clone() };
        pairs.push((g, p));
    }
    build(labels, pairs)
}

pub fn build(labels: LabelSet, pairs: Vec<(String, String)>) -> Instance {
    let gold = GoldSet::new(labels.clone(), pairs.iter().enumerate().map(|(i, (g, _))| (format!("v{i}"), g.clone()))).unwrap();
    let preds = pairs
        .iter()
        .enumerate()
        .map(|(i, (_, p))| PredictionRecord {
            video_id: format!("v{i}"),
            predicted_ac: p.clone(),
            predicted_ad: labels.ad_of(p),
            strategy: "coat".into(),
            variant: Some("l4".into()),
            fallback: false,
        })
        .collect();
    Instance { labels, gold, preds, pairs }
}

fn f1_pr(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp == 0.0 {
        return 0.0;
    }
    let p = tp / (tp + fp);
    let r = tp / (tp + fn_);
    2.0 * p * r / (p + r)
}

pub fn oracle_ad_f1(inst: &Instance) -> f64 {
    let normal = inst.labels.normal_label();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (g, p) in &inst.pairs {
        let (ga, pa) = (g != normal, p != normal);
        if ga && pa {
            tp += 1.0;
        } else if pa {
            fp += 1.0;
        } else if ga {
            fn_ += 1.0;
        }
    }
    f1_pr(tp, fp, fn_)
}

pub fn oracle_ac_f1(inst: &Instance, include_normal: bool) -> f64 {
    let mut scores = Vec::new();
    for label in inst.labels.all() {
        if !include_normal && label == inst.labels.normal_label() {
            continue;
        }
        let in_gold = inst.pairs.iter().any(|(g, _)| g == label);
        let in_pred = inst.pairs.iter().any(|(_, p)| p == label);
        if !in_gold && !in_pred {
            continue;
        }
        let tp = inst.pairs.iter().filter(|(g, p)| g == label && p == label).count() as f64;
        let fp = inst.pairs.iter().filter(|(g, p)| g != label && p == label).count() as f64;
        let fn_ = inst.pairs.iter().filter(|(g, p)| g == label && p != label).count() as f64;
        scores.push(f1_pr(tp, fp, fn_));
    }
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

pub fn oracle_confusion(inst: &Instance) -> Vec<Vec<u64>> {
    let all = inst.labels.all();
    all.iter()
        .map(|g| all.iter().map(|p| inst.pairs.iter().filter(|(a, b)| a == g && b == p).count() as u64).collect())
        .collect()
}

pub fn oracle_normalize(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
        })
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Compares every metric on one instance against the oracle.
pub fn check_instance(inst: &Instance, other: &Instance, tol: f64) -> Result<(), String> {
    let ad = eval::ad_f1(&inst.preds, &inst.gold).map_err(|e| e.to_string())?;
    if !close(ad, oracle_ad_f1(inst), tol) {
        return Err(format!("ad_f1 {ad} vs oracle {}", oracle_ad_f1(inst)));
    }
    for include_normal in [true, false] {
        let ac = eval::ac_f1_with(&inst.preds, &inst.gold, include_normal).map_err(|e| e.to_string())?;
        let want = oracle_ac_f1(inst, include_normal);
        if !close(ac, want, tol) {
            return Err(format!("ac_f1(include_normal={include_normal}) {ac} vs oracle {want}"));
        }
    }
    let cm: ConfusionMatrix = eval::confusion(&inst.preds, &inst.gold).map_err(|e| e.to_string())?;
    let counts = oracle_confusion(inst);
    if cm.counts != counts {
        return Err("confusion counts differ".into());
    }
    let norm = eval::row_normalize(&cm);
    let want = oracle_normalize(&counts);
    for (r, w) in norm.values.iter().flatten().zip(want.iter().flatten()) {
        if !close(*r, *w, tol) {
            return Err(format!("row_normalize {r} vs {w}"));
        }
    }
    // Difference against a second instance over the same label set.
    let other_norm = oracle_normalize(&oracle_confusion(other));
    let other_matrix = RealMatrix { labels: norm.labels.clone(), values: other_norm.clone() };
    let diff = eval::diff_matrix(&norm, &other_matrix).map_err(|e| e.to_string())?;
    for (i, row) in diff.values.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            if !close(*d, want[i][j] - other_norm[i][j], tol) {
                return Err(format!("diff[{i}][{j}] {d}"));
            }
        }
    }
    Ok(())
}

/// A second instance sharing `inst`'s label set.
pub fn sibling(inst: &Instance, rng: &mut impl Rng) -> Instance {
    let names: Vec<String> = inst.labels.all().iter().map(|s| s.to_string()).collect();
    let n = rng.random_range(1..=200usize);
    let pairs = (0..n)
        .map(|_| (names[rng.random_range(0..names.len())].clone(), names[rng.random_range(0..names.len())].clone()))
        .collect();
    build(inst.labels.clone(), pairs)
}

/// Worked examples that must hold exactly.
pub fn worked_examples() -> Result<(), String> {
    let two = LabelSet::new("Normal", vec!["Abnormal".into()]).unwrap();
    let pairs = [("Abnormal", "Abnormal"), ("Normal", "Abnormal"), ("Abnormal", "Normal"), ("Normal", "Normal")];
    let inst = build(two, pairs.iter().map(|(g, p)| (g.to_string(), p.to_string())).collect());
    let ad = eval::ad_f1(&inst.preds, &inst.gold).map_err(|e| e.to_string())?;
    if ad != 0.5 {
        return Err(format!("4-sample AD F1 is {ad}, want 0.5"));
    }
    let xy = LabelSet::new("Normal", vec!["X".into(), "Y".into()]).unwrap();
    let pairs = [("X", "X"), ("X", "Y"), ("Y", "Y"), ("Y", "Y")];
    let inst = build(xy, pairs.iter().map(|(g, p)| (g.to_string(), p.to_string())).collect());
    let ac = eval::ac_f1(&inst.preds, &inst.gold).map_err(|e| e.to_string())?;
    if ac != 11.0 / 15.0 {
        return Err(format!("2-class macro F1 is {ac}, want 11/15"));
    }
    Ok(())
}

/// Two prediction rows over two datasets. Each dataset holds 50 abnormal
/// and 60 normal videos; in each, `direct` scores AD F1 0.25 (TP 10, FP 20)
/// and `coat-l4` scores 46/125 = 0.368 (TP 23, FP 52), a gap of +11.80
/// points. Even-numbered videos are high resolution.
pub fn engineered_rows() -> (Vec<PredictionRecord>, Vec<eval::ManifestEntry>) {
    let mut manifest = Vec::new();
    for ds in ["UCF-Crime", "BetterUCF"] {
        for i in 0..110 {
            let id = format!("{}-{i:03}", &ds[..3]);
            manifest.push(eval::ManifestEntry {
                uri: format!("videos/{id}.mp4"),
                video_id: id,
                gold_label: if i < 50 { "Robbery" } else { "Normal" }.into(),
                resolution: if i % 2 == 0 { eval::Resolution::High } else { eval::Resolution::Low },
                dataset: ds.into(),
            });
        }
    }
    let row = |strategy: &str, variant: Option<&str>, tp: usize, fp: usize| {
        manifest
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let i = k % 110;
                let hit = if i < 50 { i < tp } else { i - 50 < fp };
                let ac = if hit { "Robbery" } else { "Normal" };
                PredictionRecord {
                    video_id: e.video_id.clone(),
                    predicted_ac: ac.into(),
                    predicted_ad: LabelSet::default().ad_of(ac),
                    strategy: strategy.into(),
                    variant: variant.map(str::to_string),
                    fallback: false,
                }
            })
            .collect::<Vec<_>>()
    };
    let mut preds = row("direct", None, 10, 20);
    preds.extend(row("coat", Some("l4"), 23, 52));
    (preds, manifest)
}

/// AD F1 of one engineered dataset straight from the TP/FP/FN definition.
pub fn engineered_ad(tp: f64, fp: f64) -> f64 {
    f1_pr(tp, fp, 50.0 - tp)
}
