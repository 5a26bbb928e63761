//! Label vocabulary for anomaly classification.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UCF_CRIME_CLASSES: [&str; 13] = [
    "Abuse",
    "Arrest",
    "Arson",
    "Assault",
    "Burglary",
    "Explosion",
    "Fighting",
    "RoadAccidents",
    "Robbery",
    "Shooting",
    "Shoplifting",
    "Stealing",
    "Vandalism",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AdLabel {
    Normal,
    Abnormal,
}

impl AdLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AdLabel::Normal => "Normal",
            AdLabel::Abnormal => "Abnormal",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("duplicate label `{0}` (labels are compared case-insensitively)")]
    Duplicate(String),
    #[error("empty label")]
    Empty,
    #[error("at least one crime label is required")]
    NoCrimeLabels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    normal_label: String,
    crime_labels: Vec<String>,
}

impl LabelSet {
    pub fn new(normal_label: impl Into<String>, crime_labels: Vec<String>) -> Result<Self, LabelError> {
        let normal_label = normal_label.into().trim().to_string();
        let crime_labels: Vec<String> = crime_labels.into_iter().map(|l| l.trim().to_string()).collect();
        if crime_labels.is_empty() {
            return Err(LabelError::NoCrimeLabels);
        }
        let mut seen = BTreeSet::new();
        for label in std::iter::once(&normal_label).chain(&crime_labels) {
            if label.is_empty() {
                return Err(LabelError::Empty);
            }
            if !seen.insert(label.to_lowercase()) {
                return Err(LabelError::Duplicate(label.clone()));
            }
        }
        Ok(LabelSet { normal_label, crime_labels })
    }

    pub fn ucf_crime() -> Self {
        LabelSet::new("Normal", UCF_CRIME_CLASSES.iter().map(|s| s.to_string()).collect())
            .expect("built-in labels are valid")
    }

    pub fn normal_label(&self) -> &str {
        &self.normal_label
    }

    pub fn crime_labels(&self) -> &[String] {
        &self.crime_labels
    }

    /// Normal first, then crime labels in configured order.
    pub fn all(&self) -> Vec<&str> {
        std::iter::once(self.normal_label.as_str())
            .chain(self.crime_labels.iter().map(String::as_str))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.crime_labels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Case-insensitive lookup returning the canonical spelling.
    pub fn canonical(&self, label: &str) -> Option<&str> {
        let wanted = label.trim().to_lowercase();
        self.all().into_iter().find(|l| l.to_lowercase() == wanted)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let wanted = label.trim().to_lowercase();
        self.all().iter().position(|l| l.to_lowercase() == wanted)
    }

    pub fn is_normal(&self, label: &str) -> bool {
        label.trim().eq_ignore_ascii_case(&self.normal_label)
    }

    pub fn ad_of(&self, label: &str) -> AdLabel {
        if self.is_normal(label) {
            AdLabel::Normal
        } else {
            AdLabel::Abnormal
        }
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::ucf_crime()
    }
}
