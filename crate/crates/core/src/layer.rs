//! Reasoning layers and the ablation variants that select them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerId {
    #[serde(rename = "L1_Scenario")]
    Scenario,
    #[serde(rename = "L2_Entity")]
    Entity,
    #[serde(rename = "L3_Social")]
    Social,
    #[serde(rename = "L4_Event")]
    Event,
    /// Terminal anomaly-classification stage; never explored as a tree.
    Criminal,
}

impl LayerId {
    pub const EXPLORATION: [LayerId; 4] = [LayerId::Scenario, LayerId::Entity, LayerId::Social, LayerId::Event];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerId::Scenario => "L1_Scenario",
            LayerId::Entity => "L2_Entity",
            LayerId::Social => "L3_Social",
            LayerId::Event => "L4_Event",
            LayerId::Criminal => "Criminal",
        }
    }

    pub fn theme(self) -> &'static str {
        match self {
            LayerId::Scenario => "scenario understanding: location, time and scene objects",
            LayerId::Entity => "entity extraction: people grouping, demographics and clothing",
            LayerId::Social => "social context: proxemics, gestures and social roles",
            LayerId::Event => "event understanding: actions, spatiotemporal information, causality and abnormality cues",
            LayerId::Criminal => "anomaly classification",
        }
    }

    /// Fixed seed question asked at the root of each exploration layer.
    pub fn seed_question(self) -> &'static str {
        match self {
            LayerId::Scenario => {
                "Describe the scene: where is this taking place, what time of day does it appear to be, and which objects are visible?"
            }
            LayerId::Entity => {
                "Describe the people in the video: how many are there, how are they grouped, what are their apparent demographics and what are they wearing?"
            }
            LayerId::Social => {
                "Describe how the people relate to each other: how close are they, what gestures do they make, and what social roles do they seem to have?"
            }
            LayerId::Event => {
                "Describe what happens in the video: which actions occur, when and where do they happen, what causes them, and is anything out of the ordinary?"
            }
            LayerId::Criminal => "Is there any sign of a crime or anomaly in the video?",
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    L1,
    L2,
    L3,
    L4,
    Joint,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::L1, Variant::L2, Variant::L3, Variant::L4, Variant::Joint];

    pub fn layers(self) -> Vec<LayerId> {
        match self {
            Variant::L1 => vec![LayerId::Scenario],
            Variant::L2 => vec![LayerId::Entity],
            Variant::L3 => vec![LayerId::Social],
            Variant::L4 => vec![LayerId::Event],
            Variant::Joint => LayerId::EXPLORATION.to_vec(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::L1 => "l1",
            Variant::L2 => "l2",
            Variant::L3 => "l3",
            Variant::L4 => "l4",
            Variant::Joint => "joint",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Variant::L1),
            "l2" => Ok(Variant::L2),
            "l3" => Ok(Variant::L3),
            "l4" => Ok(Variant::L4),
            "joint" => Ok(Variant::Joint),
            other => Err(format!("unknown variant `{other}` (expected l1|l2|l3|l4|joint)")),
        }
    }
}
