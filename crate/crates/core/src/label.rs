//! Grading tasks and their label sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which grading problem a model, manifest, or report belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tomato,
    Egg,
}

impl Task {
    /// Output neurons used by the classifier: one per stage for tomatoes,
    /// a single accept score for eggs.
    pub fn output_size(self) -> usize {
        match self {
            Task::Tomato => TomatoStage::ALL.len(),
            Task::Egg => 1,
        }
    }

    pub fn labels(self) -> Vec<Label> {
        match self {
            Task::Tomato => TomatoStage::ALL.iter().map(|&s| Label::Tomato(s)).collect(),
            Task::Egg => EggGrade::ALL.iter().map(|&g| Label::Egg(g)).collect(),
        }
    }

    pub fn parse_label(self, text: &str) -> Result<Label, Error> {
        let unknown = || Error::UnknownLabel {
            task: self.to_string(),
            label: text.to_string(),
        };
        match self {
            Task::Tomato => TomatoStage::from_name(text)
                .map(Label::Tomato)
                .ok_or_else(unknown),
            Task::Egg => EggGrade::from_name(text).map(Label::Egg).ok_or_else(unknown),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Tomato => "tomato",
            Task::Egg => "egg",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tomato" => Ok(Task::Tomato),
            "egg" => Ok(Task::Egg),
            _ => Err(Error::InvalidParameter(format!("unknown task `{s}`"))),
        }
    }
}

/// USDA tomato maturity stages, in ripening order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TomatoStage {
    Green = 0,
    Breakers = 1,
    Turning = 2,
    Pink = 3,
    LightRed = 4,
    Red = 5,
}

impl TomatoStage {
    pub const ALL: [TomatoStage; 6] = [
        TomatoStage::Green,
        TomatoStage::Breakers,
        TomatoStage::Turning,
        TomatoStage::Pink,
        TomatoStage::LightRed,
        TomatoStage::Red,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Ordinal distance `|i - j|` between two stages.
    pub fn distance(self, other: TomatoStage) -> usize {
        self.index().abs_diff(other.index())
    }

    pub fn name(self) -> &'static str {
        match self {
            TomatoStage::Green => "Green",
            TomatoStage::Breakers => "Breakers",
            TomatoStage::Turning => "Turning",
            TomatoStage::Pink => "Pink",
            TomatoStage::LightRed => "LightRed",
            TomatoStage::Red => "Red",
        }
    }

    /// Accepts the canonical name, case-insensitively, with or without the
    /// space in "Light Red".
    pub fn from_name(name: &str) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.name().to_ascii_lowercase() == key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EggGrade {
    Accept,
    Reject,
}

impl EggGrade {
    pub const ALL: [EggGrade; 2] = [EggGrade::Accept, EggGrade::Reject];

    pub fn name(self) -> &'static str {
        match self {
            EggGrade::Accept => "Accept",
            EggGrade::Reject => "Reject",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "accept" | "accepted" => Some(EggGrade::Accept),
            "reject" | "rejected" => Some(EggGrade::Reject),
            _ => None,
        }
    }
}

/// A class label for either task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Tomato(TomatoStage),
    Egg(EggGrade),
}

impl Label {
    pub fn task(self) -> Task {
        match self {
            Label::Tomato(_) => Task::Tomato,
            Label::Egg(_) => Task::Egg,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Tomato(s) => s.name(),
            Label::Egg(g) => g.name(),
        }
    }

    /// Position of the label within its task's class list.
    pub fn class_index(self) -> usize {
        match self {
            Label::Tomato(s) => s.index(),
            Label::Egg(g) => g as usize,
        }
    }

    /// Network training target: one-hot over stages for tomatoes, `1.0` for
    /// an accepted egg and `0.0` for a rejected one.
    pub fn target(self) -> Vec<f64> {
        match self {
            Label::Tomato(s) => {
                let mut t = vec![0.0; TomatoStage::ALL.len()];
                t[s.index()] = 1.0;
                t
            }
            Label::Egg(EggGrade::Accept) => vec![1.0],
            Label::Egg(EggGrade::Reject) => vec![0.0],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
