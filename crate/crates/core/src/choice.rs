//! Choice letters and normalized distributions over them.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

/// Largest number of choices an item may carry.
pub const MAX_CHOICES: usize = 5;
/// Smallest number of choices an item may carry.
pub const MIN_CHOICES: usize = 2;

/// Tolerance on the total mass of a [`ChoiceDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A choice letter `A`..`E`, stored as its zero-based position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u8);

impl Letter {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < MAX_CHOICES).then_some(Letter(index as u8))
    }

    pub fn from_char(c: char) -> Option<Self> {
        let c = c.to_ascii_uppercase();
        if c.is_ascii_uppercase() {
            Letter::from_index((c as u8 - b'A') as usize)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self.0) as char
    }

    /// The first `n` letters, `A` onwards.
    pub fn first_n(n: usize) -> Vec<Letter> {
        (0..n.min(MAX_CHOICES)).map(|i| Letter(i as u8)).collect()
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid choice letter {0:?}")]
pub struct InvalidLetter(pub String);

impl FromStr for Letter {
    type Err = InvalidLetter;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => {
                Letter::from_char(c).ok_or_else(|| InvalidLetter(s.to_string()))
            }
            _ => Err(InvalidLetter(s.to_string())),
        }
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("distribution needs at least one and at most {MAX_CHOICES} entries, got {0}")]
    BadLength(usize),
    #[error("probability for {letter} is {value}, expected a finite non-negative number")]
    BadProbability { letter: Letter, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("letters are not consecutive from A: {0}")]
    NonConsecutive(String),
    #[error("all candidate letters have zero mass")]
    ZeroMass,
}

/// A probability distribution over the letters `A..` of one item.
///
/// Entry `i` is the probability of the letter with index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDistribution {
    probs: Vec<f64>,
}

impl ChoiceDistribution {
    /// Validates an already-normalized probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        Self::check_entries(&probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self { probs })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, DistributionError> {
        Self::check_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(DistributionError::ZeroMass);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Softmax over log-probabilities; `-inf` entries receive zero mass.
    pub fn from_log_probs(log_probs: &[f64]) -> Result<Self, DistributionError> {
        if log_probs.is_empty() || log_probs.len() > MAX_CHOICES {
            return Err(DistributionError::BadLength(log_probs.len()));
        }
        let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(DistributionError::ZeroMass);
        }
        let weights: Vec<f64> = log_probs.iter().map(|lp| (lp - max).exp()).collect();
        Self::from_weights(weights)
    }

    pub fn uniform(n: usize) -> Result<Self, DistributionError> {
        Self::from_weights(vec![1.0; n])
    }

    pub fn one_hot(n: usize, letter: Letter) -> Result<Self, DistributionError> {
        if letter.index() >= n {
            return Err(DistributionError::BadLength(n));
        }
        let mut probs = vec![0.0; n];
        probs[letter.index()] = 1.0;
        Self::new(probs)
    }

    fn check_entries(probs: &[f64]) -> Result<(), DistributionError> {
        if probs.is_empty() || probs.len() > MAX_CHOICES {
            return Err(DistributionError::BadLength(probs.len()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(DistributionError::BadProbability {
                    letter: Letter(i as u8),
                    value: p,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn letters(&self) -> Vec<Letter> {
        Letter::first_n(self.probs.len())
    }

    pub fn get(&self, letter: Letter) -> Option<f64> {
        self.probs.get(letter.index()).copied()
    }

    /// Highest-probability letter; ties go to the earliest letter.
    pub fn argmax(&self) -> Letter {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        Letter(best as u8)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Letter, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (Letter(i as u8), p))
    }
}

impl Serialize for ChoiceDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.probs.len()))?;
        for (letter, p) in self.iter() {
            map.serialize_entry(&letter, &p)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ChoiceDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DistVisitor;

        impl<'de> Visitor<'de> for DistVisitor {
            type Value = ChoiceDistribution;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from choice letter to probability")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut entries: Vec<(Letter, f64)> = Vec::new();
                while let Some((letter, p)) = access.next_entry::<Letter, f64>()? {
                    entries.push((letter, p));
                }
                entries.sort_by_key(|(l, _)| *l);
                for (i, (letter, _)) in entries.iter().enumerate() {
                    if letter.index() != i {
                        let seen: String = entries.iter().map(|(l, _)| l.as_char()).collect();
                        return Err(de::Error::custom(DistributionError::NonConsecutive(seen)));
                    }
                }
                ChoiceDistribution::new(entries.into_iter().map(|(_, p)| p).collect())
                    .map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_map(DistVisitor)
    }
}
