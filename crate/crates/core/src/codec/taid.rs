use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::wire::{Reader, Writer};
use super::DecodeError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaidError {
    #[error("trust anchor ID is empty")]
    Empty,
    #[error("component {0:?} is not a decimal integer")]
    NotNumeric(String),
    #[error("component {0:?} overflows 64 bits")]
    Overflow(String),
    #[error("trust anchor ID has more than 255 components")]
    TooLong,
}

/// Dotted-integer trust anchor identifier, e.g. `32473.1.42`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrustAnchorId(Vec<u64>);

impl TrustAnchorId {
    pub fn new(components: Vec<u64>) -> Result<Self, TaidError> {
        if components.is_empty() {
            return Err(TaidError::Empty);
        }
        if components.len() > 255 {
            return Err(TaidError::TooLong);
        }
        Ok(TrustAnchorId(components))
    }

    pub fn components(&self) -> &[u64] {
        &self.0
    }

    /// This identifier with `component` appended: the landmark ID for
    /// landmark `n` under base `b` is `b.child(n)`.
    pub fn child(&self, component: u64) -> Self {
        let mut c = self.0.clone();
        c.push(component);
        TrustAnchorId(c)
    }

    /// `Some(last)` if `self` is `base` with exactly one component appended.
    pub fn strip_base(&self, base: &TrustAnchorId) -> Option<u64> {
        (self.0.len() == base.0.len() + 1 && self.0.starts_with(&base.0)).then(|| *self.0.last().unwrap())
    }

    pub(crate) fn encode_to(&self, w: &mut Writer) {
        w.u8(self.0.len() as u8);
        for c in &self.0 {
            w.u64(*c);
        }
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.u8()? as usize;
        if n == 0 {
            return Err(DecodeError::Invalid("empty trust anchor ID"));
        }
        (0..n).map(|_| r.u64()).collect::<Result<_, _>>().map(TrustAnchorId)
    }
}

pub fn parse_taid(text: &str) -> Result<TrustAnchorId, TaidError> {
    text.parse()
}

pub fn format_taid(id: &TrustAnchorId) -> String {
    id.to_string()
}

impl FromStr for TrustAnchorId {
    type Err = TaidError;

    fn from_str(s: &str) -> Result<Self, TaidError> {
        if s.is_empty() {
            return Err(TaidError::Empty);
        }
        let comps = s
            .split('.')
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(TaidError::NotNumeric(part.to_string()));
                }
                part.parse::<u64>().map_err(|_| TaidError::Overflow(part.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        TrustAnchorId::new(comps)
    }
}

impl fmt::Display for TrustAnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for TrustAnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TrustAnchorId({self})")
    }
}

impl Serialize for TrustAnchorId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrustAnchorId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Contiguous run of landmark numbers under one base identifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAnchorRange {
    pub base: TrustAnchorId,
    pub min: u64,
    pub max: u64,
}

impl TrustAnchorRange {
    pub fn new(base: TrustAnchorId, min: u64, max: u64) -> Option<Self> {
        (min <= max).then_some(TrustAnchorRange { base, min, max })
    }

    pub fn contains(&self, id: &TrustAnchorId) -> bool {
        id.strip_base(&self.base).is_some_and(|n| self.min <= n && n <= self.max)
    }
}
