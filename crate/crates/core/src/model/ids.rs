use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(
    /// Identifier of a protocol (or of a service instance at run time).
    ProtocolId
);
id_type!(
    /// Stable identifier of a label inside one protocol's alphabet.
    LabelId
);
id_type!(StateId);
id_type!(
    /// Name of a data type, compared by string equality.
    TypeName
);

/// A label prefixed by the protocol that owns it, written `protocol:label`
/// (also in JSON).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualifiedLabel {
    pub protocol: ProtocolId,
    pub label: LabelId,
}

impl QualifiedLabel {
    pub fn new(protocol: impl Into<ProtocolId>, label: impl Into<LabelId>) -> Self {
        Self {
            protocol: protocol.into(),
            label: label.into(),
        }
    }

    /// Parses the `protocol:label` form.
    pub fn parse(s: &str) -> Option<Self> {
        let (p, l) = s.split_once(':')?;
        let (p, l) = (p.trim(), l.trim());
        if p.is_empty() || l.is_empty() || l.contains(':') {
            return None;
        }
        Some(Self::new(p, l))
    }
}

impl Serialize for QualifiedLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QualifiedLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        QualifiedLabel::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("`{s}` is not a protocol:label reference")))
    }
}

impl fmt::Display for QualifiedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.protocol, self.label)
    }
}
