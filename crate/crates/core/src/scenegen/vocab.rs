//! The semantic vocabulary: layers, attributes and their two admissible values.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Background,
    Square,
    Rectangle,
    Circle,
    Text,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::Background,
        Layer::Square,
        Layer::Rectangle,
        Layer::Circle,
        Layer::Text,
    ];

    /// Object layers that a dataset may add on top of Background and Square.
    pub const OPTIONAL_OBJECTS: [Layer; 3] = [Layer::Rectangle, Layer::Circle, Layer::Text];

    pub fn is_object(self) -> bool {
        self != Layer::Background
    }

    /// Sampled (non-meta) attributes of this layer.
    pub fn attributes(self) -> &'static [Attribute] {
        use Attribute::*;
        match self {
            Layer::Background => &[Color, Texture],
            Layer::Square => &[Presence, Size, Color, Texture, Number],
            Layer::Rectangle | Layer::Circle | Layer::Text => &[Presence, Size, Color, Texture],
        }
    }

    pub fn meta_attributes(self) -> &'static [Attribute] {
        match self {
            Layer::Background => &[Attribute::RelativePosition],
            _ => &[],
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Layer::Background => "background",
            Layer::Square => "square",
            Layer::Rectangle => "rectangle",
            Layer::Circle => "circle",
            Layer::Text => "text",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Presence,
    Size,
    Color,
    Texture,
    Number,
    RelativePosition,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Attribute::Presence => "presence",
            Attribute::Size => "size",
            Attribute::Color => "color",
            Attribute::Texture => "texture",
            Attribute::Number => "number",
            Attribute::RelativePosition => "relative_position",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeKey {
    pub layer: Layer,
    pub attribute: Attribute,
}

impl AttributeKey {
    pub const fn new(layer: Layer, attribute: Attribute) -> Self {
        AttributeKey { layer, attribute }
    }

    pub const RELATIVE_POSITION: AttributeKey =
        AttributeKey::new(Layer::Background, Attribute::RelativePosition);

    pub fn presence(layer: Layer) -> Self {
        AttributeKey::new(layer, Attribute::Presence)
    }

    pub fn is_meta(self) -> bool {
        self.layer.meta_attributes().contains(&self.attribute)
    }

    pub fn is_valid(self) -> bool {
        self.layer.attributes().contains(&self.attribute) || self.is_meta()
    }

    /// Every key of the vocabulary, meta-attributes last within their layer.
    pub fn all() -> impl Iterator<Item = AttributeKey> {
        Layer::ALL.into_iter().flat_map(|l| {
            l.attributes()
                .iter()
                .chain(l.meta_attributes())
                .map(move |&a| AttributeKey::new(l, a))
        })
    }

    /// Values a key may take; for binary attributes the Default comes first.
    pub fn values(self) -> &'static [Value] {
        use Value::*;
        match (self.layer, self.attribute) {
            (Layer::Background, Attribute::Color) => &[White, Grey],
            (Layer::Background, Attribute::Texture) => &[Solid, SaltAndPepper],
            (Layer::Background, Attribute::RelativePosition) => &[Below, Above, NoSquare],
            (_, Attribute::Presence) => &[False, True],
            (_, Attribute::Size) => &[Normal, Small],
            (_, Attribute::Color) => &[Blue, Orange],
            (_, Attribute::Texture) => &[Solid, VerticalStripes],
            (Layer::Square, Attribute::Number) => &[One, Two],
            _ => &[],
        }
    }

    pub fn default_value(self) -> Value {
        self.values()[0]
    }

    pub fn alternative_value(self) -> Value {
        self.values()[1]
    }

    pub fn admits(self, value: Value) -> bool {
        self.is_valid() && self.values().contains(&value)
    }
}

impl fmt::Display for AttributeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer, self.attribute)
    }
}

/// A value of Table-6 style binary attributes, or the ternary relative position.
///
/// Serialized as a lowercase name, except relative positions which serialize
/// as the integers 1 (above), 0 (below) and -1 (no square).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    White,
    Grey,
    Solid,
    SaltAndPepper,
    False,
    True,
    Normal,
    Small,
    Blue,
    Orange,
    VerticalStripes,
    One,
    Two,
    Below,
    Above,
    NoSquare,
}

impl Value {
    const NAMED: [(Value, &'static str); 13] = [
        (Value::White, "white"),
        (Value::Grey, "grey"),
        (Value::Solid, "solid"),
        (Value::SaltAndPepper, "salt_and_pepper"),
        (Value::False, "false"),
        (Value::True, "true"),
        (Value::Normal, "normal"),
        (Value::Small, "small"),
        (Value::Blue, "blue"),
        (Value::Orange, "orange"),
        (Value::VerticalStripes, "vertical_stripes"),
        (Value::One, "1"),
        (Value::Two, "2"),
    ];

    pub fn name(self) -> Option<&'static str> {
        Self::NAMED.iter().find(|(v, _)| *v == self).map(|(_, n)| *n)
    }

    pub fn from_name(name: &str) -> Option<Value> {
        Self::NAMED.iter().find(|(_, n)| *n == name).map(|(v, _)| *v)
    }

    /// Ternary encoding of a relative position.
    pub fn position(self) -> Option<i8> {
        match self {
            Value::Above => Some(1),
            Value::Below => Some(0),
            Value::NoSquare => Some(-1),
            _ => None,
        }
    }

    pub fn from_position(p: i64) -> Option<Value> {
        match p {
            1 => Some(Value::Above),
            0 => Some(Value::Below),
            -1 => Some(Value::NoSquare),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.name(), self.position()) {
            (Some(n), _) => f.write_str(n),
            (None, Some(p)) => write!(f, "{p}"),
            _ => unreachable!(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match (self.name(), self.position()) {
            (Some(n), _) => s.serialize_str(n),
            (None, Some(p)) => s.serialize_i8(p),
            _ => unreachable!(),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ValueVisitor;
        impl Visitor<'_> for ValueVisitor {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an attribute value name or a relative position in {-1, 0, 1}")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
                Value::from_name(v).ok_or_else(|| E::custom(format!("unknown value {v:?}")))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
                Value::from_position(v).ok_or_else(|| E::custom(format!("bad position {v}")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
                self.visit_i64(v as i64)
            }
        }
        d.deserialize_any(ValueVisitor)
    }
}

/// One (layer, attribute, value) triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueAssignment {
    pub layer: Layer,
    pub attribute: Attribute,
    pub value: Value,
}

impl ValueAssignment {
    pub fn new(key: AttributeKey, value: Value) -> Self {
        ValueAssignment {
            layer: key.layer,
            attribute: key.attribute,
            value,
        }
    }

    pub fn key(&self) -> AttributeKey {
        AttributeKey::new(self.layer, self.attribute)
    }

    pub fn is_valid(&self) -> bool {
        self.key().admits(self.value)
    }
}

impl fmt::Display for ValueAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.layer, self.attribute, self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_matches_table() {
        let keys: Vec<_> = AttributeKey::all().collect();
        // 2 background + 1 meta + 5 square + 3 * 4 other objects
        assert_eq!(keys.len(), 20);
        assert!(!AttributeKey::new(Layer::Circle, Attribute::Number).is_valid());
        assert!(!AttributeKey::new(Layer::Square, Attribute::RelativePosition).is_valid());
        assert!(AttributeKey::RELATIVE_POSITION.is_meta());
        for k in keys {
            assert!(k.values().len() >= 2, "{k}");
        }
        assert_eq!(
            AttributeKey::new(Layer::Background, Attribute::Color).default_value(),
            Value::White
        );
        assert_eq!(AttributeKey::presence(Layer::Text).alternative_value(), Value::True);
    }

    #[test]
    fn value_json_forms() {
        let t = ValueAssignment::new(AttributeKey::RELATIVE_POSITION, Value::NoSquare);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"layer":"background","attribute":"relative_position","value":-1}"#);
        let back: ValueAssignment = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let c = ValueAssignment::new(
            AttributeKey::new(Layer::Circle, Attribute::Texture),
            Value::VerticalStripes,
        );
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"layer":"circle","attribute":"texture","value":"vertical_stripes"}"#);
        assert_eq!(serde_json::from_str::<ValueAssignment>(&s).unwrap(), c);
    }
}
