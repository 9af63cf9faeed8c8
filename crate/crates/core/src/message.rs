//! Platform-independent messages.
//!
//! Every value crossing a component boundary lives in the closed JSON value
//! universe (null, bool, number, string, list, string-keyed map). A
//! [`MessageBag`] is a multiset of `(port, value)` pairs; its equality ignores
//! item order.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Value carried on a port.
pub type Value = serde_json::Value;

/// String-keyed map of values, used for behavior parameters.
pub type ValueMap = serde_json::Map<String, Value>;

/// Canonical text of a value. Maps serialise with sorted keys, so two equal
/// values always produce the same text.
pub fn canonical(value: &Value) -> String {
    serde_json::to_string(value).expect("json values always serialise")
}

/// A single `(port, value)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, Value)", into = "(String, Value)")]
pub struct ContentItem {
    pub port: String,
    pub value: Value,
}

impl ContentItem {
    pub fn new(port: impl Into<String>, value: impl Into<Value>) -> Self {
        ContentItem {
            port: port.into(),
            value: value.into(),
        }
    }

    /// Same value, moved onto another port.
    pub fn renamed(&self, port: &str) -> Self {
        ContentItem {
            port: port.to_owned(),
            value: self.value.clone(),
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.port
            .cmp(&other.port)
            .then_with(|| canonical(&self.value).cmp(&canonical(&other.value)))
    }
}

impl From<(String, Value)> for ContentItem {
    fn from((port, value): (String, Value)) -> Self {
        ContentItem { port, value }
    }
}

impl From<ContentItem> for (String, Value) {
    fn from(item: ContentItem) -> Self {
        (item.port, item.value)
    }
}

/// Multiset of content items.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageBag {
    items: Vec<ContentItem>,
}

impl MessageBag {
    pub fn new() -> Self {
        MessageBag { items: Vec::new() }
    }

    pub fn single(port: impl Into<String>, value: impl Into<Value>) -> Self {
        MessageBag {
            items: vec![ContentItem::new(port, value)],
        }
    }

    pub fn push(&mut self, item: ContentItem) {
        self.items.push(item);
    }

    pub fn extend(&mut self, other: MessageBag) {
        self.items.extend(other.items);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ContentItem> {
        self.items.iter()
    }

    /// Values present on `port`, in bag order.
    pub fn on_port<'a>(&'a self, port: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
        self.items
            .iter()
            .filter(move |item| item.port == port)
            .map(|item| &item.value)
    }

    pub fn count_on(&self, port: &str) -> usize {
        self.on_port(port).count()
    }

    /// Items in canonical order (port, then canonical value text).
    pub fn sorted_items(&self) -> Vec<ContentItem> {
        let mut items = self.items.clone();
        items.sort_by(ContentItem::canonical_cmp);
        items
    }

    pub fn into_items(self) -> Vec<ContentItem> {
        self.items
    }
}

impl PartialEq for MessageBag {
    fn eq(&self, other: &Self) -> bool {
        self.items.len() == other.items.len() && self.sorted_items() == other.sorted_items()
    }
}

impl Eq for MessageBag {}

impl FromIterator<ContentItem> for MessageBag {
    fn from_iter<I: IntoIterator<Item = ContentItem>>(iter: I) -> Self {
        MessageBag {
            items: iter.into_iter().collect(),
        }
    }
}

impl IntoIterator for MessageBag {
    type Item = ContentItem;
    type IntoIter = std::vec::IntoIter<ContentItem>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.into_iter()
    }
}

impl<'a> IntoIterator for &'a MessageBag {
    type Item = &'a ContentItem;
    type IntoIter = std::slice::Iter<'a, ContentItem>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

impl fmt::Display for MessageBag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, item) in self.sorted_items().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({}, {})", item.port, canonical(&item.value))?;
        }
        f.write_str("}")
    }
}
