//! Raw semantic id <-> train class mapping.
//!
//! The text form has one `raw_id train_id name` triple per line, `#`
//! starting a comment. `train_id` is a non-negative integer or `ignore`
//! (`-1` is accepted as well). The first raw id listed for a train class is
//! the one written back on export, and its name becomes the class name.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::cloud::IGNORE;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    forward: BTreeMap<u16, usize>,
    inverse: Vec<u16>,
    names: Vec<String>,
}

impl LabelMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut forward = BTreeMap::new();
        let mut first: BTreeMap<usize, (u16, String)> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(raw), Some(train)) = (parts.next(), parts.next()) else {
                return Err(Error::config(format!("label map line {}: expected `raw train name`", lineno + 1)));
            };
            let name = parts.collect::<Vec<_>>().join(" ");
            let raw: u16 = parse_raw(raw)
                .ok_or_else(|| Error::config(format!("label map line {}: bad raw id `{raw}`", lineno + 1)))?;
            let train = match train {
                "ignore" | "-1" => IGNORE,
                t => t
                    .parse::<usize>()
                    .map_err(|_| Error::config(format!("label map line {}: bad train id `{t}`", lineno + 1)))?,
            };
            if forward.insert(raw, train).is_some() {
                return Err(Error::config(format!("label map line {}: raw id {raw} listed twice", lineno + 1)));
            }
            if train != IGNORE {
                first.entry(train).or_insert((raw, name));
            }
        }
        let classes = first.keys().next_back().map_or(0, |&c| c + 1);
        let mut inverse = Vec::with_capacity(classes);
        let mut names = Vec::with_capacity(classes);
        for c in 0..classes {
            let (raw, name) = first
                .remove(&c)
                .ok_or_else(|| Error::config(format!("label map has no raw id for train class {c}")))?;
            inverse.push(raw);
            names.push(if name.is_empty() { format!("class{c}") } else { name });
        }
        Ok(Self { forward, inverse, names })
    }

    /// The 19-class SemanticKITTI protocol.
    pub fn semantic_kitti() -> Self {
        Self::parse(SEMANTIC_KITTI).expect("built-in label map")
    }

    pub fn num_classes(&self) -> usize {
        self.inverse.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Train class of a raw id; `None` when the id is not listed at all.
    pub fn lookup(&self, raw: u16) -> Option<usize> {
        self.forward.get(&raw).copied()
    }

    /// Train class of a raw id, [`IGNORE`] when unmapped or ignored.
    pub fn to_train(&self, raw: u16) -> usize {
        self.lookup(raw).unwrap_or(IGNORE)
    }

    pub fn to_raw(&self, train: usize) -> Option<u16> {
        self.inverse.get(train).copied()
    }

    /// Serialises back to the text form; `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut listed = alloc::collections::BTreeSet::new();
        for (c, (&raw, name)) in self.inverse.iter().zip(&self.names).enumerate() {
            out.push_str(&format!("{raw} {c} {name}\n"));
            listed.insert(raw);
        }
        for (&raw, &train) in &self.forward {
            if listed.contains(&raw) {
                continue;
            }
            let t = if train == IGNORE { "ignore".to_string() } else { train.to_string() };
            out.push_str(&format!("{raw} {t}\n"));
        }
        out
    }
}

fn parse_raw(s: &str) -> Option<u16> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u16::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

const SEMANTIC_KITTI: &str = "\
# raw train name
10 0 car
11 1 bicycle
15 2 motorcycle
18 3 truck
20 4 other-vehicle
30 5 person
31 6 bicyclist
32 7 motorcyclist
40 8 road
44 9 parking
48 10 sidewalk
49 11 other-ground
50 12 building
51 13 fence
70 14 vegetation
71 15 trunk
72 16 terrain
80 17 pole
81 18 traffic-sign
0 ignore unlabeled
1 ignore outlier
13 4 bus
16 4 on-rails
52 ignore other-structure
60 8 lane-marking
99 ignore other-object
252 0 moving-car
253 6 moving-bicyclist
254 5 moving-person
255 7 moving-motorcyclist
256 4 moving-on-rails
257 4 moving-bus
258 3 moving-truck
259 4 moving-other-vehicle
";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semantic_kitti_has_nineteen_classes() {
        let m = LabelMap::semantic_kitti();
        assert_eq!(m.num_classes(), 19);
        assert_eq!(m.to_train(40), 8);
        assert_eq!(m.to_train(252), 0);
        assert_eq!(m.to_train(0), IGNORE);
        assert_eq!(m.to_train(12345), IGNORE);
        assert_eq!(m.lookup(12345), None);
        assert_eq!(m.names()[8], "road");
        for c in 0..19 {
            assert_eq!(m.to_train(m.to_raw(c).unwrap()), c);
        }
    }

    #[test]
    fn parse_text_form() {
        let m = LabelMap::parse("# c\n0x28 3 road\n0 ignore\n7 0 a\n8 1\n9 2 c # trailing\n").unwrap();
        assert_eq!(m.num_classes(), 4);
        assert_eq!(m.to_train(0x28), 3);
        assert_eq!(m.to_raw(3), Some(0x28));
        assert_eq!(m.names()[1], "class1");
        assert_eq!(LabelMap::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        assert!(LabelMap::parse("1").is_err());
        assert!(LabelMap::parse("1 0 a\n1 0 b").is_err());
        assert!(LabelMap::parse("1 1 a").is_err());
        assert!(LabelMap::parse("x 0 a").is_err());
    }
}
