//! N-dimensional hierarchical topologies built from Ring, FullyConnected and
//! Switch blocks.
//!
//! Dim 1 is the innermost level. A topology is written as its blocks joined
//! by underscores, e.g. `Ring(8)_FC(8)_Switch(16)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the number of dimensions accepted by the parser.
pub const DEFAULT_MAX_DIMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Ring,
    #[serde(rename = "FC", alias = "FullyConnected")]
    FullyConnected,
    Switch,
}

impl BlockKind {
    /// Canonical short name as printed in topology names.
    pub fn short_name(self) -> &'static str {
        match self {
            BlockKind::Ring => "Ring",
            BlockKind::FullyConnected => "FC",
            BlockKind::Switch => "Switch",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "Ring" => Some(BlockKind::Ring),
            "FC" | "FullyConnected" => Some(BlockKind::FullyConnected),
            "Switch" => Some(BlockKind::Switch),
            _ => None,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// One network dimension: a block type and the number of NPUs per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimBlock {
    pub kind: BlockKind,
    pub size: usize,
}

impl DimBlock {
    pub fn new(kind: BlockKind, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::DimTooSmall(size));
        }
        Ok(DimBlock { kind, size })
    }

    pub fn ring(size: usize) -> Result<Self> {
        Self::new(BlockKind::Ring, size)
    }

    pub fn fc(size: usize) -> Result<Self> {
        Self::new(BlockKind::FullyConnected, size)
    }

    pub fn switch(size: usize) -> Result<Self> {
        Self::new(BlockKind::Switch, size)
    }
}

impl fmt::Display for DimBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.size)
    }
}

/// Ordered list of dimensions, index 0 holding Dim 1.
///
/// Immutable once built; every constructor validates sizes and the
/// dimension limit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    dims: Vec<DimBlock>,
}

impl Topology {
    pub fn new(dims: Vec<DimBlock>) -> Result<Self> {
        Self::with_limit(dims, DEFAULT_MAX_DIMS)
    }

    pub fn with_limit(dims: Vec<DimBlock>, max_dims: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyTopology);
        }
        if dims.len() > max_dims {
            return Err(Error::TooManyDims { got: dims.len(), max: max_dims });
        }
        if let Some(d) = dims.iter().find(|d| d.size < 2) {
            return Err(Error::DimTooSmall(d.size));
        }
        Ok(Topology { dims })
    }

    pub fn dims(&self) -> &[DimBlock] {
        &self.dims
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    /// Block at a 1-based dimension index.
    pub fn dim(&self, index: usize) -> Option<&DimBlock> {
        index.checked_sub(1).and_then(|i| self.dims.get(i))
    }

    pub fn npu_count(&self) -> usize {
        self.dims.iter().map(|d| d.size).product()
    }

    /// Canonical name, FullyConnected printed as `FC`.
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Appends an outer dimension, keeping the same limit semantics as `new`.
    pub fn push_outer(&self, block: DimBlock, max_dims: usize) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.push(block);
        Self::with_limit(dims, max_dims)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str("_")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Canonical name of a topology.
pub fn topology_name(t: &Topology) -> String {
    t.name()
}

/// Parses a topology string with the default dimension limit.
pub fn parse_topology(spec: &str) -> Result<Topology> {
    parse_topology_with_limit(spec, DEFAULT_MAX_DIMS)
}

pub fn parse_topology_with_limit(spec: &str, max_dims: usize) -> Result<Topology> {
    let mut p = Parser { src: spec.as_bytes(), pos: 0 };
    let mut dims = vec![p.block()?];
    while p.pos < p.src.len() {
        p.expect(b'_')?;
        dims.push(p.block()?);
    }
    Topology::with_limit(dims, max_dims)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::TopologySyntax { pos: self.pos, msg: msg.into() }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.src.get(self.pos) {
            Some(&got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(&got) => Err(self.err(format!("expected `{}`, found `{}`", c as char, got as char))),
            None => Err(self.err(format!("expected `{}`, found end of input", c as char))),
        }
    }

    fn block(&mut self) -> Result<DimBlock> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a block name"));
        }
        // Slice is ASCII alphabetic, so valid UTF-8.
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let kind = BlockKind::from_name(name).ok_or_else(|| Error::UnknownBlock(name.to_string()))?;
        self.expect(b'(')?;
        let num_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if num_start == self.pos {
            return Err(self.err("expected a dimension size"));
        }
        let digits = std::str::from_utf8(&self.src[num_start..self.pos]).unwrap_or_default();
        let size: usize = digits
            .parse()
            .map_err(|_| Error::TopologySyntax { pos: num_start, msg: format!("size `{digits}` out of range") })?;
        self.expect(b')')?;
        DimBlock::new(kind, size)
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_topology(s)
    }
}

impl Serialize for Topology {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

/// Either the string form or an explicit list of `{kind, size}` records.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Name(String),
    Blocks(Vec<DimBlock>),
}

impl TopologySpec {
    pub fn build(&self, max_dims: usize) -> Result<Topology> {
        match self {
            TopologySpec::Name(s) => parse_topology_with_limit(s, max_dims),
            TopologySpec::Blocks(b) => Topology::with_limit(b.clone(), max_dims),
        }
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        TopologySpec::deserialize(d)?.build(DEFAULT_MAX_DIMS).map_err(serde::de::Error::custom)
    }
}
