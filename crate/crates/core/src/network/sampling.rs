use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// How a layer chooses the two inputs of each of its nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplingMode {
    /// Each bit-plane position paired with its right and its lower neighbour.
    RowCol,
    /// As `RowCol`, plus the lower-right diagonal neighbour.
    RowColDiag,
    /// Seeded uniform pairing, fixed after construction.
    Random,
    /// `(m, m + 1 mod d)` with `m` advancing by `d / width` per node.
    Adjacent,
}

impl SamplingMode {
    pub fn code(self) -> u8 {
        match self {
            SamplingMode::RowCol => 0,
            SamplingMode::RowColDiag => 1,
            SamplingMode::Random => 2,
            SamplingMode::Adjacent => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => SamplingMode::RowCol,
            1 => SamplingMode::RowColDiag,
            2 => SamplingMode::Random,
            3 => SamplingMode::Adjacent,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::RowCol => "row_col",
            SamplingMode::RowColDiag => "row_col_diag",
            SamplingMode::Random => "random",
            SamplingMode::Adjacent => "adjacent",
        }
    }

    /// Neighbour directions for the locality modes.
    pub fn directions(self) -> Option<usize> {
        match self {
            SamplingMode::RowCol => Some(2),
            SamplingMode::RowColDiag => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['+', '-'], "_").as_str() {
            "row_col" | "rowcol" | "locality" => SamplingMode::RowCol,
            "row_col_diag" | "rowcoldiag" => SamplingMode::RowColDiag,
            "random" | "random_fixed" => SamplingMode::Random,
            "adjacent" => SamplingMode::Adjacent,
            _ => return Err(Error::Config(format!("unknown sampling mode `{s}`"))),
        })
    }
}

/// Fixed input-pair indices, one `[m1, m2]` per output node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairIndexTable {
    pub pairs: Vec<[u32; 2]>,
}

impl PairIndexTable {
    pub fn new(pairs: Vec<[u32; 2]>, in_width: usize) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| p[0] as usize >= in_width || p[1] as usize >= in_width) {
            return Err(Error::Shape(format!("pair {p:?} indexes past input width {in_width}")));
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Builds the pair table for a layer reading a `(channels, thresholds, height,
/// width)` bit layout.
///
/// Locality modes emit one pair per position and direction, interleaved so
/// node `pos * dirs + dir` pairs position `pos` with its neighbour in
/// direction `dir`. Neighbours wrap around at plane edges and never leave
/// their `(channel, threshold)` plane. `out_width` must be `None` or match the
/// mode's natural width; `Random` needs an explicit width and `Adjacent`
/// defaults to the input width.
pub fn build_locality_pairs<R: Rng + ?Sized>(
    shape: [usize; 4],
    mode: SamplingMode,
    out_width: Option<usize>,
    rng: &mut R,
) -> Result<PairIndexTable> {
    let [c, t, h, w] = shape;
    let d = c * t * h * w;
    if d == 0 {
        return Err(Error::Config("cannot pair an empty input".into()));
    }
    match mode {
        SamplingMode::RowCol | SamplingMode::RowColDiag => {
            let dirs = mode.directions().unwrap_or(2);
            let natural = dirs * d;
            if let Some(req) = out_width {
                if req != natural {
                    return Err(Error::Config(format!(
                        "{mode} sampling yields {natural} nodes, {req} requested"
                    )));
                }
            }
            let mut pairs = Vec::with_capacity(natural);
            let plane = h * w;
            for p in 0..c * t {
                let base = p * plane;
                for r in 0..h {
                    for col in 0..w {
                        let here = (base + r * w + col) as u32;
                        let right = (base + r * w + (col + 1) % w) as u32;
                        let below = (base + ((r + 1) % h) * w + col) as u32;
                        pairs.push([here, right]);
                        pairs.push([here, below]);
                        if dirs == 3 {
                            let diag = (base + ((r + 1) % h) * w + (col + 1) % w) as u32;
                            pairs.push([here, diag]);
                        }
                    }
                }
            }
            Ok(PairIndexTable { pairs })
        }
        SamplingMode::Random => {
            let width = out_width
                .ok_or_else(|| Error::Config("random pairing needs an output width".into()))?;
            Ok(random_pairs(d, width, rng))
        }
        SamplingMode::Adjacent => Ok(adjacent_pairs(d, out_width.unwrap_or(d))),
    }
}

/// Pairs for a hidden layer that only knows its input width.
pub fn build_flat_pairs<R: Rng + ?Sized>(
    in_width: usize,
    out_width: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<PairIndexTable> {
    match mode {
        SamplingMode::Random => Ok(random_pairs(in_width, out_width, rng)),
        SamplingMode::Adjacent => Ok(adjacent_pairs(in_width, out_width)),
        _ => build_locality_pairs([1, 1, 1, in_width], mode, Some(out_width), rng),
    }
}

pub(crate) fn adjacent_pairs(d: usize, width: usize) -> PairIndexTable {
    let pairs = (0..width)
        .map(|o| {
            let m = (o * d / width.max(1)) % d;
            [m as u32, ((m + 1) % d) as u32]
        })
        .collect();
    PairIndexTable { pairs }
}

/// Both operand streams cycle through shuffled copies of `0..d` so every input
/// is used about equally often; the second operand is redrawn when it would
/// duplicate the first.
pub(crate) fn random_pairs<R: Rng + ?Sized>(d: usize, width: usize, rng: &mut R) -> PairIndexTable {
    let stream = |rng: &mut R| {
        let mut out = Vec::with_capacity(width);
        let mut perm: Vec<u32> = (0..d as u32).collect();
        while out.len() < width {
            perm.shuffle(rng);
            out.extend(perm.iter().take(width - out.len()));
        }
        out
    };
    let first = stream(rng);
    let mut second = stream(rng);
    if d > 1 {
        for (a, b) in first.iter().zip(second.iter_mut()) {
            while *a == *b {
                *b = rng.random_range(0..d as u32);
            }
        }
    }
    PairIndexTable { pairs: first.into_iter().zip(second).map(|(a, b)| [a, b]).collect() }
}
