use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageData;
use crate::error::{Error, Result};

/// Smallest `b` with `2^b >= n`.
pub fn bits_for(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

/// Fields of one decoded basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Decoded {
    pub row: usize,
    pub col: usize,
    pub type_index: usize,
    pub orientation_index: usize,
}

/// Compact register layout for one side: position row, position column,
/// sensor type and orientation fields, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub g1: usize,
    pub g2: usize,
    pub n_types: usize,
    pub n_orientations: usize,
}

impl EncodingMap {
    pub fn new(g1: usize, g2: usize, n_types: usize, n_orientations: usize) -> Result<Self> {
        if g1 == 0 || g2 == 0 || n_types == 0 || n_orientations == 0 {
            return Err(Error::InvalidInput("encoding field sizes must be positive".into()));
        }
        let m = Self {
            g1,
            g2,
            n_types,
            n_orientations,
        };
        if m.num_qubits() == 0 {
            return Err(Error::InvalidInput("encoding needs at least one qubit".into()));
        }
        Ok(m)
    }

    /// Widths of the row, column, type and orientation fields.
    pub fn field_bits(&self) -> [usize; 4] {
        [
            bits_for(self.g1),
            bits_for(self.g2),
            bits_for(self.n_types),
            bits_for(self.n_orientations),
        ]
    }

    pub fn num_qubits(&self) -> usize {
        self.field_bits().iter().sum()
    }

    pub fn num_configs(&self) -> usize {
        self.g1 * self.g2 * self.n_types * self.n_orientations
    }

    /// `None` when any field lies outside its valid range.
    pub fn decode(&self, basis: usize) -> Option<Decoded> {
        let [br, bc, bt, bo] = self.field_bits();
        if basis >> (br + bc + bt + bo) != 0 {
            return None;
        }
        let field = |shift: usize, width: usize| (basis >> shift) & ((1 << width) - 1);
        let d = Decoded {
            row: field(bc + bt + bo, br),
            col: field(bt + bo, bc),
            type_index: field(bo, bt),
            orientation_index: field(0, bo),
        };
        (d.row < self.g1 && d.col < self.g2 && d.type_index < self.n_types && d.orientation_index < self.n_orientations)
            .then_some(d)
    }

    pub fn encode(&self, d: &Decoded) -> usize {
        let [_, bc, bt, bo] = self.field_bits();
        ((d.row << bc | d.col) << bt | d.type_index) << bo | d.orientation_index
    }

    pub fn cell(&self, d: &Decoded) -> usize {
        d.row * self.g2 + d.col
    }

    /// Index into the side's configuration list (type-major, cell, orientation).
    pub fn config_index(&self, d: &Decoded) -> usize {
        (d.type_index * self.g1 * self.g2 + self.cell(d)) * self.n_orientations + d.orientation_index
    }

    pub fn decode_config(&self, basis: usize) -> Option<usize> {
        self.decode(basis).map(|d| self.config_index(&d))
    }

    /// Checks that `data` enumerates exactly this layout on one side.
    pub fn check_consistent(&self, data: &CoverageData) -> Result<()> {
        if data.n_configs() != self.num_configs() {
            return Err(Error::InvalidInput(format!(
                "encoding describes {} configurations, coverage has {}",
                self.num_configs(),
                data.n_configs()
            )));
        }
        let side = data.config(0).side;
        let cells = self.g1 * self.g2;
        for (i, c) in data.configs().iter().enumerate() {
            let expect = (
                i / self.n_orientations / cells,
                i / self.n_orientations % cells,
                i % self.n_orientations,
            );
            if c.side != side || (c.type_index, c.cell, c.orientation_index) != expect {
                return Err(Error::InvalidInput(format!(
                    "configuration {i} ({}) does not match the encoding layout",
                    c.label()
                )));
            }
        }
        Ok(())
    }
}

/// Walks basis states by descending count (ties by basis index), keeping
/// valid encodings at unused positions until `n_s` configurations are found.
/// Returns sorted configuration indices.
pub fn select_feasible_topk(hist: &BTreeMap<usize, usize>, encoding: &EncodingMap, n_s: usize) -> Result<Vec<usize>> {
    let mut order: Vec<(usize, usize)> = hist.iter().filter(|(_, &c)| c > 0).map(|(&b, &c)| (b, c)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used = BTreeSet::new();
    let mut chosen = Vec::with_capacity(n_s);
    for (basis, _) in order {
        if chosen.len() == n_s {
            break;
        }
        let Some(d) = encoding.decode(basis) else { continue };
        if used.insert(encoding.cell(&d)) {
            chosen.push(encoding.config_index(&d));
        }
    }
    if chosen.len() < n_s {
        return Err(Error::InsufficientSupport {
            found: chosen.len(),
            needed: n_s,
        });
    }
    chosen.sort_unstable();
    Ok(chosen)
}
