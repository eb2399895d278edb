//! RCL ladder networks in modified nodal analysis form, ordered into
//! staircase blocks.
//!
//! Cell i has a capacitor node `a_i` (C to ground, shunt resistor Rg), a
//! series resistor R from `a_i` to an internal node `b_i` and an inductor L
//! from `b_i` to `a_{i+1}`. The `b` nodes carry no capacitance and form the
//! algebraic block together with the port feed chains.
//!
//! * index-1 variant: two current-source ports feed `a_0` and `a_{c-1}`
//!   through chains of resistive nodes; outputs are the port node voltages.
//! * index-1-2 variant: a voltage source drives the capacitive node `x_1`
//!   (capacitance C0), which feeds `a_0` through a resistive chain; the
//!   source current is the algebraic index-2 variable `x_4`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::staircase::{BlockDims, StaircaseSystem};
use faer::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderVariant {
    Index1,
    Index12,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    /// series resistance per cell
    pub r: f64,
    /// shunt resistance to ground at each capacitor node
    pub rg: f64,
    pub c: f64,
    pub l: f64,
    /// resistance of each port feed link
    pub rp: f64,
    /// capacitance at the voltage-source node (index-1-2 only)
    pub c0: f64,
    /// resistive nodes per port chain; 0 picks the variant default
    pub chain: usize,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self { r: 0.5, rg: 20.0, c: 1.0, l: 1.0, rp: 1.0, c0: 1.0, chain: 0 }
    }
}

impl LadderParams {
    fn check(&self) -> Result<()> {
        for (name, v) in [("R", self.r), ("Rg", self.rg), ("C", self.c), ("L", self.l), ("Rp", self.rp), ("C0", self.c0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("ladder parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Cells needed to hit the two reference sizes: n = 3c + 4 (index-1, chain 3)
/// and n = 3c + 2 (index-1-2).
pub fn cells_for(variant: LadderVariant, n: usize) -> usize {
    match variant {
        LadderVariant::Index1 => n.saturating_sub(4) / 3,
        LadderVariant::Index12 => n.saturating_sub(2) / 3,
    }
    .max(1)
}

pub fn generate_rcl_ladder(cells: usize, params: &LadderParams, variant: LadderVariant) -> Result<StaircaseSystem> {
    if cells == 0 {
        return Err(Error::InvalidInput("ladder needs at least one cell".into()));
    }
    params.check()?;
    let c = cells;
    let chain = if params.chain > 0 {
        params.chain
    } else {
        match variant {
            LadderVariant::Index1 => 3,
            LadderVariant::Index12 => 2,
        }
    };
    let (n1, ports) = match variant {
        LadderVariant::Index1 => (0, 2),
        LadderVariant::Index12 => (1, 1),
    };
    let n2 = 2 * c - 1;
    let n3 = (c - 1) + chain * ports;
    let n4 = n1;
    let n = n1 + n2 + n3 + n4;
    let m = ports;

    let ia = |i: usize| n1 + i;
    let il = |i: usize| n1 + c + i;
    let ib = |i: usize| n1 + n2 + i;
    let ic = |k: usize| n1 + n2 + (c - 1) + k;

    let mut e = Vec::new();
    let mut j = Vec::new();
    let mut r = Vec::new();
    let mut g = Vec::new();
    let mut resistor = |p: usize, q: Option<usize>, val: f64| {
        let y = 1.0 / val;
        r.push((p, p, y));
        if let Some(q) = q {
            r.push((q, q, y));
            r.push((p, q, -y));
            r.push((q, p, -y));
        }
    };

    for i in 0..c {
        e.push((ia(i), ia(i), params.c));
        resistor(ia(i), None, params.rg);
    }
    for i in 0..c - 1 {
        e.push((il(i), il(i), params.l));
        resistor(ia(i), Some(ib(i)), params.r);
        // inductor current leaves b_i and enters a_{i+1}
        j.push((ib(i), il(i), -1.0));
        j.push((il(i), ib(i), 1.0));
        j.push((ia(i + 1), il(i), 1.0));
        j.push((il(i), ia(i + 1), -1.0));
    }
    match variant {
        LadderVariant::Index1 => {
            for (p, target) in [ia(0), ia(c - 1)].into_iter().enumerate() {
                let nodes: Vec<usize> = (0..chain).map(|k| ic(p * chain + k)).collect();
                for k in 0..chain - 1 {
                    resistor(nodes[k], Some(nodes[k + 1]), params.rp);
                }
                resistor(nodes[chain - 1], Some(target), params.rp);
                g.push((nodes[0], p, 1.0));
            }
        }
        LadderVariant::Index12 => {
            e.push((0, 0, params.c0));
            let nodes: Vec<usize> = (0..chain).map(ic).collect();
            resistor(0, Some(nodes[0]), params.rp);
            for k in 0..chain - 1 {
                resistor(nodes[k], Some(nodes[k + 1]), params.rp);
            }
            resistor(nodes[chain - 1], Some(ia(0)), params.rp);
            // 0 = −x1 + u pins the source node; its current x4 enters the x1 balance
            j.push((n - 1, 0, -1.0));
            j.push((0, n - 1, 1.0));
            g.push((n - 1, 0, 1.0));
        }
    }

    let dims = BlockDims::new(n1, n2, n3, n4, m);
    let full_e = SparseMatrix::from_triplets(n, n, &e);
    let e11 = full_e.submatrix(0, n1, 0, n1);
    let e22 = full_e.submatrix(n1, n2, n1, n2);
    StaircaseSystem::new(
        dims,
        e11,
        e22,
        SparseMatrix::from_triplets(n, n, &j),
        SparseMatrix::from_triplets(n, n, &r),
        SparseMatrix::from_triplets(n, m, &g),
        SparseMatrix::zeros(n, m),
        Mat::zeros(m, m),
        Mat::zeros(m, m),
    )
}
