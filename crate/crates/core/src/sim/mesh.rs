// SPDX-License-Identifier: Apache-2.0

use super::SimError;
use crate::graph::{NodeId, Position};
use crate::synth::{Architecture, RoutingTables};

/// Node id of mesh position `(row, col)`, row-major from 1.
pub fn mesh_node(cols: usize, row: usize, col: usize) -> NodeId {
    (row * cols + col + 1) as NodeId
}

/// A `rows x cols` grid with unit-capacity links and X-then-Y routing tables
/// for every ordered pair of nodes.
pub fn mesh_baseline(
    rows: usize,
    cols: usize,
    spacing_mm: f64,
) -> Result<(Architecture, RoutingTables), SimError> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(SimError::InvalidConfig(format!(
            "mesh {rows}x{cols} needs at least 2 nodes"
        )));
    }
    if !spacing_mm.is_finite() || spacing_mm < 0.0 {
        return Err(SimError::InvalidConfig(format!("mesh spacing {spacing_mm}")));
    }
    let mut a = Architecture::new();
    for r in 0..rows {
        for c in 0..cols {
            let pos = Position::new(c as f64 * spacing_mm, r as f64 * spacing_mm);
            a.add_node(mesh_node(cols, r, c), Some(pos));
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                a.add_link(mesh_node(cols, r, c), mesh_node(cols, r, c + 1), 1.0, spacing_mm);
            }
            if r + 1 < rows {
                a.add_link(mesh_node(cols, r, c), mesh_node(cols, r + 1, c), 1.0, spacing_mm);
            }
        }
    }
    let mut t = RoutingTables::new();
    for r in 0..rows {
        for c in 0..cols {
            for dr in 0..rows {
                for dc in 0..cols {
                    if (r, c) == (dr, dc) {
                        continue;
                    }
                    let (nr, nc) = if c != dc {
                        (r, if dc > c { c + 1 } else { c - 1 })
                    } else {
                        (if dr > r { r + 1 } else { r - 1 }, c)
                    };
                    t.insert(
                        mesh_node(cols, r, c),
                        mesh_node(cols, dr, dc),
                        mesh_node(cols, nr, nc),
                    );
                }
            }
        }
    }
    Ok((a, t))
}
