// SPDX-License-Identifier: Apache-2.0

//! Bit energy as a function of link length.
//!
//! `E_bit(l) = e_router + e_wire * l`: a fixed switch/buffer term per traversed
//! link plus a wire term proportional to the link length. The unit model
//! (`e_router = 1`, `e_wire = 0`) turns every cost into a hop count, which keeps
//! optimality checks in exact integer arithmetic.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Acg, NodeId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Metric {
    #[default]
    Manhattan,
    Euclidean,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("link length must be finite and non-negative, got {0}")]
    NegativeLength(f64),
    #[error("invalid energy model: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyModel {
    /// pJ/bit per traversed link (switch + buffer).
    pub e_router: f64,
    /// pJ/(bit*mm).
    pub e_wire: f64,
    /// Link length used when a floorplan position is missing.
    pub default_link_mm: f64,
    /// Multiplier on the cost of edges left as dedicated point-to-point links.
    pub lambda: f64,
    pub metric: Metric,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel::unit()
    }
}

impl EnergyModel {
    pub const DEFAULT_LINK_MM: f64 = 1.0;
    pub const DEFAULT_LAMBDA: f64 = 2.0;

    /// One energy unit per hop, independent of length.
    pub fn unit() -> Self {
        EnergyModel {
            e_router: 1.0,
            e_wire: 0.0,
            default_link_mm: Self::DEFAULT_LINK_MM,
            lambda: Self::DEFAULT_LAMBDA,
            metric: Metric::Manhattan,
        }
    }

    pub fn linear(e_router: f64, e_wire: f64) -> Self {
        EnergyModel {
            e_router,
            e_wire,
            ..EnergyModel::unit()
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let fields = [
            ("e_router", self.e_router),
            ("e_wire", self.e_wire),
            ("default_link_mm", self.default_link_mm),
            ("lambda", self.lambda),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(EnergyError::Invalid(format!("{name} = {v}")));
            }
        }
        if self.lambda < 1.0 {
            return Err(EnergyError::Invalid(format!(
                "lambda must be >= 1, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Energy per bit for one link of the given length.
    pub fn e_bit(&self, length_mm: f64) -> Result<f64, EnergyError> {
        if !length_mm.is_finite() || length_mm < 0.0 {
            return Err(EnergyError::NegativeLength(length_mm));
        }
        Ok(self.e_router + self.e_wire * length_mm)
    }

    pub(crate) fn e_bit_unchecked(&self, length_mm: f64) -> f64 {
        self.e_router + self.e_wire * length_mm
    }

    /// Distance between two nodes' floorplan positions under `metric`, or
    /// `default_link_mm` if either position is missing.
    pub fn distance(&self, g: &Acg, i: NodeId, j: NodeId, metric: Metric) -> Result<f64, EnergyError> {
        for n in [i, j] {
            if !g.contains_node(n) {
                return Err(EnergyError::UnknownNode(n));
            }
        }
        Ok(match (g.position(i), g.position(j)) {
            (Some(a), Some(b)) => {
                let (dx, dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
                match metric {
                    Metric::Manhattan => dx + dy,
                    Metric::Euclidean => dx.hypot(dy),
                }
            }
            _ => self.default_link_mm,
        })
    }

    /// [`distance`](Self::distance) under the model's own metric.
    pub fn link_length(&self, g: &Acg, i: NodeId, j: NodeId) -> Result<f64, EnergyError> {
        self.distance(g, i, j, self.metric)
    }
}

impl fmt::Display for EnergyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.e_router == 1.0
            && self.e_wire == 0.0
            && self.default_link_mm == Self::DEFAULT_LINK_MM
        {
            write!(f, "unit")
        } else {
            write!(
                f,
                "linear:{},{},{},{}",
                self.e_router, self.e_wire, self.default_link_mm, self.lambda
            )
        }
    }
}

/// Parses `unit` or `linear:<e_router>,<e_wire>[,<default_mm>,<lambda>]`.
impl FromStr for EnergyModel {
    type Err = EnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let model = if s == "unit" {
            EnergyModel::unit()
        } else if let Some(rest) = s.strip_prefix("linear:") {
            let vals: Vec<f64> = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| EnergyError::Invalid(format!("`{s}`: {e}")))?;
            let mut m = match vals.as_slice() {
                [r, w] | [r, w, _] | [r, w, _, _] => EnergyModel::linear(*r, *w),
                _ => {
                    return Err(EnergyError::Invalid(format!(
                        "`{s}`: expected 2 to 4 comma-separated values"
                    )))
                }
            };
            if let Some(&mm) = vals.get(2) {
                m.default_link_mm = mm;
            }
            if let Some(&l) = vals.get(3) {
                m.lambda = l;
            }
            m
        } else {
            return Err(EnergyError::Invalid(format!(
                "`{s}`: expected `unit` or `linear:...`"
            )));
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Position;

    fn placed(points: &[(f64, f64)]) -> Acg {
        let mut g = Acg::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            g.add_node(i as NodeId + 1, Some(Position::new(x, y))).unwrap();
        }
        g
    }

    #[test]
    fn distances() {
        let g = placed(&[(0.0, 0.0), (1.0, 0.0), (3.0, 4.0), (0.0, 0.0)]);
        let m = EnergyModel::unit();
        assert_eq!(m.distance(&g, 1, 4, Metric::Manhattan).unwrap(), 0.0);
        assert_eq!(m.distance(&g, 1, 2, Metric::Manhattan).unwrap(), 1.0);
        assert_eq!(m.distance(&g, 1, 3, Metric::Euclidean).unwrap(), 5.0);
        assert_eq!(m.distance(&g, 1, 3, Metric::Manhattan).unwrap(), 7.0);
        assert_eq!(
            m.distance(&g, 1, 9, Metric::Manhattan),
            Err(EnergyError::UnknownNode(9))
        );
    }

    #[test]
    fn missing_position_uses_default() {
        let mut g = placed(&[(0.0, 0.0)]);
        g.add_node(2, None).unwrap();
        let mut m = EnergyModel::unit();
        m.default_link_mm = 2.5;
        assert_eq!(m.link_length(&g, 1, 2).unwrap(), 2.5);
    }

    #[test]
    fn e_bit_values() {
        let unit = EnergyModel::unit();
        for len in [0.0, 1.0, 17.5] {
            assert_eq!(unit.e_bit(len).unwrap(), 1.0);
        }
        let lin = EnergyModel::linear(0.5, 0.2);
        assert!((lin.e_bit(2.0).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(lin.e_bit(-1.0), Err(EnergyError::NegativeLength(-1.0)));
    }

    #[test]
    fn parse_flag_values() {
        assert_eq!("unit".parse::<EnergyModel>().unwrap(), EnergyModel::unit());
        let m: EnergyModel = "linear:1,0.05,2,3".parse().unwrap();
        assert_eq!((m.e_router, m.e_wire, m.default_link_mm, m.lambda), (1.0, 0.05, 2.0, 3.0));
        assert!("linear:1".parse::<EnergyModel>().is_err());
        assert!("linear:1,1,1,0.5".parse::<EnergyModel>().is_err());
        assert!("quadratic".parse::<EnergyModel>().is_err());
        assert_eq!(m.to_string().parse::<EnergyModel>().unwrap(), m);
    }
}
