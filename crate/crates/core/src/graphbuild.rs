//! Affinity graph over echo points.
//!
//! Two points are close when their spectra share information, their ranges
//! agree to within the body-size gate, and they are near in ping time. Pairs
//! that would require the target to move faster than `v_max` get no edge.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infodist::{Quantized, DEFAULT_VALUE_BINS};
use crate::signalproc::EchoPoint;

/// Weights of the three distance terms and the motion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffinityParams {
    /// Weight of the spectral (NID) term.
    pub alpha: f64,
    /// Weight of the range term (1/m).
    pub beta: f64,
    /// Weight of the ping-time term (1/s).
    pub tau: f64,
    /// Range differences up to this size (m) carry no range penalty.
    pub body_size: f64,
    /// Maximum target speed (m/s).
    pub v_max: f64,
    /// Ping repetition interval (s).
    pub t_pri: f64,
    /// Value bins used by the NID estimator.
    pub nid_bins: usize,
    /// The NID of a pair is not computed when doing so cannot move its edge
    /// weight by more than this amount; the pair is then scored as
    /// independent.
    pub skip_tolerance: f64,
}

impl Default for AffinityParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            tau: 1.0,
            body_size: 0.6,
            v_max: 2.0,
            t_pri: 0.7,
            nid_bins: DEFAULT_VALUE_BINS,
            skip_tolerance: 1e-6,
        }
    }
}

impl AffinityParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.alpha, self.beta, self.tau, self.body_size, self.skip_tolerance];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("alpha, beta, tau, body size and skip tolerance must be >= 0"));
        }
        if !(self.v_max > 0.0) || !(self.t_pri > 0.0) {
            return Err(Error::param("v_max and T_PRI must be positive"));
        }
        if self.nid_bins < 2 {
            return Err(Error::param("NID needs at least two value bins"));
        }
        Ok(())
    }

    /// Range and time part of the distance, without the spectral term.
    fn kinematic_distance(&self, dr: f64, dt: f64) -> f64 {
        let range_term = if dr > self.body_size { self.beta * dr } else { 0.0 };
        range_term + self.tau * dt
    }
}

fn separations(i: &EchoPoint, j: &EchoPoint, t_pri: f64) -> (f64, f64) {
    let dr = (i.range - j.range).abs();
    let dt = f64::from(i.ping.abs_diff(j.ping)) * t_pri;
    (dr, dt)
}

/// `alpha * NID + beta * dr * u(dr - l) + tau * dt`, with `u(0) = 0`.
pub fn pair_distance(i: &EchoPoint, j: &EchoPoint, nid: f64, params: &AffinityParams) -> f64 {
    let (dr, dt) = separations(i, j, params.t_pri);
    params.alpha * nid + params.kinematic_distance(dr, dt)
}

/// Whether the apparent two-way speed `2 dr / dt` is within `v_max`.
/// Same-ping pairs are feasible only at identical range.
pub fn velocity_feasible(dr: f64, dt: f64, v_max: f64) -> bool {
    if dt == 0.0 {
        dr == 0.0
    } else {
        2.0 * dr / dt <= v_max
    }
}

/// `exp(-delta)` gated by the velocity constraint.
pub fn edge_weight(delta: f64, dr: f64, dt: f64, v_max: f64) -> f64 {
    if velocity_feasible(dr, dt, v_max) {
        (-delta).exp()
    } else {
        0.0
    }
}

/// Weight matrix and the matrices derived from it.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    w: DMatrix<f64>,
    a: DMatrix<f64>,
    degrees: DVector<f64>,
    laplacian: DMatrix<f64>,
    nid_evaluations: usize,
}

impl AffinityGraph {
    /// Builds the graph matrices from a symmetric weight matrix with
    /// entries in `[0, 1]`.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n != w.ncols() {
            return Err(Error::param("weight matrix must be square"));
        }
        if n < 2 {
            return Err(Error::param("a graph needs at least two nodes"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::param(format!("weight w[{i},{j}] = {v} outside [0, 1]")));
                }
                if v != w[(j, i)] {
                    return Err(Error::param(format!("weight matrix not symmetric at ({i},{j})")));
                }
            }
        }
        let mut a = w.clone();
        a.fill_diagonal(0.0);
        let degrees = DVector::from_iterator(n, a.row_iter().map(|r| r.sum()));
        let inv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        // D^{-1/2} (D - A) D^{-1/2} with a pseudo-inverse for isolated
        // nodes, whose diagonal entry is kept at 1.
        let laplacian = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                -a[(i, j)] * (inv_sqrt[i] * inv_sqrt[j])
            }
        });
        Ok(Self {
            w,
            a,
            degrees,
            laplacian,
            nid_evaluations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees)
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Number of pairs whose NID was actually evaluated.
    pub fn nid_evaluations(&self) -> usize {
        self.nid_evaluations
    }

    pub fn is_isolated(&self, node: usize) -> bool {
        self.degrees[node] == 0.0
    }

    /// Writes `W` as a dense CSV matrix without header.
    pub fn write_weights_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.w.row_iter() {
            writer.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Builds the affinity graph of a block of echo points.
///
/// Spectra are required whenever `alpha > 0`.
pub fn build_graph(points: &[EchoPoint], params: &AffinityParams) -> Result<AffinityGraph> {
    build_graph_inner(points, params, true)
}

/// Same as [`build_graph`] but evaluates the NID of every feasible pair.
pub fn build_graph_exhaustive(
    points: &[EchoPoint],
    params: &AffinityParams,
) -> Result<AffinityGraph> {
    build_graph_inner(points, params, false)
}

fn build_graph_inner(
    points: &[EchoPoint],
    params: &AffinityParams,
    allow_skip: bool,
) -> Result<AffinityGraph> {
    params.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::param(format!("a graph needs at least two points, got {n}")));
    }
    let need_nid = params.alpha > 0.0;
    let quantized: Vec<Quantized> = if need_nid {
        points
            .iter()
            .map(|p| {
                if p.spectrum.is_empty() {
                    Err(Error::param("echo point has no spectrum"))
                } else {
                    Quantized::new(&p.spectrum, params.nid_bins)
                }
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    // Weight change from replacing NID by 1 is at most
    // exp(-kinematic) * (1 - exp(-alpha)).
    let spectral_span = 1.0 - (-params.alpha).exp();

    let rows: Vec<(Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n - i - 1];
            let mut evaluated = 0;
            for (slot, j) in row.iter_mut().zip(i + 1..n) {
                let (dr, dt) = separations(&points[i], &points[j], params.t_pri);
                if !velocity_feasible(dr, dt, params.v_max) {
                    continue;
                }
                let kinematic = params.kinematic_distance(dr, dt);
                let nid = if !need_nid {
                    0.0
                } else if allow_skip && (-kinematic).exp() * spectral_span <= params.skip_tolerance {
                    1.0
                } else {
                    evaluated += 1;
                    quantized[i].nid(&quantized[j])?
                };
                *slot = (-(params.alpha * nid + kinematic)).exp();
            }
            Ok((row, evaluated))
        })
        .collect::<Result<_>>()?;

    let mut w = DMatrix::<f64>::identity(n, n);
    let mut nid_evaluations = 0;
    for (i, (row, evaluated)) in rows.into_iter().enumerate() {
        nid_evaluations += evaluated;
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let mut graph = AffinityGraph::from_weights(w)?;
    graph.nid_evaluations = nid_evaluations;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;

    fn pt(range: f64, ping: u32) -> EchoPoint {
        EchoPoint::new(range, ping, 1.0)
    }

    #[test]
    fn zero_weights_give_zero_distance() {
        let params = AffinityParams {
            alpha: 0.0,
            beta: 0.0,
            tau: 0.0,
            ..AffinityParams::default()
        };
        assert_eq!(pair_distance(&pt(3.0, 1), &pt(40.0, 9), 0.7, &params), 0.0);
    }

    #[test]
    fn range_inside_body_gate_is_free() {
        let params = AffinityParams {
            alpha: 0.0,
            tau: 0.0,
            ..AffinityParams::default()
        };
        assert_eq!(pair_distance(&pt(10.0, 1), &pt(10.3, 2), 0.0, &params), 0.0);
        // Exactly at the gate: u(0) = 0.
        assert_eq!(pair_distance(&pt(10.0, 1), &pt(10.6, 2), 0.0, &params), 0.0);
    }

    #[test]
    fn hand_computed_pair() {
        let params = AffinityParams {
            alpha: 0.1,
            beta: 1.0,
            tau: 1.0,
            body_size: 0.6,
            v_max: 10.0,
            t_pri: 0.7,
            ..AffinityParams::default()
        };
        let (a, b) = (pt(20.0, 4), pt(22.0, 5));
        let delta = pair_distance(&a, &b, 0.5, &params);
        assert_abs_diff_eq!(delta, 2.75, epsilon = 1e-12);
        let w = edge_weight(delta, 2.0, 0.7, params.v_max);
        assert_abs_diff_eq!(w, (-2.75f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(w, 0.0639, epsilon = 1e-4);
    }

    #[test]
    fn velocity_gate() {
        assert_eq!(edge_weight(0.0, 1.0, 0.7, 2.0), 0.0);
        assert_eq!(edge_weight(0.0, 0.5, 0.7, 2.0), 1.0);
        // Exactly at v_max the edge survives.
        assert_eq!(edge_weight(0.0, 0.7, 0.7, 2.0), 1.0);
        // Same ping.
        assert_eq!(edge_weight(0.0, 0.1, 0.0, 2.0), 0.0);
        assert_eq!(edge_weight(1.0, 0.0, 0.0, 2.0), (-1.0f64).exp());
    }

    #[test]
    fn infeasible_pair_is_isolated() {
        let params = AffinityParams {
            alpha: 0.0,
            ..AffinityParams::default()
        };
        let g = build_graph(&[pt(5.0, 1), pt(30.0, 2)], &params).unwrap();
        assert!(g.adjacency().iter().all(|&v| v == 0.0));
        assert!(g.is_isolated(0) && g.is_isolated(1));
        assert_eq!(g.laplacian(), &DMatrix::identity(2, 2));
        assert!(build_graph(&[pt(5.0, 1)], &params).is_err());
    }

    #[test]
    fn three_node_laplacian_matches_symbolic_form() {
        let (p, q, r) = (0.5, 0.2, 0.8);
        let w = DMatrix::from_row_slice(3, 3, &[1.0, p, q, p, 1.0, r, q, r, 1.0]);
        let g = AffinityGraph::from_weights(w).unwrap();
        let d = [p + q, p + r, q + r];
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0,
                -p / (d[0] * d[1]).sqrt(),
                -q / (d[0] * d[2]).sqrt(),
                -p / (d[0] * d[1]).sqrt(),
                1.0,
                -r / (d[1] * d[2]).sqrt(),
                -q / (d[0] * d[2]).sqrt(),
                -r / (d[1] * d[2]).sqrt(),
                1.0,
            ],
        );
        assert_abs_diff_eq!(g.laplacian(), &expected, epsilon = 1e-15);
        let eig = SymmetricEigen::new(g.laplacian().clone());
        assert!(eig.eigenvalues.min() >= -1e-10);
    }

    #[test]
    fn complete_graph_nullspace() {
        let mut w = DMatrix::from_element(4, 4, 0.3);
        w.fill_diagonal(1.0);
        let g = AffinityGraph::from_weights(w).unwrap();
        let v = g.degrees().map(f64::sqrt).normalize();
        assert!((g.laplacian() * &v).norm() < 1e-12);
    }

    #[test]
    fn weights_must_be_symmetric_and_bounded() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(AffinityGraph::from_weights(w).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(AffinityGraph::from_weights(w).is_err());
    }

    #[test]
    fn spectra_required_when_alpha_positive() {
        let err = build_graph(&[pt(5.0, 1), pt(5.1, 2)], &AffinityParams::default());
        assert!(matches!(err, Err(Error::Parameter(_))));
    }

    #[test]
    fn weight_csv_is_dense() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]);
        let g = AffinityGraph::from_weights(w).unwrap();
        let mut buf = Vec::new();
        g.write_weights_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.split(',').count() == 2));
    }
}
