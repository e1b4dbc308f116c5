//! Structured prior building blocks: ICAR pairwise differences, BYM2
//! convolution with its graph scaling factor, and first-order random walks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::AdjacencyGraph;

/// Soft sum-to-zero sd is this constant times the number of levels.
pub const SUM_TO_ZERO_SD_PER_LEVEL: f64 = 0.01;

const RIDGE: f64 = 1e-9;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("expected a vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("mixing weight must lie in (0, 1), got {0}")]
    XiOutOfRange(f64),
    #[error("random walk needs at least 2 levels, got {0}")]
    TooShort(usize),
}

/// BYM2 scaling factors, one per connected component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    /// Geometric mean of the marginal ICAR variances; 1 for islands.
    pub epsilon: Vec<f64>,
    /// `1/sqrt(epsilon)` of each node's component.
    pub node_inv_sqrt: Vec<f64>,
    pub island: Vec<bool>,
    /// Component label per node.
    pub component: Vec<usize>,
    pub component_sizes: Vec<usize>,
}

impl ScalingFactors {
    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.epsilon.iter().map(|e| 1.0 / e.sqrt()).collect()
    }

    pub fn node_count(&self) -> usize {
        self.island.len()
    }
}

/// Scaling factor per component from the generalized inverse of the
/// component Laplacian under a sum-to-zero constraint.
pub fn compute_scaling_factor(graph: &AdjacencyGraph) -> ScalingFactors {
    let members = graph.component_members();
    let mut local = vec![0usize; graph.node_count()];
    for m in &members {
        for (i, &v) in m.iter().enumerate() {
            local[v] = i;
        }
    }
    let mut lap: Vec<DMatrix<f64>> = members.iter().map(|m| DMatrix::zeros(m.len(), m.len())).collect();
    for &(a, b) in graph.edges() {
        let q = &mut lap[graph.component_of(a)];
        let (i, j) = (local[a], local[b]);
        q[(i, i)] += 1.0;
        q[(j, j)] += 1.0;
        q[(i, j)] -= 1.0;
        q[(j, i)] -= 1.0;
    }

    let epsilon: Vec<f64> = lap
        .into_iter()
        .map(|mut q| {
            let n = q.nrows();
            if n == 1 {
                return 1.0;
            }
            // The rank-one term lifts the null space to eigenvalue 1 so the
            // ridge never has to carry the inversion on its own; projection
            // removes it again.
            let lift = 1.0 / n as f64;
            for i in 0..n {
                q[(i, i)] += RIDGE;
                for j in 0..n {
                    q[(i, j)] += lift;
                }
            }
            let inv = q.cholesky().expect("lifted Laplacian is positive definite").inverse();
            let row_means: Vec<f64> = (0..n).map(|i| inv.row(i).sum() / n as f64).collect();
            let total_mean = row_means.iter().sum::<f64>() / n as f64;
            let log_sum: f64 = (0..n).map(|i| (inv[(i, i)] - 2.0 * row_means[i] + total_mean).ln()).sum();
            (log_sum / n as f64).exp()
        })
        .collect();

    let node_inv_sqrt = (0..graph.node_count()).map(|v| 1.0 / epsilon[graph.component_of(v)].sqrt()).collect();
    ScalingFactors {
        node_inv_sqrt,
        island: (0..graph.node_count()).map(|v| graph.is_island(v)).collect(),
        component: graph.components().to_vec(),
        component_sizes: graph.component_sizes().to_vec(),
        epsilon,
    }
}

/// ICAR pairwise-difference term `-0.5 * sum_edges (psi_a - psi_b)^2`.
/// Adds its gradient into `grad`.
pub fn icar_logdensity(psi: &[f64], graph: &AdjacencyGraph, grad: &mut [f64]) -> Result<f64, PriorError> {
    check_len(psi.len(), graph.node_count())?;
    check_len(grad.len(), graph.node_count())?;
    let mut lp = 0.0;
    for &(a, b) in graph.edges() {
        let d = psi[a] - psi[b];
        lp -= 0.5 * d * d;
        grad[a] -= d;
        grad[b] += d;
    }
    Ok(lp)
}

/// Soft sum-to-zero term per component: `sum(psi[c]) ~ N(0, 0.01 * size)`.
/// Normalizing constants are dropped. Adds its gradient into `grad`.
pub fn component_sum_to_zero(psi: &[f64], sf: &ScalingFactors, grad: &mut [f64]) -> f64 {
    let mut sums = vec![0.0; sf.component_sizes.len()];
    for (v, &c) in sf.component.iter().enumerate() {
        sums[c] += psi[v];
    }
    let mut lp = 0.0;
    let mut dsum = vec![0.0; sums.len()];
    for (c, &s) in sums.iter().enumerate() {
        let sd = SUM_TO_ZERO_SD_PER_LEVEL * sf.component_sizes[c] as f64;
        lp -= 0.5 * (s / sd).powi(2);
        dsum[c] = -s / (sd * sd);
    }
    for (v, &c) in sf.component.iter().enumerate() {
        grad[v] += dsum[c];
    }
    lp
}

/// `gamma_l = scale * (phi_l * sqrt(1 - xi) + psi_l * sqrt(xi / eps))`, with
/// islands reduced to `scale * phi_l`.
pub fn bym2_convolve(
    phi: &[f64],
    psi: &[f64],
    xi: f64,
    scale: f64,
    sf: &ScalingFactors,
) -> Result<Vec<f64>, PriorError> {
    let n = sf.node_count();
    check_len(phi.len(), n)?;
    check_len(psi.len(), n)?;
    if !(scale > 0.0) {
        return Err(PriorError::NonPositiveScale(scale));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(PriorError::XiOutOfRange(xi));
    }
    let a = (1.0 - xi).sqrt();
    let sx = xi.sqrt();
    Ok((0..n)
        .map(|l| if sf.island[l] { scale * phi[l] } else { scale * (phi[l] * a + psi[l] * sx * sf.node_inv_sqrt[l]) })
        .collect())
}

/// First-order random walk on standardized innovations plus the soft
/// sum-to-zero term, both with their normal constants. Adds the gradient
/// into `grad`.
pub fn random_walk_logdensity(z: &[f64], grad: &mut [f64]) -> Result<f64, PriorError> {
    let k = z.len();
    if k < 2 {
        return Err(PriorError::TooShort(k));
    }
    check_len(grad.len(), k)?;
    let mut lp = 0.0;
    for u in 1..k {
        let d = z[u] - z[u - 1];
        lp += -0.5 * d * d - LN_SQRT_2PI;
        grad[u] -= d;
        grad[u - 1] += d;
    }
    let sd = SUM_TO_ZERO_SD_PER_LEVEL * k as f64;
    let s: f64 = z.iter().sum();
    lp += -0.5 * (s / sd).powi(2) - sd.ln() - LN_SQRT_2PI;
    for g in grad.iter_mut() {
        *g -= s / (sd * sd);
    }
    Ok(lp)
}

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

fn check_len(got: usize, expected: usize) -> Result<(), PriorError> {
    if got != expected {
        return Err(PriorError::LengthMismatch { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path2() -> AdjacencyGraph {
        AdjacencyGraph::from_edges(2, &[(1, 2)]).unwrap()
    }

    #[test]
    fn two_node_path_scaling() {
        let sf = compute_scaling_factor(&path2());
        assert!((sf.epsilon[0] - 0.25).abs() < 1e-9);
        assert!((sf.inv_sqrt()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn islands_scale_to_one() {
        let g = AdjacencyGraph::from_edges(3, &[(1, 2)]).unwrap();
        let sf = compute_scaling_factor(&g);
        assert_eq!(sf.epsilon[1], 1.0);
        assert_eq!(sf.node_inv_sqrt[2], 1.0);
        assert!(sf.island[2]);
    }

    #[test]
    fn four_cycle_scaling_matches_hand_pseudo_inverse() {
        // Eigenvalues 2, 2, 4 off the null space; each node carries
        // (1/2)(1/4 + 1/4) + (1/4)(1/4) = 5/16 of marginal variance.
        let g = AdjacencyGraph::from_edges(4, &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
        let sf = compute_scaling_factor(&g);
        assert!((sf.epsilon[0] - 5.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn us_map_scaling_is_positive() {
        let sf = compute_scaling_factor(&AdjacencyGraph::us_states());
        assert_eq!(sf.epsilon.len(), 3);
        assert!(sf.epsilon[0] > 0.0 && sf.epsilon[0] < 1.0);
        assert_eq!(sf.epsilon.iter().filter(|&&e| e == 1.0).count(), 2);
    }

    #[test]
    fn icar_values() {
        let g = path2();
        let mut grad = vec![0.0; 2];
        assert_eq!(icar_logdensity(&[3.0, 3.0], &g, &mut grad).unwrap(), 0.0);
        let mut grad = vec![0.0; 2];
        assert_eq!(icar_logdensity(&[1.0, -1.0], &g, &mut grad).unwrap(), -2.0);
        assert_eq!(grad, vec![-2.0, 2.0]);
        assert!(matches!(icar_logdensity(&[1.0], &g, &mut [0.0]), Err(PriorError::LengthMismatch { .. })));
    }

    #[test]
    fn bym2_values() {
        let g = path2();
        let sf = compute_scaling_factor(&g);
        let gamma = bym2_convolve(&[0.0, 0.0], &[1.0, 1.0], 0.5, 1.0, &sf).unwrap();
        assert!((gamma[0] - 2f64.sqrt()).abs() < 1e-9);
        let gamma = bym2_convolve(&[0.3, -0.7], &[5.0, 1.0], 0.0, 2.0, &sf).unwrap();
        assert_eq!(gamma, vec![0.6, -1.4]);
        assert!(bym2_convolve(&[0.0; 2], &[0.0; 2], 0.5, 0.0, &sf).is_err());

        let g = AdjacencyGraph::from_edges(3, &[(1, 2)]).unwrap();
        let sf = compute_scaling_factor(&g);
        let gamma = bym2_convolve(&[0.1, 0.2, 0.4], &[1.0, 1.0, 9.0], 0.9, 1.5, &sf).unwrap();
        assert!((gamma[2] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn random_walk_values() {
        let mut g = vec![0.0; 2];
        let lp = random_walk_logdensity(&[0.0, 1.0], &mut g).unwrap();
        let expect = normal_logpdf(1.0, 0.0, 1.0) + normal_logpdf(1.0, 0.0, 0.02);
        assert!((lp - expect).abs() < 1e-12);
        assert_eq!(random_walk_logdensity(&[1.0], &mut [0.0]), Err(PriorError::TooShort(1)));
        let mut g0 = vec![0.0; 4];
        let mut g1 = vec![0.0; 4];
        let at_zero = random_walk_logdensity(&[0.0; 4], &mut g0).unwrap();
        let off = random_walk_logdensity(&[0.1, 0.1, 0.1, 0.1], &mut g1).unwrap();
        assert!(at_zero > off);
    }

    fn fd_check(f: impl Fn(&[f64], &mut [f64]) -> f64, x: &[f64]) -> f64 {
        let mut grad = vec![0.0; x.len()];
        f(x, &mut grad);
        let mut worst: f64 = 0.0;
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let mut scratch = vec![0.0; x.len()];
            let fd = (f(&xp, &mut scratch) - f(&xm, &mut scratch)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
            worst = worst.max(err);
        }
        worst
    }

    proptest! {
        #[test]
        fn icar_gradient_matches_finite_differences(psi in prop::collection::vec(-3.0..3.0f64, 51)) {
            let g = AdjacencyGraph::us_states();
            let err = fd_check(|x, gr| icar_logdensity(x, &g, gr).unwrap(), &psi);
            prop_assert!(err < 1e-5);
        }

        #[test]
        fn sum_to_zero_gradient_matches_finite_differences(psi in prop::collection::vec(-0.05..0.05f64, 51)) {
            let g = AdjacencyGraph::us_states();
            let sf = compute_scaling_factor(&g);
            let err = fd_check(|x, gr| component_sum_to_zero(x, &sf, gr), &psi);
            prop_assert!(err < 1e-5);
        }

        #[test]
        fn random_walk_gradient_matches_finite_differences(z in prop::collection::vec(-2.0..2.0f64, 2..12)) {
            let err = fd_check(|x, gr| random_walk_logdensity(x, gr).unwrap(), &z);
            prop_assert!(err < 1e-5);
        }

        #[test]
        fn icar_ignores_constant_shift_within_component(
            psi in prop::collection::vec(-3.0..3.0f64, 51),
            c in -10.0..10.0f64,
        ) {
            let g = AdjacencyGraph::us_states();
            let main = g.component_of(0);
            let shifted: Vec<f64> = psi
                .iter()
                .enumerate()
                .map(|(v, &x)| if g.component_of(v) == main { x + c } else { x })
                .collect();
            let a = icar_logdensity(&psi, &g, &mut vec![0.0; 51]).unwrap();
            let b = icar_logdensity(&shifted, &g, &mut vec![0.0; 51]).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0) * 100.0);
        }

        #[test]
        fn bym2_is_linear_in_scale(
            phi in prop::collection::vec(-3.0..3.0f64, 51),
            psi in prop::collection::vec(-3.0..3.0f64, 51),
            xi in 0.01..0.99f64,
            scale in 0.1..4.0f64,
        ) {
            let sf = compute_scaling_factor(&AdjacencyGraph::us_states());
            let g1 = bym2_convolve(&phi, &psi, xi, scale, &sf).unwrap();
            let g2 = bym2_convolve(&phi, &psi, xi, 2.0 * scale, &sf).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                prop_assert_eq!(2.0 * a, *b);
            }
        }

        #[test]
        fn scaling_factor_ignores_node_labels(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let base = [(1, 2), (2, 3), (3, 4), (4, 5), (2, 5), (5, 6), (6, 7)];
            let mut perm: Vec<usize> = (1..=7).collect();
            perm.shuffle(&mut rng);
            let relabeled: Vec<_> = base.iter().map(|&(a, b)| (perm[a - 1], perm[b - 1])).collect();
            let e0 = compute_scaling_factor(&AdjacencyGraph::from_edges(7, &base).unwrap()).epsilon[0];
            let e1 = compute_scaling_factor(&AdjacencyGraph::from_edges(7, &relabeled).unwrap()).epsilon[0];
            prop_assert!((e0 - e1).abs() < 1e-10);
        }
    }
}
