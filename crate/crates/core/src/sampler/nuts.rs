//! Multinomial no-U-turn transitions with a diagonal metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::stats::log_sum_exp;

/// Energy error beyond which a trajectory counts as divergent.
const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

impl Point {
    pub fn at<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let lp = target.log_density_and_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        Point { q, p, grad, lp }
    }

    pub fn hamiltonian(&self, minv: &[f64]) -> f64 {
        let k: f64 = self.p.iter().zip(minv).map(|(p, m)| p * p * m).sum();
        let h = -self.lp + 0.5 * k;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn sharp(&self, minv: &[f64]) -> Vec<f64> {
        self.p.iter().zip(minv).map(|(p, m)| p * m).collect()
    }
}

/// One velocity-Verlet step of size `step` (negative runs backwards in
/// time). Updates position, momentum, gradient and log density in place.
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, z: &mut Point, step: f64, minv: &[f64]) {
    let half = 0.5 * step;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(minv) {
        *q += step * m * p;
    }
    z.lp = target.log_density_and_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
}

pub fn sample_momentum(z: &mut Point, minv: &[f64], rng: &mut ChaCha8Rng) {
    for (p, m) in z.p.iter_mut().zip(minv) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub depth: usize,
    pub leapfrogs: usize,
    pub divergent: bool,
}

struct Ctx<'a, T: ?Sized> {
    target: &'a T,
    step: f64,
    minv: &'a [f64],
    h0: f64,
    leapfrogs: usize,
    sum_metro: f64,
    divergent: bool,
}

struct Subtree {
    propose: Point,
    log_sum_weight: f64,
    // Momenta at the first and last states built, in build order.
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    sharp_beg: Vec<f64>,
    sharp_end: Vec<f64>,
}

fn no_u_turn(sharp_a: &[f64], sharp_b: &[f64], rho: &[f64]) -> bool {
    dot(sharp_a, rho) > 0.0 && dot(sharp_b, rho) > 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn build_tree<T: LogDensity + ?Sized>(
    ctx: &mut Ctx<'_, T>,
    depth: usize,
    z: &mut Point,
    sign: f64,
    rho: &mut [f64],
    rng: &mut ChaCha8Rng,
) -> Option<Subtree> {
    if depth == 0 {
        leapfrog(ctx.target, z, sign * ctx.step, ctx.minv);
        ctx.leapfrogs += 1;
        let h = z.hamiltonian(ctx.minv);
        if h - ctx.h0 > MAX_DELTA_H {
            ctx.divergent = true;
        }
        let w = ctx.h0 - h;
        ctx.sum_metro += if w > 0.0 { 1.0 } else { w.exp() };
        if ctx.divergent {
            return None;
        }
        for (r, p) in rho.iter_mut().zip(&z.p) {
            *r += p;
        }
        let sharp = z.sharp(ctx.minv);
        return Some(Subtree {
            propose: z.clone(),
            log_sum_weight: w,
            p_beg: z.p.clone(),
            p_end: z.p.clone(),
            sharp_beg: sharp.clone(),
            sharp_end: sharp,
        });
    }

    let n = rho.len();
    let mut rho_left = vec![0.0; n];
    let left = build_tree(ctx, depth - 1, z, sign, &mut rho_left, rng)?;
    let mut rho_right = vec![0.0; n];
    let right = build_tree(ctx, depth - 1, z, sign, &mut rho_right, rng)?;

    let lsw = log_sum_exp(&[left.log_sum_weight, right.log_sum_weight]);
    let take_right = rng.random::<f64>() < (right.log_sum_weight - lsw).exp();
    let rho_sub = add(&rho_left, &rho_right);
    let persist = no_u_turn(&left.sharp_beg, &right.sharp_end, &rho_sub)
        && no_u_turn(&left.sharp_beg, &right.sharp_beg, &add(&rho_left, &right.p_beg))
        && no_u_turn(&left.sharp_end, &right.sharp_end, &add(&rho_right, &left.p_end));
    for (r, s) in rho.iter_mut().zip(&rho_sub) {
        *r += s;
    }
    if !persist {
        return None;
    }
    Some(Subtree {
        propose: if take_right { right.propose } else { left.propose },
        log_sum_weight: lsw,
        p_beg: left.p_beg,
        sharp_beg: left.sharp_beg,
        p_end: right.p_end,
        sharp_end: right.sharp_end,
    })
}

/// One NUTS transition from `z` (position, gradient and log density must be
/// current; the momentum is resampled). Returns the new state.
pub fn transition<T: LogDensity + ?Sized>(
    target: &T,
    z: &Point,
    step: f64,
    minv: &[f64],
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> (Point, TransitionStats) {
    let n = z.q.len();
    let mut z0 = z.clone();
    sample_momentum(&mut z0, minv, rng);
    let h0 = z0.hamiltonian(minv);
    let mut ctx = Ctx { target, step, minv, h0, leapfrogs: 0, sum_metro: 0.0, divergent: false };

    let mut sample = z0.clone();
    let mut z_fwd = z0.clone();
    let mut z_bwd = z0.clone();
    let sharp0 = z0.sharp(minv);
    // (momentum, sharp momentum) at the backward-most and forward-most states
    let mut bwd_end = (z0.p.clone(), sharp0.clone());
    let mut fwd_end = (z0.p.clone(), sharp0);
    let mut rho = z0.p.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;

    while depth < max_depth {
        let forward = rng.random::<f64>() > 0.5;
        let mut rho_sub = vec![0.0; n];
        let sub = if forward {
            build_tree(&mut ctx, depth, &mut z_fwd, 1.0, &mut rho_sub, rng)
        } else {
            build_tree(&mut ctx, depth, &mut z_bwd, -1.0, &mut rho_sub, rng)
        };
        let Some(sub) = sub else { break };
        depth += 1;

        if sub.log_sum_weight > log_sum_weight || rng.random::<f64>() < (sub.log_sum_weight - log_sum_weight).exp() {
            sample = sub.propose.clone();
        }
        log_sum_weight = log_sum_exp(&[log_sum_weight, sub.log_sum_weight]);

        // Orient the old trajectory and the new subtree as backward and
        // forward halves; each half is (bwd-most, fwd-most, rho).
        let (b, f) = if forward {
            (
                (bwd_end.clone(), fwd_end.clone(), rho.clone()),
                ((sub.p_beg, sub.sharp_beg), (sub.p_end, sub.sharp_end), rho_sub),
            )
        } else {
            (
                ((sub.p_end, sub.sharp_end), (sub.p_beg, sub.sharp_beg), rho_sub),
                (bwd_end.clone(), fwd_end.clone(), rho.clone()),
            )
        };
        rho = add(&b.2, &f.2);
        let persist = no_u_turn(&b.0 .1, &f.1 .1, &rho)
            && no_u_turn(&b.0 .1, &f.0 .1, &add(&b.2, &f.0 .0))
            && no_u_turn(&b.1 .1, &f.1 .1, &add(&f.2, &b.1 .0));
        bwd_end = b.0;
        fwd_end = f.1;
        if !persist {
            break;
        }
    }

    let stats = TransitionStats {
        accept_stat: if ctx.leapfrogs > 0 { ctx.sum_metro / ctx.leapfrogs as f64 } else { 0.0 },
        depth,
        leapfrogs: ctx.leapfrogs,
        divergent: ctx.divergent,
    };
    sample.p.iter_mut().for_each(|p| *p = 0.0);
    (sample, stats)
}

/// Doubles or halves the step until a single leapfrog's acceptance crosses
/// 0.8.
pub fn initial_step<T: LogDensity + ?Sized>(
    target: &T,
    z: &Point,
    mut step: f64,
    minv: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let threshold = 0.8f64.ln();
    let mut direction = 0.0;
    for _ in 0..100 {
        let mut trial = z.clone();
        sample_momentum(&mut trial, minv, rng);
        let h0 = trial.hamiltonian(minv);
        leapfrog(target, &mut trial, step, minv);
        let delta = h0 - trial.hamiltonian(minv);
        let up = delta > threshold;
        if direction == 0.0 {
            direction = if up { 1.0 } else { -1.0 };
        } else if (direction > 0.0) != up {
            break;
        }
        step = if direction > 0.0 { step * 2.0 } else { step * 0.5 };
        if !(1e-10..=1e7).contains(&step) {
            break;
        }
    }
    step.clamp(1e-10, 1e7)
}
