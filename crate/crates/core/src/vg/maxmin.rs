//! Maximization of `min_i f_i(x)` over a box, for smooth concave pieces `f_i`.
//!
//! The epigraph form `max t s.t. f_i(x) >= t, lo <= x <= hi` is solved by a
//! log-barrier path-following Newton method. The barrier solution is then
//! polished by Newton iterations on the KKT system of the constraints that are
//! active at the end of the path, which recovers the optimum to near machine
//! precision when the active set is nondegenerate.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of one concave piece.
#[derive(Debug, Clone)]
pub struct Piece {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub trait ConcavePieces {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// All pieces at `x`. Pieces must be concave and smooth on the open box.
    fn eval(&self, x: &[f64]) -> Vec<Piece>;
    /// Values only.
    fn values(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x).into_iter().map(|p| p.value).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MaxMinSolution {
    pub x: Vec<f64>,
    /// `min_i f_i(x)` at the returned point (not clamped).
    pub value: f64,
    pub polished: bool,
    pub newton_steps: usize,
}

const FINAL_GAP: f64 = 1e-13;

fn min_value(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

struct Barrier<'a, P: ConcavePieces> {
    p: &'a P,
    tau: f64,
}

impl<P: ConcavePieces> Barrier<'_, P> {
    /// Barrier objective (to minimize); +inf outside the domain.
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let (lo, hi) = (self.p.lower(), self.p.upper());
        let mut acc = -self.tau * t;
        for i in 0..x.len() {
            let (a, b) = (x[i] - lo[i], hi[i] - x[i]);
            if !(a > 0.0 && b > 0.0) {
                return f64::INFINITY;
            }
            acc -= a.ln() + b.ln();
        }
        for v in self.p.values(x) {
            let g = v - t;
            if !(g > 0.0) {
                return f64::INFINITY;
            }
            acc -= g.ln();
        }
        acc
    }

    fn newton_direction(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let n = x.len();
        let (lo, hi) = (self.p.lower(), self.p.upper());
        let mut grad = DVector::zeros(n + 1);
        let mut hess = DMatrix::zeros(n + 1, n + 1);
        grad[n] = -self.tau;
        for i in 0..n {
            let (a, b) = (x[i] - lo[i], hi[i] - x[i]);
            grad[i] += -1.0 / a + 1.0 / b;
            hess[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
        }
        for pc in self.p.eval(x) {
            let g = pc.value - t;
            let mut dg = DVector::zeros(n + 1);
            dg.rows_mut(0, n).copy_from(&pc.grad);
            dg[n] = -1.0;
            grad -= &dg / g;
            hess += &dg * dg.transpose() / (g * g);
            let mut h = hess.view_mut((0, 0), (n, n));
            h -= &pc.hess / g;
        }
        let chol = hess.clone().cholesky().or_else(|| {
            let reg = hess.diagonal().amax().max(1.0) * 1e-14;
            (hess + DMatrix::identity(n + 1, n + 1) * reg).cholesky()
        })?;
        let step = -chol.solve(&grad);
        let decrement = -grad.dot(&step);
        Some((step, decrement))
    }
}

/// Solves `max_x min_i f_i(x)` over the box. `x0`, when given, must lie strictly inside the box.
pub fn solve<P: ConcavePieces>(p: &P, x0: Option<&[f64]>) -> MaxMinSolution {
    let n = p.dim();
    let (lo, hi) = (p.lower().to_vec(), p.upper().to_vec());
    let mut x: Vec<f64> = match x0 {
        Some(v) => v.to_vec(),
        None => lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect(),
    };
    let vals = p.values(&x);
    let m = vals.len() + 2 * n;
    let spread = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut t = min_value(&vals) - 0.5 * spread;
    let mut tau = 1.0 / spread;
    let mut steps = 0;

    loop {
        let bar = Barrier { p, tau };
        for _ in 0..200 {
            let Some((dir, decrement)) = bar.newton_direction(&x, t) else { break };
            if decrement * 0.5 < 1e-14 {
                break;
            }
            let f0 = bar.value(&x, t);
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-20 {
                let xn: Vec<f64> = (0..n).map(|i| x[i] + s * dir[i]).collect();
                let tn = t + s * dir[n];
                let f1 = bar.value(&xn, tn);
                if f1.is_finite() && f1 <= f0 - 0.25 * s * decrement {
                    x = xn;
                    t = tn;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            steps += 1;
            if !moved {
                break;
            }
        }
        if m as f64 / tau < FINAL_GAP * (1.0 + t.abs()) {
            break;
        }
        tau *= 8.0;
    }

    let barrier_value = min_value(&p.values(&x));
    let mut best = MaxMinSolution { x: x.clone(), value: barrier_value, polished: false, newton_steps: steps };
    if let Some((xp, vp)) = polish(p, &x, t) {
        if vp >= barrier_value - 1e-12 * (1.0 + barrier_value.abs()) {
            best = MaxMinSolution { x: xp, value: vp, polished: true, newton_steps: steps };
        }
    }
    best
}

/// Newton on the KKT system restricted to the active pieces and bounds.
fn polish<P: ConcavePieces>(p: &P, x0: &[f64], t0: f64) -> Option<(Vec<f64>, f64)> {
    let n = p.dim();
    let (lo, hi) = (p.lower(), p.upper());
    let scale = 1.0 + t0.abs();
    let pieces = p.eval(x0);
    let gaps: Vec<f64> = pieces.iter().map(|pc| pc.value - t0).collect();
    let active: Vec<usize> = (0..pieces.len()).filter(|&i| gaps[i] < 1e-7 * scale).collect();
    if active.is_empty() {
        return None;
    }
    let mut x = x0.to_vec();
    let mut free = Vec::new();
    for i in 0..n {
        let w = hi[i] - lo[i];
        if x[i] - lo[i] < 1e-8 * w {
            x[i] = lo[i];
        } else if hi[i] - x[i] < 1e-8 * w {
            x[i] = hi[i];
        } else {
            free.push(i);
        }
    }
    let nf = free.len();
    let na = active.len();
    // Dual estimates proportional to 1/gap, normalized to sum to one.
    let inv: Vec<f64> = active.iter().map(|&i| 1.0 / gaps[i].max(1e-300)).collect();
    let s: f64 = inv.iter().sum();
    let mut lam: Vec<f64> = inv.iter().map(|v| v / s).collect();
    let mut t = t0;

    let residual = |x: &[f64], t: f64, lam: &[f64]| -> Option<(DVector<f64>, Vec<Piece>)> {
        let pcs = p.eval(x);
        let mut r = DVector::zeros(na + nf + 1);
        for (a, &i) in active.iter().enumerate() {
            r[a] = pcs[i].value - t;
        }
        for (j, &fi) in free.iter().enumerate() {
            r[na + j] = active.iter().zip(lam).map(|(&i, l)| l * pcs[i].grad[fi]).sum();
        }
        r[na + nf] = 1.0 - lam.iter().sum::<f64>();
        if r.iter().all(|v| v.is_finite()) {
            Some((r, pcs))
        } else {
            None
        }
    };

    let (mut r, mut pcs) = residual(&x, t, &lam)?;
    for _ in 0..30 {
        if r.amax() < 1e-15 * scale {
            break;
        }
        let dim = na + nf + 1;
        // Unknown order: dx (nf), dt, dlambda (na).
        let mut jac = DMatrix::zeros(dim, dim);
        for (a, &i) in active.iter().enumerate() {
            for (j, &fi) in free.iter().enumerate() {
                jac[(a, j)] = pcs[i].grad[fi];
            }
            jac[(a, nf)] = -1.0;
        }
        for (j, &fj) in free.iter().enumerate() {
            for (l, &fl) in free.iter().enumerate() {
                jac[(na + j, l)] = active.iter().zip(&lam).map(|(&i, lm)| lm * pcs[i].hess[(fj, fl)]).sum();
            }
            for (a, &i) in active.iter().enumerate() {
                jac[(na + j, nf + 1 + a)] = pcs[i].grad[fj];
            }
        }
        for a in 0..na {
            jac[(na + nf, nf + 1 + a)] = -1.0;
        }
        let lu = jac.lu();
        let delta = lu.solve(&(-&r))?;
        if !delta.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut xn = x.clone();
        for (j, &fi) in free.iter().enumerate() {
            xn[fi] += delta[j];
        }
        if free.iter().any(|&i| !(xn[i] > lo[i] && xn[i] < hi[i])) {
            return None;
        }
        let tn = t + delta[nf];
        let lamn: Vec<f64> = (0..na).map(|a| lam[a] + delta[nf + 1 + a]).collect();
        let (rn, pn) = residual(&xn, tn, &lamn)?;
        x = xn;
        t = tn;
        lam = lamn;
        r = rn;
        pcs = pn;
    }
    if r.amax() > 1e-10 * scale || lam.iter().any(|&l| l < -1e-9) {
        return None;
    }
    let vals: Vec<f64> = pcs.iter().map(|pc| pc.value).collect();
    let v = min_value(&vals);
    if v < t - 1e-10 * scale {
        return None;
    }
    Some((x, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min(1 + ln(1 - x), ln(1 + x)) on [0, 1].
    struct Crossing;

    impl ConcavePieces for Crossing {
        fn dim(&self) -> usize {
            1
        }
        fn lower(&self) -> &[f64] {
            &[0.0]
        }
        fn upper(&self) -> &[f64] {
            &[1.0]
        }
        fn eval(&self, x: &[f64]) -> Vec<Piece> {
            let g = x[0];
            let one = |v: f64, d: f64, h: f64| Piece {
                value: v,
                grad: DVector::from_element(1, d),
                hess: DMatrix::from_element(1, 1, h),
            };
            vec![
                one(1.0 + (1.0 - g).ln(), -1.0 / (1.0 - g), -1.0 / (1.0 - g).powi(2)),
                one((1.0 + g).ln(), 1.0 / (1.0 + g), -1.0 / (1.0 + g).powi(2)),
            ]
        }
    }

    #[test]
    fn crossing_point_recovered() {
        let sol = solve(&Crossing, None);
        let e = std::f64::consts::E;
        let g = (e - 1.0) / (e + 1.0);
        assert!(sol.polished);
        assert!((sol.x[0] - g).abs() < 1e-12, "{:?}", sol);
        assert!((sol.value - (1.0 + g).ln()).abs() < 1e-13);
    }

    /// Concave quadratic with its maximum outside the box: optimum on the bound.
    struct Quadratic;

    impl ConcavePieces for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn lower(&self) -> &[f64] {
            &[0.0, 0.0]
        }
        fn upper(&self) -> &[f64] {
            &[1.0, 1.0]
        }
        fn eval(&self, x: &[f64]) -> Vec<Piece> {
            let v = -(x[0] - 2.0).powi(2) - (x[1] - 0.3).powi(2);
            vec![Piece {
                value: v,
                grad: DVector::from_vec(vec![-2.0 * (x[0] - 2.0), -2.0 * (x[1] - 0.3)]),
                hess: DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -2.0])),
            }]
        }
    }

    #[test]
    fn bound_constrained_optimum() {
        let sol = solve(&Quadratic, None);
        assert!((sol.value + 1.0).abs() < 1e-12, "{:?}", sol);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 0.3).abs() < 1e-9);
    }
}
