//! Cross-checks the box solver against an exhaustive active-set oracle on
//! random dense concave quadratics: every lower/free/upper pattern is solved
//! in closed form and screened with the KKT conditions, which pins down the
//! global maximum independently of any iterative method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rice_dg::{solve_box_max, SolveOptions};

struct Quadratic {
    q: DMatrix<f64>,
    c: DVector<f64>,
}

impl Quadratic {
    fn random(d: usize, rng: &mut ChaCha8Rng) -> Quadratic {
        let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let q = &m.transpose() * &m + DMatrix::identity(d, d) * 0.3;
        let c = DVector::from_fn(d, |_, _| rng.gen_range(-0.5..1.5));
        Quadratic { q, c }
    }

    fn value(&self, u: &[f64]) -> f64 {
        let d = DVector::from_column_slice(u) - &self.c;
        -(&self.q * &d).dot(&d)
    }

    fn grad(&self, u: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(u) - &self.c;
        (-2.0 * &self.q * d).iter().copied().collect()
    }
}

/// Enumerates all 3^d lower/free/upper patterns, solves the free block's
/// stationarity system, and keeps the best feasible point satisfying the KKT
/// sign conditions.
fn oracle_max(f: &Quadratic) -> (Vec<f64>, f64) {
    let d = f.c.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for pattern in 0..3usize.pow(d as u32) {
        let mut code = pattern;
        let mut u = vec![0.0f64; d];
        let mut free = Vec::new();
        for i in 0..d {
            match code % 3 {
                0 => u[i] = 0.0,
                1 => free.push(i),
                _ => u[i] = 1.0,
            }
            code /= 3;
        }
        if !free.is_empty() {
            // Q_ff (u_f - c_f) = -Q_fa (u_a - c_a)
            let nf = free.len();
            let qff = DMatrix::from_fn(nf, nf, |r, c| f.q[(free[r], free[c])]);
            let mut rhs = DVector::zeros(nf);
            for (r, &i) in free.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..d {
                    if !free.contains(&j) {
                        acc += f.q[(i, j)] * (u[j] - f.c[j]);
                    }
                }
                rhs[r] = -acc;
            }
            let Some(sol) = qff.lu().solve(&rhs) else { continue };
            let mut ok = true;
            for (r, &i) in free.iter().enumerate() {
                u[i] = f.c[i] + sol[r];
                if !(-1e-12..=1.0 + 1e-12).contains(&u[i]) {
                    ok = false;
                    break;
                }
                u[i] = u[i].clamp(0.0, 1.0);
            }
            if !ok {
                continue;
            }
        }
        let g = f.grad(&u);
        let kkt = (0..d).all(|i| {
            if free.contains(&i) {
                true
            } else if u[i] == 0.0 {
                g[i] <= 1e-9
            } else {
                g[i] >= -1e-9
            }
        });
        if !kkt {
            continue;
        }
        let v = f.value(&u);
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((u, v));
        }
    }
    best.expect("a concave quadratic always has a KKT point in the box")
}

#[test]
fn solver_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..60 {
        let d = if trial % 3 == 0 { 4 } else { 3 };
        let f = Quadratic::random(d, &mut rng);
        let (u_star, v_star) = oracle_max(&f);
        let bounds = vec![(0.0, 1.0); d];
        let u0: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let report = solve_box_max(
            |u: &[f64]| Ok::<_, String>((f.value(u), f.grad(u))),
            &bounds,
            &u0,
            &SolveOptions::default(),
        );
        assert!(report.converged, "trial {trial}: {:?}", report.stop_reason);
        // The iterate can never beat the enumerated optimum, and must come
        // close to it from below.
        assert!(
            report.objective <= v_star + 1e-9,
            "trial {trial}: solver {} above oracle {v_star}",
            report.objective
        );
        assert!(
            report.objective >= v_star - 1e-6 * v_star.abs().max(1.0),
            "trial {trial}: solver {} vs oracle {v_star} at {u_star:?}",
            report.objective
        );
    }
}
