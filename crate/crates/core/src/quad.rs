//! Adaptive Gauss-Legendre quadrature on a bounded interval.
//!
//! Each panel is estimated with a 10-point and a 20-point rule; the
//! difference is the error estimate and the 20-point value is kept. Panels
//! whose estimated error exceeds their share of the tolerance are bisected.
//! Callers integrating functions with a boundary layer (iterated generating
//! functions pile all their variation into a region of width ~ mu^-n next to
//! z = 1) must seed the initial panel list so that at least one breakpoint
//! falls inside the layer; bisection alone can step straight over a feature
//! narrower than the coarsest rule spacing and certify a wrong answer.

use std::sync::OnceLock;

use crate::error::Error;

const LOW_N: usize = 10;
const HIGH_N: usize = 20;

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Summed per-panel error estimates, |high rule - low rule|.
    pub error: f64,
    pub panels: u32,
    pub evals: u64,
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn gl_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    rule
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn rules() -> &'static (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    static RULES: OnceLock<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = OnceLock::new();
    RULES.get_or_init(|| (gl_rule(LOW_N), gl_rule(HIGH_N)))
}

fn fixed_rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for &(x, w) in rule {
        s += w * f(mid + half * x);
    }
    s * half
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.a == other.a
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    // Worst error first; ties broken by position so the refinement order,
    // and with it the bit-exact result, never depends on heap internals.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err).then(other.a.total_cmp(&self.a))
    }
}

/// Integrates `f` over the closed interval spanned by `breakpoints`
/// (ascending; at least two entries). `tol` is an absolute tolerance for the
/// whole integral: the panel with the worst error estimate is refined until
/// the summed estimates drop below `tol`, panels run out, or refinement
/// stops helping.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    tol: f64,
    max_panels: u32,
) -> Result<QuadResult, Error> {
    assert!(breakpoints.len() >= 2, "need at least one panel");
    let total_width: f64 = breakpoints.last().unwrap() - breakpoints[0];
    assert!(total_width > 0.0, "breakpoints must ascend");

    let mut evals = 0u64;
    let mut eval = |a: f64, b: f64| -> Result<Panel, Error> {
        let (low, high) = rules();
        let coarse = fixed_rule(&f, a, b, low);
        let fine = fixed_rule(&f, a, b, high);
        evals += (LOW_N + HIGH_N) as u64;
        let err = (fine - coarse).abs();
        if !fine.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "integrand is not finite on [{a}, {b}]"
            )));
        }
        Ok(Panel { a, b, value: fine, err })
    };

    let mut heap = std::collections::BinaryHeap::new();
    let mut active_err = 0.0;
    for w in breakpoints.windows(2) {
        let p = eval(w[0], w[1])?;
        active_err += p.err;
        heap.push(p);
    }
    let mut done: Vec<Panel> = Vec::new();
    let mut done_err = 0.0;
    let mut total_panels = heap.len() as u32;

    loop {
        if active_err + done_err <= tol {
            break;
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::QuadratureFailure(format!(
                "all panels settled with total error {:.3e} > tolerance {tol:.3e}",
                done_err
            )));
        };
        // |fine - coarse| bottoms out at the rounding noise of the
        // quadrature sums; below that, splitting cannot help.
        let noise = 16.0 * f64::EPSILON * worst.value.abs();
        let narrow = (worst.b - worst.a) <= 1e-14 * total_width.max(1.0);
        if worst.err <= noise || narrow {
            active_err -= worst.err;
            done_err += worst.err;
            if done_err > tol {
                return Err(Error::QuadratureFailure(format!(
                    "error {done_err:.3e} on unrefinable panels exceeds tolerance {tol:.3e}"
                )));
            }
            done.push(worst);
            continue;
        }
        if total_panels >= max_panels {
            return Err(Error::QuadratureFailure(format!(
                "panel budget {max_panels} exhausted with total error {:.3e} > tolerance {tol:.3e}",
                active_err + done_err
            )));
        }
        let mid = 0.5 * (worst.a + worst.b);
        let left = eval(worst.a, mid)?;
        let right = eval(mid, worst.b)?;
        active_err += left.err + right.err - worst.err;
        total_panels += 1;
        heap.push(left);
        heap.push(right);
    }

    done.extend(heap.into_vec());
    done.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = 0.0;
    let mut carry = 0.0;
    let mut error = 0.0;
    for p in &done {
        let y = p.value - carry;
        let t = value + y;
        carry = (t - value) - y;
        value = t;
        error += p.err;
    }
    Ok(QuadResult { value, error, panels: done.len() as u32, evals })
}

/// Breakpoints for [0, 1] that shrink geometrically toward 1 until the last
/// panel is comfortably inside a boundary layer of width `scale`.
pub fn breakpoints_toward_one(scale: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let depth = if scale >= 0.5 {
        2
    } else {
        // 2^-depth < scale / 4, capped inside f64 resolution.
        ((2.0 + (1.0 / scale).log2()).ceil() as u32).min(48)
    };
    for j in 1..=depth {
        pts.push(1.0 - 0.5f64.powi(j as i32));
    }
    pts.push(1.0);
    pts
}
