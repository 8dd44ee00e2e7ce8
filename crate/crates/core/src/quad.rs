//! One-dimensional quadrature for complex-valued integrands.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Single 7/15-point Gauss–Kronrod panel; returns (Kronrod estimate, error estimate).
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    let val = rk * h;
    (val, ((rk - rg) * h).norm())
}

struct Panel {
    a: f64,
    b: f64,
    val: Complex64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
/// Fails with [`Error::Quadrature`] once `max_panels` panels are in use.
pub fn adaptive<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: Complex64::new(0.0, 0.0), error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val: v, err: e });
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    loop {
        let tol = abs_tol.max(rel_tol * total.norm());
        if err <= tol {
            break;
        }
        if heap.len() >= max_panels {
            return Err(Error::Quadrature { tol, achieved: err });
        }
        let p = heap.pop().expect("non-empty heap");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            return Err(Error::Quadrature { tol, achieved: err });
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
    }
    // Re-sum to avoid drift from the running updates.
    let value = heap.iter().fold(Complex64::new(0.0, 0.0), |s, p| s + p.val);
    let error = heap.iter().map(|p| p.err).sum();
    Ok(Integral { value, error, evaluations: evals })
}

/// Fixed Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[a, b]` with this rule.
    pub fn integrate<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64) -> Complex64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += f(c + h * x) * *w;
        }
        s * h
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(f64) -> Complex64>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        panels: usize,
    ) -> Complex64 {
        let h = (b - a) / panels as f64;
        (0..panels).fold(Complex64::new(0.0, 0.0), |s, k| {
            let lo = a + h * k as f64;
            s + self.integrate(&mut f, lo, lo + h)
        })
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
