//! Normal and Student-t tails in log space, plus a bracketing root finder.

use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use statrs::function::erf::{erfc, erfc_inv};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn norm_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn norm_pdf(z: f64) -> f64 {
    norm_log_pdf(z).exp()
}

/// Mills ratio `Φ̄(z)/φ(z)` by backward evaluation of the Laplace continued fraction.
fn mills_ratio(z: f64) -> f64 {
    let mut acc = z;
    for k in (1..=80).rev() {
        acc = z + k as f64 / acc;
    }
    1.0 / acc
}

/// `ln P(Z > z)` for a standard normal, finite for every finite `z`.
pub fn norm_log_tail(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 3.0 {
        norm_log_pdf(z) + mills_ratio(z).ln()
    } else if z > -1.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        (-norm_tail(-z)).ln_1p()
    }
}

pub fn norm_tail(z: f64) -> f64 {
    if z > 3.0 {
        norm_log_tail(z).exp()
    } else {
        0.5 * erfc(z / SQRT_2)
    }
}

pub fn norm_cdf(z: f64) -> f64 {
    norm_tail(-z)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Upper quantile from a log tail probability `ln P(Z > z) = log_p`.
pub fn norm_inverse_log_tail(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if log_p > -600.0 {
        let p = log_p.exp();
        let mut z = if p < 0.5 {
            SQRT_2 * erfc_inv(2.0 * p)
        } else {
            norm_quantile(-log_p.exp_m1())
        };
        if z > 8.0 {
            z = newton_log_tail(z, log_p);
        }
        return z;
    }
    let mut z = (-2.0 * log_p).sqrt();
    z = (-2.0 * log_p - (2.0 * std::f64::consts::PI * z * z).ln()).sqrt();
    newton_log_tail(z, log_p)
}

fn newton_log_tail(mut z: f64, log_p: f64) -> f64 {
    for _ in 0..30 {
        let f = norm_log_tail(z) - log_p;
        // d/dz ln Φ̄ = −φ/Φ̄ = −1/mills
        let d = -(norm_log_pdf(z) - norm_log_tail(z)).exp();
        let step = f / d;
        z -= step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    z
}

/// `ln P(T > z)` for a standard Student-t with `nu` degrees of freedom.
pub fn student_log_tail(z: f64, nu: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z <= 0.0 {
        return (-student_tail(-z, nu)).ln_1p();
    }
    let x = nu / (nu + z * z);
    let (a, b) = (0.5 * nu, 0.5);
    if x < 1e-20 {
        // I_x(a, b) = x^a (1 − x)^b / (a B(a, b)) · (1 + O(x)); here x = ν/z²·(1+O(1/z²))
        let ln_x = nu.ln() - 2.0 * z.ln() - (nu / (z * z)).ln_1p();
        return (0.5f64).ln() + a * ln_x + b * (-x).ln_1p() - a.ln() - ln_beta(a, b);
    }
    (0.5 * beta_reg(a, b, x)).ln()
}

pub fn student_tail(z: f64, nu: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return 1.0;
    }
    let x = nu / (nu + z * z);
    let half = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if z >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

pub fn student_log_pdf(z: f64, nu: f64) -> f64 {
    -0.5 * (nu + 1.0) * (z * z / nu).ln_1p() - 0.5 * nu.ln() - ln_beta(0.5 * nu, 0.5)
}

pub fn student_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let lower = p < 0.5;
    let q = if lower { p } else { 1.0 - p };
    let x = inv_beta_reg(0.5 * nu, 0.5, 2.0 * q);
    let mut z = (nu * (1.0 - x) / x).sqrt();
    if !z.is_finite() {
        z = student_inverse_log_tail(q.ln(), nu);
    }
    // polish with Newton steps on the tail
    for _ in 0..3 {
        let f = student_tail(z, nu) - q;
        let d = -student_log_pdf(z, nu).exp();
        if d == 0.0 {
            break;
        }
        let step = f / d;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    if lower {
        -z
    } else {
        z
    }
}

pub fn student_inverse_log_tail(log_p: f64, nu: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if log_p > -30.0 {
        let p = log_p.exp();
        if p > 1e-8 {
            return student_quantile(1.0 - p, nu).max(student_quantile_upper(p, nu));
        }
    }
    // tail ≈ C z^{-ν}; start there and refine on the log scale in ln z
    let c = student_log_tail(1e10, nu) + nu * 1e10f64.ln();
    let mut lz = (c - log_p) / nu;
    for _ in 0..60 {
        let z = lz.exp();
        let f = student_log_tail(z, nu) - log_p;
        // d lnF̄ / d ln z = −z f(z)/F̄(z)
        let d = -(z.ln() + student_log_pdf(z, nu) - student_log_tail(z, nu)).exp();
        let step = f / d;
        if !step.is_finite() {
            break;
        }
        lz -= step;
        if step.abs() < 1e-15 * lz.abs().max(1.0) {
            break;
        }
    }
    lz.exp()
}

fn student_quantile_upper(p: f64, nu: f64) -> f64 {
    let x = inv_beta_reg(0.5 * nu, 0.5, 2.0 * p);
    (nu * (1.0 - x) / x).sqrt()
}

/// Solve `f(x) = target` for a nondecreasing `f` on `(lo, hi)`, either end possibly infinite.
///
/// Starts from `guess`, expands a bracket geometrically and bisects.
pub fn solve_increasing<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, hi: f64, guess: f64) -> f64 {
    let g = if guess.is_finite() && guess > lo && guess < hi {
        guess
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo + 1.0
    } else if hi.is_finite() {
        hi - 1.0
    } else {
        0.0
    };
    let (mut a, mut b);
    if f(g) < target {
        a = g;
        let mut step = g.abs().max(1.0);
        loop {
            let cand = if hi.is_finite() && step >= 0.5 * (hi - a) {
                a + 0.5 * (hi - a)
            } else {
                a + step
            };
            if cand >= hi || !cand.is_finite() || cand <= a {
                b = hi;
                break;
            }
            if f(cand) >= target {
                b = cand;
                break;
            }
            a = cand;
            step *= 2.0;
        }
    } else {
        b = g;
        let mut step = g.abs().max(1.0);
        loop {
            let cand = if lo.is_finite() && step >= 0.5 * (b - lo) {
                b - 0.5 * (b - lo)
            } else {
                b - step
            };
            if cand <= lo || !cand.is_finite() || cand >= b {
                a = lo;
                break;
            }
            if f(cand) < target {
                a = cand;
                break;
            }
            b = cand;
            step *= 2.0;
        }
    }
    for _ in 0..400 {
        let m = if a.is_finite() && b.is_finite() {
            0.5 * (a + b)
        } else if a.is_finite() {
            a + (a.abs() + 1.0)
        } else {
            b - (b.abs() + 1.0)
        };
        if !(m > a && m < b) {
            break;
        }
        if f(m) < target {
            a = m;
        } else {
            b = m;
        }
    }
    if b.is_finite() {
        b
    } else {
        a
    }
}
