//! Independent oracles for the acceptance suite. Everything here is written
//! against the mathematical definitions with different algorithms than the
//! crate uses, so agreement is evidence rather than tautology.

use ndarray::Array2;
use num_complex::Complex64;

/// Double-double value: an unevaluated sum `hi + lo` carrying roughly 32
/// significant decimal digits.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd {
        hi: s,
        lo: (a - (s - bb)) + (b - bb),
    }
}

fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    Dd {
        hi: p,
        lo: ((ah * bh - p) + ah * bl + al * bh) + al * bl,
    }
}

impl Dd {
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        quick_two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        quick_two_sum(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    fn mul_f64(self, f: f64) -> Dd {
        let p = two_prod(self.hi, f);
        quick_two_sum(p.hi, p.lo + self.lo * f)
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let r = self.sub(two_prod(q1, d));
        let q2 = (r.hi + r.lo) / d;
        quick_two_sum(q1, q2)
    }

    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r1 = self.sub(b.mul_f64(q1));
        let q2 = r1.hi / b.hi;
        let r2 = r1.sub(b.mul_f64(q2));
        let q3 = r2.hi / b.hi;
        quick_two_sum(q1, q2).add(Dd::from_f64(q3))
    }
}

/// Complex number with double-double components.
#[derive(Debug, Clone, Copy)]
pub struct Cdd {
    re: Dd,
    im: Dd,
}

impl Cdd {
    fn from_c64(z: Complex64) -> Cdd {
        Cdd {
            re: Dd::from_f64(z.re),
            im: Dd::from_f64(z.im),
        }
    }

    fn add(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.add(o.re),
            im: self.im.add(o.im),
        }
    }

    fn mul(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.mul(o.re).sub(self.im.mul(o.im)),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }

    fn div_f64(self, d: f64) -> Cdd {
        Cdd {
            re: self.re.div_f64(d),
            im: self.im.div_f64(d),
        }
    }

    fn sub_f64(self, x: f64) -> Cdd {
        Cdd {
            re: self.re.add(Dd::from_f64(-x)),
            im: self.im,
        }
    }

    /// Division by an exactly-representable complex number via the
    /// conjugate, with the squared modulus held in double-double.
    fn div_c64(self, z: Complex64) -> Cdd {
        let num = self.mul(Cdd::from_c64(z.conj()));
        let denom = two_prod(z.re, z.re).add(two_prod(z.im, z.im));
        Cdd {
            re: num.re.div(denom),
            im: num.im.div(denom),
        }
    }

    fn magnitude_hint(self) -> f64 {
        self.re.hi.abs() + self.im.hi.abs()
    }
}

/// `exp(z)` in double-double by scaling and squaring: the Taylor series on
/// `z / 2^s` with `|z| / 2^s <= 1` has no cancellation, and each squaring
/// only doubles the tiny relative error.
fn exp_cdd(z: Complex64) -> Cdd {
    let s = z.norm().log2().ceil().max(0.0) as i32;
    let scale = (2.0f64).powi(s);
    let w = Cdd {
        re: Dd::from_f64(z.re).div_f64(scale),
        im: Dd::from_f64(z.im).div_f64(scale),
    };
    let mut term = Cdd {
        re: Dd::from_f64(1.0),
        im: Dd::from_f64(0.0),
    };
    let mut sum = term;
    for j in 1..=60u32 {
        term = term.mul(w).div_f64(j as f64);
        sum = sum.add(term);
        if term.magnitude_hint() < 1e-40 {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.mul(sum);
    }
    sum
}

/// Reference value of the exponential-integrator weight function
/// `phi_k(z) = sum_j z^j / (j+k)!`. Inside the unit disk the series is
/// summed directly in double-double; outside it the value comes from the
/// double-double exponential through the recurrence
/// `phi_(k+1)(z) = (phi_k(z) - 1/k!) / z`. Both paths keep the error
/// absolute at the 1e-29 scale, so even values that cancel down to 1e-4
/// retain far more than the twelve digits the comparisons need.
pub fn phi_oracle(k: u32, z: Complex64) -> Complex64 {
    assert!((1..=3).contains(&k), "phi order {k} not needed");
    if z.norm() <= 1.0 {
        let zc = Cdd::from_c64(z);
        let mut term = Cdd {
            re: Dd::from_f64(1.0).div_f64((1..=k as u64).product::<u64>() as f64),
            im: Dd::from_f64(0.0),
        };
        let mut sum = term;
        for j in 1..=80u32 {
            term = term.mul(zc).div_f64((j + k) as f64);
            sum = sum.add(term);
            if term.magnitude_hint() < 1e-45 {
                break;
            }
        }
        return Complex64::new(sum.re.value(), sum.im.value());
    }
    let mut phi = exp_cdd(z).sub_f64(1.0).div_c64(z);
    let mut factorial = 1.0;
    for order in 1..k {
        phi = phi.sub_f64(1.0 / factorial).div_c64(z);
        factorial *= (order + 1) as f64;
    }
    Complex64::new(phi.re.value(), phi.im.value())
}

/// Relative error with a floor that keeps the comparison meaningful when the
/// reference is tiny.
pub fn rel_err(got: Complex64, want: Complex64) -> f64 {
    (got - want).norm() / want.norm().max(1e-30)
}

/// Plain-loop relative L2 error.
pub fn nrmse_naive(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pred.len() {
        num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        den += truth[i] * truth[i];
    }
    num.sqrt() / (den.sqrt() + 1e-12)
}

/// Plain-loop geometric mean. Zeros collapse the mean to zero; negative
/// entries are the caller's bug.
pub fn gmean_naive(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut log_sum = 0.0;
    for &v in values {
        assert!(v >= 0.0);
        if v == 0.0 {
            return 0.0;
        }
        log_sum += v.ln();
    }
    (log_sum / values.len() as f64).exp()
}

/// Plain-loop stable-step count. Entry `nrmse[h]` scores rollout step `h+1`
/// and `invalid_from` names the first step whose state was invalid, so a
/// trajectory survives a step only if it is strictly earlier than that and
/// its error is finite and at most `tau`. No crossing scores the full
/// horizon.
pub fn stable_steps_naive(nrmse: &[f64], invalid_from: Option<usize>, tau: f64) -> usize {
    let n = nrmse.len();
    for step in 1..=n {
        let e = nrmse[step - 1];
        let invalid = invalid_from.map_or(false, |s| step >= s);
        if invalid || !e.is_finite() || e > tau {
            return step - 1;
        }
    }
    n
}

/// Largest singular value by one-sided Jacobi rotations. Independent of the
/// crate's power iteration.
pub fn jacobi_two_norm(a: &Array2<f64>) -> f64 {
    let mut m = if a.nrows() >= a.ncols() {
        a.clone()
    } else {
        a.t().to_owned()
    };
    let n = m.ncols();
    if n == 1 {
        return m.column(0).iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..m.nrows() {
                    app += m[[r, p]] * m[[r, p]];
                    aqq += m[[r, q]] * m[[r, q]];
                    apq += m[[r, p]] * m[[r, q]];
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m.nrows() {
                    let vp = m[[r, p]];
                    let vq = m[[r, q]];
                    m[[r, p]] = c * vp - s * vq;
                    m[[r, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n)
        .map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}
