//! Log-domain helpers and the closed-form Gaussian set machinery.
//!
//! Transcendental functions go through `libm` so that every platform
//! produces the same bits for the same inputs.

use std::cmp::Ordering;

/// Relative tolerance under which two log-domain quantities are a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Natural log with `ln(0) = -inf`.
#[inline]
pub fn ln(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        libm::log(x)
    }
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Three-way comparison that reports a tie when the two values agree to
/// within [`TIE_TOLERANCE`] relative to their magnitude. Two `-inf` values
/// tie; `-inf` against a finite value never does.
pub fn compare_with_tie(x: f64, y: f64) -> Ordering {
    if x == y {
        return Ordering::Equal;
    }
    if x.is_infinite() || y.is_infinite() {
        return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
    }
    let scale = x.abs().max(y.abs());
    if (x - y).abs() <= TIE_TOLERANCE * scale {
        Ordering::Equal
    } else if x > y {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

/// Relative closeness with an absolute floor of `tol` near zero. Equal
/// infinities compare equal.
pub fn approx_eq_rel(x: f64, y: f64, tol: f64) -> bool {
    if x == y {
        return true;
    }
    if !x.is_finite() || !y.is_finite() {
        return false;
    }
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal CDF `P(Z <= z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(lo < X < hi)` for `X ~ N(mean, variance)`.
pub fn normal_interval_mass(mean: f64, variance: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let sd = variance.sqrt();
    let zl = (lo - mean) / sd;
    let zh = (hi - mean) / sd;
    // Difference of upper tails is accurate on the right, of CDFs on the left.
    let m = if zl >= 0.0 {
        normal_sf(zl) - normal_sf(zh)
    } else {
        normal_cdf(zh) - normal_cdf(zl)
    };
    m.max(0.0)
}

/// An open interval, endpoints possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// JSON has no infinities, so unbounded ends are written as `"-inf"` and
/// `"inf"`.
impl serde::Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Interval", 2)?;
        st.serialize_field("lo", &Endpoint(self.lo))?;
        st.serialize_field("hi", &Endpoint(self.hi))?;
        st.end()
    }
}

struct Endpoint(f64);

impl serde::Serialize for Endpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl Interval {
    pub fn length(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

/// Solves `{x : a x^2 + b x + c > 0}` as a union of at most two disjoint
/// open intervals in increasing order. Single points where the quadratic
/// touches zero are dropped; they carry no Lebesgue mass.
pub fn quadratic_positive_set(a: f64, b: f64, c: f64) -> Vec<Interval> {
    let all = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    if a == 0.0 {
        if b == 0.0 {
            return if c > 0.0 { vec![all] } else { vec![] };
        }
        let r = -c / b;
        return if b > 0.0 {
            vec![Interval { lo: r, hi: f64::INFINITY }]
        } else {
            vec![Interval { lo: f64::NEG_INFINITY, hi: r }]
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return if a > 0.0 { vec![all] } else { vec![] };
    }
    let sq = disc.sqrt();
    // f64::signum(0.0) is 1.0, so q never vanishes while disc > 0.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = (q / a, c / q);
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if a > 0.0 {
        vec![
            Interval { lo: f64::NEG_INFINITY, hi: r1 },
            Interval { lo: r2, hi: f64::INFINITY },
        ]
    } else {
        vec![Interval { lo: r1, hi: r2 }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_comparison() {
        assert_eq!(compare_with_tie(1.0, 1.0 + 1e-14), Ordering::Equal);
        assert_eq!(compare_with_tie(-100.0, -100.0 - 1e-11), Ordering::Equal);
        assert_eq!(compare_with_tie(-100.0, -100.0 - 1e-9), Ordering::Greater);
        assert_eq!(
            compare_with_tie(f64::NEG_INFINITY, f64::NEG_INFINITY),
            Ordering::Equal
        );
        assert_eq!(compare_with_tie(-1e300, f64::NEG_INFINITY), Ordering::Greater);
    }

    #[test]
    fn normal_masses() {
        assert!((normal_interval_mass(0.0, 1.0, f64::NEG_INFINITY, 0.0) - 0.5).abs() < 1e-15);
        let m = normal_interval_mass(0.0, 1.0, -1.96, 1.96);
        assert!((m - 0.950_004_209_703_559).abs() < 1e-12);
        // far right tail stays accurate
        let t = normal_interval_mass(0.0, 1.0, 10.0, f64::INFINITY);
        assert!((t / 7.619_853_024_160_47e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_sets() {
        // x^2 - 1 > 0  ->  (-inf,-1) u (1,inf)
        let s = quadratic_positive_set(1.0, 0.0, -1.0);
        assert_eq!(s.len(), 2);
        assert!((s[0].hi + 1.0).abs() < 1e-15 && (s[1].lo - 1.0).abs() < 1e-15);
        // -x^2 + 4 > 0 -> (-2, 2)
        let s = quadratic_positive_set(-1.0, 0.0, 4.0);
        assert_eq!(s.len(), 1);
        assert!((s[0].lo + 2.0).abs() < 1e-15 && (s[0].hi - 2.0).abs() < 1e-15);
        // 2x - 3 > 0 -> (1.5, inf)
        let s = quadratic_positive_set(0.0, 2.0, -3.0);
        assert_eq!(s, vec![Interval { lo: 1.5, hi: f64::INFINITY }]);
        // -x^2 - 1 > 0 -> empty
        assert!(quadratic_positive_set(-1.0, 0.0, -1.0).is_empty());
        // roots 2 and 3 with a large linear term, checks the stable branch
        let s = quadratic_positive_set(-1.0, 5.0, -6.0);
        assert!((s[0].lo - 2.0).abs() < 1e-14 && (s[0].hi - 3.0).abs() < 1e-14);
    }
}
