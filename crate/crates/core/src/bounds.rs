//! Closed-form circuit-counting bounds for the square-lattice construction
//! and the cell-occupancy tail bounds used by the colouring argument.
//!
//! An edge is closed with probability at most `q = sqrt(p1) + sqrt(p2)`,
//! where `p1 = p_A^(1/4)` controls vacant cells and `p2` the interference
//! cap. The expected number of closed dual circuits around the origin is at
//! most `sum_n 4 n 3^(n-2) q^n = 4q / (3 (1 - 3q)^2)`, which is below one
//! exactly when `q < (11 - 2 sqrt(10)) / 27`.

use serde::{Deserialize, Serialize};

use crate::attenuation::{AttenuationModel, Integral};
use crate::error::{Error, Result};

/// `(11 - 2 sqrt(10)) / 27`, the root of `4q = 3 (1 - 3q)^2` below 1/3.
pub const Q_THRESHOLD: f64 = 0.173_164_617_765_305_23;

/// How the probability that a cell of side `s` is empty enters `p_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaConvention {
    /// `exp(-lambda s^2)`, the void probability of the square.
    #[default]
    Area,
    /// `exp(-lambda s)`, with the side length in the exponent.
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub lambda: f64,
    pub m_cap: f64,
    pub threshold: f64,
    /// Constant of the interference tail bound.
    #[serde(default = "default_k")]
    pub k: f64,
    pub model: AttenuationModel,
    #[serde(default)]
    pub area_convention: AreaConvention,
}

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub s: f64,
    pub p_a: f64,
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    pub series_value: f64,
    pub subcritical_series: bool,
    pub q_below_threshold: bool,
}

/// `4q / (3 (1 - 3q)^2)` for `0 <= q < 1/3`, infinite otherwise.
pub fn series_value(q: f64) -> f64 {
    if (0.0..1.0 / 3.0).contains(&q) {
        let d = 1.0 - 3.0 * q;
        4.0 * q / (3.0 * d * d)
    } else {
        f64::INFINITY
    }
}

/// Validated inputs shared by the evaluations at different intensities.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    s: f64,
    line: f64,
    m_cap: f64,
    k: f64,
    convention: AreaConvention,
}

fn prepare(m_cap: f64, threshold: f64, k: f64, model: &AttenuationModel, convention: AreaConvention) -> Result<Prepared> {
    model.validate()?;
    for (name, v) in [("M", m_cap), ("T", threshold), ("K", k)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(format!("{name} must be finite and positive, got {v}")));
        }
    }
    let line = match model.line_integral() {
        Integral::Finite(v) => v,
        Integral::Divergent => {
            return Err(Error::config(format!("the integral of g over [0, inf) diverges for {model:?}")));
        }
    };
    let s = model.inverse(m_cap * threshold)? / 5f64.sqrt();
    Ok(Prepared {
        s,
        line,
        m_cap,
        k,
        convention,
    })
}

impl Prepared {
    fn exponent(&self, lambda: f64) -> f64 {
        match self.convention {
            AreaConvention::Area => lambda * self.s * self.s,
            AreaConvention::Side => lambda * self.s,
        }
    }

    fn report(&self, lambda: f64) -> BoundsReport {
        let e = (-self.exponent(lambda)).exp();
        // 1 - (1 - e)^2 without cancellation for small e.
        let p_a = e * (2.0 - e);
        let p1 = p_a.powf(0.25);
        let p2 = ((2.0 * lambda / self.k) * self.line - self.m_cap / self.k).exp();
        let q = p1.sqrt() + p2.sqrt();
        let series = series_value(q);
        BoundsReport {
            s: self.s,
            p_a,
            p1,
            p2,
            q,
            series_value: series,
            subcritical_series: series < 1.0,
            q_below_threshold: q < Q_THRESHOLD,
        }
    }
}

pub fn evaluate(config: &BoundsConfig) -> Result<BoundsReport> {
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::config(format!("intensity must be finite and non-negative, got {}", config.lambda)));
    }
    let prep = prepare(config.m_cap, config.threshold, config.k, &config.model, config.area_convention)?;
    Ok(prep.report(config.lambda))
}

/// How the interference cap is tied to the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MRule {
    Fixed(f64),
    /// `M = 1 / T`.
    Reciprocal,
}

impl MRule {
    pub fn cap(&self, threshold: f64) -> f64 {
        match *self {
            MRule::Fixed(m) => m,
            MRule::Reciprocal => 1.0 / threshold,
        }
    }
}

/// Intensities where `q < Q_THRESHOLD`, as a closed interval, or `None`.
///
/// `sqrt(p1) < Q_THRESHOLD` bounds the set from below and
/// `sqrt(p2) < Q_THRESHOLD` from above, so only that range is scanned. A
/// sign change of `q - Q_THRESHOLD` on the scan grid is refined by bisection;
/// when no grid point is below the threshold the grid minimum is polished by
/// golden-section search before concluding the set is empty.
pub fn find_supercritical_interval(
    threshold: f64,
    k: f64,
    model: &AttenuationModel,
    m_rule: MRule,
    convention: AreaConvention,
) -> Result<Option<(f64, f64)>> {
    let prep = prepare(m_rule.cap(threshold), threshold, k, model, convention)?;
    if prep.s == 0.0 {
        return Ok(None);
    }
    let qt = Q_THRESHOLD;
    // e (2 - e) = qt^8 at e = 1 - sqrt(1 - qt^8).
    let t8 = qt.powi(8);
    let e_star = t8 / (1.0 + (1.0 - t8).sqrt());
    let lo = -e_star.ln() / prep.exponent(1.0);
    let hi = (prep.m_cap + 2.0 * prep.k * qt.ln()) / (2.0 * prep.line);
    if !(hi > lo) {
        return Ok(None);
    }
    let f = |lambda: f64| prep.report(lambda).q - qt;
    const STEPS: usize = 4000;
    let grid: Vec<f64> = (0..=STEPS).map(|i| lo + (hi - lo) * i as f64 / STEPS as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let below: Vec<usize> = (0..=STEPS).filter(|&i| values[i] < 0.0).collect();

    let (first, last) = match (below.first(), below.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            let i = (0..=STEPS).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
            let (a, b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(STEPS)]);
            let x = golden_min(&f, a, b);
            if f(x) >= 0.0 {
                return Ok(None);
            }
            let left = bisect(&f, a, x);
            let right = bisect(&f, b, x);
            return Ok(Some((left, right)));
        }
    };
    debug_assert!(below.windows(2).all(|w| w[1] == w[0] + 1), "q below threshold on a non-interval set");
    let left = if first == 0 { grid[0] } else { bisect(&f, grid[first - 1], grid[first]) };
    let right = if last == STEPS { grid[STEPS] } else { bisect(&f, grid[last + 1], grid[last]) };
    Ok(Some((left, right)))
}

/// Root of `f` between `outside` (f >= 0) and `inside` (f < 0).
fn bisect(f: &impl Fn(f64) -> f64, mut outside: f64, mut inside: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (outside + inside);
        if mid == outside || mid == inside {
            break;
        }
        if f(mid) < 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (outside + inside)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * b.abs().max(1.0) {
            break;
        }
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

/// Tail bounds on cell occupancy with natural logarithms: the chance that a
/// cell holds more than `(1 + delta) c ln n` nodes, `n^(-c delta^2 / 3)`, and
/// the chance that an `m`-cell neighbourhood holds fewer than `(m / 2) ln n`,
/// `n^(-2)`.
pub fn chernoff_cell_bounds(n: f64, c: f64, delta: f64) -> (f64, f64) {
    (n.powf(-c * delta * delta / 3.0), n.powi(-2))
}

pub fn write_reports_csv<W: std::io::Write>(rows: &[(BoundsConfig, BoundsReport)], mut out: W) -> Result<()> {
    writeln!(out, "lambda,M,T,K,p_A,p1,p2,q,series_value,subcritical_series")?;
    for (c, r) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.lambda,
            c.m_cap,
            c.threshold,
            c.k,
            r.p_a,
            r.p1,
            r.p2,
            r.q,
            r.series_value,
            u8::from(r.subcritical_series)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn partial_sum(q: f64, terms: i32) -> f64 {
        (1..=terms).map(|n| 4.0 * n as f64 * 3f64.powi(n - 2) * q.powi(n)).sum()
    }

    fn config(lambda: f64) -> BoundsConfig {
        BoundsConfig {
            lambda,
            m_cap: 1000.0,
            threshold: 1e-3,
            k: 1.0,
            model: AttenuationModel::bounded(4.0, 0.5).unwrap(),
            area_convention: AreaConvention::Area,
        }
    }

    #[test]
    fn threshold_constant() {
        assert!((Q_THRESHOLD - (11.0 - 2.0 * 10f64.sqrt()) / 27.0).abs() < 1e-16);
        assert!((Q_THRESHOLD - 0.1731646).abs() < 1e-7);
        assert!((series_value(Q_THRESHOLD) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn series_matches_partial_sums() {
        assert!((series_value(0.1) - 0.4 / (3.0 * 0.49)).abs() < 1e-15);
        for q in [0.05, 0.1, 0.15] {
            assert!((series_value(q) - partial_sum(q, 200)).abs() < 1e-12, "q={q}");
        }
        assert_eq!(series_value(1.0 / 3.0), f64::INFINITY);
        assert_eq!(series_value(0.5), f64::INFINITY);
    }

    #[test]
    fn report_fields() {
        let r = evaluate(&config(100.0)).unwrap();
        assert!((r.s - 0.5 / 5f64.sqrt()).abs() < 1e-15);
        let e = (-100.0 * r.s * r.s).exp();
        assert!((r.p_a - (1.0 - (1.0 - e).powi(2))).abs() < 1e-15);
        assert_eq!(r.p1, r.p_a.powf(0.25));
        let p2 = ((2.0 * 100.0) * (0.5f64.powi(-3) / 3.0) - 1000.0).exp();
        assert!((r.p2 - p2).abs() <= 1e-12 * p2);
        assert_eq!(r.q, r.p1.sqrt() + r.p2.sqrt());
        let side = evaluate(&BoundsConfig {
            area_convention: AreaConvention::Side,
            ..config(100.0)
        })
        .unwrap();
        assert_eq!(side.p2, r.p2);
        assert!(side.p_a < r.p_a);
    }

    #[test]
    fn dense_occupancy_limit() {
        let r = evaluate(&config(1e5)).unwrap();
        assert_eq!(r.p_a, 0.0);
        assert_eq!(r.p1, 0.0);
    }

    #[test]
    fn errors() {
        let mut c = config(10.0);
        c.model = AttenuationModel::power_law(4.0).unwrap();
        assert!(matches!(evaluate(&c), Err(Error::Config(_))));
        let mut c = config(10.0);
        c.threshold = 1.0;
        assert!(matches!(evaluate(&c), Err(Error::Domain(_))));
        assert!(matches!(
            find_supercritical_interval(1.0, 1.0, &config(1.0).model, MRule::Fixed(1000.0), AreaConvention::Area),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tied_cap_is_empty() {
        // With M = 1/T the vacancy and interference requirements cannot both hold.
        for r0 in [0.2, 0.4, 0.5, 0.6, 0.8] {
            let model = AttenuationModel::bounded(4.0, r0).unwrap();
            for k in [0.01, 1.0, 100.0] {
                let got = find_supercritical_interval(1e-3, k, &model, MRule::Reciprocal, AreaConvention::Area).unwrap();
                assert!(got.is_none(), "r0={r0} k={k}");
            }
        }
    }

    #[test]
    fn huge_cap_reduces_to_vacancy() {
        // p2 is negligible, so the left end solves sqrt(p1) = Q_THRESHOLD.
        let model = AttenuationModel::bounded(4.0, 1.0).unwrap();
        let (t, m) = (1e-7, 1e6);
        let (a, b) = find_supercritical_interval(t, 1.0, &model, MRule::Fixed(m), AreaConvention::Area)
            .unwrap()
            .unwrap();
        let s = model.inverse(m * t).unwrap() / 5f64.sqrt();
        let pa = Q_THRESHOLD.powi(8);
        let e = 1.0 - (1.0 - pa).sqrt();
        let expected = -e.ln() / (s * s);
        assert!((a - expected).abs() <= 1e-6 * expected, "{a} {expected}");
        let q = |l: f64| {
            evaluate(&BoundsConfig {
                lambda: l,
                m_cap: m,
                threshold: t,
                k: 1.0,
                model,
                area_convention: AreaConvention::Area,
            })
            .unwrap()
            .q
        };
        assert!((q(a) - Q_THRESHOLD).abs() < 1e-6);
        assert!((q(b) - Q_THRESHOLD).abs() < 1e-6);
        assert!(q(0.5 * (a + b)) < Q_THRESHOLD);
    }

    #[test]
    fn interval_endpoints_on_threshold() {
        let model = AttenuationModel::bounded(3.0, 1.0).unwrap();
        for (t, m, k) in [(1e-4, 2000.0, 1.0), (1e-4, 5000.0, 50.0), (1e-3, 150.0, 3.0)] {
            let got = find_supercritical_interval(t, k, &model, MRule::Fixed(m), AreaConvention::Area).unwrap();
            let (a, b) = got.unwrap_or_else(|| panic!("empty for T={t} M={m} K={k}"));
            for l in [a, b] {
                let r = evaluate(&BoundsConfig {
                    lambda: l,
                    m_cap: m,
                    threshold: t,
                    k,
                    model,
                    area_convention: AreaConvention::Area,
                })
                .unwrap();
                assert!((r.q - Q_THRESHOLD).abs() < 1e-6, "{t} {m} {k}: {}", r.q);
            }
        }
    }

    #[test]
    fn chernoff_values() {
        let (a, b) = chernoff_cell_bounds(std::f64::consts::E, 3.0, 1.0);
        assert!((a - (-1f64).exp()).abs() < 1e-15);
        assert!((b - (-2f64).exp()).abs() < 1e-15);
        let (a2, b2) = chernoff_cell_bounds(100.0, 3.0, 1.0);
        assert!(a2 < a && b2 < b);
    }

    proptest! {
        #[test]
        fn series_below_one_iff_q_below_threshold(q in 0.0f64..(1.0 / 3.0)) {
            prop_assert_eq!(series_value(q) < 1.0, q < Q_THRESHOLD);
        }

        #[test]
        fn monotone_in_lambda_and_cap(l in 1.0f64..300.0, dl in 0.1f64..50.0, m in 500.0f64..2000.0, dm in 1.0f64..500.0) {
            let base = BoundsConfig { m_cap: m, ..config(l) };
            let r = evaluate(&base).unwrap();
            let more = evaluate(&BoundsConfig { lambda: l + dl, ..base }).unwrap();
            let capped = evaluate(&BoundsConfig { m_cap: m + dm, threshold: base.threshold * m / (m + dm), ..base }).unwrap();
            prop_assert!(more.p2 >= r.p2);
            prop_assert!(more.p1 <= r.p1);
            prop_assert!(capped.p2 <= r.p2);
        }
    }
}
