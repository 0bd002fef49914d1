//! Parameter grids: `lo:hi:logN`, `lo:hi:linN`, or a comma-separated list.

use anyhow::{bail, Context, Result};

pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, kind] => {
            let lo = number(lo)?;
            let hi = number(hi)?;
            let (log, n) = if let Some(n) = kind.strip_prefix("log") {
                (true, n)
            } else if let Some(n) = kind.strip_prefix("lin") {
                (false, n)
            } else {
                bail!("grid spacing must be logN or linN, got {kind:?}");
            };
            let n: usize = n.parse().with_context(|| format!("bad point count {n:?}"))?;
            if n == 0 {
                bail!("grid needs at least one point");
            }
            if log && !(lo > 0.0 && hi > 0.0) {
                bail!("log grid bounds must be positive");
            }
            spaced(lo, hi, n, log)
        }
        [single] => single.split(',').map(number).collect::<Result<Vec<_>>>()?,
        _ => bail!("cannot parse grid {spec:?}"),
    };
    if values.is_empty() {
        bail!("empty grid");
    }
    Ok(values)
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("bad number {s:?}"))?;
    if !v.is_finite() {
        bail!("grid values must be finite, got {s:?}");
    }
    Ok(v)
}

fn spaced(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
    (0..n)
        .map(|k| {
            let t = if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 };
            if log {
                10f64.powf(t)
            } else {
                t
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_decades() {
        assert_eq!(parse_grid("1e-2:1e-6:log5").unwrap(), vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]);
    }

    #[test]
    fn lin_grid_and_lists() {
        assert_eq!(parse_grid("3:6:lin4").unwrap(), vec![3.0, 4.0, 5.0, 6.0]);
        assert_eq!(parse_grid("5:5:lin1").unwrap(), vec![5.0]);
        assert_eq!(parse_grid("3, 4,6.5").unwrap(), vec![3.0, 4.0, 6.5]);
        assert_eq!(parse_grid("0.1").unwrap(), vec![0.1]);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "1:2", "1:2:geo3", "1:2:lin0", "0:1:log3", "a,b", "1:2:3:4", "inf"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
