//! Pool files: two provenance comment lines, an `xi,ell` header, then one
//! sample per row with 17 significant digits.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::path::{ExcursionSample, PathConfig, Pool, PoolProvenance};

const MAGIC: &str = "# langevin-wall pool v1;";

pub fn pool_to_string(pool: &Pool) -> String {
    let mut buf = Vec::new();
    write_to(pool, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn write_to<W: Write>(pool: &Pool, w: &mut W) -> std::io::Result<()> {
    let p = &pool.provenance;
    writeln!(
        w,
        "{MAGIC} alpha={}; rho={}; dt_base={}; seed={}; censored={}; discarded={}",
        p.alpha, p.rho, p.cfg.dt_base, p.seed, p.censored, p.discarded
    )?;
    writeln!(
        w,
        "# cfg: dt_min={}; refine_factor={}; horizon_cap={}; near_wall_band={}; absorb_floor={}; max_steps={}; attempted={}; count={}",
        p.cfg.dt_min,
        p.cfg.refine_factor,
        p.cfg.horizon_cap,
        p.cfg.near_wall_band,
        p.cfg.absorb_floor,
        p.cfg.max_steps,
        p.attempted,
        pool.samples.len()
    )?;
    writeln!(w, "xi,ell")?;
    for s in &pool.samples {
        writeln!(w, "{:.16e},{:.16e}", s.xi, s.ell)?;
    }
    Ok(())
}

/// Write `pool` to `path`. The parent directory must already exist.
pub fn write_pool(pool: &Pool, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_to(pool, &mut w)?;
    w.flush()?;
    Ok(())
}

fn fields(line: &str) -> Vec<(String, String)> {
    line.split(';')
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn get<T: std::str::FromStr>(fs: &[(String, String)], key: &str) -> Result<T> {
    let raw = fs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Format(format!("missing header field `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("bad value `{raw}` for `{key}`")))
}

pub fn parse_pool(text: &str) -> Result<Pool> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty pool file".into()))?;
    let rest = head
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format("not a langevin-wall pool file".into()))?;
    let f1 = fields(rest);
    let cfg_line = lines
        .next()
        .and_then(|l| l.strip_prefix("# cfg:"))
        .ok_or_else(|| Error::Format("missing configuration line".into()))?;
    let f2 = fields(cfg_line);
    if lines.next().map(str::trim) != Some("xi,ell") {
        return Err(Error::Format("missing `xi,ell` column header".into()));
    }
    let cfg = PathConfig {
        dt_base: get(&f1, "dt_base")?,
        dt_min: get(&f2, "dt_min")?,
        refine_factor: get(&f2, "refine_factor")?,
        horizon_cap: get(&f2, "horizon_cap")?,
        near_wall_band: get(&f2, "near_wall_band")?,
        absorb_floor: get(&f2, "absorb_floor")?,
        max_steps: get(&f2, "max_steps")?,
    };
    let count: usize = get(&f2, "count")?;
    let mut samples = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 4;
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {row}: expected two columns")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {row}: bad number `{s}`")))
        };
        let (xi, ell) = (parse(a)?, parse(b)?);
        if !(xi > 0.0 && xi.is_finite() && ell < 0.0 && ell.is_finite()) {
            return Err(Error::Format(format!(
                "line {row}: need xi > 0 and ell < 0, got ({xi}, {ell})"
            )));
        }
        samples.push(ExcursionSample { xi, ell });
    }
    if samples.len() != count {
        return Err(Error::Format(format!(
            "header announces {count} rows, found {}",
            samples.len()
        )));
    }
    Ok(Pool {
        samples,
        provenance: PoolProvenance {
            alpha: get(&f1, "alpha")?,
            rho: get(&f1, "rho")?,
            seed: get(&f1, "seed")?,
            cfg,
            attempted: get(&f2, "attempted")?,
            censored: get(&f1, "censored")?,
            discarded: get(&f1, "discarded")?,
        },
    })
}

pub fn read_pool(path: &Path) -> Result<Pool> {
    parse_pool(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::harvest_pool;
    use crate::stable::StableParams;

    #[test]
    fn round_trip_is_exact() {
        let p = StableParams::new(1.5, 0.5).unwrap();
        let pool = harvest_pool(&p, &PathConfig::default(), 20, 3).unwrap();
        let text = pool_to_string(&pool);
        assert!(
            text.starts_with("# langevin-wall pool v1; alpha=1.5; rho=0.5; dt_base=0.01; seed=3;")
        );
        let back = parse_pool(&text).unwrap();
        assert_eq!(back, pool);
    }

    #[test]
    fn single_row_pool_round_trips_through_a_file() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        let pool = harvest_pool(&p, &PathConfig::default(), 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.csv");
        write_pool(&pool, &path).unwrap();
        assert_eq!(read_pool(&path).unwrap(), pool);
    }

    #[test]
    fn corruption_is_a_format_error() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        let pool = harvest_pool(&p, &PathConfig::default(), 5, 1).unwrap();
        let text = pool_to_string(&pool);
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_pool(&truncated), Err(Error::Format(_))));
        let garbled = text.replacen("e-", "x-", 1);
        assert!(matches!(parse_pool(&garbled), Err(Error::Format(_))));
        assert!(matches!(parse_pool("xi,ell\n1,2\n"), Err(Error::Format(_))));
        assert!(matches!(parse_pool(""), Err(Error::Format(_))));
        let positive = text.replacen(",-", ",", 1);
        assert!(matches!(parse_pool(&positive), Err(Error::Format(_))));
    }
}
