//! Flat `key = value` run files. Keys are flag names without the leading
//! dashes (`pool_size` and `pool-size` are equivalent); flags given on the
//! command line win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::Failure;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, Failure> {
    let mut out = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "config line {}: expected `key = value`",
                i + 1
            )));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Failure::Usage(format!(
                "config line {}: empty key or value",
                i + 1
            )));
        }
        out.push((k.replace('_', "-"), v.to_string()));
    }
    Ok(out)
}

fn has_flag(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&eq))
}

/// Strips `--config <path>` from `args` and appends every key of the file
/// that is not already given as a flag.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut path = None;
    let mut kept = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => match it.next() {
                Some(p) => path = Some(p),
                None => return Err(Failure::Usage("--config needs a path".into())),
            },
            Some(s) if s.starts_with("--config=") => path = Some(OsString::from(&s[9..])),
            _ => kept.push(a),
        }
    }
    let Some(path) = path else {
        return Ok(kept);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| {
        Failure::Io(format!(
            "cannot read config {}: {e}",
            Path::new(&path).display()
        ))
    })?;
    for (k, v) in parse(&text)? {
        let flag = format!("--{k}");
        if !has_flag(&kept, &flag) {
            kept.push(flag.into());
            kept.push(v.into());
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let kv = parse("# run\nalpha = 1.5\n\npool_size=10 # small\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("alpha".into(), "1.5".into()),
                ("pool-size".into(), "10".into())
            ]
        );
    }

    #[test]
    fn rejects_bare_words() {
        assert!(matches!(parse("alpha\n"), Err(Failure::Usage(_))));
        assert!(matches!(parse("alpha =\n"), Err(Failure::Usage(_))));
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.cfg");
        fs::write(&f, "alpha = 1.5\nseed = 9\n").unwrap();
        let args = os(&[
            "lw",
            "mellin",
            "--seed",
            "3",
            "--config",
            f.to_str().unwrap(),
        ]);
        let merged = merge(args).unwrap();
        assert_eq!(
            merged,
            os(&["lw", "mellin", "--seed", "3", "--alpha", "1.5"])
        );
    }

    #[test]
    fn missing_file_is_io() {
        let args = os(&["lw", "mellin", "--config=/nonexistent/run.cfg"]);
        assert!(matches!(merge(args), Err(Failure::Io(_))));
    }
}
