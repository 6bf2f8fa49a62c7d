//! Flag/config-file merging and value parsing.
//!
//! Config files hold `key = value` lines; `#` starts a comment. Flags given on
//! the command line win over the file.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse_config(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", n + 1)))?;
            values.insert(normalize_key(k.trim()), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_config(&text)
    }

    /// Overlay a flag value if it was given.
    pub fn set_flag(&mut self, key: &str, value: Option<&str>) {
        if let Some(v) = value {
            self.values.insert(normalize_key(key), v.to_string());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.raw(key) {
            Some(v) => parse_f64(key, v),
            None => Ok(default),
        }
    }

    pub fn f64_required(&self, key: &str) -> Result<f64, CliError> {
        let v = self.raw(key).ok_or_else(|| CliError::Config(format!("missing --{key}")))?;
        parse_f64(key, v)
    }

    pub fn list_or(&self, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
        parse_values(key, self.raw(key).unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.raw(key) {
            Some(v) => v
                .replace('_', "")
                .parse()
                .map_err(|_| CliError::Config(format!("--{key}: expected a non-negative integer, got {v:?}"))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("--{key}: expected a non-negative integer, got {v:?}"))),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("--{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(CliError::Config(format!("--{key}: expected a finite number, got {v:?}")));
    }
    Ok(x)
}

/// `a:b:n` gives n + 1 equally spaced points from a to b inclusive; a comma
/// list gives its entries; a single number gives itself. Ranges and lists
/// must be strictly increasing.
pub fn parse_values(key: &str, spec: &str) -> Result<Vec<f64>, CliError> {
    let spec = spec.trim();
    let bad = |why: &str| CliError::Config(format!("--{key} {spec:?}: {why}"));
    let out: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range must be a:b:n"));
        }
        let a = parse_f64(key, parts[0])?;
        let b = parse_f64(key, parts[1])?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad("step count must be a positive integer"))?;
        if n == 0 {
            return Err(bad("step count must be at least 1"));
        }
        if !(b > a) {
            return Err(bad("range must be increasing"));
        }
        (0..=n).map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 }).collect()
    } else {
        spec.split(',').map(|p| parse_f64(key, p)).collect::<Result<_, _>>()?
    };
    if out.is_empty() {
        return Err(bad("empty"));
    }
    if out.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_values("k", "0:1:4").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_values("s", "0.05,0.075,0.1").unwrap(), vec![0.05, 0.075, 0.1]);
        assert_eq!(parse_values("s", "2.5").unwrap(), vec![2.5]);
        assert!(parse_values("k", "1:0:4").is_err());
        assert!(parse_values("k", "0:1:0").is_err());
        assert!(parse_values("k", "0:1").is_err());
        assert!(parse_values("s", "0.1,0.05").is_err());
        assert!(parse_values("s", "a").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut s = Settings::parse_config("# model\nmu = 0.02\nsigma=0.1 # comment\nkappa-max = 3\n").unwrap();
        s.set_flag("sigma", Some("0.2"));
        s.set_flag("r", None);
        assert_eq!(s.f64_required("mu").unwrap(), 0.02);
        assert_eq!(s.f64_required("sigma").unwrap(), 0.2);
        assert_eq!(s.f64_or("kappa_max", 5.0).unwrap(), 3.0);
        assert_eq!(s.f64_or("r", 0.05).unwrap(), 0.05);
        assert!(s.f64_required("r").is_err());
        assert!(Settings::parse_config("mu 0.02").is_err());
    }
}
