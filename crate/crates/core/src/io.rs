//! Text formats: per-sample dataset CSV, latent-truth CSV, flat key-value
//! records and sectioned `key = value` config files.
//!
//! Dataset CSV: header `group_id,y,x1,...,xd`, one row per sample, `y`
//! repeated (and checked equal) across a group's rows. Groups keep the order
//! of their first row. Floats are written in Rust's shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::measures::Cloud;
use crate::scenarios::{Dataset, Group};
use crate::{Error, Result};

fn parse_err(row: usize, msg: impl Into<String>) -> Error {
    Error::Parse { row, msg: msg.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(row, format!("{other:?}")),
    }
}

pub fn write_dataset<W: Write>(out: W, ds: &Dataset) -> Result<()> {
    let d = ds.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group_id".to_string(), "y".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for g in &ds.groups {
        for p in g.cloud.points() {
            let mut rec = vec![g.id.to_string(), g.y.to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(row, format!("{what} '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(row, format!("{what} is not finite")));
    }
    Ok(v)
}

/// Reads a dataset CSV. Rows are 1-based and include the header in errors.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?
        .map_err(csv_err)?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "group_id" || names[1] != "y" {
        return Err(parse_err(1, "header must be group_id,y,x1,...,xd"));
    }
    for (i, n) in names[2..].iter().enumerate() {
        if *n != format!("x{}", i + 1) {
            return Err(parse_err(1, format!("expected column x{}, found '{n}'", i + 1)));
        }
    }
    let d = names.len() - 2;

    let mut order: Vec<u64> = Vec::new();
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (k, rec) in records.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != d + 2 {
            return Err(parse_err(row, format!("expected {} fields, found {}", d + 2, rec.len())));
        }
        let id: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(row, format!("group_id '{}' is not a nonnegative integer", &rec[0])))?;
        let y = parse_f64(&rec[1], row, "y")?;
        let entry = groups.entry(id).or_insert_with(|| {
            order.push(id);
            (y, Vec::new())
        });
        if entry.0 != y {
            return Err(parse_err(row, format!("group {id} has conflicting y values")));
        }
        for c in 2..d + 2 {
            entry.1.push(parse_f64(&rec[c], row, &format!("x{}", c - 1))?);
        }
    }
    if order.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    let groups = order
        .into_iter()
        .map(|id| {
            let (y, flat) = groups.remove(&id).expect("recorded id");
            Ok(Group {
                id,
                cloud: Cloud::from_flat(d, flat, None)?,
                y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        groups,
        latent: None,
        latent_names: Vec::new(),
    })
}

/// Latent CSV: `split,group_id,f,eta,<latent names...>`.
pub fn write_latents<W: Write>(out: W, splits: &[(&str, &Dataset)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names = splits.first().map(|s| s.1.latent_names.clone()).unwrap_or_default();
    let mut header: Vec<String> = ["split", "group_id", "f", "eta"].iter().map(|s| s.to_string()).collect();
    header.extend(names);
    w.write_record(&header).map_err(csv_err)?;
    for (split, ds) in splits {
        for l in ds.latent.iter().flatten() {
            let mut rec = vec![split.to_string(), l.group_id.to_string(), l.f.to_string(), l.eta.to_string()];
            rec.extend(l.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Ordered `key = value` record. Floats use 17 significant digits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvRecord {
    entries: Vec<(String, String)>,
}

impl KvRecord {
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, format!("{value:.16e}"));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::input(format!("missing key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::input(format!("key '{key}': '{v}' is not a number")))
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = KvRecord::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, "expected 'key = value'"))?;
            r.push(k.trim(), v.trim());
        }
        Ok(r)
    }
}

/// Sectioned config: `[section]` headers, `key = value` lines, `#` comments.
/// Keys before the first header live in section `""`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(i + 1, "unterminated section header"))?;
                current = name.trim().to_string();
                cfg.sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, "expected 'key = value'"))?;
            cfg.sections
                .entry(current.clone())
                .or_default()
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::input(format!("[{section}] {key}: cannot parse '{v}'"))),
        }
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(section)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Latent;

    fn sample() -> Dataset {
        let c1 = Cloud::from_samples(&[vec![0.1, 0.2], vec![0.3, -0.4]], None).unwrap();
        let c2 = Cloud::from_samples(&[vec![1.0 / 3.0, 2.0]], None).unwrap();
        Dataset {
            groups: vec![
                Group { id: 7, cloud: c1, y: 0.25 },
                Group { id: 2, cloud: c2, y: -1.0 / 7.0 },
            ],
            latent: Some(vec![Latent {
                group_id: 7,
                values: vec![0.5],
                f: 0.2,
                eta: 0.05,
            }]),
            latent_names: vec!["x".into()],
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.groups, ds.groups);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("group_id,y,x1,x2\n7,0.25,0.1,0.2\n"));
    }

    #[test]
    fn parse_errors_report_rows() {
        let bad_y = "group_id,y,x1\n1,0.5,0.1\n1,0.6,0.2\n";
        match read_dataset(bad_y.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let bad_num = "group_id,y,x1\n1,0.5,abc\n";
        assert!(matches!(read_dataset(bad_num.as_bytes()), Err(Error::Parse { row: 2, .. })));
        let bad_header = "id,y,x1\n";
        assert!(matches!(read_dataset(bad_header.as_bytes()), Err(Error::Parse { row: 1, .. })));
        let short = "group_id,y,x1,x2\n1,0.5,0.1\n";
        assert!(matches!(read_dataset(short.as_bytes()), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn kv_round_trip() {
        let mut r = KvRecord::default();
        r.push_f64("a", 0.1 + 0.2);
        r.push("name", "pwa");
        let back = KvRecord::parse(&r.render()).unwrap();
        assert_eq!(back.get_f64("a").unwrap(), 0.1 + 0.2);
        assert_eq!(back.get("name").unwrap(), "pwa");
        assert!(back.get("missing").is_err());
    }

    #[test]
    fn config_sections() {
        let cfg = Config::parse("seed = 3\n# note\n[search]\nrestarts = 4 # inline\n[pwa]\np=2\n").unwrap();
        assert_eq!(cfg.get("", "seed"), Some("3"));
        assert_eq!(cfg.get_parsed::<usize>("search", "restarts").unwrap(), Some(4));
        assert_eq!(cfg.get("pwa", "p"), Some("2"));
        assert!(cfg.get_parsed::<usize>("pwa", "p").unwrap().is_some());
        assert!(Config::parse("[broken\n").is_err());
    }
}
