//! Text formats for response tables and parameter vectors.
//!
//! Responses: CSV with header `i,j,k,y`, one-based indices, one row per
//! observation; the design is inferred from the rows present.
//!
//! Parameters: `key=value` lines `mu=`, `sigma2=`, `tau2=` and
//! `free=mu|sigma2|tau2`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{CrossedDesign, FreeMask, ResponseTable, Theta, PARAM_NAMES};
use crate::error::{Error, Result};

pub fn write_responses<W: Write>(data: &ResponseTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "k", "y"])?;
    for (i, j, k, y) in data.iter() {
        w.write_record([(i + 1).to_string(), (j + 1).to_string(), (k + 1).to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_responses<R: Read>(input: R) -> Result<ResponseTable> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["i", "j", "k", "y"] {
        return Err(Error::InvalidData(format!("expected header i,j,k,y, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut cells: BTreeMap<(usize, usize), BTreeMap<usize, u8>> = BTreeMap::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let field = |idx: usize| -> Result<usize> {
            record
                .get(idx)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidData(format!("row {}: bad field {}", line + 2, idx + 1)))
        };
        let (i, j, k, y) = (field(0)?, field(1)?, field(2)?, field(3)?);
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::InvalidData(format!("row {}: indices are one-based", line + 2)));
        }
        if y > 1 {
            return Err(Error::InvalidData(format!("row {}: non-binary response {y}", line + 2)));
        }
        if cells.entry((i - 1, j - 1)).or_default().insert(k - 1, y as u8).is_some() {
            return Err(Error::InvalidData(format!("row {}: duplicate observation ({i},{j},{k})", line + 2)));
        }
    }
    if cells.is_empty() {
        return Err(Error::InvalidData("no observations".into()));
    }
    let m = cells.keys().map(|&(i, _)| i + 1).max().unwrap();
    let n = cells.keys().map(|&(_, j)| j + 1).max().unwrap();
    for (&(i, j), reps) in &cells {
        if reps.keys().copied().ne(0..reps.len()) {
            return Err(Error::InvalidData(format!("cell ({},{}) replicates are not 1..c", i + 1, j + 1)));
        }
    }
    let design = CrossedDesign::new(m, n, cells.iter().map(|(&key, reps)| (key, reps.len())))?;
    let y = cells.values().flat_map(|reps| reps.values().copied()).collect();
    ResponseTable::new(design, y)
}

pub fn format_theta(theta: &Theta) -> String {
    format!(
        "mu={}\nsigma2={}\ntau2={}\nfree={}\n",
        theta.mu,
        theta.sigma2,
        theta.tau2,
        theta.free_names().join("|")
    )
}

pub fn parse_free(text: &str) -> Result<FreeMask> {
    let mut mask = FreeMask { mu: false, sigma2: false, tau2: false };
    for name in text.split('|').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "mu" => mask.mu = true,
            "sigma2" => mask.sigma2 = true,
            "tau2" => mask.tau2 = true,
            other => return Err(Error::Config(format!("unknown parameter '{other}' in free list"))),
        }
    }
    Ok(mask)
}

pub fn parse_theta(text: &str) -> Result<Theta> {
    let mut values: BTreeMap<&str, &str> = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{line}'")))?;
        values.insert(key.trim(), value.trim());
    }
    let mut comps = [0.0; 3];
    for (slot, name) in comps.iter_mut().zip(PARAM_NAMES) {
        let raw = values.get(name).ok_or_else(|| Error::Config(format!("missing '{name}'")))?;
        *slot = raw.parse().map_err(|_| Error::Config(format!("bad value for '{name}': {raw}")))?;
    }
    let free = match values.get("free") {
        Some(list) => parse_free(list)?,
        None => FreeMask::ALL,
    };
    Theta::with_mask(comps[0], comps[1], comps[2], free)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_design() {
        let design = CrossedDesign::new(2, 3, [((0, 0), 2), ((0, 2), 1), ((1, 1), 1)]).unwrap();
        let data = ResponseTable::new(design, vec![1, 0, 1, 1]).unwrap();
        let mut buf = Vec::new();
        write_responses(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,k,y\n1,1,1,1\n1,1,2,0\n"));
        assert_eq!(read_responses(&buf[..]).unwrap(), data);
    }

    #[test]
    fn csv_rejects_gaps_and_bad_values() {
        assert!(read_responses("i,j,k,y\n1,1,2,1\n".as_bytes()).is_err());
        assert!(read_responses("i,j,k,y\n1,1,1,3\n".as_bytes()).is_err());
        assert!(read_responses("i,j,k,y\n".as_bytes()).is_err());
        assert!(read_responses("a,b,c,d\n1,1,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn theta_text_round_trip() {
        let th = Theta::mu_only(0.5, 1.0, 2.0).unwrap();
        let text = format_theta(&th);
        assert_eq!(text, "mu=0.5\nsigma2=1\ntau2=2\nfree=mu\n");
        assert_eq!(parse_theta(&text).unwrap(), th);
        let all = parse_theta("mu = -1 # shift\nsigma2=0.5\ntau2=0.25\nfree=mu|sigma2|tau2").unwrap();
        assert_eq!(all.free, FreeMask::ALL);
        assert!(parse_theta("mu=1\nsigma2=1\n").is_err());
        assert!(parse_theta("mu=1\nsigma2=1\ntau2=1\nfree=rho").is_err());
    }
}
