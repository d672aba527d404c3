//! File ingestion and emission shared by the library surface and the CLI.
//!
//! Formats:
//! - stratified table CSV, header `stratum,z,y,count`, one row per cell;
//! - stratified table JSON, an object or array of objects
//!   `{"stratum": "...", "counts": [c00, c10, c01, c11]}` in canonical order;
//! - individual-level CSV, header `c1,...,cp,z,y`;
//! - band CSV `c,lower,upper,ci_lower,ci_upper`;
//! - coverage report CSV `rep,shape,covered,lower,upper,width,seconds`.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::covmodel::{BandResult, MnlObservation};
use crate::error::{Error, Result};
use crate::json_inf::format_inf_f64;
use crate::simlab::CoverageReport;
use crate::table::{cell_index, ObservedTable};

/// A named stratum with its counts table.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub name: String,
    pub table: ObservedTable,
}

/// Read stratified tables, dispatching on the file extension (`.json` for
/// the JSON alternative, CSV otherwise). Strata keep file order.
pub fn read_stratified(path: &Path) -> Result<Vec<Stratum>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_stratified_json(path),
        _ => read_stratified_csv(path),
    }
}

pub fn read_stratified_csv(path: &Path) -> Result<Vec<Stratum>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let expect = ["stratum", "z", "y", "count"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expect {
        return Err(Error::InvalidInput(format!(
            "stratified CSV header must be {expect:?}, got {got:?}"
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_name: HashMap<String, [u64; 4]> = HashMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let name = record[0].to_string();
        let z: u8 = parse_field(&record[1], line, "z")?;
        let y: u8 = parse_field(&record[2], line, "y")?;
        if z > 1 || y > 1 {
            return Err(Error::InvalidInput(format!(
                "row {}: z and y must be 0 or 1, got z={z}, y={y}",
                line + 2
            )));
        }
        let count: u64 = parse_field(&record[3], line, "count")?;
        if !by_name.contains_key(&name) {
            order.push(name.clone());
        }
        by_name.entry(name).or_insert([0; 4])[cell_index(z, y)] += count;
    }
    if order.is_empty() {
        return Err(Error::InvalidInput("no rows in stratified CSV".into()));
    }
    order
        .into_iter()
        .map(|name| {
            let counts = by_name[&name];
            if counts.iter().sum::<u64>() == 0 {
                return Err(Error::InvalidTable(format!("stratum {name:?} is all zero")));
            }
            Ok(Stratum {
                name,
                table: ObservedTable::from_counts(counts),
            })
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| {
        Error::InvalidInput(format!("row {}: bad {field} value {s:?}: {e}", line + 2))
    })
}

#[derive(Deserialize)]
struct StratumJson {
    stratum: String,
    counts: [u64; 4],
}

pub fn read_stratified_json(path: &Path) -> Result<Vec<Stratum>> {
    let text = std::fs::read_to_string(path)?;
    let parsed: Vec<StratumJson> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)?
    } else {
        vec![serde_json::from_str(&text)?]
    };
    parsed
        .into_iter()
        .map(|s| {
            if s.counts.iter().sum::<u64>() == 0 {
                return Err(Error::InvalidTable(format!(
                    "stratum {:?} is all zero",
                    s.stratum
                )));
            }
            Ok(Stratum {
                name: s.stratum,
                table: ObservedTable::from_counts(s.counts),
            })
        })
        .collect()
}

/// Individual-level records: header `c1,...,cp,z,y` with p >= 0 covariates.
pub fn read_individual_csv(path: &Path) -> Result<Vec<MnlObservation>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[cols.len() - 2] != "z" || cols[cols.len() - 1] != "y" {
        return Err(Error::InvalidInput(format!(
            "individual CSV header must end with z,y; got {cols:?}"
        )));
    }
    let p = cols.len() - 2;
    for (i, c) in cols[..p].iter().enumerate() {
        let expect = format!("c{}", i + 1);
        if *c != expect {
            return Err(Error::InvalidInput(format!(
                "covariate column {} must be named {expect:?}, got {c:?}",
                i + 1
            )));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != p + 2 {
            return Err(Error::InvalidInput(format!(
                "row {}: expected {} fields, got {}",
                line + 2,
                p + 2,
                record.len()
            )));
        }
        let mut covariates = Vec::with_capacity(p);
        for j in 0..p {
            covariates.push(parse_field::<f64>(&record[j], line, "covariate")?);
        }
        let z: u8 = parse_field(&record[p], line, "z")?;
        let y: u8 = parse_field(&record[p + 1], line, "y")?;
        rows.push(MnlObservation { covariates, z, y });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows in individual CSV".into()));
    }
    Ok(rows)
}

pub fn write_individual_csv(path: &Path, rows: &[MnlObservation]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let p = rows.first().map(|r| r.covariates.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=p).map(|i| format!("c{i}")).collect();
    header.push("z".into());
    header.push("y".into());
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.covariates.iter().map(|c| format!("{c}")).collect();
        rec.push(format!("{}", r.z));
        rec.push(format!("{}", r.y));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_stratified_csv(path: &Path, strata: &[Stratum]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["stratum", "z", "y", "count"])?;
    for s in strata {
        let counts = s.table.counts().ok_or_else(|| {
            Error::InvalidInput(format!("stratum {:?} has no counts to write", s.name))
        })?;
        for (i, &(z, y)) in crate::table::CELLS.iter().enumerate() {
            wtr.write_record([
                s.name.as_str(),
                &z.to_string(),
                &y.to_string(),
                &counts[i].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Band CSV uses the first covariate coordinate as the `c` column.
pub fn write_band_csv(path: &Path, band: &BandResult) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["c", "lower", "upper", "ci_lower", "ci_upper"])?;
    for p in &band.points {
        let c = p.c.first().copied().unwrap_or(0.0);
        wtr.write_record([
            format!("{c}"),
            format_inf_f64(p.point_bounds.lower),
            format_inf_f64(p.point_bounds.upper),
            format_inf_f64(p.ci_bounds.lower),
            format_inf_f64(p.ci_bounds.upper),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_coverage_csv(path: &Path, report: &CoverageReport) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["rep", "shape", "covered", "lower", "upper", "width", "seconds"])?;
    for r in &report.records {
        wtr.write_record([
            r.rep.to_string(),
            r.shape.to_string(),
            (r.covered as u8).to_string(),
            format_inf_f64(r.lower),
            format_inf_f64(r.upper),
            format_inf_f64(r.log_width),
            format!("{:.6}", r.seconds),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmpfile(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("tnd_io_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn stratified_csv_round_trip() {
        let path = tmpfile(
            "strata.csv",
            "stratum,z,y,count\n\
             a,0,0,10\na,1,0,20\na,0,1,30\na,1,1,40\n\
             b,0,0,5\nb,1,0,5\nb,0,1,5\nb,1,1,5\n",
        );
        let strata = read_stratified(&path).unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[0].name, "a");
        assert_eq!(strata[0].table.counts(), Some(&[10, 20, 30, 40]));
        assert_eq!(strata[1].table.counts(), Some(&[5, 5, 5, 5]));

        let out = std::env::temp_dir().join("tnd_io_tests").join("echo.csv");
        write_stratified_csv(&out, &strata).unwrap();
        let again = read_stratified(&out).unwrap();
        assert_eq!(strata, again);
    }

    #[test]
    fn stratified_csv_bad_header_rejected() {
        let path = tmpfile("bad.csv", "s,z,y,n\na,0,0,1\n");
        assert!(matches!(
            read_stratified_csv(&path),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn stratified_json_object_and_array() {
        let path = tmpfile(
            "one.json",
            r#"{"stratum": "only", "counts": [1, 2, 3, 4]}"#,
        );
        let strata = read_stratified(&path).unwrap();
        assert_eq!(strata.len(), 1);
        assert_eq!(strata[0].table.counts(), Some(&[1, 2, 3, 4]));

        let path = tmpfile(
            "two.json",
            r#"[{"stratum": "a", "counts": [1,2,3,4]}, {"stratum": "b", "counts": [4,3,2,1]}]"#,
        );
        let strata = read_stratified(&path).unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[1].name, "b");
    }

    #[test]
    fn individual_csv_round_trip() {
        let path = tmpfile("ind.csv", "c1,z,y\n0.5,0,1\n0.25,1,0\n");
        let rows = read_individual_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].covariates, vec![0.5]);
        assert_eq!((rows[1].z, rows[1].y), (1, 0));

        let out = std::env::temp_dir().join("tnd_io_tests").join("ind_echo.csv");
        write_individual_csv(&out, &rows).unwrap();
        assert_eq!(read_individual_csv(&out).unwrap(), rows);
    }

    #[test]
    fn individual_csv_header_checked() {
        let path = tmpfile("ind_bad.csv", "x1,z,y\n0.5,0,1\n");
        assert!(read_individual_csv(&path).is_err());
    }
}
