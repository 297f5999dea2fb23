use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{MosEntry, MosTable, RatingRecord, SubjectSession};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::ugcfeat::csv_err;

pub const RATINGS_HEADER: [&str; 5] = ["subject_id", "content_id", "raw_score", "is_repeat", "is_gold"];
pub const MOS_HEADER: [&str; 5] = ["content_id", "mos", "z_mean", "z_std", "count"];

fn parse_flag(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(Error::Validation(format!("bad flag '{other}'"))),
    }
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Validation(format!("{what}: {e}")))
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(Error::Validation(format!("expected header {expected:?}, got {header:?}")));
    }
    Ok(())
}

pub fn read_ratings_csv<T: Real, R: Read>(input: R) -> Result<Vec<RatingRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    check_header(&mut rdr, &RATINGS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let r = RatingRecord {
            subject_id: rec[0].trim().to_string(),
            content_id: rec[1].trim().to_string(),
            raw_score: T::lit(parse_num(&rec[2], "raw_score")?),
            is_repeat: parse_flag(&rec[3])?,
            is_gold: parse_flag(&rec[4])?,
        };
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_ratings_csv<T: Real, W: Write>(mut out: W, records: &[RatingRecord<T>], preamble: Option<&str>) -> Result<()> {
    if let Some(p) = preamble {
        writeln!(out, "# {p}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(RATINGS_HEADER).map_err(csv_err)?;
    for r in records {
        wtr.write_record([
            r.subject_id.as_str(),
            r.content_id.as_str(),
            &r.raw_score.as_f64().to_string(),
            if r.is_repeat { "1" } else { "0" },
            if r.is_gold { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Groups records into one session per subject, in first-appearance order.
/// Flat rating files carry no platform acceptance rate, so every session
/// gets `acceptance_rate`.
pub fn sessions_from_records<T: Real>(records: &[RatingRecord<T>], acceptance_rate: T) -> Vec<SubjectSession<T>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RatingRecord<T>>> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(&r.subject_id) {
            order.push(r.subject_id.clone());
        }
        groups.entry(r.subject_id.clone()).or_default().push(r.clone());
    }
    order
        .into_iter()
        .map(|id| SubjectSession { records: groups.remove(&id).unwrap(), subject_id: id, acceptance_rate })
        .collect()
}

pub fn write_mos_csv<T: Real, W: Write>(mut out: W, table: &MosTable<T>, preamble: Option<&str>) -> Result<()> {
    if let Some(p) = preamble {
        writeln!(out, "# {p}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(MOS_HEADER).map_err(csv_err)?;
    for (id, e) in &table.entries {
        wtr.write_record([
            id.clone(),
            e.mos.as_f64().to_string(),
            e.z_mean.as_f64().to_string(),
            e.z_std.as_f64().to_string(),
            e.rating_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_mos_csv<T: Real, R: Read>(input: R) -> Result<MosTable<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    check_header(&mut rdr, &MOS_HEADER)?;
    let mut entries = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let mos = parse_num(&rec[1], "mos")?;
        if !(0.0..=100.0).contains(&mos) {
            return Err(Error::Range(format!("MOS {mos} outside [0, 100]")));
        }
        let rating_count = rec[4]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Validation(format!("count: {e}")))?;
        entries.insert(
            rec[0].trim().to_string(),
            MosEntry {
                mos: T::lit(mos),
                rating_count,
                z_mean: T::lit(parse_num(&rec[2], "z_mean")?),
                z_std: T::lit(parse_num(&rec[3], "z_std")?),
            },
        );
    }
    Ok(MosTable { entries })
}
