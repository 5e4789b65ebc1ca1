//! CSV tables behind the ablation plots.
//!
//! Schema: `k,acc,miou,scans_per_sec`; an undefined metric is an empty field.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["k", "acc", "miou", "scans_per_sec"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationRow {
    pub k: usize,
    pub acc: Option<f64>,
    pub miou: Option<f64>,
    pub scans_per_sec: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_plotdata<W: Write>(out: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([r.k.to_string(), opt(r.acc), opt(r.miou), r.scans_per_sec.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_plotdata<R: Read>(input: R) -> Result<Vec<AblationRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::format("plot data", format!("expected header {}", HEADER.join(","))));
    }
    let bad = |f: &str| Error::format("plot data", format!("bad field `{f}`"));
    let num = |f: &str| f.parse::<f64>().map_err(|_| bad(f));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let maybe = |f: &str| if f.is_empty() { Ok(None) } else { num(f).map(Some) };
        rows.push(AblationRow {
            k: field(0).parse().map_err(|_| bad(field(0)))?,
            acc: maybe(field(1))?,
            miou: maybe(field(2))?,
            scans_per_sec: num(field(3))?,
        });
    }
    Ok(rows)
}
