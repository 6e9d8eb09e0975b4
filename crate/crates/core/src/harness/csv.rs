use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::run::CellSummary;

/// Column order of the summary CSV.
pub const SUMMARY_HEADER: [&str; 20] = [
    "scheme",
    "n",
    "K",
    "P",
    "Q",
    "R",
    "d",
    "M",
    "L_m",
    "L_p",
    "epsilon",
    "snr_db_target",
    "snr_db_realized_mean",
    "trials",
    "success_rate",
    "mean_fraction_recovered",
    "mean_decode_ms",
    "mean_measure_ms",
    "total_measurements",
    "seed",
];

pub fn write_summary_csv<W: Write>(rows: &[CellSummary], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(SUMMARY_HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn summary_csv_string(rows: &[CellSummary]) -> Result<String> {
    let mut buf = Vec::new();
    write_summary_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::param(format!("non-UTF-8 CSV: {e}")))
}

/// Parse a summary CSV, rejecting any header other than [`SUMMARY_HEADER`].
pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<CellSummary>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != SUMMARY_HEADER {
        return Err(Error::param(format!("unexpected CSV header {header:?}")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Scheme;

    fn row(snr: f64) -> CellSummary {
        CellSummary {
            scheme: Scheme::AlmostLinear,
            n: 4096,
            k: 20,
            p: 60,
            q: 0,
            r: 0,
            d: 15,
            bins: 160,
            magnitude_levels: 3,
            phase_levels: 6,
            epsilon: 1.0,
            snr_db_target: snr,
            snr_db_realized_mean: snr,
            trials: 10,
            success_rate: 0.9,
            mean_fraction_recovered: 0.95,
            mean_decode_ms: 1.5,
            mean_measure_ms: 0.25,
            total_measurements: 9600,
            seed: 7,
        }
    }

    #[test]
    fn header_and_round_trip() {
        let rows = vec![row(12.0), row(f64::INFINITY)];
        let text = summary_csv_string(&rows).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "scheme,n,K,P,Q,R,d,M,L_m,L_p,epsilon,snr_db_target,snr_db_realized_mean,trials,success_rate,mean_fraction_recovered,mean_decode_ms,mean_measure_ms,total_measurements,seed"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("almost_linear,4096,20,60,0,0,15,160,3,6,"));
        assert_eq!(read_summary_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn serialized_fields_follow_header() {
        // Header and struct field order must agree.
        let mut buf = Vec::new();
        let mut writer = csv::Writer::from_writer(&mut buf);
        writer.serialize(row(1.0)).unwrap();
        drop(writer);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    }

    #[test]
    fn rejects_foreign_schema() {
        assert!(read_summary_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_summary_csv("".as_bytes()).is_err());
    }
}
