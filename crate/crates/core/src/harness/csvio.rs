//! Measurement and waveform CSV files: header `t,v_out,i_out`, SI units,
//! one row per sample.

use std::io::{Read, Write};
use std::path::Path;

use crate::converter::Waveform;
use crate::error::{Error, Result};

pub const WAVEFORM_HEADER: [&str; 3] = ["t", "v_out", "i_out"];

fn csv_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        line,
        reason: e.to_string(),
    }
}

pub fn write_waveform<W: Write>(w: &Waveform, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(WAVEFORM_HEADER).map_err(|e| csv_err(1, e))?;
    for (k, ((t, v), i)) in w.t.iter().zip(&w.v_out).zip(&w.i_out).enumerate() {
        wtr.write_record([t.to_string(), v.to_string(), i.to_string()])
            .map_err(|e| csv_err(k + 2, e))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_waveform<R: Read>(input: R) -> Result<Waveform> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| csv_err(1, e))?;
    if header.iter().ne(WAVEFORM_HEADER) {
        return Err(csv_err(
            1,
            format!("expected header `t,v_out,i_out`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let (mut t, mut v, mut i) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(line, e))?;
        let num = |col: usize| -> Result<f64> {
            let s = &rec[col];
            let x: f64 = s.parse().map_err(|_| csv_err(line, format!("`{s}` is not a number")))?;
            if !x.is_finite() {
                return Err(csv_err(line, format!("`{s}` is not finite")));
            }
            Ok(x)
        };
        t.push(num(0)?);
        v.push(num(1)?);
        i.push(num(2)?);
    }
    if t.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    Waveform::new(t, v, i)
}

pub fn save_waveform(w: &Waveform, path: &Path) -> Result<()> {
    write_waveform(w, std::fs::File::create(path)?)
}

pub fn load_waveform(path: &Path) -> Result<Waveform> {
    read_waveform(std::fs::File::open(path)?)
}

/// Several waveforms on one time grid, side by side:
/// `t,v_<label>,i_<label>,...`.
pub fn write_overlay<W: Write>(traces: &[(&str, &Waveform)], out: W) -> Result<()> {
    let Some((_, first)) = traces.first() else {
        return Err(Error::EmptyWaveform);
    };
    for (_, w) in &traces[1..] {
        first.check_same_grid(w)?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for (label, _) in traces {
        header.push(format!("v_{label}"));
        header.push(format!("i_{label}"));
    }
    wtr.write_record(&header).map_err(|e| csv_err(1, e))?;
    for k in 0..first.len() {
        let mut row = vec![first.t[k].to_string()];
        for (_, w) in traces {
            row.push(w.v_out[k].to_string());
            row.push(w.i_out[k].to_string());
        }
        wtr.write_record(&row).map_err(|e| csv_err(k + 2, e))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let w = Waveform::new(
            vec![0.0, 1e-6, 2e-6],
            vec![0.1, 1.0 / 3.0, 3.2999999999999],
            vec![0.0, 2.0f64.sqrt(), -1e-300],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_waveform(&w, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,v_out,i_out\n"));
        assert_eq!(read_waveform(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn bad_header_and_number() {
        assert!(matches!(
            read_waveform("time,v,i\n0,1,2\n".as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
        assert!(matches!(
            read_waveform("t,v_out,i_out\n0,1,2\n1e-6,x,2\n".as_bytes()),
            Err(Error::Csv { line: 3, .. })
        ));
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            read_waveform("t,v_out,i_out\n".as_bytes()),
            Err(Error::EmptyWaveform)
        ));
    }
}
