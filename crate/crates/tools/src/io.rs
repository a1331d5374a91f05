//! CSV and JSON file formats.
//!
//! * Trace: `flow_id,timestamp_ns`, one row per packet.
//! * NetFlow: `s_f,s_d,size`, one row per flow (sampled or not).
//! * Survival: `x,s_empirical,s_model`.
//!
//! All files carry a header row. Floats are written in the shortest form
//! that parses back to the same value.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use flowsum_core::empirical::{assemble_flows, IngestConfig, SurvivalPoint, Trace};
use flowsum_core::{Flow, NetFlow, SampledNetFlow};
use serde::de::DeserializeOwned;

pub const TRACE_HEADER: [&str; 2] = ["flow_id", "timestamp_ns"];
pub const NETFLOW_HEADER: [&str; 3] = ["s_f", "s_d", "size"];
pub const SURVIVAL_HEADER: [&str; 3] = ["x", "s_empirical", "s_model"];

/// Which kind of CSV a file holds, judged by its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Trace,
    NetFlow,
}

/// Packets of one flow as read from a trace, sorted by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFlow {
    pub id: String,
    pub timestamps_ns: Vec<u64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

/// Buffered writer to `path`, or stdout when `path` is `None` or `-`.
pub fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().context("missing header row")?;
    if header.iter().ne(expected.iter().copied()) {
        bail!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(","));
    }
    Ok(())
}

pub fn detect_kind(path: &Path) -> Result<CsvKind> {
    let mut rdr = csv_reader(open(path)?);
    let header: Vec<String> = rdr.headers().context("missing header row")?.iter().map(str::to_owned).collect();
    if header == TRACE_HEADER {
        Ok(CsvKind::Trace)
    } else if header == NETFLOW_HEADER {
        Ok(CsvKind::NetFlow)
    } else {
        bail!("{}: unrecognised header `{}`", path.display(), header.join(","))
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Raw `(flow_id, timestamp_ns)` records.
pub fn read_trace_records<R: Read>(r: R) -> Result<Vec<(String, u64)>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &TRACE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.context("malformed trace row")?;
        let line = line_of(&rec);
        if rec.len() != 2 {
            bail!("line {line}: expected 2 fields, found {}", rec.len());
        }
        let ts: u64 = rec[1].parse().map_err(|e| anyhow!("line {line}: bad timestamp `{}`: {e}", &rec[1]))?;
        out.push((rec[0].to_owned(), ts));
    }
    Ok(out)
}

/// Packets grouped per flow, flows ordered by first packet.
pub fn group_trace(records: Vec<(String, u64)>) -> Vec<TraceFlow> {
    let mut groups: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (id, ts) in records {
        groups.entry(id).or_default().push(ts);
    }
    let mut flows: Vec<TraceFlow> = groups
        .into_iter()
        .map(|(id, mut timestamps_ns)| {
            timestamps_ns.sort_unstable();
            TraceFlow { id, timestamps_ns }
        })
        .collect();
    flows.sort_by_key(|f| f.timestamps_ns[0]);
    flows
}

pub fn read_trace(path: &Path, cfg: &IngestConfig) -> Result<Trace> {
    let records = read_trace_records(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(assemble_flows(records, cfg)?)
}

pub fn write_trace_flows<W: Write>(w: W, flows: &[TraceFlow]) -> Result<()> {
    let mut rows: Vec<(u64, &str)> =
        flows.iter().flat_map(|f| f.timestamps_ns.iter().map(move |t| (*t, f.id.as_str()))).collect();
    rows.sort();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACE_HEADER)?;
    for (t, id) in rows {
        wtr.write_record([id, &t.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Absolute packet times in nanoseconds for a session whose first flow
/// starts at time zero. Flow `i` is named `f{i}`.
pub fn session_to_trace(flows: &[Flow]) -> Vec<TraceFlow> {
    let mut start = 0.0f64;
    let mut comp = 0.0f64;
    flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            // Kahan-compensated running start time.
            let y = f.lead() - comp;
            let t = start + y;
            comp = (t - start) - y;
            start = t;
            let timestamps_ns = std::iter::once(0.0)
                .chain(f.gaps().iter().scan(0.0, |acc, g| {
                    *acc += g;
                    Some(*acc)
                }))
                .map(|off| ((start + off) * 1e9).round() as u64)
                .collect();
            TraceFlow { id: format!("f{i}"), timestamps_ns }
        })
        .collect()
}

pub fn write_netflows<W: Write>(w: W, rows: impl IntoIterator<Item = (f64, f64, u64)>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(NETFLOW_HEADER)?;
    for (s_f, s_d, size) in rows {
        wtr.write_record([s_f.to_string(), s_d.to_string(), size.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn netflow_rows(netflows: &[NetFlow]) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
    netflows.iter().map(|n| (n.s_f, n.s_d, n.size))
}

pub fn sampled_rows(sampled: &[SampledNetFlow]) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
    sampled.iter().map(|n| (n.s_f, n.s_d, n.size))
}

pub fn read_netflows_from<R: Read>(r: R) -> Result<Vec<NetFlow>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &NETFLOW_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.context("malformed NetFlow row")?;
        let line = line_of(&rec);
        if rec.len() != 3 {
            bail!("line {line}: expected 3 fields, found {}", rec.len());
        }
        let field = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| anyhow!("line {line}: bad value `{}`: {e}", &rec[i]))
        };
        let size: u64 = rec[2].parse().map_err(|e| anyhow!("line {line}: bad size `{}`: {e}", &rec[2]))?;
        out.push(NetFlow::new(field(0)?, field(1)?, size).with_context(|| format!("line {line}"))?);
    }
    Ok(out)
}

pub fn read_netflows(path: &Path) -> Result<Vec<NetFlow>> {
    read_netflows_from(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn write_survival<W: Write>(w: W, points: &[SurvivalPoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SURVIVAL_HEADER)?;
    for p in points {
        let model = p.s_model.map(|v| v.to_string()).unwrap_or_default();
        wtr.write_record([p.x.to_string(), p.s_empirical.to_string(), model])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses `arg` as inline JSON when it starts with `{`, else reads it as a file.
pub fn json_arg<T: DeserializeOwned>(arg: &str) -> Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("cannot read {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", if text.len() > 60 { "file" } else { arg }))
}

/// Counts bytes written through it.
#[derive(Debug, Default, Clone, Copy)]
pub struct ByteCounter(pub u64);

impl Write for ByteCounter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Serialized size of a trace CSV for these flows.
pub fn trace_csv_bytes(flows: &[Flow]) -> u64 {
    let mut c = ByteCounter::default();
    write_trace_flows(&mut c, &session_to_trace(flows)).expect("in-memory write");
    c.0
}

/// Serialized size of a NetFlow CSV.
pub fn netflow_csv_bytes(rows: impl IntoIterator<Item = (f64, f64, u64)>) -> u64 {
    let mut c = ByteCounter::default();
    write_netflows(&mut c, rows).expect("in-memory write");
    c.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_rows_report_line() {
        let text = "flow_id,timestamp_ns\na,10\nb,xx\n";
        let err = read_trace_records(text.as_bytes()).unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        assert!(read_trace_records("id,t\na,1\n".as_bytes()).is_err());
    }

    #[test]
    fn netflow_round_trip_is_exact() {
        let rows = vec![(0.1 + 0.2, 1.0 / 3.0, 4u64), (2.5e-9, 7e-7, 2)];
        let mut buf = Vec::new();
        write_netflows(&mut buf, rows.clone()).unwrap();
        let back = read_netflows_from(buf.as_slice()).unwrap();
        let got: Vec<_> = back.iter().map(|n| (n.s_f, n.s_d, n.size)).collect();
        assert_eq!(got, rows);
        assert_eq!(netflow_csv_bytes(rows) as usize, buf.len());
    }

    #[test]
    fn grouping_orders_by_first_packet() {
        let g = group_trace(vec![("b".into(), 5), ("a".into(), 9), ("b".into(), 1), ("a".into(), 3)]);
        assert_eq!(g[0].id, "b");
        assert_eq!(g[0].timestamps_ns, [1, 5]);
        assert_eq!(g[1].timestamps_ns, [3, 9]);
    }
}
