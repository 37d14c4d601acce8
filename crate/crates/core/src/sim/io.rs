//! `readings.csv`, `context.jsonl`, `incidents.txt` and `network.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use super::{ContextRecord, RoadNetwork, SensorStream, SimError, SimOutput};
use crate::time::{Calendar, Minute, SLOT_MINUTES};

pub const READINGS_FILE: &str = "readings.csv";
pub const CONTEXT_FILE: &str = "context.jsonl";
pub const INCIDENTS_FILE: &str = "incidents.txt";
pub const NETWORK_FILE: &str = "network.json";

#[derive(Debug, Error)]
pub enum StreamIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("readings: {0}")]
    Csv(#[from] csv::Error),
    #[error("context line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StreamIoError + '_ {
    move |source| StreamIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_readings<W: Write>(w: W, stream: &SensorStream, network: &RoadNetwork) -> Result<(), StreamIoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "cell_id", "speed_mph"])?;
    let cal = stream.calendar();
    let mut buf = String::new();
    for m in 0..stream.minutes() {
        let ts = cal.rfc3339(m);
        for (c, &v) in stream.frame(m).iter().enumerate() {
            buf.clear();
            use std::fmt::Write as _;
            write!(buf, "{:.2}", f64::from(v)).expect("string write");
            out.write_record([ts.as_str(), network.cell_id(c), buf.as_str()])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a complete reading grid: exactly one reading per cell and minute.
pub fn read_readings<R: Read>(r: R, network: &RoadNetwork, calendar: Calendar) -> Result<SensorStream, StreamIoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let cells = network.len();
    let mut grid: Vec<f32> = Vec::new();
    let mut last_ts: Vec<u8> = Vec::new();
    let mut last_minute: Minute = 0;
    let mut rec = csv::ByteRecord::new();
    while rdr.read_byte_record(&mut rec)? {
        let bad = |what: &str| SimError::Data(format!("line {}: {what}", rec.position().map_or(0, |p| p.line())));
        if rec.len() != 3 {
            return Err(bad("expected timestamp,cell_id,speed_mph").into());
        }
        if rec[0] != last_ts[..] {
            let ts = std::str::from_utf8(&rec[0]).map_err(|_| bad("timestamp is not UTF-8"))?;
            last_minute = calendar
                .parse_rfc3339(ts)
                .ok_or_else(|| bad("timestamp before stream start or off the minute grid"))?;
            last_ts = rec[0].to_vec();
        }
        let id = std::str::from_utf8(&rec[1]).map_err(|_| bad("cell id is not UTF-8"))?;
        let cell = network.cell_index(id).ok_or_else(|| bad("unknown cell"))?;
        let speed: f64 = std::str::from_utf8(&rec[2])
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("speed is not a number"))?;
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(bad("speed must be finite and nonnegative").into());
        }
        let idx = last_minute as usize * cells + cell;
        if idx >= grid.len() {
            grid.resize(idx + 1, f32::NAN);
        }
        if !grid[idx].is_nan() {
            return Err(bad("duplicate reading").into());
        }
        grid[idx] = speed as f32;
    }
    if grid.is_empty() {
        return Err(SimError::Data("no readings".into()).into());
    }
    let minutes = grid.len().div_ceil(cells) as Minute;
    grid.resize(minutes as usize * cells, f32::NAN);
    if let Some(i) = grid.iter().position(|v| v.is_nan()) {
        return Err(SimError::Data(format!(
            "missing reading for {} at minute {}",
            network.cell_id(i % cells),
            i / cells
        ))
        .into());
    }
    Ok(SensorStream::new(calendar, cells, minutes, grid)?)
}

pub fn write_context<W: Write>(mut w: W, context: &[ContextRecord]) -> Result<(), std::io::Error> {
    for rec in context {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_context<R: BufRead>(r: R) -> Result<Vec<ContextRecord>, StreamIoError> {
    let mut out: Vec<ContextRecord> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| StreamIoError::Io {
            path: CONTEXT_FILE.into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ContextRecord =
            serde_json::from_str(&line).map_err(|source| StreamIoError::Json { line: i + 1, source })?;
        if let Some(prev) = out.last() {
            if (rec.timestamp - prev.timestamp).num_minutes() != i64::from(SLOT_MINUTES) {
                return Err(SimError::Data(format!("context line {}: slots must be consecutive", i + 1)).into());
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Loaded simulator outputs.
#[derive(Debug, Clone)]
pub struct Streams {
    pub network: RoadNetwork,
    pub stream: SensorStream,
    pub context: Vec<ContextRecord>,
    pub incident_feed: String,
}

impl From<SimOutput> for Streams {
    fn from(o: SimOutput) -> Self {
        let incident_feed = o.incident_feed();
        Streams {
            network: o.network,
            stream: o.stream,
            context: o.context,
            incident_feed,
        }
    }
}

pub fn write_dir(dir: &Path, out: &SimOutput) -> Result<(), StreamIoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(NETWORK_FILE);
    std::fs::write(&p, out.network.to_json()).map_err(io_err(&p))?;
    let p = dir.join(READINGS_FILE);
    let f = File::create(&p).map_err(io_err(&p))?;
    write_readings(BufWriter::new(f), &out.stream, &out.network)?;
    let p = dir.join(CONTEXT_FILE);
    let f = File::create(&p).map_err(io_err(&p))?;
    write_context(BufWriter::new(f), &out.context).map_err(io_err(&p))?;
    let p = dir.join(INCIDENTS_FILE);
    std::fs::write(&p, out.incident_feed()).map_err(io_err(&p))?;
    Ok(())
}

pub fn load_dir(dir: &Path) -> Result<Streams, StreamIoError> {
    let p = dir.join(NETWORK_FILE);
    let network = RoadNetwork::from_json(&std::fs::read_to_string(&p).map_err(io_err(&p))?)?;
    let p = dir.join(CONTEXT_FILE);
    let context = read_context(BufReader::new(File::open(&p).map_err(io_err(&p))?))?;
    let first = context
        .first()
        .ok_or_else(|| SimError::Data("context file is empty".into()))?;
    let start = first.timestamp.naive_utc();
    if start.time() != chrono::NaiveTime::MIN {
        return Err(SimError::Data("streams must start at midnight UTC".into()).into());
    }
    let calendar = Calendar::new(start.date());
    let p = dir.join(READINGS_FILE);
    let stream = read_readings(BufReader::new(File::open(&p).map_err(io_err(&p))?), &network, calendar)?;
    if context.len() as u64 * u64::from(SLOT_MINUTES) != u64::from(stream.minutes()) {
        return Err(SimError::Data("context slots and readings cover different spans".into()).into());
    }
    let p = dir.join(INCIDENTS_FILE);
    let incident_feed = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    Ok(Streams {
        network,
        stream,
        context,
        incident_feed,
    })
}
