use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{BatteryState, DeviceTrace, RawSample, Rejection, TraceError};

pub const TRACE_HEADER: [&str; 6] = [
    "device_id",
    "timestamp",
    "battery_level",
    "battery_state",
    "temperature",
    "screen_on",
];

/// Reads the trace CSV and groups rows per device.
///
/// Rows may arrive in any order. Traces come back sorted by device id with
/// samples sorted by timestamp; on duplicate timestamps the later row wins.
/// Uniformly spaced traces (a previously resampled corpus) get their
/// `grid_seconds` set.
pub fn parse_traces<R: Read>(input: R) -> Result<Vec<DeviceTrace>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(TraceError::Malformed {
            line: 1,
            message: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }

    let mut by_device: BTreeMap<String, BTreeMap<i64, RawSample>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| TraceError::Malformed { line, message };
        if record.len() != TRACE_HEADER.len() {
            return Err(malformed(format!(
                "expected {} fields, found {}",
                TRACE_HEADER.len(),
                record.len()
            )));
        }

        let device_id = record[0].to_string();
        if device_id.is_empty() {
            return Err(malformed("empty device_id".into()));
        }
        let timestamp: i64 = record[1]
            .parse()
            .map_err(|_| malformed(format!("bad timestamp `{}`", &record[1])))?;
        let battery_level: f64 = record[2]
            .parse()
            .map_err(|_| malformed(format!("bad battery_level `{}`", &record[2])))?;
        if !(0.0..=100.0).contains(&battery_level) {
            return Err(TraceError::LevelOutOfRange {
                line,
                value: battery_level,
            });
        }
        let battery_state = match &record[3] {
            "" => None,
            s => Some(
                s.parse::<i64>()
                    .ok()
                    .and_then(BatteryState::from_code)
                    .ok_or_else(|| malformed(format!("bad battery_state `{s}`")))?,
            ),
        };
        let temperature = match &record[4] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|t| t.is_finite())
                    .ok_or_else(|| malformed(format!("bad temperature `{s}`")))?,
            ),
        };
        let screen_on = match &record[5] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            s => return Err(malformed(format!("bad screen_on `{s}`"))),
        };

        by_device.entry(device_id).or_default().insert(
            timestamp,
            RawSample {
                timestamp,
                battery_level,
                battery_state,
                temperature,
                screen_on,
            },
        );
    }

    Ok(by_device
        .into_iter()
        .map(|(device_id, samples)| {
            let mut trace = DeviceTrace::raw(device_id, samples.into_values().collect());
            if trace.samples.len() > 2 {
                trace.grid_seconds = trace.detect_grid().unwrap_or(0);
            }
            trace
        })
        .collect())
}

/// Writes traces in the trace CSV layout, battery level with 4 decimals.
pub fn write_corpus<W: Write>(out: W, traces: &[DeviceTrace]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for trace in traces {
        for s in &trace.samples {
            let state = s.battery_state.map(|b| b.code().to_string()).unwrap_or_default();
            let temp = s.temperature.map(|t| format!("{t}")).unwrap_or_default();
            let screen = s
                .screen_on
                .map(|on| if on { "1" } else { "0" })
                .unwrap_or_default();
            w.write_record([
                trace.device_id.as_str(),
                &s.timestamp.to_string(),
                &format!("{:.4}", s.battery_level),
                &state,
                &temp,
                screen,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejections<W: Write>(out: W, rejections: &[Rejection]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device_id", "reason"])?;
    for r in rejections {
        w.write_record([r.device_id.as_str(), r.reason.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "device_id,timestamp,battery_level,battery_state,temperature,screen_on\n";

    #[test]
    fn groups_sorts_and_dedups() {
        let csv = format!(
            "{HEADER}a,300,48,-1,,\nb,10,90,,31.5,1\na,100,50,,,\na,200,49,,,0\nb,20,91,1,,\na,100,51,,,\n"
        );
        let traces = parse_traces(csv.as_bytes()).unwrap();
        assert_eq!(traces.len(), 2);
        let a = &traces[0];
        assert_eq!(a.device_id, "a");
        let ts: Vec<i64> = a.samples.iter().map(|s| s.timestamp).collect();
        assert_eq!(ts, vec![100, 200, 300]);
        assert_eq!(a.samples[0].battery_level, 51.0);
        assert_eq!(a.samples[2].battery_state, Some(BatteryState::Discharging));
        assert_eq!(traces[1].samples.len(), 2);
        assert_eq!(traces[1].samples[0].temperature, Some(31.5));
        assert_eq!(traces[1].samples[0].screen_on, Some(true));
    }

    #[test]
    fn errors_name_the_line() {
        let csv = format!("{HEADER}a,1,50,,,\na,x,50,,,\n");
        match parse_traces(csv.as_bytes()) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = format!("{HEADER}a,1,101,,,\n");
        assert!(matches!(
            parse_traces(csv.as_bytes()),
            Err(TraceError::LevelOutOfRange { line: 2, .. })
        ));
        let csv = format!("{HEADER}a,1,50,2,,\n");
        assert!(parse_traces(csv.as_bytes()).is_err());
        assert!(parse_traces("id,ts\n".as_bytes()).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let csv = format!("{HEADER}a,0,50,,,\na,600,49.5,,30,0\na,1200,49,,,\n");
        let traces = parse_traces(csv.as_bytes()).unwrap();
        assert_eq!(traces[0].grid_seconds, 600);
        let mut out = Vec::new();
        write_corpus(&mut out, &traces).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("a,600,49.5000,,30,0"));
        let again = parse_traces(text.as_bytes()).unwrap();
        assert_eq!(again, traces);
    }
}
