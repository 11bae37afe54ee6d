//! Newline-delimited JSON training log.

use std::io::Write;

use planex_core::train::LogRecord;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLine<'a> {
    pub stage: &'a str,
    pub step: usize,
    pub epoch: usize,
    pub loss_color: f64,
    pub loss_geometric: Option<f64>,
    pub probe_psnr: Option<f64>,
    pub wall_time: f64,
}

impl<'a> From<&'a LogRecord> for LogLine<'a> {
    fn from(r: &'a LogRecord) -> Self {
        LogLine {
            stage: r.stage.name(),
            step: r.step,
            epoch: r.epoch,
            loss_color: r.loss_color,
            loss_geometric: r.loss_geometric,
            probe_psnr: r.probe_psnr,
            wall_time: r.wall_time,
        }
    }
}

pub fn format_record(r: &LogRecord) -> String {
    serde_json::to_string(&LogLine::from(r)).expect("log line serializes")
}

/// Writes one JSON object per record; write errors are reported once on
/// stderr and then ignored so a full disk does not abort training.
pub struct NdjsonLog<W: Write> {
    out: W,
    failed: bool,
}

impl<W: Write> NdjsonLog<W> {
    pub fn new(out: W) -> Self {
        NdjsonLog { out, failed: false }
    }

    pub fn record(&mut self, r: &LogRecord) {
        if self.failed {
            return;
        }
        let res = writeln!(self.out, "{}", format_record(r)).and_then(|_| self.out.flush());
        if let Err(e) = res {
            eprintln!("training log write failed: {e}");
            self.failed = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use planex_core::train::Stage;

    #[test]
    fn one_object_per_line() {
        let mut buf = Vec::new();
        {
            let mut log = NdjsonLog::new(&mut buf);
            for step in 0..2 {
                log.record(&LogRecord {
                    stage: Stage::Teacher,
                    step,
                    epoch: 0,
                    loss_color: 0.5,
                    loss_geometric: Some(0.25),
                    probe_psnr: None,
                    wall_time: 1.0,
                });
            }
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["stage"], "teacher");
        assert_eq!(v["step"], 1);
        assert!(v["probe_psnr"].is_null());
    }
}
