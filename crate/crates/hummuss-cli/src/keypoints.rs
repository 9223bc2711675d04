//! Timestamped keypoint stream format.
//!
//! One header line `# joints=<J> fps=<F>`, then one line per frame:
//! `timestamp_ms,x,y,conf,...` with exactly one value triple per joint.
//! Timestamps are strictly increasing. The same layout carries 3D poses
//! (`x,y,z` triples), which is what the inference output and the ground-truth
//! companion files use.

use std::io::BufRead;

use crate::error::CliError;

/// Values per joint; both 2D keypoints (x, y, conf) and 3D poses (x, y, z).
pub const TRIPLE: usize = 3;

/// Parsed stream header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub joints: usize,
    pub fps: f64,
}

/// One frame: timestamp in milliseconds plus `joints * 3` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp_ms: f64,
    pub values: Vec<f64>,
}

/// A fully buffered stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFile {
    pub header: Header,
    pub frames: Vec<Frame>,
}

impl Header {
    pub fn to_line(self) -> String {
        format!("# joints={} fps={}", self.joints, self.fps)
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Header, CliError> {
        let bad = |msg: &str| CliError::Input {
            line: line_no,
            msg: msg.to_string(),
        };
        let rest = line
            .strip_prefix("# ")
            .ok_or_else(|| bad("expected header \"# joints=<J> fps=<F>\""))?;
        let mut joints = None;
        let mut fps = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("joints", v)) => {
                    joints = Some(v.parse::<usize>().map_err(|_| bad("joints must be an integer"))?)
                }
                Some(("fps", v)) => {
                    fps = Some(v.parse::<f64>().map_err(|_| bad("fps must be a number"))?)
                }
                _ => return Err(bad(&format!("unknown header field \"{field}\""))),
            }
        }
        let header = Header {
            joints: joints.ok_or_else(|| bad("header lacks joints="))?,
            fps: fps.ok_or_else(|| bad("header lacks fps="))?,
        };
        if header.joints == 0 {
            return Err(bad("joints must be >= 1"));
        }
        if !(header.fps > 0.0 && header.fps.is_finite()) {
            return Err(bad("fps must be positive and finite"));
        }
        Ok(header)
    }
}

impl Frame {
    /// Parse one data line against the header's joint count.
    pub fn parse(line: &str, joints: usize, line_no: usize) -> Result<Frame, CliError> {
        let fields: Vec<&str> = line.split(',').collect();
        let want = 1 + TRIPLE * joints;
        if fields.len() != want {
            return Err(CliError::Input {
                line: line_no,
                msg: format!(
                    "expected {want} comma-separated fields for {joints} joints, found {}",
                    fields.len()
                ),
            });
        }
        let mut nums = Vec::with_capacity(want);
        for f in &fields {
            nums.push(f.trim().parse::<f64>().map_err(|_| CliError::Input {
                line: line_no,
                msg: format!("unparseable number \"{f}\""),
            })?);
        }
        let timestamp_ms = nums[0];
        if !timestamp_ms.is_finite() {
            return Err(CliError::Input {
                line: line_no,
                msg: "timestamp must be finite".into(),
            });
        }
        Ok(Frame {
            timestamp_ms,
            values: nums.split_off(1),
        })
    }

    pub fn to_line(&self) -> String {
        let mut s = self.timestamp_ms.to_string();
        for v in &self.values {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s
    }
}

/// Streaming reader: yields frames one line at a time so the inference loop
/// never buffers the input. Enforces strictly increasing timestamps.
pub struct FrameReader<R: BufRead> {
    input: R,
    pub header: Option<Header>,
    line_no: usize,
    last_ts: Option<f64>,
}

impl<R: BufRead> FrameReader<R> {
    /// Read the header (if any content exists). A completely empty input is
    /// a valid zero-frame stream and leaves `header` as None.
    pub fn open(mut input: R) -> Result<Self, CliError> {
        let mut first = String::new();
        let n = input.read_line(&mut first).map_err(CliError::Io)?;
        let header = if n == 0 {
            None
        } else {
            Some(Header::parse(first.trim_end_matches(['\r', '\n']), 1)?)
        };
        Ok(FrameReader {
            input,
            header,
            line_no: 1,
            last_ts: None,
        })
    }

    /// Next frame, or None at end of input.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, CliError> {
        let joints = match self.header {
            Some(h) => h.joints,
            None => return Ok(None),
        };
        let mut line = String::new();
        loop {
            line.clear();
            let n = self.input.read_line(&mut line).map_err(CliError::Io)?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let text = line.trim_end_matches(['\r', '\n']);
            if text.is_empty() {
                continue; // tolerate blank lines
            }
            let frame = Frame::parse(text, joints, self.line_no)?;
            if let Some(last) = self.last_ts {
                if frame.timestamp_ms <= last {
                    return Err(CliError::Input {
                        line: self.line_no,
                        msg: format!(
                            "timestamp {} regresses (previous was {})",
                            frame.timestamp_ms, last
                        ),
                    });
                }
            }
            self.last_ts = Some(frame.timestamp_ms);
            return Ok(Some(frame));
        }
    }
}

/// Buffer an entire stream.
pub fn read_all<R: BufRead>(input: R) -> Result<Option<KeypointFile>, CliError> {
    let mut reader = FrameReader::open(input)?;
    let header = match reader.header {
        Some(h) => h,
        None => return Ok(None),
    };
    let mut frames = Vec::new();
    while let Some(f) = reader.next_frame()? {
        frames.push(f);
    }
    Ok(Some(KeypointFile { header, frames }))
}

/// Render a whole stream, trailing newline included.
pub fn render(file: &KeypointFile) -> String {
    let mut out = file.header.to_line();
    out.push('\n');
    for f in &file.frames {
        out.push_str(&f.to_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_via_text() {
        let file = KeypointFile {
            header: Header { joints: 2, fps: 30.0 },
            frames: vec![
                Frame {
                    timestamp_ms: 0.0,
                    values: vec![0.1, 0.2, 1.0, -0.3, 0.25, 0.5],
                },
                Frame {
                    timestamp_ms: 33.333333333333336,
                    values: vec![0.11, 0.19, 1.0, -0.31, 0.27, 0.5],
                },
            ],
        };
        let text = render(&file);
        let back = read_all(text.as_bytes()).unwrap().unwrap();
        assert_eq!(file, back);
    }

    #[test]
    fn empty_input_is_a_zero_frame_stream() {
        assert_eq!(read_all(&b""[..]).unwrap(), None);
    }

    #[test]
    fn field_count_errors_name_the_line() {
        let text = "# joints=2 fps=30\n0,1,2,3,4,5,6\n33,1,2,3\n";
        let err = read_all(text.as_bytes()).unwrap_err();
        match err {
            CliError::Input { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn timestamp_regression_names_the_line() {
        let text = "# joints=1 fps=30\n0,1,2,3\n50,1,2,3\n40,1,2,3\n";
        let err = read_all(text.as_bytes()).unwrap_err();
        match err {
            CliError::Input { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("regress"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn header_validation() {
        assert!(Header::parse("# joints=17 fps=30", 1).is_ok());
        assert!(Header::parse("# joints=17 fps=29.97", 1).is_ok());
        assert!(Header::parse("joints=17 fps=30", 1).is_err());
        assert!(Header::parse("# joints=0 fps=30", 1).is_err());
        assert!(Header::parse("# joints=17", 1).is_err());
        assert!(Header::parse("# joints=17 fps=30 extra=1", 1).is_err());
    }

    #[test]
    fn malformed_number_is_an_input_error() {
        let text = "# joints=1 fps=30\n0,1,zap,3\n";
        let err = read_all(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CliError::Input { line: 2, .. }));
    }
}
