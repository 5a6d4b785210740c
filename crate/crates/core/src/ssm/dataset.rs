//! Plain-text serialization of tracking datasets.
//!
//! ```text
//! # npmc-dataset v1
//! # sensors: 16
//! # horizon: 50
//! # seed: 7
//! # theta: -0.2231435513142097 3 -11.512925464970229
//! # sensor_positions: -15,-7.5 -15,-2.5 ...
//! s1,s2,...,s16
//! -41.27,-38.9,...
//! ```
//!
//! One row per time step, one column per sensor. Floats use Rust's shortest
//! round-trip formatting, so reading a written file reproduces it exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::tracking::TrackingParams;
use crate::error::{Error, Result};

const MAGIC: &str = "# npmc-dataset v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sensor_positions: Vec<[f64; 2]>,
    pub truth: TrackingParams,
    pub seed: u64,
    pub observations: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let j = self.sensor_positions.len();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "# sensors: {j}").unwrap();
        writeln!(s, "# horizon: {}", self.observations.len()).unwrap();
        writeln!(s, "# seed: {}", self.seed).unwrap();
        writeln!(
            s,
            "# theta: {} {} {}",
            self.truth.log_pt, self.truth.nu, self.truth.log_rho
        )
        .unwrap();
        let positions: Vec<String> = self
            .sensor_positions
            .iter()
            .map(|p| format!("{},{}", p[0], p[1]))
            .collect();
        writeln!(s, "# sensor_positions: {}", positions.join(" ")).unwrap();
        let header: Vec<String> = (1..=j).map(|i| format!("s{i}")).collect();
        writeln!(s, "{}", header.join(",")).unwrap();
        for row in &self.observations {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }

    pub fn read<R: BufRead>(input: R) -> Result<Dataset> {
        let mut sensors = None;
        let mut horizon = None;
        let mut seed = None;
        let mut truth = None;
        let mut positions = None;
        let mut header_seen = false;
        let mut observations = Vec::new();

        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            if idx == 0 {
                if line.trim() != MAGIC {
                    return Err(err(format!("expected `{MAGIC}`")));
                }
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .split_once(':')
                    .ok_or_else(|| err("metadata line without `:`".into()))?;
                let value = value.trim();
                match key.trim() {
                    "sensors" => sensors = Some(parse_num::<usize>(value).map_err(err)?),
                    "horizon" => horizon = Some(parse_num::<usize>(value).map_err(err)?),
                    "seed" => seed = Some(parse_num::<u64>(value).map_err(err)?),
                    "theta" => {
                        let v: Vec<f64> = value
                            .split_whitespace()
                            .map(parse_num::<f64>)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(err)?;
                        truth =
                            Some(TrackingParams::from_theta(&v).map_err(|e| err(e.to_string()))?);
                    }
                    "sensor_positions" => {
                        let mut v = Vec::new();
                        for pair in value.split_whitespace() {
                            let (x, y) = pair
                                .split_once(',')
                                .ok_or_else(|| err(format!("bad sensor position `{pair}`")))?;
                            v.push([
                                parse_num::<f64>(x).map_err(err)?,
                                parse_num::<f64>(y).map_err(err)?,
                            ]);
                        }
                        positions = Some(v);
                    }
                    other => return Err(err(format!("unknown metadata key `{other}`"))),
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|c| parse_num::<f64>(c.trim()))
                .collect::<std::result::Result<_, _>>()
                .map_err(err)?;
            observations.push(row);
        }

        let missing = |k: &str| Error::Parse {
            line: 0,
            message: format!("missing `{k}` metadata"),
        };
        let sensors = sensors.ok_or_else(|| missing("sensors"))?;
        let horizon = horizon.ok_or_else(|| missing("horizon"))?;
        let positions = positions.ok_or_else(|| missing("sensor_positions"))?;
        if positions.len() != sensors {
            return Err(Error::Parse {
                line: 0,
                message: format!("{} sensor positions for {sensors} sensors", positions.len()),
            });
        }
        if observations.len() != horizon {
            return Err(Error::Parse {
                line: 0,
                message: format!("{} rows for horizon {horizon}", observations.len()),
            });
        }
        if let Some(n) = observations.iter().position(|r| r.len() != sensors) {
            return Err(Error::Parse {
                line: 0,
                message: format!("row {} has {} columns", n + 1, observations[n].len()),
            });
        }
        Ok(Dataset {
            sensor_positions: positions,
            truth: truth.ok_or_else(|| missing("theta"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            observations,
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("cannot parse `{s}`"))
}
