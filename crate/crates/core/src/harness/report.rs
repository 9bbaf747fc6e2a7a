//! In-memory experiment report and its CSV directory layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SUMMARY_HEADER: [&str; 9] = [
    "algorithm",
    "videos",
    "raw_reward",
    "perfect_reward",
    "normalized_reward",
    "true_positive_rate",
    "true_negative_rate",
    "mean_forecast_age",
    "flags",
];
pub const CURVE_HEADER: [&str; 4] = [
    "algorithm",
    "instances",
    "window_normalized_reward",
    "cumulative_normalized_reward",
];
pub const CONFUSION_HEADER: [&str; 4] = ["algorithm", "true_status", "predicted_status", "count"];
pub const AGES_HEADER: [&str; 3] = ["algorithm", "forecast_age", "count"];
pub const REGRET_HEADER: [&str; 3] = [
    "instance",
    "cumulative_regret",
    "cumulative_realized_regret",
];
pub const REGRET_FIT_HEADER: [&str; 8] = [
    "age",
    "arrival",
    "instances",
    "split_exponent",
    "theoretical_exponent",
    "fitted_slope",
    "final_regret",
    "fit_window_start",
];
pub const POLICY_HEADER: [&str; 5] = ["age", "symbol", "probability", "action", "expected_reward"];
pub const VALUE_HEADER: [&str; 2] = ["policy", "value"];

/// Marker for metrics that are undefined, such as a rate over an empty class.
pub const UNDEFINED: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub videos: u64,
    pub raw_reward: f64,
    pub perfect_reward: f64,
    pub normalized_reward: f64,
    pub true_positive_rate: Option<f64>,
    pub true_negative_rate: Option<f64>,
    pub mean_forecast_age: Option<f64>,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub algorithm: String,
    pub instances: u64,
    pub window_normalized_reward: f64,
    pub cumulative_normalized_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionEntry {
    pub algorithm: String,
    pub true_status: usize,
    pub predicted_status: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeCount {
    pub algorithm: String,
    pub forecast_age: usize,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretPoint {
    pub instance: u64,
    pub cumulative_regret: f64,
    pub cumulative_realized_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretFit {
    pub age: usize,
    pub arrival: String,
    pub instances: u64,
    pub split_exponent: f64,
    pub theoretical_exponent: f64,
    pub fitted_slope: Option<f64>,
    pub final_regret: f64,
    pub fit_window_start: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub age: usize,
    pub symbol: String,
    pub probability: f64,
    pub action: String,
    /// Conditional expected reward of the chosen action; undefined for unreachable symbols.
    pub expected_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub manifest: Vec<(String, String)>,
    pub summary: Vec<AlgorithmSummary>,
    pub learning_curve: Vec<CurvePoint>,
    pub confusion: Vec<ConfusionEntry>,
    pub forecast_ages: Vec<AgeCount>,
    pub regret: Vec<RegretPoint>,
    pub regret_fit: Vec<RegretFit>,
    pub policy: Vec<PolicyEntry>,
    /// `(policy name, expected reward)` rows from the solver.
    pub values: Vec<(String, f64)>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

fn write_csv<const N: usize>(
    dir: &Path,
    name: &str,
    header: [&str; N],
    rows: Vec<[String; N]>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let to_io = |e: csv::Error| Error::io(&path, std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

struct Rows {
    source: String,
    records: Vec<(u64, csv::StringRecord)>,
}

fn read_csv<const N: usize>(dir: &Path, name: &str, header: [&str; N]) -> Result<Rows> {
    let path = dir.join(name);
    let source = path.display().to_string();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let got = rdr
        .headers()
        .map_err(|e| Error::parse(&source, 1, e.to_string()))?;
    if got.iter().ne(header) {
        return Err(Error::parse(
            &source,
            1,
            format!("header must be {}", header.join(",")),
        ));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(&source, line, e.to_string()))?;
        if rec.len() != N {
            return Err(Error::parse(&source, line, format!("expected {N} fields")));
        }
        records.push((line, rec));
    }
    Ok(Rows { source, records })
}

impl Rows {
    fn map<T>(self, f: impl Fn(&Field) -> Result<T>) -> Result<Vec<T>> {
        self.records
            .iter()
            .map(|(line, rec)| {
                f(&Field {
                    source: &self.source,
                    line: *line,
                    rec,
                })
            })
            .collect()
    }
}

struct Field<'a> {
    source: &'a str,
    line: u64,
    rec: &'a csv::StringRecord,
}

impl Field<'_> {
    fn str(&self, i: usize) -> String {
        self.rec[i].to_string()
    }

    fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.rec[i].parse().map_err(|_| {
            Error::parse(
                self.source,
                self.line,
                format!("bad value {:?}", &self.rec[i]),
            )
        })
    }

    fn opt(&self, i: usize) -> Result<Option<f64>> {
        if &self.rec[i] == UNDEFINED {
            Ok(None)
        } else {
            self.num(i).map(Some)
        }
    }
}

impl Report {
    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSummary> {
        self.summary.iter().find(|s| s.algorithm == name)
    }

    /// Writes the manifest and every table into `dir`, creating it if needed.
    /// Solver tables are written only when present.
    pub fn emit(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join("manifest.txt");
        let mut m =
            BufWriter::new(File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?);
        for (k, v) in &self.manifest {
            writeln!(m, "{k}={v}").map_err(|e| Error::io(&manifest_path, e))?;
        }
        m.flush().map_err(|e| Error::io(&manifest_path, e))?;

        write_csv(
            dir,
            "summary.csv",
            SUMMARY_HEADER,
            self.summary
                .iter()
                .map(|s| {
                    [
                        s.algorithm.clone(),
                        s.videos.to_string(),
                        s.raw_reward.to_string(),
                        s.perfect_reward.to_string(),
                        s.normalized_reward.to_string(),
                        opt(s.true_positive_rate),
                        opt(s.true_negative_rate),
                        opt(s.mean_forecast_age),
                        s.flags.clone(),
                    ]
                })
                .collect(),
        )?;
        write_csv(
            dir,
            "learning_curve.csv",
            CURVE_HEADER,
            self.learning_curve
                .iter()
                .map(|c| {
                    [
                        c.algorithm.clone(),
                        c.instances.to_string(),
                        c.window_normalized_reward.to_string(),
                        c.cumulative_normalized_reward.to_string(),
                    ]
                })
                .collect(),
        )?;
        write_csv(
            dir,
            "confusion.csv",
            CONFUSION_HEADER,
            self.confusion
                .iter()
                .map(|c| {
                    [
                        c.algorithm.clone(),
                        c.true_status.to_string(),
                        c.predicted_status.to_string(),
                        c.count.to_string(),
                    ]
                })
                .collect(),
        )?;
        write_csv(
            dir,
            "forecast_ages.csv",
            AGES_HEADER,
            self.forecast_ages
                .iter()
                .map(|a| {
                    [
                        a.algorithm.clone(),
                        a.forecast_age.to_string(),
                        a.count.to_string(),
                    ]
                })
                .collect(),
        )?;
        write_csv(
            dir,
            "regret.csv",
            REGRET_HEADER,
            self.regret
                .iter()
                .map(|r| {
                    [
                        r.instance.to_string(),
                        r.cumulative_regret.to_string(),
                        r.cumulative_realized_regret.to_string(),
                    ]
                })
                .collect(),
        )?;
        write_csv(
            dir,
            "regret_fit.csv",
            REGRET_FIT_HEADER,
            self.regret_fit
                .iter()
                .map(|f| {
                    [
                        f.age.to_string(),
                        f.arrival.clone(),
                        f.instances.to_string(),
                        f.split_exponent.to_string(),
                        f.theoretical_exponent.to_string(),
                        opt(f.fitted_slope),
                        f.final_regret.to_string(),
                        f.fit_window_start.to_string(),
                    ]
                })
                .collect(),
        )?;
        if !self.policy.is_empty() || !self.values.is_empty() {
            write_csv(
                dir,
                "policy.csv",
                POLICY_HEADER,
                self.policy
                    .iter()
                    .map(|p| {
                        [
                            p.age.to_string(),
                            p.symbol.clone(),
                            p.probability.to_string(),
                            p.action.clone(),
                            opt(p.expected_reward),
                        ]
                    })
                    .collect(),
            )?;
            write_csv(
                dir,
                "value.csv",
                VALUE_HEADER,
                self.values
                    .iter()
                    .map(|(k, v)| [k.clone(), v.to_string()])
                    .collect(),
            )?;
        }
        Ok(())
    }

    /// Reads a report previously written by [`Report::emit`].
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let source = manifest_path.display().to_string();
        let manifest = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::parse(&source, i as u64 + 1, "expected key=value"))
            })
            .collect::<Result<_>>()?;

        let summary = read_csv(dir, "summary.csv", SUMMARY_HEADER)?.map(|f| {
            Ok(AlgorithmSummary {
                algorithm: f.str(0),
                videos: f.num(1)?,
                raw_reward: f.num(2)?,
                perfect_reward: f.num(3)?,
                normalized_reward: f.num(4)?,
                true_positive_rate: f.opt(5)?,
                true_negative_rate: f.opt(6)?,
                mean_forecast_age: f.opt(7)?,
                flags: f.str(8),
            })
        })?;
        let learning_curve = read_csv(dir, "learning_curve.csv", CURVE_HEADER)?.map(|f| {
            Ok(CurvePoint {
                algorithm: f.str(0),
                instances: f.num(1)?,
                window_normalized_reward: f.num(2)?,
                cumulative_normalized_reward: f.num(3)?,
            })
        })?;
        let confusion = read_csv(dir, "confusion.csv", CONFUSION_HEADER)?.map(|f| {
            Ok(ConfusionEntry {
                algorithm: f.str(0),
                true_status: f.num(1)?,
                predicted_status: f.num(2)?,
                count: f.num(3)?,
            })
        })?;
        let forecast_ages = read_csv(dir, "forecast_ages.csv", AGES_HEADER)?.map(|f| {
            Ok(AgeCount {
                algorithm: f.str(0),
                forecast_age: f.num(1)?,
                count: f.num(2)?,
            })
        })?;
        let regret = read_csv(dir, "regret.csv", REGRET_HEADER)?.map(|f| {
            Ok(RegretPoint {
                instance: f.num(0)?,
                cumulative_regret: f.num(1)?,
                cumulative_realized_regret: f.num(2)?,
            })
        })?;
        let regret_fit = read_csv(dir, "regret_fit.csv", REGRET_FIT_HEADER)?.map(|f| {
            Ok(RegretFit {
                age: f.num(0)?,
                arrival: f.str(1),
                instances: f.num(2)?,
                split_exponent: f.num(3)?,
                theoretical_exponent: f.num(4)?,
                fitted_slope: f.opt(5)?,
                final_regret: f.num(6)?,
                fit_window_start: f.num(7)?,
            })
        })?;
        let (policy, values) = if dir.join("policy.csv").exists() {
            let policy = read_csv(dir, "policy.csv", POLICY_HEADER)?.map(|f| {
                Ok(PolicyEntry {
                    age: f.num(0)?,
                    symbol: f.str(1),
                    probability: f.num(2)?,
                    action: f.str(3),
                    expected_reward: f.opt(4)?,
                })
            })?;
            let values =
                read_csv(dir, "value.csv", VALUE_HEADER)?.map(|f| Ok((f.str(0), f.num(1)?)))?;
            (policy, values)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Report {
            manifest,
            summary,
            learning_curve,
            confusion,
            forecast_ages,
            regret,
            regret_fit,
            policy,
            values,
        })
    }
}
