//! On-disk formats.
//!
//! * `members.csv`: `member_id,segment,insider,sources,fields`, with
//!   `;`-separated lists and `insider` in {0,1}.
//! * `signals.csv`: `member_id,period,amount,company`; an empty cell is a
//!   nulled field. An optional trailing `source` column names the record's
//!   source, which otherwise defaults to `receipts`.
//! * `prices.csv`: `period,price`.
//! * `config.txt`: flat `key=value` lines (`#` starts a comment). Pipeline
//!   keys are `tau`, `sigma_min`, `n_min`, `clip`, `eps`, `capital`,
//!   `entry_period`, `exit_period`; any other key is a segment name whose
//!   value is its target share.
//! * valuation reports: `member_id,method,value,std_error,samples,evals`.
//! * payouts: `member_id,payout`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::domain::{apply_grant_filters, DataGrant, Field, MemberDataset, MemberRecord, PriceSeries, SignalRecord, DEFAULT_SOURCE};
use crate::error::{Error, Result};
use crate::payout::Payout;
use crate::pipeline::PipelineConfig;
use crate::shapley::ValuationEstimate;
use crate::synthgen::Generated;

pub const MEMBERS_FILE: &str = "members.csv";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const CARRIERS_FILE: &str = "carriers.txt";
pub const CONFIG_FILE: &str = "config.txt";

const MEMBERS_HEADER: [&str; 5] = ["member_id", "segment", "insider", "sources", "fields"];
const SIGNALS_HEADER: [&str; 4] = ["member_id", "period", "amount", "company"];
const PRICES_HEADER: [&str; 2] = ["period", "price"];
const REPORT_HEADER: [&str; 6] = ["member_id", "method", "value", "std_error", "samples", "evals"];
const PAYOUT_HEADER: [&str; 2] = ["member_id", "payout"];

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str], optional: &[&str]) -> Result<usize> {
    let header = rdr.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = got.len() >= expected.len()
        && got.len() <= expected.len() + optional.len()
        && got[..expected.len()] == *expected
        && got[expected.len()..] == optional[..got.len() - expected.len()];
    if !ok {
        return Err(Error::parse(path, format!("expected header `{}`, found `{}`", expected.join(","), got.join(","))));
    }
    Ok(got.len())
}

fn records(path: &Path, rdr: &mut csv::Reader<fs::File>, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = i + 2;
        if row.len() != width {
            return Err(Error::parse(path, format!("line {line}: expected {width} columns, found {}", row.len())));
        }
        out.push((line, row.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(out)
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, column: &str, cell: &str) -> Result<T> {
    cell.parse()
        .map_err(|_| Error::parse(path, format!("line {line}: cannot parse {column} `{cell}`")))
}

fn optional_cell<T: std::str::FromStr>(path: &Path, line: usize, column: &str, cell: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(path, line, column, cell).map(Some)
    }
}

fn split_list(cell: &str) -> impl Iterator<Item = &str> {
    cell.split(';').map(str::trim).filter(|s| !s.is_empty())
}

/// Members as listed; volumes are zero until grant filtering recounts them.
pub fn read_members(path: &Path) -> Result<Vec<MemberRecord>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &MEMBERS_HEADER, &[])?;
    records(path, &mut rdr, MEMBERS_HEADER.len())?
        .into_iter()
        .map(|(line, row)| {
            let insider = match row[2].as_str() {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(path, format!("line {line}: insider must be 0 or 1, got `{other}`"))),
            };
            let allowed_fields = split_list(&row[4])
                .map(|f| f.parse::<Field>().map_err(|e| Error::parse(path, format!("line {line}: {e}"))))
                .collect::<Result<_>>()?;
            Ok(MemberRecord {
                member_id: row[0].clone(),
                segment: row[1].clone(),
                insider,
                grant: DataGrant {
                    allowed_sources: split_list(&row[3]).map(String::from).collect(),
                    allowed_fields,
                },
                volume: 0,
            })
        })
        .collect()
}

pub fn read_signals(path: &Path) -> Result<Vec<SignalRecord>> {
    let mut rdr = reader(path)?;
    let width = check_header(path, &mut rdr, &SIGNALS_HEADER, &["source"])?;
    records(path, &mut rdr, width)?
        .into_iter()
        .map(|(line, row)| {
            Ok(SignalRecord {
                member_id: row[0].clone(),
                period: optional_cell(path, line, "period", &row[1])?,
                amount: optional_cell(path, line, "amount", &row[2])?,
                company: Some(row[3].clone()).filter(|c| !c.is_empty()),
                source: row.get(4).filter(|s| !s.is_empty()).cloned().unwrap_or_else(|| DEFAULT_SOURCE.to_string()),
            })
        })
        .collect()
}

pub fn read_prices(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &PRICES_HEADER, &[])?;
    let mut prices = BTreeMap::new();
    for (line, row) in records(path, &mut rdr, PRICES_HEADER.len())? {
        let period: u32 = parse_cell(path, line, "period", &row[0])?;
        let price: f64 = parse_cell(path, line, "price", &row[1])?;
        if prices.insert(period, price).is_some() {
            return Err(Error::parse(path, format!("line {line}: duplicate period {period}")));
        }
    }
    Ok(prices)
}

/// Parsed `config.txt`. Pipeline settings are optional so that command-line
/// flags can fill or override them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub tau: Option<f64>,
    pub sigma_min: Option<f64>,
    pub n_min: Option<u32>,
    pub clip: Option<f64>,
    pub eps: Option<f64>,
    pub capital: Option<f64>,
    pub entry_period: Option<u32>,
    pub exit_period: Option<u32>,
    pub target_shares: BTreeMap<String, f64>,
}

impl ConfigFile {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, format!("line {lineno}: expected key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            let f = |v: &str| parse_cell::<f64>(path, lineno, key, v);
            let u = |v: &str| parse_cell::<u32>(path, lineno, key, v);
            match key {
                "tau" => cfg.tau = Some(f(value)?),
                "sigma_min" => cfg.sigma_min = Some(f(value)?),
                "n_min" => cfg.n_min = Some(u(value)?),
                "clip" => cfg.clip = Some(f(value)?),
                "eps" => cfg.eps = Some(f(value)?),
                "capital" => cfg.capital = Some(f(value)?),
                "entry_period" => cfg.entry_period = Some(u(value)?),
                "exit_period" => cfg.exit_period = Some(u(value)?),
                segment => {
                    if cfg.target_shares.insert(segment.to_string(), f(value)?).is_some() {
                        return Err(Error::parse(path, format!("line {lineno}: segment `{segment}` repeated")));
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ConfigFile::parse(path, &text)
    }

    /// Pipeline settings with defaults for anything unset.
    pub fn pipeline(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            tau: self.tau.unwrap_or(d.tau),
            sigma_min: self.sigma_min.unwrap_or(d.sigma_min),
            n_min: self.n_min.unwrap_or(d.n_min),
            clip: self.clip.unwrap_or(d.clip),
            eps: self.eps.unwrap_or(d.eps),
            capital: self.capital.unwrap_or(d.capital),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push_str(&format!("{k}={v}\n"));
            }
        };
        line("entry_period", self.entry_period.map(|v| v.to_string()));
        line("exit_period", self.exit_period.map(|v| v.to_string()));
        line("tau", self.tau.map(|v| v.to_string()));
        line("sigma_min", self.sigma_min.map(|v| v.to_string()));
        line("n_min", self.n_min.map(|v| v.to_string()));
        line("clip", self.clip.map(|v| v.to_string()));
        line("eps", self.eps.map(|v| v.to_string()));
        line("capital", self.capital.map(|v| v.to_string()));
        for (segment, share) in &self.target_shares {
            line(segment, Some(share.to_string()));
        }
        out
    }
}

/// Assemble a dataset from a data directory: members and raw signals are
/// read, grants applied, prices attached.
pub fn load_dataset(data_dir: &Path, config: &ConfigFile) -> Result<MemberDataset> {
    let config_path = data_dir.join(CONFIG_FILE);
    let entry_period = config
        .entry_period
        .ok_or_else(|| Error::parse(&config_path, "entry_period is not set"))?;
    let exit_period = config
        .exit_period
        .ok_or_else(|| Error::parse(&config_path, "exit_period is not set"))?;
    let members = read_members(&data_dir.join(MEMBERS_FILE))?;
    let raw = read_signals(&data_dir.join(SIGNALS_FILE))?;
    let prices = read_prices(&data_dir.join(PRICES_FILE))?;
    let filtered = apply_grant_filters(&raw, &members)?;
    Ok(MemberDataset {
        members: filtered.members,
        records: filtered.records,
        prices: PriceSeries {
            entry_period,
            exit_period,
            prices,
        },
        target_shares: config.target_shares.clone(),
    })
}

fn writer_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(writer_error(path))?;
    w.write_record(header).map_err(writer_error(path))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(writer_error(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_members(path: &Path, members: &[MemberRecord]) -> Result<()> {
    write_rows(
        path,
        &MEMBERS_HEADER,
        members.iter().map(|m| {
            [
                m.member_id.clone(),
                m.segment.clone(),
                if m.insider { "1" } else { "0" }.to_string(),
                join(&m.grant.allowed_sources),
                join(&m.grant.allowed_fields),
            ]
        }),
    )
}

pub fn write_signals(path: &Path, records: &[SignalRecord]) -> Result<()> {
    let with_source = records.iter().any(|r| r.source != DEFAULT_SOURCE);
    let mut header = SIGNALS_HEADER.to_vec();
    if with_source {
        header.push("source");
    }
    write_rows(
        path,
        &header,
        records.iter().map(|r| {
            let mut row = vec![
                r.member_id.clone(),
                r.period.map(|p| p.to_string()).unwrap_or_default(),
                r.amount.map(|a| a.to_string()).unwrap_or_default(),
                r.company.clone().unwrap_or_default(),
            ];
            if with_source {
                row.push(r.source.clone());
            }
            row
        }),
    )
}

pub fn write_prices(path: &Path, prices: &PriceSeries) -> Result<()> {
    write_rows(
        path,
        &PRICES_HEADER,
        prices.prices.iter().map(|(p, v)| [p.to_string(), v.to_string()]),
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a generated dataset into `dir`, returning the files written.
pub fn write_generated(dir: &Path, generated: &Generated, pipeline: &PipelineConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let ds = &generated.dataset;
    let paths: Vec<PathBuf> = [MEMBERS_FILE, SIGNALS_FILE, PRICES_FILE, CARRIERS_FILE, CONFIG_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_members(&paths[0], &ds.members)?;
    write_signals(&paths[1], &ds.records)?;
    write_prices(&paths[2], &ds.prices)?;
    let carriers: String = generated.carriers.iter().map(|c| format!("{c}\n")).collect();
    write_text(&paths[3], &carriers)?;
    let config = ConfigFile {
        tau: Some(pipeline.tau),
        sigma_min: Some(pipeline.sigma_min),
        n_min: Some(pipeline.n_min),
        clip: Some(pipeline.clip),
        eps: Some(pipeline.eps),
        capital: Some(pipeline.capital),
        entry_period: Some(ds.prices.entry_period),
        exit_period: Some(ds.prices.exit_period),
        target_shares: ds.target_shares.clone(),
    };
    write_text(&paths[4], &config.render())?;
    Ok(paths)
}

pub fn read_carriers(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn render_report(estimates: &[ValuationEstimate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for e in estimates {
        w.write_record([
            e.member_id.clone(),
            e.method.to_string(),
            e.value.to_string(),
            e.std_error.to_string(),
            e.samples.to_string(),
            e.evals.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn read_report(path: &Path) -> Result<Vec<ValuationEstimate>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &REPORT_HEADER, &[])?;
    records(path, &mut rdr, REPORT_HEADER.len())?
        .into_iter()
        .map(|(line, row)| {
            Ok(ValuationEstimate {
                member_id: row[0].clone(),
                method: row[1]
                    .parse()
                    .map_err(|e: String| Error::parse(path, format!("line {line}: {e}")))?,
                value: parse_cell(path, line, "value", &row[2])?,
                std_error: parse_cell(path, line, "std_error", &row[3])?,
                samples: parse_cell(path, line, "samples", &row[4])?,
                evals: parse_cell(path, line, "evals", &row[5])?,
            })
        })
        .collect()
}

pub fn render_payouts(payouts: &[Payout]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PAYOUT_HEADER).expect("in-memory write");
    for p in payouts {
        w.write_record([p.member_id.clone(), p.payout.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
