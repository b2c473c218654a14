//! Flight corpora: `eval-model` and `fit-baseline`.
//!
//! A corpus directory either has a `manifest.csv` (`file,split[,route]`,
//! paths relative to the directory) or one subdirectory per split holding
//! flight CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use uavrisk::flight::ProcessedFlight;
use uavrisk::metrics::{adjusted_re, SegmentConfig};
use uavrisk::power::{fit_analytical, PowerModel};
use uavrisk::{Error, Result};

use crate::output::OutDir;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    pub split: String,
    pub route: Option<String>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

fn read_manifest(dir: &Path, manifest: &Path) -> Result<Vec<CorpusEntry>> {
    let text = std::fs::read_to_string(manifest).map_err(io(manifest))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Load {
            path: manifest.into(),
            message: "empty manifest".into(),
        })?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(fc), Some(sc)) = (col("file"), col("split")) else {
        return Err(Error::Load {
            path: manifest.into(),
            message: "manifest header needs `file` and `split` columns".into(),
        });
    };
    let rc = col("route");
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| {
            cells.get(c).copied().ok_or_else(|| Error::Load {
                path: manifest.into(),
                message: format!("row {} has {} columns", i + 2, cells.len()),
            })
        };
        let file = get(fc)?;
        out.push(CorpusEntry {
            id: Path::new(file).file_stem().map_or(file.into(), |s| s.to_string_lossy().into_owned()),
            path: dir.join(file),
            split: get(sc)?.to_string(),
            route: rc.and_then(|c| cells.get(c)).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Lists the corpus, sorted by split then id.
pub fn scan_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    if !dir.is_dir() {
        return Err(Error::Load {
            path: dir.into(),
            message: "corpus directory not found".into(),
        });
    }
    let manifest = dir.join("manifest.csv");
    let mut entries = if manifest.is_file() {
        read_manifest(dir, &manifest)?
    } else {
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        let mut out = Vec::new();
        for sub in subdirs {
            let split = sub.file_name().unwrap().to_string_lossy().into_owned();
            for path in csv_files(&sub)? {
                out.push(CorpusEntry {
                    id: path.file_stem().unwrap().to_string_lossy().into_owned(),
                    path,
                    split: split.clone(),
                    route: None,
                });
            }
        }
        out
    };
    if entries.is_empty() {
        return Err(Error::Input(format!("corpus {} contains no flights", dir.display())));
    }
    entries.sort_by(|a, b| (&a.split, &a.id).cmp(&(&b.split, &b.id)));
    Ok(entries)
}

/// Where predictions come from.
pub enum Predictor {
    Model(Box<dyn PowerModel>),
    /// Predictions equal the measured power.
    Oracle,
}

impl Predictor {
    fn describe(&self) -> String {
        match self {
            Predictor::Model(m) => m.describe(),
            Predictor::Oracle => "oracle (measured power)".into(),
        }
    }

    fn predict(&self, flight: &ProcessedFlight, path: &Path) -> Result<Vec<f64>> {
        match self {
            Predictor::Oracle => Ok(flight.measured_power.clone()),
            Predictor::Model(m) => {
                if let Some(p) = m.sample_period() {
                    if (p - flight.sample_period).abs() > 1e-9 {
                        return Err(Error::Load {
                            path: path.into(),
                            message: format!(
                                "flight sample period {} s does not match model sample period {p} s",
                                flight.sample_period
                            ),
                        });
                    }
                }
                Ok(m.predict_series(&flight.frames, &flight.context))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlightRow {
    pub flight_id: String,
    pub split: String,
    pub route: Option<String>,
    pub mape: f64,
    pub re: f64,
    pub sections: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupMean {
    pub flights: usize,
    pub mape: f64,
    pub re: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub model: String,
    pub segmentation: SegmentConfig,
    /// Means per split label, plus `random` for random-route flights.
    pub groups: BTreeMap<String, GroupMean>,
    pub overall: GroupMean,
    pub best_by_mape: String,
    pub worst_by_mape: String,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a FlightRow>) -> Option<GroupMean> {
    let (mut n, mut m, mut r) = (0usize, 0.0, 0.0);
    for row in rows {
        n += 1;
        m += row.mape;
        r += row.re;
    }
    (n > 0).then(|| GroupMean {
        flights: n,
        mape: m / n as f64,
        re: r / n as f64,
    })
}

pub fn evaluate(entries: &[CorpusEntry], predictor: &Predictor, seg: &SegmentConfig) -> Result<(Vec<FlightRow>, EvalSummary)> {
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let flight = ProcessedFlight::load(&e.path)?;
        let pred = predictor.predict(&flight, &e.path)?;
        let ev = adjusted_re(&flight, &pred, seg).map_err(|err| Error::Load {
            path: e.path.clone(),
            message: err.to_string(),
        })?;
        rows.push(FlightRow {
            flight_id: e.id.clone(),
            split: e.split.clone(),
            route: e.route.clone(),
            mape: ev.mape_percent,
            re: ev.re_percent,
            sections: ev.section_count,
        });
    }
    let mut groups = BTreeMap::new();
    let labels: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.split.as_str()).collect();
    for l in labels {
        if let Some(g) = mean_of(rows.iter().filter(|r| r.split == l)) {
            groups.insert(l.to_string(), g);
        }
    }
    if let Some(g) = mean_of(rows.iter().filter(|r| r.route.as_deref() == Some("random"))) {
        groups.insert("random".into(), g);
    }
    let cmp = |a: &&FlightRow, b: &&FlightRow| a.mape.total_cmp(&b.mape).then_with(|| a.flight_id.cmp(&b.flight_id));
    let best = rows.iter().min_by(cmp).expect("non-empty corpus");
    let worst = rows.iter().max_by(cmp).expect("non-empty corpus");
    let summary = EvalSummary {
        model: predictor.describe(),
        segmentation: *seg,
        overall: mean_of(rows.iter()).expect("non-empty corpus"),
        best_by_mape: best.flight_id.clone(),
        worst_by_mape: worst.flight_id.clone(),
        groups,
    };
    Ok((rows, summary))
}

pub fn eval_model(corpus: &Path, predictor: Predictor, seg: SegmentConfig, out: &Path) -> Result<()> {
    let entries = scan_corpus(corpus)?;
    let (rows, summary) = evaluate(&entries, &predictor, &seg)?;
    let hash = uavrisk::sha256_hex(
        serde_json::json!({
            "corpus": entries.iter().map(|e| e.path.display().to_string()).collect::<Vec<_>>(),
            "model": summary.model,
            "segmentation": seg,
        })
        .to_string()
        .as_bytes(),
    );
    let mut dir = OutDir::create(out, &hash, 0)?;
    let mut body = String::from("flight_id,split,route,mape,re,sections\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.flight_id,
            r.split,
            r.route.as_deref().unwrap_or(""),
            r.mape,
            r.re,
            r.sections
        ));
    }
    dir.csv("evaluation.csv", &body)?;
    dir.json("summary.json", &summary)?;
    dir.finish("eval-model")?;

    println!("model: {}", summary.model);
    println!("{:<10} {:>7} {:>9} {:>9}", "group", "flights", "MAPE %", "RE %");
    for (k, g) in &summary.groups {
        println!("{k:<10} {:>7} {:>9.3} {:>9.3}", g.flights, g.mape, g.re);
    }
    println!("best by MAPE: {}, worst: {}", summary.best_by_mape, summary.worst_by_mape);
    Ok(())
}

pub fn fit_baseline(corpus: &Path, split: Option<&str>, out: &Path) -> Result<()> {
    let entries: Vec<CorpusEntry> = scan_corpus(corpus)?
        .into_iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    if entries.is_empty() {
        return Err(Error::Input(format!("no flights in split {:?}", split.unwrap_or(""))));
    }
    let flights = entries
        .iter()
        .map(|e| ProcessedFlight::load(&e.path))
        .collect::<Result<Vec<_>>>()?;
    let coeffs = fit_analytical(&flights)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(out, coeffs.to_json_string()).map_err(io(out))?;
    println!("fitted on {} flights: beta = {:?}", flights.len(), coeffs.beta);
    Ok(())
}
