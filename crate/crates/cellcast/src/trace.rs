//! Trace data model: feature schemas, CSV ingestion, contiguous time splits,
//! normalization and sliding-window datasets.
//!
//! A [`Trace`] is one trip/route recording: a fixed [`FeatureSchema`] plus a
//! column-major block of per-second values. Categorical columns are stored as
//! integer codes in first-appearance order; the code maps travel with the
//! trace so files round-trip exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serial;

pub const TRACE_FORMAT: &str = "cellcast/trace";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub unit: String,
}

impl ColumnSpec {
    fn new(name: &str, kind: ColumnKind, unit: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            unit: unit.to_string(),
        }
    }
}

/// How a schema column is derived when the raw file does not carry it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum DeriveRule {
    /// 1 whenever the named source column differs from the previous second.
    ChangeIndicator { source: String },
}

/// Ordered feature columns for one trace family, with the prediction target
/// and optional access-mode metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureSchema {
    pub name: String,
    /// Model-facing feature columns (the target is one of them).
    pub columns: Vec<ColumnSpec>,
    pub target: String,
    /// Columns carried through ingestion for downstream tasks but not fed to
    /// bandwidth predictors (e.g. raw cell identifiers).
    pub aux_columns: Vec<ColumnSpec>,
    /// Column whose value determines the access-mode flag m(t).
    pub mode_column: Option<String>,
    /// Raw labels of `mode_column` that mean "5G access".
    pub mode_positive: Vec<String>,
    /// Fallback derivations for schema columns missing from a file.
    pub derived: Vec<(String, DeriveRule)>,
}

impl FeatureSchema {
    pub fn new(name: &str, columns: Vec<ColumnSpec>, target: &str) -> Result<Self> {
        let schema = FeatureSchema {
            name: name.to_string(),
            columns,
            target: target.to_string(),
            aux_columns: Vec::new(),
            mode_column: None,
            mode_positive: Vec::new(),
            derived: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for col in self.columns.iter().chain(&self.aux_columns) {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::config(format!("duplicate column `{}`", col.name)));
            }
        }
        match self.columns.iter().find(|c| c.name == self.target) {
            None => Err(Error::config(format!(
                "target column `{}` not in schema",
                self.target
            ))),
            Some(c) if c.kind != ColumnKind::Continuous => Err(Error::config(format!(
                "target column `{}` must be continuous",
                self.target
            ))),
            Some(_) => Ok(()),
        }
    }

    /// The 8-feature LTE trace schema: download bandwidth plus channel and
    /// context measurements recorded once per second.
    pub fn lte8() -> Self {
        use ColumnKind::*;
        FeatureSchema {
            name: "LTE-8".to_string(),
            columns: vec![
                ColumnSpec::new("BW", Continuous, "Mbps"),
                ColumnSpec::new("LTE-neighbors", Continuous, "count"),
                ColumnSpec::new("RSSI", Continuous, "dBm"),
                ColumnSpec::new("RSRQ", Continuous, "dB"),
                ColumnSpec::new("Echng", Binary, "flag"),
                ColumnSpec::new("TA", Continuous, "ts"),
                ColumnSpec::new("Speed", Continuous, "m/s"),
                ColumnSpec::new("Band", Categorical, "code"),
            ],
            target: "BW".to_string(),
            aux_columns: Vec::new(),
            mode_column: None,
            mode_positive: Vec::new(),
            derived: Vec::new(),
        }
    }

    /// The 12-feature 5G trace schema (mixed 5G/LTE access). The raw cell
    /// identifier is kept as an auxiliary column; the `Cell-handoff`
    /// indicator is derived from it when a file does not carry it.
    pub fn fiveg12() -> Self {
        use ColumnKind::*;
        FeatureSchema {
            name: "5G-12".to_string(),
            columns: vec![
                ColumnSpec::new("DL", Continuous, "Mbps"),
                ColumnSpec::new("UL", Continuous, "Mbps"),
                ColumnSpec::new("RSSI", Continuous, "dBm"),
                ColumnSpec::new("RSRQ", Continuous, "dB"),
                ColumnSpec::new("RSRP", Continuous, "dBm"),
                ColumnSpec::new("NRxSRP", Continuous, "dBm"),
                ColumnSpec::new("NRxSRQ", Continuous, "dB"),
                ColumnSpec::new("SNR", Continuous, "dB"),
                ColumnSpec::new("CQI", Continuous, "index"),
                ColumnSpec::new("NetworkMode", Categorical, "mode"),
                ColumnSpec::new("Cell-handoff", Binary, "flag"),
                ColumnSpec::new("Speed", Continuous, "m/s"),
            ],
            target: "DL".to_string(),
            aux_columns: vec![ColumnSpec::new("CellID", Categorical, "id")],
            mode_column: Some("NetworkMode".to_string()),
            mode_positive: vec!["5G".into(), "NR".into(), "NR NSA".into(), "NR SA".into()],
            derived: vec![(
                "Cell-handoff".to_string(),
                DeriveRule::ChangeIndicator {
                    source: "CellID".to_string(),
                },
            )],
        }
    }

    /// Builds a schema by short name (`lte8` or `5g12`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lte8" | "lte-8" => Ok(Self::lte8()),
            "5g12" | "5g-12" | "fiveg12" => Ok(Self::fiveg12()),
            other => Err(Error::config(format!("unknown schema `{other}`"))),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> usize {
        self.column_index(&self.target).expect("validated schema")
    }
}

/// One per-second measurement row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since trace start.
    pub t: i64,
    /// Values in schema column order (categoricals as integer codes).
    pub values: Vec<f64>,
    /// Access-mode flag m(t): 1 when the device uses 5G.
    pub mode: Option<u8>,
}

/// Timestamped multivariate sample sequence for one trip/route.
///
/// Stored column-major in memory; serialized as a row-major sample array
/// (each row is the schema columns followed by any auxiliary columns).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(into = "TraceFile", try_from = "TraceFile")]
pub struct Trace {
    pub schema: FeatureSchema,
    pub route_id: String,
    /// Sampling period in seconds.
    pub period: i64,
    /// Timestamp of the first sample.
    pub t0: i64,
    /// Column-major feature values, aligned with `schema.columns`.
    columns: Vec<Vec<f64>>,
    /// Auxiliary columns present in this trace, aligned with `aux_names`.
    aux_names: Vec<String>,
    aux: Vec<Vec<f64>>,
    /// Access-mode flag per second, when the schema defines one.
    mode: Option<Vec<u8>>,
    /// Raw labels per categorical column; the code is the position.
    pub code_maps: BTreeMap<String, Vec<String>>,
    pub warnings: Vec<String>,
}

/// On-disk shape of a trace: row-major samples under a column-name header.
#[derive(Serialize, Deserialize)]
struct TraceFile {
    schema: FeatureSchema,
    route_id: String,
    period: i64,
    t0: i64,
    code_maps: BTreeMap<String, Vec<String>>,
    warnings: Vec<String>,
    aux_names: Vec<String>,
    mode: Option<Vec<u8>>,
    /// Schema columns then aux columns, one entry per sample.
    rows: Vec<Vec<f64>>,
}

impl From<Trace> for TraceFile {
    fn from(trace: Trace) -> Self {
        let len = trace.len();
        let mut rows = Vec::with_capacity(len);
        for t in 0..len {
            let mut row = Vec::with_capacity(trace.columns.len() + trace.aux.len());
            for col in &trace.columns {
                row.push(col[t]);
            }
            for col in &trace.aux {
                row.push(col[t]);
            }
            rows.push(row);
        }
        TraceFile {
            schema: trace.schema,
            route_id: trace.route_id,
            period: trace.period,
            t0: trace.t0,
            code_maps: trace.code_maps,
            warnings: trace.warnings,
            aux_names: trace.aux_names,
            mode: trace.mode,
            rows,
        }
    }
}

impl TryFrom<TraceFile> for Trace {
    type Error = Error;

    fn try_from(file: TraceFile) -> Result<Self> {
        file.schema.validate()?;
        let n = file.schema.columns.len();
        let n_aux = file.aux_names.len();
        let len = file.rows.len();
        if len == 0 {
            return Err(Error::empty("trace file has no samples"));
        }
        let mut columns = vec![Vec::with_capacity(len); n];
        let mut aux = vec![Vec::with_capacity(len); n_aux];
        for (t, row) in file.rows.iter().enumerate() {
            if row.len() != n + n_aux {
                return Err(Error::shape(format!(
                    "sample {t} has {} values, expected {}",
                    row.len(),
                    n + n_aux
                )));
            }
            for (c, &v) in row[..n].iter().enumerate() {
                columns[c].push(v);
            }
            for (a, &v) in row[n..].iter().enumerate() {
                aux[a].push(v);
            }
        }
        if let Some(m) = &file.mode {
            if m.len() != len {
                return Err(Error::shape("mode flags length mismatch".to_string()));
            }
        }
        Ok(Trace {
            schema: file.schema,
            route_id: file.route_id,
            period: file.period,
            t0: file.t0,
            columns,
            aux_names: file.aux_names,
            aux,
            mode: file.mode,
            code_maps: file.code_maps,
            warnings: file.warnings,
        })
    }
}

impl Trace {
    pub fn from_columns(
        schema: FeatureSchema,
        route_id: &str,
        columns: Vec<Vec<f64>>,
        mode: Option<Vec<u8>>,
        code_maps: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(Error::shape(format!(
                "{} columns supplied for schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        let len = columns.first().map_or(0, Vec::len);
        if len == 0 {
            return Err(Error::empty("trace must contain at least one sample"));
        }
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::shape("ragged trace columns".to_string()));
        }
        if let Some(m) = &mode {
            if m.len() != len {
                return Err(Error::shape("mode flags length mismatch".to_string()));
            }
        }
        Ok(Trace {
            schema,
            route_id: route_id.to_string(),
            period: 1,
            t0: 0,
            columns,
            aux_names: Vec::new(),
            aux: Vec::new(),
            mode,
            code_maps,
            warnings: Vec::new(),
        })
    }

    pub fn with_aux(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::shape("aux column length mismatch".to_string()));
        }
        self.aux_names.push(name.to_string());
        self.aux.push(values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.schema.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.schema
            .column_index(name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn aux_column(&self, name: &str) -> Option<&[f64]> {
        self.aux_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.aux[i].as_slice())
    }

    /// The target (bandwidth) column.
    pub fn bandwidth(&self) -> &[f64] {
        &self.columns[self.schema.target_index()]
    }

    pub fn mode_flags(&self) -> Option<&[u8]> {
        self.mode.as_deref()
    }

    pub fn sample(&self, t: usize) -> Sample {
        Sample {
            t: self.t0 + t as i64 * self.period,
            values: self.columns.iter().map(|c| c[t]).collect(),
            mode: self.mode.as_ref().map(|m| m[t]),
        }
    }

    /// Feature row at index `t`, in schema column order.
    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    /// Contiguous sub-trace covering `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Trace {
        assert!(start < end && end <= self.len());
        Trace {
            schema: self.schema.clone(),
            route_id: self.route_id.clone(),
            period: self.period,
            t0: self.t0 + start as i64 * self.period,
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
            aux_names: self.aux_names.clone(),
            aux: self.aux.iter().map(|c| c[start..end].to_vec()).collect(),
            mode: self.mode.as_ref().map(|m| m[start..end].to_vec()),
            code_maps: self.code_maps.clone(),
            warnings: Vec::new(),
        }
    }

    /// Splits the trace into contiguous train/validation/test segments.
    /// Train and validation get `floor(ratio * len)` samples; the remainder
    /// goes to test so evaluation data is never silently shrunk.
    pub fn split(&self, spec: &SplitSpec) -> Result<(Trace, Trace, Trace)> {
        spec.validate()?;
        let n = self.len();
        if n < 10 {
            return Err(Error::invalid(format!(
                "trace length {n} too short to split (need >= 10)"
            )));
        }
        let n_train = (spec.train * n as f64).floor() as usize;
        let n_val = (spec.validation * n as f64).floor() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::config(format!(
                "split {spec:?} leaves an empty segment for length {n}"
            )));
        }
        Ok((
            self.slice(0, n_train),
            self.slice(n_train, n_train + n_val),
            self.slice(n_train + n_val, n),
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serial::save(path, TRACE_FORMAT, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let trace: Trace = serial::load(path, TRACE_FORMAT)?;
        trace.schema.validate()?;
        Ok(trace)
    }

    pub fn to_json(&self) -> Result<String> {
        serial::to_string(TRACE_FORMAT, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serial::from_str(text, TRACE_FORMAT)
    }
}

/// Contiguous-by-time train/validation/test ratios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            validation: 0.1,
            test: 0.3,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        SplitSpec {
            train,
            validation,
            test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.train, self.validation, self.test] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("split ratio {r} outside [0,1]")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Per-column normalization statistics, computed on the training split only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose std was 0 and replaced by 1.
    pub constant: Vec<bool>,
}

impl NormStats {
    pub fn compute(trace: &Trace) -> Self {
        let n = trace.len() as f64;
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut constant = Vec::new();
        for i in 0..trace.n_features() {
            let col = trace.column_at(i);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let s = var.sqrt();
            constant.push(s == 0.0);
            mean.push(m);
            // A zero std would divide out to NaN; constant columns normalize to 0.
            std.push(if s == 0.0 { 1.0 } else { s });
        }
        NormStats {
            columns: trace.schema.feature_names(),
            mean,
            std,
            constant,
        }
    }

    pub fn normalize(&self, column: usize, raw: f64) -> f64 {
        (raw - self.mean[column]) / self.std[column]
    }

    pub fn denormalize(&self, column: usize, normalized: f64) -> f64 {
        normalized * self.std[column] + self.mean[column]
    }
}

/// Sliding (input window, target) pairs over one contiguous trace segment.
///
/// Raw rows are stored once; window `i` is the row block `[i, i+w)` and its
/// target is the raw bandwidth at `i + w - 1 + horizon`. Inputs are
/// normalized on access with the stored statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub w: usize,
    pub horizon: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub stats: NormStats,
    target_col: usize,
    rows: Vec<f64>,
    t_len: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.t_len + 1 - self.w - self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw (unnormalized) w-by-n window, row-major.
    pub fn input_raw(&self, item: usize) -> &[f64] {
        let n = self.n_features;
        &self.rows[item * n..(item + self.w) * n]
    }

    /// Normalized w-by-n window, row-major.
    pub fn input_normalized(&self, item: usize) -> Vec<f64> {
        let mut out = self.input_raw(item).to_vec();
        self.normalize_in_place(&mut out);
        out
    }

    pub fn normalize_in_place(&self, window: &mut [f64]) {
        let n = self.n_features;
        for row in window.chunks_mut(n) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.stats.normalize(c, *v);
            }
        }
    }

    /// Raw target b(t + horizon) for the window ending at t.
    pub fn target(&self, item: usize) -> f64 {
        let t = item + self.w - 1 + self.horizon;
        self.rows[t * self.n_features + self.target_col]
    }

    /// Raw bandwidth at the last row of the window (b(t)).
    pub fn last_row_bandwidth(&self, item: usize) -> f64 {
        let t = item + self.w - 1;
        self.rows[t * self.n_features + self.target_col]
    }

    pub fn targets(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.target(i)).collect()
    }

    pub fn target_column(&self) -> usize {
        self.target_col
    }
}

/// Builds the sliding-window dataset for `(w, horizon)`. When `stats` is
/// `None` they are computed from this trace; pass the training statistics
/// when windowing validation or test segments.
pub fn make_windows(
    trace: &Trace,
    w: usize,
    horizon: usize,
    stats: Option<NormStats>,
) -> Result<WindowedDataset> {
    if w < 1 || horizon < 1 {
        return Err(Error::config(format!(
            "window {w} and horizon {horizon} must be >= 1"
        )));
    }
    let t_len = trace.len();
    if t_len < w + horizon {
        return Err(Error::empty(format!(
            "trace length {t_len} too short for window {w} + horizon {horizon}"
        )));
    }
    let stats = stats.unwrap_or_else(|| NormStats::compute(trace));
    if stats.columns != trace.schema.feature_names() {
        return Err(Error::shape(
            "normalization stats do not match the trace schema".to_string(),
        ));
    }
    let n = trace.n_features();
    let mut rows = vec![0.0; t_len * n];
    for c in 0..n {
        let col = trace.column_at(c);
        for (t, &v) in col.iter().enumerate() {
            rows[t * n + c] = v;
        }
    }
    Ok(WindowedDataset {
        w,
        horizon,
        n_features: n,
        feature_names: trace.schema.feature_names(),
        stats,
        target_col: trace.schema.target_index(),
        rows,
        t_len,
    })
}

const MISSING_TOKENS: [&str; 7] = ["", "na", "nan", "null", "-", "n/a", "none"];

fn is_missing(token: &str) -> bool {
    MISSING_TOKENS.contains(&token.trim().to_ascii_lowercase().as_str())
}

/// Ingests a CSV file under the given schema.
///
/// The header must contain every schema column (extra columns are ignored);
/// an integer `ts` column is used as the timestamp when present, otherwise
/// the row index is. Missing cells are forward-filled from the last valid
/// value (leading gaps become 0), timestamp gaps are filled by repeating the
/// previous row, and categorical tokens are coded in first-appearance order.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Trace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let route_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_string());
    ingest_csv_text(&text, schema, &route_id)
}

pub fn ingest_csv_text(text: &str, schema: &FeatureSchema, route_id: &str) -> Result<Trace> {
    schema.validate()?;
    if text.trim().is_empty() {
        return Err(Error::empty("csv file has no content"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    let col_pos = |name: &str| headers.iter().position(|h| h == name);

    // Resolve every schema and aux column; schema columns may fall back to a
    // derivation rule, aux columns are optional.
    let mut specs: Vec<(ColumnSpec, Option<usize>, bool)> = Vec::new();
    for spec in &schema.columns {
        match col_pos(&spec.name) {
            Some(p) => specs.push((spec.clone(), Some(p), false)),
            None => {
                let rule = schema.derived.iter().find(|(n, _)| *n == spec.name);
                match rule {
                    Some((_, DeriveRule::ChangeIndicator { source })) if col_pos(source).is_some() => {
                        specs.push((spec.clone(), None, false));
                    }
                    _ => return Err(Error::MissingColumn(spec.name.clone())),
                }
            }
        }
    }
    let mut aux_present: Vec<(ColumnSpec, usize)> = Vec::new();
    for spec in &schema.aux_columns {
        if let Some(p) = col_pos(&spec.name) {
            aux_present.push((spec.clone(), p));
        }
    }
    let ts_pos = col_pos("ts");
    let mode_pos = schema.mode_column.as_deref().and_then(col_pos);

    let mut code_maps: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let n_cols = specs.len();
    let n_aux = aux_present.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_cols];
    let mut aux: Vec<Vec<f64>> = vec![Vec::new(); n_aux];
    let mut mode: Vec<u8> = Vec::new();
    let mut last_valid: Vec<Option<f64>> = vec![None; n_cols + n_aux];
    let mut last_mode: Option<u8> = None;
    let mut last_ts: Option<i64> = None;
    let mut t0 = 0i64;
    let mut filled_cells = 0usize;
    let mut inserted_rows = 0usize;
    let mut clamped_bw = 0usize;
    let target_idx = schema.target_index();

    let encode = |maps: &mut BTreeMap<String, Vec<String>>, column: &str, token: &str| -> f64 {
        let labels = maps.entry(column.to_string()).or_default();
        match labels.iter().position(|l| l == token) {
            Some(code) => code as f64,
            None => {
                labels.push(token.to_string());
                (labels.len() - 1) as f64
            }
        }
    };

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 2; // 1-based, counting the header line

        // Timestamp handling: strictly increasing; gaps repeat the last row.
        if let Some(p) = ts_pos {
            let raw = record.get(p).unwrap_or("");
            let ts: i64 = raw.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: "ts".to_string(),
                value: raw.to_string(),
            })?;
            match last_ts {
                None => t0 = ts,
                Some(prev) => {
                    if ts <= prev {
                        return Err(Error::invalid(format!(
                            "row {row_no}: timestamp {ts} not after {prev}"
                        )));
                    }
                    for _ in 1..(ts - prev) {
                        for (c, col) in columns.iter_mut().enumerate() {
                            col.push(last_valid[c].unwrap_or(0.0));
                        }
                        for (a, col) in aux.iter_mut().enumerate() {
                            col.push(last_valid[n_cols + a].unwrap_or(0.0));
                        }
                        if mode_pos.is_some() {
                            mode.push(last_mode.unwrap_or(0));
                        }
                        inserted_rows += 1;
                    }
                }
            }
            last_ts = Some(ts);
        }

        // Mode flag from the raw token, before categorical coding.
        if let Some(p) = mode_pos {
            let raw = record.get(p).unwrap_or("");
            let m = if is_missing(raw) {
                last_mode.unwrap_or(0)
            } else if schema
                .mode_positive
                .iter()
                .any(|l| l.eq_ignore_ascii_case(raw.trim()))
            {
                1
            } else if let Ok(v) = raw.trim().parse::<f64>() {
                u8::from(v != 0.0)
            } else {
                0
            };
            mode.push(m);
            last_mode = Some(m);
        }

        for (c, (spec, pos, _)) in specs.iter().enumerate() {
            let value = match pos {
                Some(p) => {
                    let raw = record.get(*p).unwrap_or("");
                    if is_missing(raw) {
                        filled_cells += 1;
                        last_valid[c].unwrap_or(0.0)
                    } else {
                        match spec.kind {
                            ColumnKind::Categorical => encode(&mut code_maps, &spec.name, raw.trim()),
                            _ => raw.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(
                                || Error::Parse {
                                    row: row_no,
                                    column: spec.name.clone(),
                                    value: raw.to_string(),
                                },
                            )?,
                        }
                    }
                }
                None => 0.0, // derived below, once source columns are ingested
            };
            let value = if c == target_idx && value < 0.0 {
                clamped_bw += 1;
                0.0
            } else {
                value
            };
            last_valid[c] = Some(value);
            columns[c].push(value);
        }

        for (a, (spec, p)) in aux_present.iter().enumerate() {
            let raw = record.get(*p).unwrap_or("");
            let value = if is_missing(raw) {
                filled_cells += 1;
                last_valid[n_cols + a].unwrap_or(0.0)
            } else {
                match spec.kind {
                    ColumnKind::Categorical => encode(&mut code_maps, &spec.name, raw.trim()),
                    _ => raw.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::Parse {
                            row: row_no,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        }
                    })?,
                }
            };
            last_valid[n_cols + a] = Some(value);
            aux[a].push(value);
        }
    }

    if columns.first().map_or(0, Vec::len) == 0 {
        return Err(Error::empty("csv file has a header but no data rows"));
    }

    // Fill derived indicator columns now that their sources are complete.
    for (c, (spec, pos, _)) in specs.iter().enumerate() {
        if pos.is_some() {
            continue;
        }
        if let Some((_, DeriveRule::ChangeIndicator { source })) =
            schema.derived.iter().find(|(n, _)| *n == spec.name)
        {
            let src = aux_present
                .iter()
                .position(|(s, _)| s.name == *source)
                .map(|a| aux[a].clone())
                .or_else(|| {
                    specs
                        .iter()
                        .position(|(s, _, _)| s.name == *source)
                        .map(|i| columns[i].clone())
                })
                .ok_or_else(|| Error::MissingColumn(source.clone()))?;
            let len = src.len();
            let mut flags = vec![0.0; len];
            for t in 1..len {
                flags[t] = f64::from(src[t] != src[t - 1]);
            }
            columns[c] = flags;
            warnings.push(format!("derived `{}` from changes of `{source}`", spec.name));
        }
    }

    if filled_cells > 0 {
        warnings.push(format!("forward-filled {filled_cells} missing cells"));
    }
    if inserted_rows > 0 {
        warnings.push(format!("filled {inserted_rows} timestamp gaps"));
    }
    if clamped_bw > 0 {
        warnings.push(format!("clamped {clamped_bw} negative bandwidth values to 0"));
    }

    let mode = if mode_pos.is_some() { Some(mode) } else { None };
    let mut trace = Trace::from_columns(schema.clone(), route_id, columns, mode, code_maps)?;
    trace.t0 = t0;
    for (a, (spec, _)) in aux_present.iter().enumerate() {
        trace = trace.with_aux(&spec.name, std::mem::take(&mut aux[a]))?;
    }
    trace.warnings = warnings;
    Ok(trace)
}
