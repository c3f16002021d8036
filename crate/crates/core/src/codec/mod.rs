//! Mixed-type table encoding.
//!
//! Numeric columns (continuous, mixed, long-tail) become an `(α, β)` block:
//! one scalar α ∈ [−1, 1] followed by a one-hot β over the column's modes
//! (singular values first, then Gaussian components by ascending mean).
//! Categorical columns become a one-hot block. Blocks appear in schema
//! order. The conditional vector is a separate one-hot over every
//! `(column, mode)` pair, laid out in the same order.

mod schema;
mod vgm;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use schema::{parse_schema, ColumnKind, ColumnSpec, TableSchema};
pub use vgm::{
    decode_value, encode_value, fit_vgm, mode_from_one_hot, VgmModel, DEFAULT_MAX_MODES,
    MIN_STD, PRUNE_WEIGHT, SINGULAR_TOL,
};

use crate::error::{Error, Result};
use crate::nn::Span;
use crate::tensor::Tensor;

/// Location of one column inside an encoded row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    /// Offset of α for numeric columns.
    pub alpha: Option<usize>,
    /// β for numeric columns, the category one-hot otherwise.
    pub one_hot: Span,
    /// This column's slice of the conditional vector.
    pub cond: Span,
}

impl ColumnBlock {
    pub fn start(&self) -> usize {
        self.alpha.unwrap_or(self.one_hot.start)
    }

    pub fn width(&self) -> usize {
        self.one_hot.end() - self.start()
    }

    pub fn span(&self) -> Span {
        Span::new(self.start(), self.width())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedLayout {
    pub blocks: Vec<ColumnBlock>,
    pub row_width: usize,
    pub cond_width: usize,
}

impl EncodedLayout {
    fn build(codecs: &[ColumnCodec]) -> Self {
        let mut blocks = Vec::with_capacity(codecs.len());
        let mut offset = 0;
        let mut cond = 0;
        for c in codecs {
            let modes = c.mode_count();
            let alpha = if c.is_numeric() {
                offset += 1;
                Some(offset - 1)
            } else {
                None
            };
            blocks.push(ColumnBlock {
                alpha,
                one_hot: Span::new(offset, modes),
                cond: Span::new(cond, modes),
            });
            offset += modes;
            cond += modes;
        }
        Self {
            blocks,
            row_width: offset,
            cond_width: cond,
        }
    }

    pub fn alpha_spans(&self) -> Vec<Span> {
        self.blocks
            .iter()
            .filter_map(|b| b.alpha.map(|a| Span::new(a, 1)))
            .collect()
    }

    pub fn one_hot_spans(&self) -> Vec<Span> {
        self.blocks.iter().map(|b| b.one_hot).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnCodec {
    Numeric { model: VgmModel, longtail: bool },
    Categorical { categories: Vec<String> },
}

impl ColumnCodec {
    pub fn mode_count(&self) -> usize {
        match self {
            ColumnCodec::Numeric { model, .. } => model.mode_count(),
            ColumnCodec::Categorical { categories } => categories.len(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnCodec::Numeric { .. })
    }
}

/// Everything needed to encode and decode rows; immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecState {
    pub schema: TableSchema,
    pub columns: Vec<ColumnCodec>,
    pub layout: EncodedLayout,
    /// `frequencies[column][mode]`: occurrences in the fitted table.
    pub frequencies: Vec<Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct EncodedTable {
    pub layout: EncodedLayout,
    pub data: Tensor,
    pub frequencies: Vec<Vec<u64>>,
    /// `rows_by_mode[column][mode]`: indices of rows in that mode.
    pub rows_by_mode: Vec<Vec<Vec<usize>>>,
    /// Rows dropped for unparseable or missing cells.
    pub dropped: usize,
}

/// Sign-preserving `log1p`.
pub fn longtail_forward(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

pub fn longtail_inverse(y: f64) -> f64 {
    y.signum() * y.abs().exp_m1()
}

/// A parsed cell.
#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Number(f64),
    Category(usize),
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses every row; returns kept rows (numeric cells already long-tail
/// transformed, categories as raw strings) and the dropped-row count.
fn parse_rows(raw: &[Vec<String>], schema: &TableSchema) -> Result<(Vec<Vec<ParsedCell>>, usize)> {
    let width = schema.columns.len();
    let mut rows = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for (i, r) in raw.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Data(format!(
                "row {i} has {} cells, schema has {width} columns",
                r.len()
            )));
        }
        let parsed: Option<Vec<ParsedCell>> = r
            .iter()
            .zip(&schema.columns)
            .map(|(cell, spec)| match spec.kind {
                ColumnKind::Categorical => {
                    let s = cell.trim();
                    let known = spec.categories.is_empty()
                        || spec.categories.iter().any(|c| c == s);
                    (!s.is_empty() && known).then(|| ParsedCell::Text(s.to_string()))
                }
                ColumnKind::Longtail => parse_number(cell).map(|v| ParsedCell::Num(longtail_forward(v))),
                _ => parse_number(cell).map(ParsedCell::Num),
            })
            .collect();
        match parsed {
            Some(p) => rows.push(p),
            None => dropped += 1,
        }
    }
    Ok((rows, dropped))
}

#[derive(Debug, Clone)]
enum ParsedCell {
    Num(f64),
    Text(String),
}

/// Fits per-column codecs on `raw` (cells in schema order) and encodes it.
pub fn encode_table(
    raw: &[Vec<String>],
    schema: &TableSchema,
    max_modes: usize,
    seed: u64,
) -> Result<(EncodedTable, CodecState)> {
    schema.validate()?;
    let (rows, dropped) = parse_rows(raw, schema)?;
    if rows.is_empty() {
        return Err(Error::EmptyTable { dropped });
    }
    let mut columns = Vec::with_capacity(schema.columns.len());
    for (c, spec) in schema.columns.iter().enumerate() {
        let codec = match spec.kind {
            ColumnKind::Categorical => {
                let categories = if spec.categories.is_empty() {
                    let mut seen: Vec<String> = rows
                        .iter()
                        .map(|r| match &r[c] {
                            ParsedCell::Text(s) => s.clone(),
                            ParsedCell::Num(_) => unreachable!("categorical cell parsed as text"),
                        })
                        .collect();
                    seen.sort();
                    seen.dedup();
                    seen
                } else {
                    spec.categories.clone()
                };
                ColumnCodec::Categorical { categories }
            }
            kind => {
                let singular = spec.singular_values.clone();
                let continuous: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| match r[c] {
                        ParsedCell::Num(v) => Some(v),
                        ParsedCell::Text(_) => None,
                    })
                    .filter(|v| !singular.iter().any(|s| (s - v).abs() <= SINGULAR_TOL))
                    .collect();
                let fitted = vgm::fit_vgm_named(
                    &continuous,
                    max_modes,
                    seed.wrapping_add(c as u64),
                    &spec.name,
                )?;
                let model = VgmModel {
                    singular_modes: singular,
                    ..fitted
                };
                ColumnCodec::Numeric {
                    model,
                    longtail: kind == ColumnKind::Longtail,
                }
            }
        };
        columns.push(codec);
    }
    let layout = EncodedLayout::build(&columns);
    let mut state = CodecState {
        schema: schema.clone(),
        frequencies: columns.iter().map(|c| vec![0; c.mode_count()]).collect(),
        columns,
        layout,
    };
    let mut data = Tensor::zeros(rows.len(), state.layout.row_width);
    let mut rows_by_mode: Vec<Vec<Vec<usize>>> = state
        .columns
        .iter()
        .map(|c| vec![Vec::new(); c.mode_count()])
        .collect();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<Cell> = row
            .iter()
            .zip(&state.columns)
            .map(|(cell, codec)| match (cell, codec) {
                (ParsedCell::Num(v), ColumnCodec::Numeric { .. }) => Cell::Number(*v),
                (ParsedCell::Text(s), ColumnCodec::Categorical { categories }) => Cell::Category(
                    categories
                        .iter()
                        .position(|c| c == s)
                        .expect("category set covers the fitted data"),
                ),
                _ => unreachable!("parsed cell kind follows the schema"),
            })
            .collect();
        let modes = state.encode_cells(&cells, data.row_mut(i))?;
        for (c, m) in modes.into_iter().enumerate() {
            state.frequencies[c][m] += 1;
            rows_by_mode[c][m].push(i);
        }
    }
    let table = EncodedTable {
        layout: state.layout.clone(),
        data,
        frequencies: state.frequencies.clone(),
        rows_by_mode,
        dropped,
    };
    Ok((table, state))
}

impl CodecState {
    /// Writes the encoding of already-parsed cells (numeric values in the
    /// transformed domain) into `out`; returns each column's mode.
    fn encode_cells(&self, cells: &[Cell], out: &mut [f64]) -> Result<Vec<usize>> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut modes = Vec::with_capacity(cells.len());
        for ((cell, codec), block) in cells.iter().zip(&self.columns).zip(&self.layout.blocks) {
            let mode = match (cell, codec) {
                (Cell::Number(v), ColumnCodec::Numeric { model, .. }) => {
                    let (alpha, mode) = encode_value(*v, model)?;
                    out[block.alpha.expect("numeric block has α")] = alpha;
                    mode
                }
                (Cell::Category(k), ColumnCodec::Categorical { .. }) => *k,
                _ => return Err(Error::Data("cell does not match its column codec".into())),
            };
            out[block.one_hot.start + mode] = 1.0;
            modes.push(mode);
        }
        Ok(modes)
    }

    /// Encodes new raw rows with the fitted codec. Unparseable rows and
    /// unseen categories are dropped and counted.
    pub fn encode_rows(&self, raw: &[Vec<String>]) -> Result<(Tensor, usize)> {
        let (rows, mut dropped) = parse_rows(raw, &self.schema)?;
        let mut encoded = Vec::with_capacity(rows.len());
        for row in rows {
            let cells: Option<Vec<Cell>> = row
                .iter()
                .zip(&self.columns)
                .map(|(cell, codec)| match (cell, codec) {
                    (ParsedCell::Num(v), ColumnCodec::Numeric { .. }) => Some(Cell::Number(*v)),
                    (ParsedCell::Text(s), ColumnCodec::Categorical { categories }) => {
                        categories.iter().position(|c| c == s).map(Cell::Category)
                    }
                    _ => None,
                })
                .collect();
            match cells {
                Some(cells) => {
                    let mut out = vec![0.0; self.layout.row_width];
                    self.encode_cells(&cells, &mut out)?;
                    encoded.push(out);
                }
                None => dropped += 1,
            }
        }
        let rows = encoded.len();
        let data = Tensor::from_vec(rows, self.layout.row_width, encoded.concat())?;
        Ok((data, dropped))
    }

    /// Decodes (possibly soft) encoded rows back to raw cells. Each
    /// one-hot block is hardened by argmax (lowest index on ties) and α is
    /// clamped to [−1, 1].
    pub fn decode_table(&self, encoded: &Tensor) -> Result<Vec<Vec<String>>> {
        if encoded.cols() != self.layout.row_width {
            return Err(Error::Shape(format!(
                "encoded width {} does not match layout width {}",
                encoded.cols(),
                self.layout.row_width
            )));
        }
        encoded.ensure_finite("encoded table")?;
        let mut out = Vec::with_capacity(encoded.rows());
        for row in encoded.iter_rows() {
            let mut cells = Vec::with_capacity(self.columns.len());
            for (codec, block) in self.columns.iter().zip(&self.layout.blocks) {
                let mode = argmax(&row[block.one_hot.range()]);
                let cell = match codec {
                    ColumnCodec::Numeric { model, longtail } => {
                        let alpha = row[block.alpha.expect("numeric block has α")].clamp(-1.0, 1.0);
                        let v = decode_value(alpha, mode, model)?;
                        let v = if *longtail { longtail_inverse(v) } else { v };
                        format_number(v)
                    }
                    ColumnCodec::Categorical { categories } => categories[mode].clone(),
                };
                cells.push(cell);
            }
            out.push(cells);
        }
        Ok(out)
    }

    /// Draws one conditional vector: a column uniformly among those with
    /// observations, then a mode with probability ∝ ln(1 + count).
    pub fn sample_condition<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, usize, usize)> {
        let (column, mode) = self.sample_condition_index(rng)?;
        let mut cond = vec![0.0; self.layout.cond_width];
        cond[self.layout.blocks[column].cond.start + mode] = 1.0;
        Ok((cond, column, mode))
    }

    pub fn sample_condition_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        let eligible: Vec<usize> = (0..self.frequencies.len())
            .filter(|&c| self.frequencies[c].iter().any(|&n| n > 0))
            .collect();
        if eligible.is_empty() {
            return Err(Error::Data("frequency table is empty".into()));
        }
        let column = eligible[rng.gen_range(0..eligible.len())];
        let weights: Vec<f64> = self.frequencies[column]
            .iter()
            .map(|&n| (n as f64).ln_1p())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut mode = weights.iter().rposition(|w| *w > 0.0).expect("non-empty column");
        for (m, w) in weights.iter().enumerate() {
            if *w > 0.0 && target < *w {
                mode = m;
                break;
            }
            target -= w;
        }
        Ok((column, mode))
    }

    /// Index of the target column's one-hot block, if the target is categorical.
    pub fn target_block(&self) -> Option<(usize, Span)> {
        let t = self.schema.target_index()?;
        match self.columns[t] {
            ColumnCodec::Categorical { .. } => Some((t, self.layout.blocks[t].one_hot)),
            ColumnCodec::Numeric { .. } => None,
        }
    }
}

/// Convenience wrapper mirroring [`CodecState::decode_table`].
pub fn decode_table(encoded: &Tensor, state: &CodecState) -> Result<Vec<Vec<String>>> {
    state.decode_table(encoded)
}

pub fn sample_condition<R: Rng + ?Sized>(
    state: &CodecState,
    rng: &mut R,
) -> Result<(Vec<f64>, usize, usize)> {
    state.sample_condition(rng)
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}
