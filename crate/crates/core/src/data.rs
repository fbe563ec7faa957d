//! Schemas, column-major tables, vertical column assignment and the
//! synchronised per-round shuffle.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("cannot parse {value:?} as a number at row {row}, column {column}")]
    Parse { row: usize, column: String, value: String },
    #[error("invalid value at row {row}, column {column}: {detail}")]
    Validation { row: usize, column: String, detail: String },
    #[error("assignment error: {0}")]
    Assignment(String),
    #[error("alignment error: {0}")]
    Alignment(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Continuous,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mixed_categorical_values: Vec<f64>,
}

impl ColumnSchema {
    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            mixed_categorical_values: Vec::new(),
        }
    }

    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            categories: Vec::new(),
            mixed_categorical_values: Vec::new(),
        }
    }

    pub fn mixed(name: &str, special: &[f64]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Mixed,
            categories: Vec::new(),
            mixed_categorical_values: special.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSchema>,
    #[serde(default, alias = "target_column", skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self, DataError> {
        let s = Self { columns, target: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut names = BTreeSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate column {:?}", c.name)));
            }
            match c.kind {
                ColumnKind::Categorical => {
                    if c.categories.len() < 2 {
                        return Err(DataError::Schema(format!("{:?} needs at least two categories", c.name)));
                    }
                    let distinct: BTreeSet<&str> = c.categories.iter().map(String::as_str).collect();
                    if distinct.len() != c.categories.len() {
                        return Err(DataError::Schema(format!("{:?} repeats a category", c.name)));
                    }
                }
                ColumnKind::Mixed => {
                    if c.mixed_categorical_values.is_empty() {
                        return Err(DataError::Schema(format!("{:?} declares no special values", c.name)));
                    }
                    if c.mixed_categorical_values.iter().any(|v| !v.is_finite()) {
                        return Err(DataError::Schema(format!("{:?} has a non-finite special value", c.name)));
                    }
                }
                ColumnKind::Continuous => {}
            }
        }
        if let Some(t) = &self.target {
            match self.column(t) {
                None => return Err(DataError::Schema(format!("target {t:?} is not a column"))),
                Some(c) if c.kind != ColumnKind::Categorical => {
                    return Err(DataError::Schema(format!("target {t:?} must be categorical")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// The schema restricted to `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Self, DataError> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| DataError::Assignment(format!("unknown column {n:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let target = self.target.clone().filter(|t| names.contains(t));
        Ok(Self { columns, target })
    }
}

/// Column storage: category indices into the schema's list, or numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Categorical(Vec<u32>),
    Numeric(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Numeric(_) => None,
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    fn gather(&self, idx: &[usize]) -> Column {
        match self {
            Column::Categorical(v) => Column::Categorical(idx.iter().map(|&i| v[i]).collect()),
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell<'a> {
    Category(&'a str),
    Number(f64),
}

/// A table with stable row identities; categorical cells are stored as
/// indices into the schema's category list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub schema: TableSchema,
    pub columns: Vec<Column>,
    pub row_ids: Vec<u64>,
}

impl RawTable {
    pub fn new(schema: TableSchema, columns: Vec<Column>, row_ids: Vec<u64>) -> Result<Self, DataError> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(DataError::Schema(format!(
                "{} columns for a schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        for (c, s) in columns.iter().zip(&schema.columns) {
            if c.len() != row_ids.len() {
                return Err(DataError::Schema(format!("column {:?} has {} rows, expected {}", s.name, c.len(), row_ids.len())));
            }
            match (c, s.kind) {
                (Column::Categorical(v), ColumnKind::Categorical) => {
                    if let Some(row) = v.iter().position(|&k| k as usize >= s.categories.len()) {
                        return Err(DataError::Validation {
                            row,
                            column: s.name.clone(),
                            detail: "category index out of range".into(),
                        });
                    }
                }
                (Column::Numeric(v), ColumnKind::Continuous | ColumnKind::Mixed) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(DataError::Validation {
                            row,
                            column: s.name.clone(),
                            detail: "non-finite number".into(),
                        });
                    }
                }
                _ => return Err(DataError::Schema(format!("storage of {:?} does not match its kind", s.name))),
            }
        }
        let distinct: BTreeSet<u64> = row_ids.iter().copied().collect();
        if distinct.len() != row_ids.len() {
            return Err(DataError::Schema("row ids are not unique".into()));
        }
        Ok(Self { schema, columns, row_ids })
    }

    /// Parses string records whose fields follow `header`, assigning row ids
    /// `0..n` in input order. Empty cells are rejected.
    pub fn from_records<I, R, S>(schema: &TableSchema, header: &[S], records: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[S]>,
        S: AsRef<str>,
    {
        schema.validate()?;
        let mut position = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            let at = header
                .iter()
                .position(|h| h.as_ref().trim() == c.name)
                .ok_or_else(|| DataError::Schema(format!("missing column {:?}", c.name)))?;
            position.push(at);
        }
        let mut columns: Vec<Column> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Categorical => Column::Categorical(Vec::new()),
                _ => Column::Numeric(Vec::new()),
            })
            .collect();
        let mut n = 0;
        for (row, rec) in records.into_iter().enumerate() {
            let rec = rec.as_ref();
            if rec.len() != header.len() {
                return Err(DataError::Validation {
                    row,
                    column: String::new(),
                    detail: format!("{} fields, header has {}", rec.len(), header.len()),
                });
            }
            for ((col, s), &at) in columns.iter_mut().zip(&schema.columns).zip(&position) {
                let raw = rec[at].as_ref().trim();
                if raw.is_empty() {
                    return Err(DataError::Validation {
                        row,
                        column: s.name.clone(),
                        detail: "missing value".into(),
                    });
                }
                match col {
                    Column::Categorical(v) => {
                        let k = s.categories.iter().position(|c| c == raw).ok_or_else(|| DataError::Validation {
                            row,
                            column: s.name.clone(),
                            detail: format!("unknown category {raw:?}"),
                        })?;
                        v.push(k as u32);
                    }
                    Column::Numeric(v) => {
                        let x: f64 = raw.parse().map_err(|_| DataError::Parse {
                            row,
                            column: s.name.clone(),
                            value: raw.into(),
                        })?;
                        if !x.is_finite() {
                            return Err(DataError::Parse {
                                row,
                                column: s.name.clone(),
                                value: raw.into(),
                            });
                        }
                        v.push(x);
                    }
                }
            }
            n += 1;
        }
        Self::new(schema.clone(), columns, (0..n as u64).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell<'_> {
        match &self.columns[col] {
            Column::Categorical(v) => Cell::Category(&self.schema.columns[col].categories[v[row] as usize]),
            Column::Numeric(v) => Cell::Number(v[row]),
        }
    }

    /// Records as strings in schema column order.
    pub fn records(&self) -> Vec<Vec<String>> {
        (0..self.n_rows())
            .map(|r| {
                (0..self.n_cols())
                    .map(|c| match self.cell(r, c) {
                        Cell::Category(s) => s.to_string(),
                        Cell::Number(x) => format!("{x}"),
                    })
                    .collect()
            })
            .collect()
    }

    /// Row `k` of the result is row `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.gather(perm)).collect(),
            row_ids: perm.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// The named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<RawTable, DataError> {
        let schema = self.schema.select(names)?;
        let columns = names
            .iter()
            .map(|n| self.columns[self.schema.index_of(n).expect("schema.select checked")].clone())
            .collect();
        Ok(RawTable {
            schema,
            columns,
            row_ids: self.row_ids.clone(),
        })
    }
}

/// Per-client ordered column lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnAssignment {
    pub clients: Vec<Vec<String>>,
}

impl ColumnAssignment {
    pub fn new(clients: Vec<Vec<String>>) -> Self {
        Self { clients }
    }

    pub fn from_strs(clients: &[&[&str]]) -> Self {
        Self {
            clients: clients
                .iter()
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn validate(&self, schema: &TableSchema) -> Result<(), DataError> {
        if self.clients.is_empty() {
            return Err(DataError::Assignment("no clients".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, cols) in self.clients.iter().enumerate() {
            if cols.is_empty() {
                return Err(DataError::Assignment(format!("client {i} holds no columns")));
            }
            for c in cols {
                if schema.column(c).is_none() {
                    return Err(DataError::Assignment(format!("client {i}: unknown column {c:?}")));
                }
                if !seen.insert(c.as_str()) {
                    return Err(DataError::Assignment(format!("column {c:?} assigned twice")));
                }
            }
        }
        if let Some(missing) = schema.columns.iter().find(|c| !seen.contains(c.name.as_str())) {
            return Err(DataError::Assignment(format!("column {:?} is not assigned", missing.name)));
        }
        Ok(())
    }

    /// Client owning column `name`.
    pub fn owner(&self, name: &str) -> Option<usize> {
        self.clients.iter().position(|c| c.iter().any(|n| n == name))
    }
}

pub fn split_columns(table: &RawTable, assignment: &ColumnAssignment) -> Result<Vec<RawTable>, DataError> {
    assignment.validate(&table.schema)?;
    assignment.clients.iter().map(|cols| table.select(cols)).collect()
}

/// Horizontal concatenation of row-aligned tables.
pub fn hconcat(tables: &[RawTable]) -> Result<RawTable, DataError> {
    let first = tables.first().ok_or_else(|| DataError::Alignment("no tables".into()))?;
    if tables.iter().any(|t| t.row_ids != first.row_ids) {
        return Err(DataError::Alignment("row ids differ between tables".into()));
    }
    let mut columns = Vec::new();
    let mut schema = Vec::new();
    let mut target = None;
    for t in tables {
        columns.extend(t.columns.iter().cloned());
        schema.extend(t.schema.columns.iter().cloned());
        target = target.or_else(|| t.schema.target.clone());
    }
    RawTable::new(TableSchema { columns: schema, target }, columns, first.row_ids.clone())
}

/// Shared secret of the clients' shuffle; never sent to the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleState {
    pub shared_seed: u64,
    pub round_counter: u64,
}

impl ShuffleState {
    pub fn new(shared_seed: u64) -> Self {
        Self {
            shared_seed,
            round_counter: 0,
        }
    }

    /// The permutation of round `round_counter` over `n` rows.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut rng = rng::stream(self.shared_seed, "shuffle", self.round_counter);
        fisher_yates(n, &mut rng)
    }

    pub fn advance(self) -> Self {
        Self {
            round_counter: self.round_counter + 1,
            ..self
        }
    }
}

pub fn fisher_yates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Applies the round's permutation to every table and advances the counter.
pub fn shuffle_rows(tables: &[RawTable], state: ShuffleState) -> Result<(Vec<RawTable>, ShuffleState), DataError> {
    let n = tables.first().map_or(0, RawTable::n_rows);
    if tables.iter().any(|t| t.n_rows() != n) {
        return Err(DataError::Alignment("clients hold different row counts".into()));
    }
    let perm = state.permutation(n);
    Ok((tables.iter().map(|t| t.permute(&perm)).collect(), state.advance()))
}
