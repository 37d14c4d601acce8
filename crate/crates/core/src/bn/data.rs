//! Variables, schemas and column-major training data.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::BnError;

/// Index of a variable inside a [`Schema`].
pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum VarKind {
    Discrete { arity: usize },
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Evidence,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub role: Role,
}

impl Variable {
    pub fn discrete(name: impl Into<String>, arity: usize, role: Role) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Discrete { arity },
            role,
        }
    }

    pub fn continuous(name: impl Into<String>, role: Role) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Continuous,
            role,
        }
    }

    pub fn arity(&self) -> Option<usize> {
        match self.kind {
            VarKind::Discrete { arity } => Some(arity),
            VarKind::Continuous => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, VarKind::Continuous)
    }
}

/// Ordered variable list with name lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Variable>", into = "Vec<Variable>")]
pub struct Schema {
    variables: Vec<Variable>,
    index: HashMap<String, VarId>,
}

impl From<Vec<Variable>> for Schema {
    fn from(variables: Vec<Variable>) -> Self {
        let index = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        Schema { variables, index }
    }
}

impl From<Schema> for Vec<Variable> {
    fn from(s: Schema) -> Self {
        s.variables
    }
}

impl Schema {
    pub fn new(variables: Vec<Variable>) -> Result<Self, BnError> {
        let schema = Schema::from(variables);
        if schema.index.len() != schema.variables.len() {
            return Err(BnError::InvalidSchema("duplicate variable name".into()));
        }
        for v in &schema.variables {
            if let VarKind::Discrete { arity } = v.kind {
                if arity < 2 {
                    return Err(BnError::InvalidSchema(format!(
                        "discrete variable {} has arity {arity} < 2",
                        v.name
                    )));
                }
            }
        }
        Ok(schema)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<VarId, BnError> {
        self.id(name)
            .ok_or_else(|| BnError::UnknownVariable(name.to_string()))
    }
}

/// One observed value. Continuous variables may be explicitly absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    State(usize),
    Present(f64),
    Absent,
}

impl Value {
    pub fn from_option(v: Option<f64>) -> Self {
        v.map_or(Value::Absent, Value::Present)
    }

    pub fn compatible(&self, var: &Variable) -> bool {
        match (self, var.kind) {
            (Value::State(s), VarKind::Discrete { arity }) => *s < arity,
            (Value::Present(x), VarKind::Continuous) => x.is_finite(),
            (Value::Absent, VarKind::Continuous) => true,
            _ => false,
        }
    }

    /// Continuous payload, NaN for absent.
    pub(crate) fn as_raw(&self) -> f64 {
        match self {
            Value::State(s) => *s as f64,
            Value::Present(x) => *x,
            Value::Absent => f64::NAN,
        }
    }
}

/// Affine map to zero mean / unit variance fitted on training values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
        for v in values.filter(|v| !v.is_nan()) {
            n += 1.0;
            sum += v;
            sq += v * v;
        }
        if n == 0.0 {
            return Standardizer { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0);
        let std = if var.sqrt() < 1e-9 { 1.0 } else { var.sqrt() };
        Standardizer { mean, std }
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Discrete(Vec<u16>),
    /// NaN marks an absent value.
    Continuous(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Discrete(v) => v.len(),
            Column::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            Column::Discrete(v) => Value::State(v[row] as usize),
            Column::Continuous(v) => {
                let x = v[row];
                if x.is_nan() {
                    Value::Absent
                } else {
                    Value::Present(x)
                }
            }
        }
    }
}

/// Column-major dataset. Continuous columns keep a presorted row order
/// (absent rows first) for threshold search.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    rows: usize,
    standardizers: Vec<Option<Standardizer>>,
    standardized: Vec<Option<Vec<f64>>>,
    order: Vec<Option<Vec<u32>>>,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<Self, BnError> {
        if columns.len() != schema.len() {
            return Err(BnError::InvalidData(format!(
                "{} columns for {} variables",
                columns.len(),
                schema.len()
            )));
        }
        let rows = columns.first().map_or(0, Column::len);
        for (id, col) in columns.iter().enumerate() {
            let var = schema.var(id);
            if col.len() != rows {
                return Err(BnError::InvalidData(format!(
                    "column {} has {} rows, expected {rows}",
                    var.name,
                    col.len()
                )));
            }
            match (col, var.kind) {
                (Column::Discrete(v), VarKind::Discrete { arity }) => {
                    if let Some(bad) = v.iter().find(|&&c| c as usize >= arity) {
                        return Err(BnError::InvalidData(format!(
                            "{}: state {bad} out of range for arity {arity}",
                            var.name
                        )));
                    }
                }
                (Column::Continuous(v), VarKind::Continuous) => {
                    if v.iter().any(|x| x.is_infinite()) {
                        return Err(BnError::InvalidData(format!("{}: infinite value", var.name)));
                    }
                }
                _ => {
                    return Err(BnError::InvalidData(format!(
                        "{}: column kind does not match variable kind",
                        var.name
                    )))
                }
            }
        }
        let standardizers = columns
            .iter()
            .map(|c| match c {
                Column::Continuous(v) => Some(Standardizer::fit(v.iter().copied())),
                Column::Discrete(_) => None,
            })
            .collect();
        let standardized = columns
            .iter()
            .zip(&standardizers)
            .map(|(c, s): (&Column, &Option<Standardizer>)| match (c, s) {
                (Column::Continuous(v), Some(s)) => Some(v.iter().map(|&x| s.forward(x)).collect()),
                _ => None,
            })
            .collect();
        let order = columns
            .iter()
            .map(|c| match c {
                Column::Continuous(v) => {
                    let mut idx: Vec<u32> = (0..rows as u32).collect();
                    idx.sort_by(|&a, &b| {
                        let (x, y) = (v[a as usize], v[b as usize]);
                        match (x.is_nan(), y.is_nan()) {
                            (true, true) => a.cmp(&b),
                            (true, false) => std::cmp::Ordering::Less,
                            (false, true) => std::cmp::Ordering::Greater,
                            (false, false) => x.total_cmp(&y).then(a.cmp(&b)),
                        }
                    });
                    Some(idx)
                }
                Column::Discrete(_) => None,
            })
            .collect();
        Ok(Dataset {
            schema,
            columns,
            rows,
            standardizers,
            standardized,
            order,
        })
    }

    /// Builds a dataset from row-major values.
    pub fn from_rows(schema: Schema, rows: &[Vec<Value>]) -> Result<Self, BnError> {
        let mut columns: Vec<Column> = schema
            .variables()
            .iter()
            .map(|v| match v.kind {
                VarKind::Discrete { .. } => Column::Discrete(Vec::with_capacity(rows.len())),
                VarKind::Continuous => Column::Continuous(Vec::with_capacity(rows.len())),
            })
            .collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(BnError::InvalidData(format!("row {r} has {} values", row.len())));
            }
            for (id, (val, col)) in row.iter().zip(columns.iter_mut()).enumerate() {
                if !val.compatible(schema.var(id)) {
                    return Err(BnError::TypeMismatch(schema.var(id).name.clone()));
                }
                match (col, val) {
                    (Column::Discrete(c), Value::State(s)) => c.push(*s as u16),
                    (Column::Continuous(c), v) => c.push(v.as_raw()),
                    _ => unreachable!("checked by compatible()"),
                }
            }
        }
        Dataset::new(schema, columns)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, id: VarId) -> &Column {
        &self.columns[id]
    }

    pub fn standardizer(&self, id: VarId) -> Option<Standardizer> {
        self.standardizers[id]
    }

    /// Standardized copy of a continuous column (NaN stays NaN).
    pub(crate) fn standardized(&self, id: VarId) -> Option<&[f64]> {
        self.standardized[id].as_deref()
    }

    pub(crate) fn sorted_rows(&self, id: VarId) -> Option<&[u32]> {
        self.order[id].as_deref()
    }

    pub fn row(&self, r: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(r)).collect()
    }

    /// Sub-dataset of the given rows, recomputing standardization.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset, BnError> {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Discrete(v) => Column::Discrete(rows.iter().map(|&r| v[r]).collect()),
                Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            })
            .collect();
        Dataset::new(self.schema.clone(), columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![
            Variable::discrete("a", 2, Role::Evidence),
            Variable::continuous("x", Role::Target),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_low_arity_and_duplicates() {
        assert!(Schema::new(vec![Variable::discrete("a", 1, Role::Evidence)]).is_err());
        assert!(Schema::new(vec![
            Variable::continuous("a", Role::Evidence),
            Variable::continuous("a", Role::Evidence)
        ])
        .is_err());
    }

    #[test]
    fn presorted_order_puts_absent_first() {
        let data = Dataset::from_rows(
            schema(),
            &[
                vec![Value::State(0), Value::Present(3.0)],
                vec![Value::State(1), Value::Absent],
                vec![Value::State(1), Value::Present(-1.0)],
            ],
        )
        .unwrap();
        assert_eq!(data.sorted_rows(1).unwrap(), &[1, 2, 0]);
        assert!(data.sorted_rows(0).is_none());
        assert_eq!(data.row(1), vec![Value::State(1), Value::Absent]);
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = Dataset::from_rows(schema(), &[vec![Value::Present(1.0), Value::Absent]]);
        assert!(matches!(err, Err(BnError::TypeMismatch(_))));
        let err = Dataset::from_rows(schema(), &[vec![Value::State(2), Value::Absent]]);
        assert!(matches!(err, Err(BnError::TypeMismatch(_))));
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let s = Standardizer::fit([4.0, 4.0, f64::NAN].into_iter());
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.inverse(s.forward(7.5)), 7.5);
    }

    #[test]
    fn schema_serde_keeps_index() {
        let s = schema();
        let json = serde_json::to_string(&s).unwrap();
        let back: Schema = serde_json::from_str(&json).unwrap();
        assert_eq!(back.id("x"), Some(1));
    }
}
