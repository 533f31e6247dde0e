use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;

use super::error::{ExecError, ExecResult};
use crate::scalar::Scalar;

/// Assignment of finite real values to variable names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State<S = f64> {
    values: BTreeMap<String, S>,
}

impl<S: Scalar> State<S> {
    pub fn new() -> Self {
        State { values: BTreeMap::new() }
    }

    /// Builds a state from `(name, value)` pairs. Panics on non-finite values;
    /// use [`State::set`] for fallible insertion.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, S)>) -> Self {
        let mut s = State::new();
        for (k, v) in pairs {
            s.set(k, v).expect("state values must be finite");
        }
        s
    }

    pub fn get(&self, var: &str) -> Option<S> {
        self.values.get(var).copied()
    }

    pub fn value(&self, var: &str) -> ExecResult<S> {
        self.get(var).ok_or_else(|| ExecError::UnboundVariable(var.to_string()))
    }

    pub fn set(&mut self, var: impl Into<String>, v: S) -> ExecResult<()> {
        let var = var.into();
        if !v.is_finite() {
            return Err(ExecError::NonFiniteState(var));
        }
        self.values.insert(var, v);
        Ok(())
    }

    pub fn with(mut self, var: impl Into<String>, v: S) -> Self {
        self.set(var, v).expect("state values must be finite");
        self
    }

    pub fn remove(&mut self, var: &str) -> Option<S> {
        self.values.remove(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.values.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, S)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Overwrites and adds every binding of `other`.
    pub fn extend_from(&mut self, other: &State<S>) {
        for (k, v) in other.iter() {
            self.values.insert(k.to_string(), v);
        }
    }

    pub fn map_scalar<T: Scalar>(&self) -> State<T> {
        State { values: self.values.iter().map(|(k, v)| (k.clone(), T::lit(v.as_f64()))).collect() }
    }
}

impl<S> IntoIterator for State<S> {
    type Item = (String, S);
    type IntoIter = btree_map::IntoIter<String, S>;

    fn into_iter(self) -> Self::IntoIter {
        self.values.into_iter()
    }
}

impl<S: Scalar> fmt::Display for State<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}
