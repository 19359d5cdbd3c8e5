use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::container::{Array, Container};
use crate::numerics::Tensor;

/// Frozen representations with aligned labels and optional style targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationTable {
    /// `[N, d]`.
    pub z: Tensor<f64>,
    pub labels: Vec<usize>,
    /// Column names and `[N, s]` values.
    pub style: Option<(Vec<String>, Tensor<f64>)>,
    pub checkpoint_id: String,
    pub dataset_id: String,
}

impl RepresentationTable {
    pub fn new(z: Tensor<f64>, labels: Vec<usize>) -> Result<Self> {
        let t = Self {
            z,
            labels,
            style: None,
            checkpoint_id: String::new(),
            dataset_id: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_style(mut self, names: Vec<String>, values: Tensor<f64>) -> Result<Self> {
        self.style = Some((names, values));
        self.validate()?;
        Ok(self)
    }

    pub fn with_ids(mut self, checkpoint_id: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        self.checkpoint_id = checkpoint_id.into();
        self.dataset_id = dataset_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (n, _) = self.z.dims2()?;
        if n != self.labels.len() {
            return Err(Error::Dimension(format!("{n} representations but {} labels", self.labels.len())));
        }
        if !self.z.all_finite() {
            return Err(Error::Numeric("representation table has non-finite entries".into()));
        }
        if let Some((names, s)) = &self.style {
            let (sn, sd) = s.dims2()?;
            if sn != n || sd != names.len() {
                return Err(Error::Dimension(format!(
                    "style matrix {:?} does not align with {n} rows and {} names",
                    s.shape(),
                    names.len()
                )));
            }
            if !s.all_finite() {
                return Err(Error::Numeric("style matrix has non-finite entries".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.z.row(i)
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows `idx` in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let z = self.z.select_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        let style = match &self.style {
            Some((names, s)) => Some((names.clone(), s.select_rows(idx)?)),
            None => None,
        };
        Ok(Self {
            z,
            labels,
            style,
            checkpoint_id: self.checkpoint_id.clone(),
            dataset_id: self.dataset_id.clone(),
        })
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.set_meta("kind", "representations");
        c.set_meta("checkpoint_id", &self.checkpoint_id);
        c.set_meta("dataset_id", &self.dataset_id);
        c.push("z", Array::F64(self.z.clone()));
        c.push("labels", Array::labels(&self.labels));
        if let Some((names, s)) = &self.style {
            c.set_meta("style_names", names.join(","));
            c.push("style", Array::F64(s.clone()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta("kind") != Some("representations") {
            return Err(Error::Data("container is not a representation table".into()));
        }
        let mut t = Self::new(c.f64_array("z")?, c.label_array("labels")?)?.with_ids(
            c.meta("checkpoint_id").unwrap_or_default(),
            c.meta("dataset_id").unwrap_or_default(),
        );
        if let Some(names) = c.meta("style_names") {
            let names = names.split(',').map(str::to_string).collect();
            t = t.with_style(names, c.f64_array("style")?)?;
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_and_round_trip() {
        let z = Tensor::new(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(RepresentationTable::new(z.clone(), vec![0, 1]).is_err());
        let t = RepresentationTable::new(z, vec![0, 1, 1])
            .unwrap()
            .with_style(vec!["a".into()], Tensor::new(vec![3, 1], vec![0.1, 0.2, 0.3]).unwrap())
            .unwrap()
            .with_ids("ck", "ds");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.simvae");
        t.save(&p).unwrap();
        assert_eq!(RepresentationTable::load(&p).unwrap(), t);
        let s = t.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels, vec![1, 0]);
        assert_eq!(s.row(0), &[4.0, 5.0]);
        assert_eq!(s.style.unwrap().1.data(), &[0.3, 0.1]);

        let bad = Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap();
        assert!(matches!(RepresentationTable::new(bad, vec![0]), Err(Error::Numeric(_))));
    }
}
