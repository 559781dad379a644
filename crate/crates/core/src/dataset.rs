//! In-memory labelled and parallel datasets.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Feature rows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "labelled set rows",
                expected: features.rows(),
                found: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// One index-aligned pair: the teacher's input, the student's input and their shared label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelSample<'a> {
    pub x_teacher: &'a [f64],
    pub x_student: &'a [f64],
    pub label: usize,
}

/// Index-aligned teacher and student inputs sharing ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelDataset {
    teacher_inputs: Matrix,
    student_inputs: Matrix,
    labels: Vec<usize>,
}

impl ParallelDataset {
    pub fn new(teacher_inputs: Matrix, student_inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        for (context, found) in [
            ("student input rows", student_inputs.rows()),
            ("parallel label count", labels.len()),
        ] {
            if found != teacher_inputs.rows() {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: teacher_inputs.rows(),
                    found,
                });
            }
        }
        Ok(Self {
            teacher_inputs,
            student_inputs,
            labels,
        })
    }

    /// Both networks see the same inputs.
    pub fn self_paired(set: &LabeledSet) -> Self {
        Self {
            teacher_inputs: set.features.clone(),
            student_inputs: set.features.clone(),
            labels: set.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn teacher_inputs(&self) -> &Matrix {
        &self.teacher_inputs
    }

    pub fn student_inputs(&self) -> &Matrix {
        &self.student_inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> ParallelSample<'_> {
        ParallelSample {
            x_teacher: self.teacher_inputs.row(i),
            x_student: self.student_inputs.row(i),
            label: self.labels[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ParallelSample<'_>> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Student-side view as a labelled set.
    pub fn student_set(&self) -> LabeledSet {
        LabeledSet {
            features: self.student_inputs.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Appends `other` after `self`.
    pub fn concat(&self, other: &ParallelDataset) -> Result<Self> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(
            self.teacher_inputs.vstack(&other.teacher_inputs)?,
            self.student_inputs.vstack(&other.student_inputs)?,
            labels,
        )
    }
}
