//! Labeled feature vectors and the immutable dataset that holds them.

use super::DataError;

/// One labeled feature vector with a class and a domain tag. Domain is 0
/// when domains are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
    pub domain: usize,
}

/// Immutable, deterministically ordered collection of examples with shared
/// metadata `(num_classes, num_domains, d_feat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    num_domains: usize,
    d_feat: usize,
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        num_classes: usize,
        num_domains: usize,
        d_feat: usize,
    ) -> Result<Self, DataError> {
        if num_classes == 0 || num_domains == 0 || d_feat == 0 {
            return Err(DataError::Domain(
                "dataset metadata must be nonzero".into(),
            ));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != d_feat {
                return Err(DataError::Domain(format!(
                    "example {i} has {} features, expected {d_feat}",
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(DataError::Domain(format!(
                    "example {i} has label {} outside [0, {num_classes})",
                    ex.label
                )));
            }
            if ex.domain >= num_domains {
                return Err(DataError::Domain(format!(
                    "example {i} has domain {} outside [0, {num_domains})",
                    ex.domain
                )));
            }
        }
        Ok(Dataset {
            examples,
            num_classes,
            num_domains,
            d_feat,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, index: usize) -> &Example {
        &self.examples[index]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    /// Clones the examples at `indices`, preserving order.
    pub fn gather(&self, indices: &[usize]) -> Vec<Example> {
        indices.iter().map(|&i| self.examples[i].clone()).collect()
    }

    /// Indices of all examples with the given label, in dataset order.
    pub fn indices_of_class(&self, label: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of all examples with the given (label, domain) pair.
    pub fn indices_of_class_domain(&self, label: usize, domain: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.label == label && ex.domain == domain)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_violations_are_rejected() {
        let ex = Example {
            features: vec![0.0, 1.0],
            label: 3,
            domain: 0,
        };
        assert!(Dataset::new(vec![ex.clone()], 3, 1, 2).is_err()); // label out of range
        assert!(Dataset::new(vec![ex.clone()], 4, 1, 3).is_err()); // wrong d_feat
        let ok = Dataset::new(vec![ex], 4, 1, 2).unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn gather_preserves_order() {
        let examples: Vec<Example> = (0..4)
            .map(|i| Example {
                features: vec![i as f64],
                label: i,
                domain: 0,
            })
            .collect();
        let ds = Dataset::new(examples, 4, 1, 1).unwrap();
        let picked = ds.gather(&[3, 0, 2]);
        let labels: Vec<usize> = picked.iter().map(|e| e.label).collect();
        assert_eq!(labels, vec![3, 0, 2]);
    }
}
