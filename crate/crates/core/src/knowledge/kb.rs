use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KnowledgeError;

/// One criteria axis: a set of mutually exclusive characteristic options and
/// the option each class exhibits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriteriaAxis {
    pub name: String,
    pub options: Vec<String>,
    /// `class_to_option[c]` is the option index positive for class `c`.
    pub class_to_option: Vec<usize>,
}

impl CriteriaAxis {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }
}

/// Classes plus the criteria axes that characterize them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    classes: Vec<String>,
    axes: Vec<CriteriaAxis>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    classes: Vec<String>,
    axes: Vec<AxisFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisFile {
    name: String,
    options: Vec<OptionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionFile {
    text: String,
    classes: Vec<String>,
}

impl KnowledgeBase {
    /// Builds and validates a knowledge base.
    pub fn new(classes: Vec<String>, axes: Vec<CriteriaAxis>) -> Result<Self, KnowledgeError> {
        let kb = Self { classes, axes };
        kb.validate()?;
        Ok(kb)
    }

    fn validate(&self) -> Result<(), KnowledgeError> {
        let n = self.classes.len();
        if n < 2 {
            return Err(KnowledgeError::TooFewClasses { found: n });
        }
        if self.axes.is_empty() {
            return Err(KnowledgeError::NoAxes);
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if c.trim().is_empty() {
                return Err(KnowledgeError::EmptyName { what: "class" });
            }
            if !seen.insert(c.as_str()) {
                return Err(KnowledgeError::DuplicateClass(c.clone()));
            }
        }
        let mut axis_names = HashSet::new();
        for axis in &self.axes {
            if axis.name.trim().is_empty() {
                return Err(KnowledgeError::EmptyName { what: "axis" });
            }
            if !axis_names.insert(axis.name.as_str()) {
                return Err(KnowledgeError::DuplicateAxis(axis.name.clone()));
            }
            let options = axis.options.len();
            if options < 2 || options > n {
                return Err(KnowledgeError::OptionCount { axis: axis.name.clone(), found: options, classes: n });
            }
            let mut texts = HashSet::new();
            for text in &axis.options {
                if text.trim().is_empty() {
                    return Err(KnowledgeError::EmptyName { what: "option text" });
                }
                if !texts.insert(text.as_str()) {
                    return Err(KnowledgeError::DuplicateOption { axis: axis.name.clone(), text: text.clone() });
                }
            }
            if axis.class_to_option.len() != n {
                return Err(KnowledgeError::MissingClass {
                    axis: axis.name.clone(),
                    class: self.classes.get(axis.class_to_option.len()).cloned().unwrap_or_default(),
                });
            }
            let mut used = vec![false; options];
            for &o in &axis.class_to_option {
                if o >= options {
                    return Err(KnowledgeError::OptionIndex { axis: axis.name.clone(), index: o, options });
                }
                used[o] = true;
            }
            if let Some(unused) = used.iter().position(|&u| !u) {
                return Err(KnowledgeError::UnusedOption { axis: axis.name.clone(), text: axis.options[unused].clone() });
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, KnowledgeError> {
        let file: KbFile = serde_json::from_str(text)?;
        let class_index = |axis: &str, name: &str| {
            file.classes.iter().position(|c| c == name).ok_or_else(|| KnowledgeError::UnknownClass {
                axis: axis.to_string(),
                class: name.to_string(),
            })
        };
        let mut axes = Vec::with_capacity(file.axes.len());
        for axis in &file.axes {
            let mut mapping: Vec<Option<usize>> = vec![None; file.classes.len()];
            for (o, option) in axis.options.iter().enumerate() {
                for class in &option.classes {
                    let c = class_index(&axis.name, class)?;
                    if mapping[c].replace(o).is_some() {
                        return Err(KnowledgeError::ClassMappedTwice { axis: axis.name.clone(), class: class.clone() });
                    }
                }
            }
            let class_to_option = mapping
                .iter()
                .enumerate()
                .map(|(c, o)| {
                    o.ok_or_else(|| KnowledgeError::MissingClass {
                        axis: axis.name.clone(),
                        class: file.classes[c].clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            axes.push(CriteriaAxis {
                name: axis.name.clone(),
                options: axis.options.iter().map(|o| o.text.clone()).collect(),
                class_to_option,
            });
        }
        Self::new(file.classes, axes)
    }

    /// Reads and validates a knowledge-base JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io { path: path.into(), source })?;
        Self::from_json_str(&text)
    }

    fn to_file(&self) -> KbFile {
        KbFile {
            classes: self.classes.clone(),
            axes: self
                .axes
                .iter()
                .map(|axis| AxisFile {
                    name: axis.name.clone(),
                    options: axis
                        .options
                        .iter()
                        .enumerate()
                        .map(|(o, text)| OptionFile {
                            text: text.clone(),
                            classes: (0..self.classes.len())
                                .filter(|&c| axis.class_to_option[c] == o)
                                .map(|c| self.classes[c].clone())
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("knowledge base serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|source| KnowledgeError::Io { path: path.into(), source })
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_string(&self.to_file()).expect("knowledge base serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn axes(&self) -> &[CriteriaAxis] {
        &self.axes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.axes.iter().map(CriteriaAxis::option_count).collect()
    }

    pub fn total_options(&self) -> usize {
        self.option_counts().iter().sum()
    }

    /// Positive option index on every axis for `class`.
    pub fn positives(&self, class: usize) -> Vec<usize> {
        self.axes.iter().map(|a| a.class_to_option[class]).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}
