use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, TEMPLATE_VERSION};
use super::inference::Transitions;
use super::{CrfError, Label, NUM_LABELS};
use crate::corpus::CorpusInfo;

const MODEL_FORMAT: &str = "duanzai-crf";
const MODEL_FORMAT_VERSION: u32 = 1;

/// Interned feature names. Ids follow first-insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl FeatureTable {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Ids of the known features at each position; unknown names are dropped.
    pub fn lookup(&self, features: &[FeatureVector]) -> Vec<Vec<u32>> {
        features
            .iter()
            .map(|fv| fv.iter().filter_map(|f| self.get(f)).collect())
            .collect()
    }
}

impl FromIterator<String> for FeatureTable {
    fn from_iter<T: IntoIterator<Item = String>>(iter: T) -> Self {
        let mut table = FeatureTable::default();
        for name in iter {
            table.intern(&name);
        }
        table
    }
}

/// Anything that can produce per-position label scores for a sentence. The
/// template CRF implements it through its feature weights; a neural encoder
/// can implement it instead and reuse the same decoding code.
pub trait EmissionScorer {
    fn emissions(&self, sentence: &[char]) -> Vec<[f64; NUM_LABELS]>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub features: FeatureTable,
    /// `emission[f][y]`, one row per interned feature.
    pub emission: Vec<[f64; NUM_LABELS]>,
    /// `transition[prev][next]`.
    pub transition: Transitions,
    pub template_version: String,
    pub trained_on: Option<TrainedOn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainedOn {
    #[serde(flatten)]
    pub corpus: CorpusInfo,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    template_version: String,
    labels: Vec<String>,
    trained_on: Option<TrainedOn>,
    transition: Vec<Vec<f64>>,
    features: Vec<String>,
    emission: Vec<Vec<f64>>,
}

impl CrfModel {
    /// All-zero weights over the given feature table.
    pub fn zeros(features: FeatureTable) -> Self {
        let n = features.len();
        Self {
            features,
            emission: vec![[0.0; NUM_LABELS]; n],
            transition: [[0.0; NUM_LABELS]; NUM_LABELS],
            template_version: TEMPLATE_VERSION.to_string(),
            trained_on: None,
        }
    }

    pub fn num_weights(&self) -> usize {
        self.emission.len() * NUM_LABELS + NUM_LABELS * NUM_LABELS
    }

    /// Flattened weights: emission rows, then the transition matrix.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.num_weights());
        for row in &self.emission {
            w.extend_from_slice(row);
        }
        for row in &self.transition {
            w.extend_from_slice(row);
        }
        w
    }

    pub fn set_weights(&mut self, w: &[f64]) {
        assert_eq!(w.len(), self.num_weights(), "weight vector length");
        let (em, tr) = w.split_at(self.emission.len() * NUM_LABELS);
        for (row, chunk) in self.emission.iter_mut().zip(em.chunks_exact(NUM_LABELS)) {
            row.copy_from_slice(chunk);
        }
        for (row, chunk) in self.transition.iter_mut().zip(tr.chunks_exact(NUM_LABELS)) {
            row.copy_from_slice(chunk);
        }
    }

    pub fn emissions_for_ids(&self, ids: &[Vec<u32>]) -> Vec<[f64; NUM_LABELS]> {
        ids.iter()
            .map(|active| {
                let mut s = [0.0; NUM_LABELS];
                for &f in active {
                    let row = &self.emission[f as usize];
                    for y in 0..NUM_LABELS {
                        s[y] += row[y];
                    }
                }
                s
            })
            .collect()
    }

    pub fn emissions_for(&self, features: &[FeatureVector]) -> Vec<[f64; NUM_LABELS]> {
        self.emissions_for_ids(&self.features.lookup(features))
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), CrfError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            format_version: MODEL_FORMAT_VERSION,
            template_version: self.template_version.clone(),
            labels: Label::ALL.iter().map(|l| l.to_string()).collect(),
            trained_on: self.trained_on.clone(),
            transition: self.transition.iter().map(|r| r.to_vec()).collect(),
            features: self.features.names.clone(),
            emission: self.emission.iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_writer(out, &file)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("serializing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Loads a model file, rejecting unknown formats, label orders and
    /// template versions other than [`TEMPLATE_VERSION`].
    pub fn read_json<R: Read>(input: R) -> Result<Self, CrfError> {
        let file: ModelFile = serde_json::from_reader(input)?;
        let bad = |msg: String| Err(CrfError::ModelFormat(msg));
        if file.format != MODEL_FORMAT || file.format_version != MODEL_FORMAT_VERSION {
            return bad(format!(
                "unsupported model format {} v{}",
                file.format, file.format_version
            ));
        }
        if file.template_version != TEMPLATE_VERSION {
            return Err(CrfError::TemplateVersion {
                found: file.template_version,
                expected: TEMPLATE_VERSION.to_string(),
            });
        }
        let labels: Vec<String> = Label::ALL.iter().map(|l| l.to_string()).collect();
        if file.labels != labels {
            return bad(format!("label order {:?}, expected {labels:?}", file.labels));
        }
        if file.features.len() != file.emission.len() {
            return bad("feature table and emission rows differ in length".into());
        }
        let row = |r: &Vec<f64>| -> Result<[f64; NUM_LABELS], CrfError> {
            <[f64; NUM_LABELS]>::try_from(r.as_slice())
                .map_err(|_| CrfError::ModelFormat("weight row of wrong width".into()))
        };
        if file.transition.len() != NUM_LABELS {
            return bad("transition matrix of wrong height".into());
        }
        let mut transition = [[0.0; NUM_LABELS]; NUM_LABELS];
        for (dst, src) in transition.iter_mut().zip(&file.transition) {
            *dst = row(src)?;
        }
        let emission = file.emission.iter().map(row).collect::<Result<Vec<_>, _>>()?;
        let mut features = FeatureTable::default();
        for name in &file.features {
            if features.intern(name) as usize != features.len() - 1 {
                return bad(format!("duplicate feature {name:?}"));
            }
        }
        let model = Self {
            features,
            emission,
            transition,
            template_version: file.template_version,
            trained_on: file.trained_on,
        };
        if model.weights().iter().any(|w| !w.is_finite()) {
            return bad("non-finite weight".into());
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CrfModel {
        let table: FeatureTable = ["BIAS", "U02=蓝"].iter().map(|s| s.to_string()).collect();
        let mut m = CrfModel::zeros(table);
        let w: Vec<f64> = (0..m.num_weights()).map(|i| i as f64 * 0.25 - 1.0).collect();
        m.set_weights(&w);
        m
    }

    #[test]
    fn json_round_trip() {
        let m = small();
        let back = CrfModel::read_json(m.to_json().as_bytes()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_template_mismatch() {
        let json = small().to_json().replace(TEMPLATE_VERSION, "other-v9");
        assert!(matches!(
            CrfModel::read_json(json.as_bytes()),
            Err(CrfError::TemplateVersion { .. })
        ));
    }

    #[test]
    fn rejects_label_reorder() {
        let json = small().to_json().replace(r#"["B","I","O"]"#, r#"["O","B","I"]"#);
        assert!(matches!(CrfModel::read_json(json.as_bytes()), Err(CrfError::ModelFormat(_))));
    }

    #[test]
    fn unknown_features_ignored() {
        let m = small();
        let e = m.emissions_for(&[vec!["BIAS".into(), "nope".into()]]);
        assert_eq!(e[0], m.emission[0]);
    }
}
