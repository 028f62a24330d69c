use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::Document;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Joins the two tokens of a bigram. Tokens are alphanumeric, so a space
/// never occurs inside a unigram.
pub const BIGRAM_SEPARATOR: char = ' ';

/// Unigram and bigram terms of a token sequence, in order of occurrence.
pub fn terms(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    out.extend(
        tokens
            .windows(2)
            .map(|w| format!("{}{BIGRAM_SEPARATOR}{}", w[0], w[1])),
    );
    out
}

/// Fitted vocabulary with smoothed inverse document frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct BowVocab {
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
    dim_limit: usize,
}

/// Sparse, L2-normalised tf-idf vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BowVector {
    dim: usize,
    /// `(index, weight)` sorted by index.
    entries: Vec<(usize, f64)>,
}

impl BowVector {
    /// Checked constructor: indices strictly increasing and below `dim`,
    /// weights finite and non-negative.
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<BowVector> {
        let sorted = entries.windows(2).all(|w| w[0].0 < w[1].0);
        let in_range = entries.iter().all(|&(i, w)| i < dim && w.is_finite() && w >= 0.0);
        if !sorted || !in_range {
            return Err(Error::domain("bow entries must be sorted, in range and non-negative"));
        }
        Ok(BowVector { dim, entries })
    }

    pub fn from_dense(values: &[f64]) -> Result<BowVector> {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        Self::new(values.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            v[i] = w;
        }
        v
    }
}

/// Stacks vectors into a dense `n x dim` matrix.
pub fn dense_batch(vectors: &[&BowVector], dim: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(vectors.len(), dim);
    for (r, v) in vectors.iter().enumerate() {
        if v.dim != dim {
            return Err(Error::shape(format!("bow vector of dim {} in a {dim}-dim batch", v.dim)));
        }
        let row = m.row_mut(r);
        for &(i, w) in &v.entries {
            row[i] = w;
        }
    }
    Ok(m)
}

impl BowVocab {
    /// Keeps the `dim` terms with highest document frequency (ties broken
    /// lexicographically); `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
    pub fn fit(train_docs: &[Document], dim: usize) -> Result<BowVocab> {
        if train_docs.is_empty() {
            return Err(Error::config("cannot fit a vocabulary on zero documents"));
        }
        if dim == 0 {
            return Err(Error::config("vocabulary dimension must be at least 1"));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in train_docs {
            let unique: HashSet<String> = terms(&doc.tokens()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(dim);

        let n = train_docs.len() as f64;
        let idf = ranked
            .iter()
            .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        let terms: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        Ok(Self::from_parts(terms, idf, dim))
    }

    fn from_parts(terms: Vec<String>, idf: Vec<f64>, dim_limit: usize) -> BowVocab {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        BowVocab {
            terms,
            idf,
            index,
            dim_limit,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim_limit(&self) -> usize {
        self.dim_limit
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i])
    }

    /// Raw term counts times idf, L2-normalised. Unknown terms are dropped.
    pub fn featurize(&self, doc: &Document) -> BowVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms(&doc.tokens()) {
            if let Some(&i) = self.index.get(&t) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> =
            counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        BowVector {
            dim: self.terms.len(),
            entries,
        }
    }

    /// Text form: a header line then `term<TAB>idf` per line in index order.
    pub fn to_text(&self) -> String {
        let mut out = format!("# bow-vocab v1 dim_limit={}\n", self.dim_limit);
        for (t, idf) in self.terms.iter().zip(&self.idf) {
            out.push_str(&format!("{t}\t{idf}\n"));
        }
        out
    }

    pub fn from_text(raw: &str, origin: &Path) -> Result<BowVocab> {
        let mut lines = raw.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::parse(origin, 1, "empty vocabulary file"))?;
        let dim_limit = header
            .strip_prefix("# bow-vocab v1 dim_limit=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| Error::parse(origin, 1, "bad vocabulary header"))?;
        let mut terms = Vec::new();
        let mut idf = Vec::new();
        for (n, line) in lines {
            let (t, v) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected term<TAB>idf"))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, format!("bad idf {v:?}")))?;
            terms.push(t.to_string());
            idf.push(v);
        }
        Ok(Self::from_parts(terms, idf, dim_limit))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BowVocab> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&raw, path)
    }
}
