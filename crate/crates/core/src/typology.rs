//! Left-direction frequencies over dependency triples, the Manhattan
//! word-order distance and Pearson correlation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::order::OrderPredictor;
use crate::treebank::{Treebank, TripleKey};

pub const DEFAULT_K: usize = 52;

/// Left and total counts per triple over every non-root edge.
pub fn triple_counts<'a>(tbs: impl IntoIterator<Item = &'a Treebank>) -> BTreeMap<TripleKey, (usize, usize)> {
    let mut counts: BTreeMap<TripleKey, (usize, usize)> = BTreeMap::new();
    for tb in tbs {
        for s in &tb.sentences {
            for (dep, head) in s.edges() {
                let key = s.triple(dep).expect("non-root edge");
                let c = counts.entry(key).or_default();
                if dep < head {
                    c.0 += 1;
                }
                c.1 += 1;
            }
        }
    }
    counts
}

/// The `k` most frequent triples across `tbs`, by descending count then
/// key order. Returns fewer (with a warning) when fewer exist.
pub fn select_triples(tbs: &[&Treebank], k: usize) -> Vec<TripleKey> {
    let mut all: Vec<(TripleKey, usize)> = triple_counts(tbs.iter().copied())
        .into_iter()
        .map(|(key, (_, n))| (key, n))
        .collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if all.len() < k {
        log::warn!("only {} distinct triples, fewer than k = {k}", all.len());
    }
    all.into_iter().take(k).map(|(key, _)| key).collect()
}

/// Left-direction frequency per triple with support counts.
#[derive(Clone, Debug, PartialEq)]
pub struct TypologyVector {
    pub language: String,
    pub triples: Vec<TripleKey>,
    pub values: Vec<f64>,
    pub support: Vec<usize>,
}

impl TypologyVector {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// CSV with header `dep_upos,head_upos,deprel,left_freq,support`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dep_upos", "head_upos", "deprel", "left_freq", "support"])
            .map_err(csv_err)?;
        for ((k, v), n) in self.triples.iter().zip(&self.values).zip(&self.support) {
            out.write_record([
                k.dep_upos.as_str(),
                &k.head_upos,
                &k.deprel,
                &v.to_string(),
                &n.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, language: &str) -> Result<Self> {
        let mut v = TypologyVector {
            language: language.to_owned(),
            triples: Vec::new(),
            values: Vec::new(),
            support: Vec::new(),
        };
        for rec in csv::Reader::from_reader(r).records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 5 {
                return Err(Error::Format(format!("expected 5 CSV fields, found {}", rec.len())));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Format(e.to_string()));
            v.triples.push(TripleKey::new(&rec[0], &rec[1], &rec[2]));
            v.values.push(num(3)?);
            v.support.push(
                rec[4]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| Error::Format(e.to_string()))?,
            );
        }
        Ok(v)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Observed left frequency of each triple in `tb`; unsupported triples get 0.5.
pub fn order_feature(tb: &Treebank, triples: &[TripleKey]) -> TypologyVector {
    let counts = triple_counts([tb]);
    let mut values = Vec::with_capacity(triples.len());
    let mut support = Vec::with_capacity(triples.len());
    for t in triples {
        let (left, n) = counts.get(t).copied().unwrap_or((0, 0));
        values.push(if n == 0 { 0.5 } else { left as f64 / n as f64 });
        support.push(n);
    }
    TypologyVector {
        language: tb.language.clone(),
        triples: triples.to_vec(),
        values,
        support,
    }
}

/// Mean predicted left probability over the gold edges of each triple.
pub fn predicted_order_frequency<P: OrderPredictor + ?Sized>(
    model: &P,
    tb: &Treebank,
    triples: &[TripleKey],
) -> Result<TypologyVector> {
    let mut sums: BTreeMap<TripleKey, (f64, usize)> = BTreeMap::new();
    for s in &tb.sentences {
        let edges = s.edges();
        if edges.is_empty() {
            continue;
        }
        let right = model.predict(s, &edges)?;
        for (&(dep, _), p) in edges.iter().zip(right) {
            let e = sums.entry(s.triple(dep).expect("non-root edge")).or_default();
            e.0 += 1.0 - p;
            e.1 += 1;
        }
    }
    let mut values = Vec::with_capacity(triples.len());
    let mut support = Vec::with_capacity(triples.len());
    for t in triples {
        let (sum, n) = sums.get(t).copied().unwrap_or((0.0, 0));
        values.push(if n == 0 { 0.5 } else { sum / n as f64 });
        support.push(n);
    }
    Ok(TypologyVector {
        language: tb.language.clone(),
        triples: triples.to_vec(),
        values,
        support,
    })
}

/// Manhattan distance, divided by the number of triples when `normalize`.
pub fn word_order_distance(a: &TypologyVector, b: &TypologyVector, normalize: bool) -> Result<f64> {
    if a.triples != b.triples {
        return Err(Error::KeyMismatch);
    }
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(if normalize && !a.values.is_empty() {
        d / a.values.len() as f64
    } else {
        d
    })
}

/// Pearson's r and its two-sided p-value from a t distribution with
/// `n - 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Statistics(format!("need at least 3 points, got {n}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics("zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Statistics(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok((r, p))
}
