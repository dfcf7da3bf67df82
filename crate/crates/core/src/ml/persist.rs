//! Plain-text model files.
//!
//! ```text
//! qbath-model v1
//! targets <name> <name> ...
//! pca <n_components> <n_features>
//! mean <f> ...
//! variance <f> ...
//! component <f> ...            (n_components lines)
//! gbt <n_features> <n_estimators> <max_depth> <learning_rate> <subsample>
//! ensemble <base> <n_trees>    (one per target)
//! tree <n_nodes>
//! split <feature> <threshold> <left> <right>
//! leaf <value>
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reload is exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Ensemble, GbtModel, Hyper, InferenceModel, Node, PcaModel, Tree};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "qbath-model v1";

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &InferenceModel) -> String {
    let mut s = String::new();
    let p = &model.pca;
    let g = &model.gbt;
    let h = &g.hyper;
    writeln!(s, "{MODEL_SCHEMA}").unwrap();
    writeln!(s, "targets {}", model.target_names.join(" ")).unwrap();
    writeln!(s, "pca {} {}", p.n_components(), p.n_features()).unwrap();
    writeln!(s, "mean {}", join(p.mean.iter().copied())).unwrap();
    writeln!(s, "variance {}", join(p.explained_variance.iter().copied())).unwrap();
    for r in 0..p.n_components() {
        writeln!(s, "component {}", join(p.components.row(r).iter().copied())).unwrap();
    }
    writeln!(s, "gbt {} {} {} {} {}", g.n_features, h.n_estimators, h.max_depth, h.learning_rate, h.subsample).unwrap();
    for e in &g.ensembles {
        writeln!(s, "ensemble {} {}", e.base, e.trees.len()).unwrap();
        for t in &e.trees {
            writeln!(s, "tree {}", t.nodes.len()).unwrap();
            for n in &t.nodes {
                match *n {
                    Node::Leaf(v) => writeln!(s, "leaf {v}").unwrap(),
                    Node::Split { feature, threshold, left, right } => {
                        writeln!(s, "split {feature} {threshold} {left} {right}").unwrap()
                    }
                }
            }
        }
    }
    s
}

pub fn save_model(model: &InferenceModel, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<InferenceModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Tag and fields of the next non-empty line.
    fn next_fields(&mut self) -> Result<(&'a str, Vec<&'a str>)> {
        loop {
            let Some((k, l)) = self.it.next() else {
                return Err(Error::Parse("model file ends early".into()));
            };
            self.line = k + 1;
            let mut f = l.split_whitespace();
            if let Some(t) = f.next() {
                return Ok((t, f.collect()));
            }
        }
    }

    /// Fields of the next non-empty line, which must start with `tag`.
    fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let (t, f) = self.next_fields()?;
        if t != tag {
            return Err(self.err(&format!("expected '{tag}', found '{t}'")));
        }
        Ok(f)
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("model line {}: {msg}", self.line))
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(&format!("bad number '{s}'")))
    }

    fn floats(&self, f: &[&str], n: usize) -> Result<Vec<f64>> {
        if f.len() != n {
            return Err(self.err(&format!("expected {n} values, found {}", f.len())));
        }
        f.iter().map(|s| self.num(s)).collect()
    }
}

pub fn parse_model(text: &str) -> Result<InferenceModel> {
    let mut r = Lines { it: text.lines().enumerate(), line: 0 };
    let (tag, rest) = r.next_fields()?;
    let header = std::iter::once(tag).chain(rest).collect::<Vec<_>>().join(" ");
    if header != MODEL_SCHEMA {
        return Err(Error::Parse(format!("unsupported model schema '{header}', expected '{MODEL_SCHEMA}'")));
    }

    let target_names: Vec<String> = r.expect("targets")?.iter().map(|s| s.to_string()).collect();
    let f = r.expect("pca")?;
    if f.len() != 2 {
        return Err(r.err("pca needs <n_components> <n_features>"));
    }
    let (k, p): (usize, usize) = (r.num(f[0])?, r.num(f[1])?);
    let f = r.expect("mean")?;
    let mean = r.floats(&f, p)?;
    let f = r.expect("variance")?;
    let var = r.floats(&f, k)?;
    let mut comps = Vec::with_capacity(k * p);
    for _ in 0..k {
        let f = r.expect("component")?;
        comps.extend(r.floats(&f, p)?);
    }
    let pca = PcaModel {
        mean: DVector::from_vec(mean),
        components: DMatrix::from_row_slice(k, p, &comps),
        explained_variance: DVector::from_vec(var),
    };

    let f = r.expect("gbt")?;
    if f.len() != 5 {
        return Err(r.err("gbt needs 5 fields"));
    }
    let hyper = Hyper {
        n_estimators: r.num(f[1])?,
        max_depth: r.num(f[2])?,
        learning_rate: r.num(f[3])?,
        subsample: r.num(f[4])?,
    };
    let n_features: usize = r.num(f[0])?;
    let mut ensembles = Vec::with_capacity(target_names.len());
    for _ in 0..target_names.len() {
        let f = r.expect("ensemble")?;
        if f.len() != 2 {
            return Err(r.err("ensemble needs <base> <n_trees>"));
        }
        let base: f64 = r.num(f[0])?;
        let n_trees: usize = r.num(f[1])?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let f = r.expect("tree")?;
            let n_nodes: usize = r.num(f.first().copied().unwrap_or(""))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (tag, f) = r.next_fields()?;
                let node = match tag {
                    "leaf" => Node::Leaf(r.floats(&f, 1)?[0]),
                    "split" => {
                        if f.len() != 4 {
                            return Err(r.err("split needs 4 fields"));
                        }
                        let (left, right): (usize, usize) = (r.num(f[2])?, r.num(f[3])?);
                        if left >= n_nodes || right >= n_nodes {
                            return Err(r.err("child index out of range"));
                        }
                        let feature: usize = r.num(f[0])?;
                        if feature >= n_features {
                            return Err(r.err("split feature out of range"));
                        }
                        Node::Split { feature, threshold: r.num(f[1])?, left, right }
                    }
                    other => return Err(r.err(&format!("expected 'leaf' or 'split', found '{other}'"))),
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        ensembles.push(Ensemble { base, trees });
    }
    if n_features != k {
        return Err(Error::Parse(format!("gbt expects {n_features} inputs but PCA has {k} components")));
    }
    Ok(InferenceModel { pca, gbt: GbtModel { hyper, n_features, ensembles }, target_names })
}
