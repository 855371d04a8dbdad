//! Structure of pruned networks: active-edge graphs, input-to-output
//! reachability, population statistics and linear-region bounds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpModel;
use crate::scalar::Scalar;
use crate::sim::FEATURE_NAMES;

fn input_names(dim: usize) -> Vec<String> {
    if dim == FEATURE_NAMES.len() {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=dim).map(|i| format!("in{i}")).collect()
    }
}

fn output_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("f{i}")).collect()
}

/// `presence[f][o]` is true iff a path of active weights joins input `f`
/// to output `o`.
pub fn reachability<T: Scalar>(model: &MlpModel<T>) -> Vec<Vec<bool>> {
    let d = model.input_dim();
    // Each node carries the set of inputs reaching it.
    let mut reach: Vec<Vec<bool>> = (0..d).map(|f| (0..d).map(|g| g == f).collect()).collect();
    for layer in model.layers() {
        let next = (0..layer.rows())
            .map(|r| {
                let mut set = vec![false; d];
                for c in 0..layer.cols() {
                    if layer.is_active(r, c) {
                        for (s, v) in set.iter_mut().zip(&reach[c]) {
                            *s |= *v;
                        }
                    }
                }
                set
            })
            .collect();
        reach = next;
    }
    (0..d)
        .map(|f| (0..model.output_dim()).map(|o| reach[o][f]).collect())
        .collect()
}

/// Feature-by-output presence matrix (13 × 8 for the cell models).
pub fn feature_presence<T: Scalar>(model: &MlpModel<T>) -> Vec<Vec<bool>> {
    reachability(model)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    /// 0 = inputs, last = outputs.
    pub layer: usize,
    pub index: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Layered graph of a network's active weights. Inputs and outputs are
/// always present; hidden neurons only if they carry at least one edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureGraph {
    pub shape: Vec<usize>,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Per output: whether its subnetwork reduces to a sum of single-path
    /// chains, i.e. no hidden neuron beyond the first hidden layer combines
    /// two or more hidden neurons feeding that output.
    pub linear_collapse: Vec<bool>,
}

impl StructureGraph {
    pub fn node_index(&self, layer: usize, index: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.layer == layer && n.index == index)
    }

    pub fn has_edge(&self, from: (usize, usize), to: (usize, usize)) -> bool {
        match (self.node_index(from.0, from.1), self.node_index(to.0, to.1)) {
            (Some(a), Some(b)) => self.edges.iter().any(|e| e.from == a && e.to == b),
            _ => false,
        }
    }

    /// Graphviz description: one rank per layer, edge labels carry weights.
    pub fn to_dot(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "// {c}");
        }
        s.push_str("digraph mlp {\n  rankdir=LR;\n  node [shape=circle];\n");
        let layers = self.shape.len();
        for l in 0..layers {
            let members: Vec<&Node> = self.nodes.iter().filter(|n| n.layer == l).collect();
            if members.is_empty() {
                continue;
            }
            let _ = write!(s, "  {{ rank=same;");
            for n in members {
                let _ = write!(s, " {};", n.name);
            }
            s.push_str(" }\n");
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  {} -> {} [label=\"{:.4}\"];",
                self.nodes[e.from].name, self.nodes[e.to].name, e.weight
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Marks nodes reachable from any input (forward) and nodes that reach
/// output `o` (backward). Returned per layer, layer 0 being the inputs.
fn relevant_nodes<T: Scalar>(model: &MlpModel<T>, output: Option<usize>) -> Vec<Vec<bool>> {
    let shape = model.shape();
    let mut fwd: Vec<Vec<bool>> = vec![vec![true; shape[0]]];
    for layer in model.layers() {
        let prev = fwd.last().expect("non-empty");
        fwd.push(
            (0..layer.rows())
                .map(|r| (0..layer.cols()).any(|c| prev[c] && layer.is_active(r, c)))
                .collect(),
        );
    }
    let last = shape.len() - 1;
    let mut bwd: Vec<Vec<bool>> = shape.iter().map(|&w| vec![false; w]).collect();
    for o in 0..shape[last] {
        bwd[last][o] = output.is_none_or(|t| t == o);
    }
    for j in (0..model.layers().len()).rev() {
        let layer = &model.layers()[j];
        for c in 0..layer.cols() {
            bwd[j][c] = (0..layer.rows()).any(|r| bwd[j + 1][r] && layer.is_active(r, c));
        }
    }
    fwd.iter()
        .zip(&bwd)
        .map(|(f, b)| f.iter().zip(b).map(|(x, y)| *x && *y).collect())
        .collect()
}

fn collapses_to_linear<T: Scalar>(model: &MlpModel<T>, output: usize) -> bool {
    let rel = relevant_nodes(model, Some(output));
    let hidden = model.layers().len() - 1;
    // Weight matrix j maps layer j to layer j + 1; merges of hidden neurons
    // happen in matrices 1..hidden.
    (1..hidden).all(|j| {
        let layer = &model.layers()[j];
        (0..layer.rows()).filter(|&r| rel[j + 1][r]).all(|r| {
            (0..layer.cols())
                .filter(|&c| rel[j][c] && layer.is_active(r, c))
                .count()
                <= 1
        })
    })
}

pub fn extract_structure<T: Scalar>(model: &MlpModel<T>) -> StructureGraph {
    let shape = model.shape().to_vec();
    let last = shape.len() - 1;
    let mut nodes = Vec::new();
    let mut ids: Vec<Vec<Option<usize>>> = shape.iter().map(|&w| vec![None; w]).collect();
    let names_in = input_names(shape[0]);
    let names_out = output_names(shape[last]);

    let incident = |l: usize, i: usize| -> bool {
        let incoming = l > 0 && {
            let layer = &model.layers()[l - 1];
            (0..layer.cols()).any(|c| layer.is_active(i, c))
        };
        let outgoing = l < last && {
            let layer = &model.layers()[l];
            (0..layer.rows()).any(|r| layer.is_active(r, i))
        };
        incoming || outgoing
    };

    for (l, &width) in shape.iter().enumerate() {
        for i in 0..width {
            let keep = l == 0 || l == last || incident(l, i);
            if !keep {
                continue;
            }
            let name = if l == 0 {
                names_in[i].clone()
            } else if l == last {
                format!("{}_hat", names_out[i])
            } else {
                format!("h{l}_{}", i + 1)
            };
            ids[l][i] = Some(nodes.len());
            nodes.push(Node { layer: l, index: i, name });
        }
    }

    let mut edges = Vec::new();
    for (j, layer) in model.layers().iter().enumerate() {
        for r in 0..layer.rows() {
            for c in 0..layer.cols() {
                if layer.is_active(r, c) {
                    if let (Some(from), Some(to)) = (ids[j][c], ids[j + 1][r]) {
                        edges.push(Edge {
                            from,
                            to,
                            weight: layer.weight(r, c).as_f64(),
                        });
                    }
                }
            }
        }
    }
    let linear_collapse = (0..shape[last]).map(|o| collapses_to_linear(model, o)).collect();
    StructureGraph {
        shape,
        nodes,
        edges,
        linear_collapse,
    }
}

/// Canonical key of the subnetwork feeding `output`, invariant under
/// permutations of hidden neurons within a layer.
///
/// Inputs keep their identity. In each hidden layer a neuron is described by
/// the sorted labels of its active predecessors; neurons are then labelled by
/// the rank of that description among the layer's distinct descriptions.
pub fn structure_key<T: Scalar>(model: &MlpModel<T>, output: usize) -> String {
    let rel = relevant_nodes(model, Some(output));
    let mut labels: Vec<usize> = (0..model.input_dim()).collect();
    let mut key = String::new();
    let n = model.layers().len();
    for (j, layer) in model.layers().iter().enumerate() {
        let rows: Vec<usize> = if j + 1 == n {
            vec![output]
        } else {
            (0..layer.rows()).filter(|&r| rel[j + 1][r]).collect()
        };
        let sigs: Vec<Vec<usize>> = rows
            .iter()
            .map(|&r| {
                let mut s: Vec<usize> = (0..layer.cols())
                    .filter(|&c| rel[j][c] && layer.is_active(r, c))
                    .map(|c| labels[c])
                    .collect();
                s.sort_unstable();
                s
            })
            .collect();
        let mut distinct = sigs.clone();
        distinct.sort();
        distinct.dedup();
        let mut next = vec![usize::MAX; layer.rows()];
        for (&r, s) in rows.iter().zip(&sigs) {
            next[r] = distinct.binary_search(s).expect("signature present");
        }
        let mut sorted = sigs;
        sorted.sort();
        let _ = write!(key, "{}{:?}", if j == 0 { "" } else { "|" }, sorted);
        labels = next;
    }
    key
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureCount {
    pub key: String,
    pub count: usize,
    pub percent: f64,
    /// Index of the first model with this structure.
    pub example: usize,
}

/// Distinct structures of one output across a population, most common first.
pub fn structure_histogram<T: Scalar>(models: &[MlpModel<T>], output: usize) -> Vec<StructureCount> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, m) in models.iter().enumerate() {
        counts.entry(structure_key(m, output)).or_insert((0, i)).0 += 1;
    }
    let total = models.len().max(1) as f64;
    let mut out: Vec<StructureCount> = counts
        .into_iter()
        .map(|(key, (count, example))| StructureCount {
            key,
            count,
            percent: 100.0 * count as f64 / total,
            example,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.example.cmp(&b.example)));
    out
}

/// Share (in percent) of models in which each feature reaches each output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrequencyTable {
    pub features: Vec<String>,
    pub outputs: Vec<String>,
    /// `percent[feature][output]`.
    pub percent: Vec<Vec<f64>>,
    pub models: usize,
}

impl FeatureFrequencyTable {
    pub fn get(&self, feature: &str, output: usize) -> Option<f64> {
        let f = self.features.iter().position(|n| n == feature)?;
        self.percent.get(f)?.get(output).copied()
    }

    /// One row per feature, one column per output.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("feature");
        for o in &self.outputs {
            let _ = write!(s, ",{o}_hat");
        }
        s.push('\n');
        for (name, row) in self.features.iter().zip(&self.percent) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn frequency_table<T: Scalar>(models: &[MlpModel<T>]) -> Result<FeatureFrequencyTable> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("frequency table needs at least one model".into()))?;
    if let Some(m) = models.iter().find(|m| m.shape() != first.shape()) {
        return Err(Error::ShapeMismatch(first.shape().to_vec(), m.shape().to_vec()));
    }
    let (d, o) = (first.input_dim(), first.output_dim());
    let mut counts = vec![vec![0usize; o]; d];
    for m in models {
        for (row, pres) in counts.iter_mut().zip(feature_presence(m)) {
            for (c, p) in row.iter_mut().zip(pres) {
                *c += usize::from(p);
            }
        }
    }
    let n = models.len() as f64;
    Ok(FeatureFrequencyTable {
        features: input_names(d),
        outputs: output_names(o),
        percent: counts
            .into_iter()
            .map(|r| r.into_iter().map(|c| 100.0 * c as f64 / n).collect())
            .collect(),
        models: models.len(),
    })
}

/// Multiply-accumulate count of one forward pass: `Σ_j L_j · L_{j+1}`.
pub fn matrix_op_count(shape: &[usize]) -> usize {
    shape.windows(2).map(|w| w[0] * w[1]).sum()
}

/// Asymptotic bounds on the maximal number of linear regions of a ReLU
/// network with input dimension `d` and `hidden_layers` layers of `n`
/// neurons, constants dropped:
///
/// * upper: `n^(d L)`
/// * lower: `(n / d)^((L - 1) d) · n^d`
///
/// Both are held as natural logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub d: usize,
    pub n: usize,
    pub hidden_layers: usize,
    pub ln_lower: f64,
    pub ln_upper: f64,
}

impl RegionBounds {
    fn value(ln: f64) -> Result<f64> {
        let v = ln.exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow { log_value: ln })
        }
    }

    pub fn upper(&self) -> Result<f64> {
        Self::value(self.ln_upper)
    }

    pub fn lower(&self) -> Result<f64> {
        Self::value(self.ln_lower)
    }

    pub fn log10_upper(&self) -> f64 {
        self.ln_upper / std::f64::consts::LN_10
    }

    pub fn log10_lower(&self) -> f64 {
        self.ln_lower / std::f64::consts::LN_10
    }
}

pub fn region_bounds(d: usize, n: usize, hidden_layers: usize) -> Result<RegionBounds> {
    if d == 0 || n == 0 || hidden_layers == 0 {
        return Err(Error::InvalidArgument(
            "region bounds need d, n and the number of hidden layers to be at least 1".into(),
        ));
    }
    let (df, nf, lf) = (d as f64, n as f64, hidden_layers as f64);
    Ok(RegionBounds {
        d,
        n,
        hidden_layers,
        ln_upper: df * lf * nf.ln(),
        ln_lower: (lf - 1.0) * df * (nf / df).ln() + df * nf.ln(),
    })
}

/// Bounds for a full layer-width list with equally wide hidden layers.
pub fn region_bounds_for_shape(shape: &[usize]) -> Result<RegionBounds> {
    if shape.len() < 3 {
        return Err(Error::InvalidArgument(
            "region bounds need at least one hidden layer".into(),
        ));
    }
    let hidden = &shape[1..shape.len() - 1];
    if hidden.iter().any(|&w| w != hidden[0]) {
        return Err(Error::InvalidArgument(format!(
            "region bounds assume equally wide hidden layers, got {hidden:?}"
        )));
    }
    region_bounds(shape[0], hidden[0], hidden.len())
}
