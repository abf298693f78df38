//! The duotensor: a dense multi-index array whose indices carry a direction,
//! a wire type, and a colour.
//!
//! The colour records which basis the coordinates along that index refer to.
//! Black coordinates are fiducial probabilities; white coordinates are
//! expansion coefficients over the fiducial set. The hopping metric `g_bb`
//! (and its inverse `g_ww`) converts between the two, and linking always sums
//! a black end against a white end.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::theory::{HoppingMetric, Theory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn flipped(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

/// Metadata for one duotensor index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    #[serde(rename = "label")]
    pub port_label: String,
    pub direction: Direction,
    #[serde(rename = "type")]
    pub type_name: String,
    pub color: Color,
    pub dim: usize,
}

/// Dense real multi-index array, row major over its index list. An empty
/// index list is a scalar with exactly one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duotensor {
    indices: Vec<IndexMeta>,
    values: Vec<f64>,
}

/// Anything that can hand out hopping metrics by type name.
pub trait MetricSource {
    fn metric_for(&self, type_name: &str) -> Option<&HoppingMetric>;
}

impl MetricSource for Theory {
    fn metric_for(&self, type_name: &str) -> Option<&HoppingMetric> {
        self.hopping_metric(type_name).ok()
    }
}

impl MetricSource for BTreeMap<String, HoppingMetric> {
    fn metric_for(&self, type_name: &str) -> Option<&HoppingMetric> {
        self.get(type_name)
    }
}

/// Outcome of a proportionality test between two duotensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProportionalityResult {
    /// `a = k * b` entrywise within tolerance.
    Proportional(f64),
    NotProportional,
    /// `b` vanishes while `a` does not.
    ZeroDenominator,
    /// Both arguments vanish.
    BothZero,
}

/// Absolute magnitude below which a duotensor counts as zero for
/// proportionality purposes.
const ZERO_FLOOR: f64 = 1e-12;

impl Duotensor {
    pub fn new(indices: Vec<IndexMeta>, values: Vec<f64>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for meta in &indices {
            if !seen.insert(meta.port_label.clone()) {
                return Err(Error::DuplicatePort(meta.port_label.clone()));
            }
        }
        let expected: usize = indices.iter().map(|m| m.dim).product();
        if values.len() != expected {
            return Err(Error::IndexMismatch {
                context: format!("{} values for index space of size {expected}", values.len()),
            });
        }
        Ok(Duotensor { indices, values })
    }

    pub fn scalar(value: f64) -> Self {
        Duotensor {
            indices: vec![],
            values: vec![value],
        }
    }

    pub fn indices(&self) -> &[IndexMeta] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_scalar(&self) -> Option<f64> {
        self.is_scalar().then(|| self.values[0])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Row-major strides over the index list.
    fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims())
    }

    fn dims(&self) -> Vec<usize> {
        self.indices.iter().map(|m| m.dim).collect()
    }

    fn position(&self, label: &str) -> Result<usize> {
        self.indices
            .iter()
            .position(|m| m.port_label == label)
            .ok_or_else(|| Error::NoSuchPort(label.to_string()))
    }

    pub fn index_meta(&self, label: &str) -> Result<&IndexMeta> {
        Ok(&self.indices[self.position(label)?])
    }

    /// Value at a full multi-index (one coordinate per index, in order).
    pub fn get(&self, coords: &[usize]) -> f64 {
        assert_eq!(coords.len(), self.indices.len());
        let flat: usize = coords.iter().zip(self.strides()).map(|(c, s)| c * s).sum();
        self.values[flat]
    }

    pub fn rename_port(&self, old: &str, new: &str) -> Result<Duotensor> {
        let pos = self.position(old)?;
        if old != new && self.indices.iter().any(|m| m.port_label == new) {
            return Err(Error::DuplicatePort(new.to_string()));
        }
        let mut out = self.clone();
        out.indices[pos].port_label = new.to_string();
        Ok(out)
    }

    /// Contract one index with a square matrix, keeping the index in place.
    ///
    /// `output_style` selects the orientation: `new[i'] = sum_i m[i'][i] v[i]`
    /// when true (matrix rows index the result), `new[j'] = sum_j m[j][j']
    /// v[j]` when false (matrix rows index the argument).
    pub fn contract_index_with_matrix(
        &self,
        label: &str,
        m: &Mat,
        output_style: bool,
    ) -> Result<Duotensor> {
        let pos = self.position(label)?;
        let dim = self.indices[pos].dim;
        if m.rows != dim || m.cols != dim {
            return Err(Error::TypeMismatch {
                context: format!(
                    "matrix is {}x{} but index `{label}` has dimension {dim}",
                    m.rows, m.cols
                ),
            });
        }
        let strides = self.strides();
        let stride = strides[pos];
        let block = stride * dim;
        let mut values = vec![0.0; self.values.len()];
        for outer in (0..self.values.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for new_i in 0..dim {
                    let mut acc = 0.0;
                    for old_i in 0..dim {
                        let c = if output_style {
                            m[(new_i, old_i)]
                        } else {
                            m[(old_i, new_i)]
                        };
                        acc += c * self.values[base + old_i * stride];
                    }
                    values[base + new_i * stride] = acc;
                }
            }
        }
        Ok(Duotensor {
            indices: self.indices.clone(),
            values,
        })
    }

    /// Flip the colour of one index, hopping its values through the metric.
    ///
    /// White-to-black contracts with `g_bb`, black-to-white with `g_ww`;
    /// output indices pair against the metric's preparation slot and input
    /// indices against its effect slot, which makes the operation an
    /// involution. Recolouring to the current colour is a no-op.
    pub fn recolor(&self, label: &str, target: Color, metric: &HoppingMetric) -> Result<Duotensor> {
        let pos = self.position(label)?;
        let meta = &self.indices[pos];
        if metric.type_name != meta.type_name {
            return Err(Error::TypeMismatch {
                context: format!(
                    "metric for type `{}` applied to port `{label}` of type `{}`",
                    metric.type_name, meta.type_name
                ),
            });
        }
        if meta.color == target {
            return Ok(self.clone());
        }
        let output_style = meta.direction == Direction::Output;
        let m = match target {
            Color::Black => &metric.g_bb,
            Color::White => &metric.g_ww,
        };
        let mut out = self.contract_index_with_matrix(label, m, output_style)?;
        out.indices[pos].color = target;
        Ok(out)
    }

    /// Canonical colouring: inputs black, outputs white, so that wiring an
    /// output into an input always links white to black.
    pub fn to_standard_form(&self, metrics: &impl MetricSource) -> Result<Duotensor> {
        self.to_coloring_by(metrics, |meta| match meta.direction {
            Direction::Input => Color::Black,
            Direction::Output => Color::White,
        })
    }

    /// All-black colouring; entries are then fiducial probabilities.
    pub fn to_all_black(&self, metrics: &impl MetricSource) -> Result<Duotensor> {
        self.to_coloring_by(metrics, |_| Color::Black)
    }

    /// Evolution colouring: inputs white, outputs black, so that a state
    /// stays a list of probabilities as it is pushed through layers.
    pub fn to_evolution_form(&self, metrics: &impl MetricSource) -> Result<Duotensor> {
        self.to_coloring_by(metrics, |meta| match meta.direction {
            Direction::Input => Color::White,
            Direction::Output => Color::Black,
        })
    }

    fn to_coloring_by(
        &self,
        metrics: &impl MetricSource,
        target: impl Fn(&IndexMeta) -> Color,
    ) -> Result<Duotensor> {
        let mut out = self.clone();
        for meta in self.indices.clone() {
            let want = target(&meta);
            if meta.color != want {
                let metric = metrics
                    .metric_for(&meta.type_name)
                    .ok_or_else(|| Error::MissingMetric(meta.type_name.clone()))?;
                out = out.recolor(&meta.port_label, want, metric)?;
            }
        }
        Ok(out)
    }

    /// Recolour to an explicit per-index colour list (in index order).
    pub fn to_coloring(&self, colors: &[Color], metrics: &impl MetricSource) -> Result<Duotensor> {
        if colors.len() != self.indices.len() {
            return Err(Error::IndexMismatch {
                context: format!(
                    "{} colours for {} indices",
                    colors.len(),
                    self.indices.len()
                ),
            });
        }
        let by_pos: BTreeMap<&str, Color> = self
            .indices
            .iter()
            .zip(colors)
            .map(|(m, c)| (m.port_label.as_str(), *c))
            .collect();
        self.to_coloring_by(metrics, |meta| by_pos[meta.port_label.as_str()])
    }

    /// Permute the index list into the given label order.
    pub fn reorder_indices(&self, order: &[&str]) -> Result<Duotensor> {
        if order.len() != self.indices.len() {
            return Err(Error::IndexMismatch {
                context: format!(
                    "reorder lists {} labels for {} indices",
                    order.len(),
                    self.indices.len()
                ),
            });
        }
        let positions: Vec<usize> = order
            .iter()
            .map(|l| self.position(l))
            .collect::<Result<_>>()?;
        let mut seen = BTreeSet::new();
        if !positions.iter().all(|p| seen.insert(*p)) {
            return Err(Error::DuplicatePort(format!("{order:?}")));
        }
        let new_indices: Vec<IndexMeta> =
            positions.iter().map(|&p| self.indices[p].clone()).collect();
        let old_strides = self.strides();
        let new_dims: Vec<usize> = new_indices.iter().map(|m| m.dim).collect();
        let mut values = vec![0.0; self.values.len()];
        let mut coords = vec![0usize; new_dims.len()];
        for (new_flat, slot) in values.iter_mut().enumerate() {
            decode(new_flat, &new_dims, &mut coords);
            let old_flat: usize = coords
                .iter()
                .zip(&positions)
                .map(|(c, &p)| c * old_strides[p])
                .sum();
            *slot = self.values[old_flat];
        }
        Duotensor::new(new_indices, values)
    }

    /// Copy with indices sorted lexicographically by label.
    pub fn sorted_by_label(&self) -> Duotensor {
        let mut labels: Vec<&str> = self.indices.iter().map(|m| m.port_label.as_str()).collect();
        labels.sort_unstable();
        self.reorder_indices(&labels).expect("labels are own")
    }

    /// Sum over linked index pairs. Every link must join an output to an
    /// input of the same type with opposite colours; callers recolour first
    /// when needed. The result carries the unlinked indices of `self`
    /// followed by those of `other`. An empty link list is the outer product.
    pub fn contract(&self, other: &Duotensor, links: &[(String, String)]) -> Result<Duotensor> {
        let mut linked_a = Vec::new();
        let mut linked_b = Vec::new();
        for (la, lb) in links {
            let pa = self.position(la)?;
            let pb = other.position(lb)?;
            if linked_a.contains(&pa) {
                return Err(Error::DuplicatePort(la.clone()));
            }
            if linked_b.contains(&pb) {
                return Err(Error::DuplicatePort(lb.clone()));
            }
            let ma = &self.indices[pa];
            let mb = &other.indices[pb];
            if ma.direction == mb.direction {
                return Err(Error::DirectionMismatch {
                    left: la.clone(),
                    right: lb.clone(),
                });
            }
            if ma.type_name != mb.type_name {
                return Err(Error::TypeMismatch {
                    context: format!(
                        "link `{la}` ({}) -- `{lb}` ({})",
                        ma.type_name, mb.type_name
                    ),
                });
            }
            if ma.color == mb.color {
                return Err(Error::ColorClash {
                    left: la.clone(),
                    right: lb.clone(),
                });
            }
            linked_a.push(pa);
            linked_b.push(pb);
        }
        let free_a: Vec<usize> = (0..self.indices.len())
            .filter(|p| !linked_a.contains(p))
            .collect();
        let free_b: Vec<usize> = (0..other.indices.len())
            .filter(|p| !linked_b.contains(p))
            .collect();
        let mut out_indices = Vec::with_capacity(free_a.len() + free_b.len());
        for &p in &free_a {
            out_indices.push(self.indices[p].clone());
        }
        for &p in &free_b {
            out_indices.push(other.indices[p].clone());
        }
        {
            let mut seen = BTreeSet::new();
            for meta in &out_indices {
                if !seen.insert(meta.port_label.as_str()) {
                    return Err(Error::DuplicatePort(meta.port_label.clone()));
                }
            }
        }

        let strides_a = self.strides();
        let strides_b = other.strides();
        let offsets = |positions: &[usize], strides: &[usize], dims: &[usize]| -> Vec<usize> {
            let sel_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
            let total: usize = sel_dims.iter().product();
            let mut coords = vec![0usize; positions.len()];
            (0..total)
                .map(|flat| {
                    decode(flat, &sel_dims, &mut coords);
                    coords
                        .iter()
                        .zip(positions)
                        .map(|(c, &p)| c * strides[p])
                        .sum()
                })
                .collect()
        };
        let dims_a = self.dims();
        let dims_b = other.dims();
        let free_a_off = offsets(&free_a, &strides_a, &dims_a);
        let free_b_off = offsets(&free_b, &strides_b, &dims_b);
        let sum_a_off = offsets(&linked_a, &strides_a, &dims_a);
        let sum_b_off = offsets(&linked_b, &strides_b, &dims_b);

        let mut values = vec![0.0; free_a_off.len() * free_b_off.len()];
        for (ia, &fa) in free_a_off.iter().enumerate() {
            for (ib, &fb) in free_b_off.iter().enumerate() {
                let mut acc = 0.0;
                for (&sa, &sb) in sum_a_off.iter().zip(&sum_b_off) {
                    acc += self.values[fa + sa] * other.values[fb + sb];
                }
                values[ia * free_b_off.len() + ib] = acc;
            }
        }
        Duotensor::new(out_indices, values)
    }

    /// Tensor product of two duotensors with disjoint port labels.
    pub fn outer(&self, other: &Duotensor) -> Result<Duotensor> {
        self.contract(other, &[])
    }

    /// Entrywise weighted sum of duotensors sharing an identical index list.
    pub fn linear_combine(terms: &[(f64, &Duotensor)]) -> Result<Duotensor> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::IndexMismatch {
                context: "empty term list".to_string(),
            });
        };
        for (_, t) in terms {
            if t.indices != first.indices {
                return Err(Error::IndexMismatch {
                    context: "linear combination over differing index lists".to_string(),
                });
            }
        }
        let mut values = vec![0.0; first.values.len()];
        for (coeff, t) in terms {
            for (v, x) in values.iter_mut().zip(&t.values) {
                *v += coeff * x;
            }
        }
        Ok(Duotensor {
            indices: first.indices.clone(),
            values,
        })
    }

    /// Test whether `self = k * other` entrywise.
    ///
    /// `k` is the least-squares estimate, then every entry must satisfy
    /// `|a_i - k b_i| <= rel_tol * max(|a|_inf, |k b|_inf) + 1e-12`.
    pub fn proportionality(
        &self,
        other: &Duotensor,
        rel_tol: f64,
    ) -> Result<ProportionalityResult> {
        if self.indices != other.indices {
            return Err(Error::IndexMismatch {
                context: "proportionality over differing index lists".to_string(),
            });
        }
        let a_max = self.max_abs();
        let b_max = other.max_abs();
        if b_max <= ZERO_FLOOR {
            return Ok(if a_max <= ZERO_FLOOR {
                ProportionalityResult::BothZero
            } else {
                ProportionalityResult::ZeroDenominator
            });
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            num += a * b;
            den += b * b;
        }
        let k = num / den;
        let scale = a_max.max(k.abs() * b_max);
        let tol = rel_tol * scale + 1e-12;
        let ok = self
            .values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| (a - k * b).abs() <= tol);
        Ok(if ok {
            ProportionalityResult::Proportional(k)
        } else {
            ProportionalityResult::NotProportional
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("duotensor serializes")
    }

    pub fn from_json(text: &str) -> Result<Duotensor> {
        let raw: Duotensor = serde_json::from_str(text).map_err(|e| Error::Malformed {
            what: "duotensor JSON",
            context: e.to_string(),
        })?;
        Duotensor::new(raw.indices, raw.values)
    }
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

fn decode(mut flat: usize, dims: &[usize], coords: &mut [usize]) {
    for i in (0..dims.len()).rev() {
        coords[i] = flat % dims[i];
        flat /= dims[i];
    }
}

/// Convenience constructor for index metadata.
pub fn index(
    label: &str,
    direction: Direction,
    type_name: &str,
    color: Color,
    dim: usize,
) -> IndexMeta {
    IndexMeta {
        port_label: label.to_string(),
        direction,
        type_name: type_name.to_string(),
        color,
        dim,
    }
}
