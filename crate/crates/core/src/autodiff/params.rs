use super::{AutodiffError, Gradients, Graph, Tensor, Var};

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: Vec<(String, Tensor)>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), AutodiffError> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(AutodiffError::DuplicateParameter(name));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| AutodiffError::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, AutodiffError> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| AutodiffError::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .fold(0.0, |m, (_, t)| m.max(t.max_abs()))
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// Places every tensor on `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph, requires_grad: bool) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), graph.leaf(t.clone(), requires_grad)))
                .collect(),
        }
    }
}

impl ParameterStore {
    /// Pairs existing graph handles with this store's names, in store order.
    pub fn attach(&self, vars: &[Var]) -> Result<Bound, AutodiffError> {
        if vars.len() != self.entries.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "attach",
                left: vec![self.entries.len()],
                right: vec![vars.len()],
            });
        }
        Ok(Bound {
            vars: self
                .entries
                .iter()
                .zip(vars)
                .map(|((n, _), &v)| (n.clone(), v))
                .collect(),
        })
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }
}

/// Graph handles for a bound [`ParameterStore`], in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, AutodiffError> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| AutodiffError::MissingParameter(name.to_string()))
    }

    /// Gradients aligned with the store the handles came from; parameters
    /// that did not affect the loss get zeros.
    pub fn gradients(&self, graph: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|(_, v)| grads.get_or_zeros(*v, graph.value(*v)))
            .collect()
    }
}
