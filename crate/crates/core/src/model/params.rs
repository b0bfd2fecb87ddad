use ndarray::{Array2, NdFloat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub value: Array2<F>,
    pub trainable: bool,
}

/// Flat, ordered storage for every tensor of a model. Layers refer to
/// their tensors by [`ParamId`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
}

impl<F: NdFloat> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, value: Array2<F>) -> ParamId {
        self.params.push(Param { name: name.into(), value, trainable: true });
        ParamId(self.params.len() - 1)
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.params.truncate(len);
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<F> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub(crate) fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn map<G: NdFloat>(&self, f: impl Fn(F) -> G) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.mapv(&f), trainable: p.trainable })
                .collect(),
        }
    }
}

/// Gradients aligned with a [`ParamStore`]; frozen tensors have none.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    tensors: Vec<Option<Array2<F>>>,
}

impl<F: NdFloat> Grads<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Self {
            tensors: store
                .iter()
                .map(|p| p.trainable.then(|| Array2::zeros(p.value.raw_dim())))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<F>> {
        self.tensors[id.0].as_ref()
    }

    pub(crate) fn slot(&mut self, id: ParamId) -> Option<&mut Array2<F>> {
        self.tensors[id.0].as_mut()
    }

    /// Adds `g` into the gradient for `id`; no-op for frozen tensors.
    pub(crate) fn add(&mut self, id: ParamId, g: &Array2<F>) {
        if let Some(t) = self.slot(id) {
            *t += g;
        }
    }

    pub fn is_tracked(&self, id: ParamId) -> bool {
        self.tensors[id.0].is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2<F>)> {
        self.tensors.iter().enumerate().filter_map(|(i, t)| t.as_ref().map(|t| (ParamId(i), t)))
    }

    /// Number of tensors that receive gradients.
    pub fn tracked(&self) -> usize {
        self.tensors.iter().filter(|t| t.is_some()).count()
    }

    pub fn scale(&mut self, s: F) {
        for t in self.tensors.iter_mut().flatten() {
            t.mapv_inplace(|v| v * s);
        }
    }

    pub fn zero(&mut self) {
        for t in self.tensors.iter_mut().flatten() {
            t.fill(F::zero());
        }
    }

    pub fn accumulate(&mut self, other: &Grads<F>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                *a += b;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
