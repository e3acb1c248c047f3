use super::{Classifier, Dropout, EncoderBranch, Initializer, Mode, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::numcore::{Float, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::pairseq::{EncodedPair, Order, PairedInput};

/// Two independently initialized branches, one per layout, joined by
/// concatenating their CLS states and passed through a two-layer head.
#[derive(Debug, Clone)]
pub struct EnsembleModel<T> {
    cfg: ModelConfig,
    params: ParamStore<T>,
    pub branch1: EncoderBranch,
    pub branch2: EncoderBranch,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl<T: Float> EnsembleModel<T> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(cfg.seed, cfg.init_std);
        let branch1 = EncoderBranch::new("b1", &cfg, &mut params, &mut init);
        let branch2 = EncoderBranch::new("b2", &cfg, &mut params, &mut init);
        let w1 = params.add("head.w1", init.trunc_normal(&[2 * cfg.d_model, cfg.d_hidden]));
        let b1 = params.add("head.b1", Tensor::zeros(&[1, cfg.d_hidden]));
        let w2 = params.add("head.w2", init.trunc_normal(&[cfg.d_hidden, cfg.n_classes]));
        let b2 = params.add("head.b2", Tensor::zeros(&[1, cfg.n_classes]));
        Ok(Self {
            cfg,
            params,
            branch1,
            branch2,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Checked forward pass: `p1` must be text-first and `p2` entity-first.
    pub fn forward_ensemble(&self, p1: &EncodedPair, p2: &EncodedPair, mode: Mode) -> Result<Vec<T>> {
        self.logits(&(p1.clone(), p2.clone()), mode)
    }

    pub fn cast<U: Float>(&self) -> EnsembleModel<U> {
        EnsembleModel {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            branch1: self.branch1.clone(),
            branch2: self.branch2.clone(),
            w1: self.w1,
            b1: self.b1,
            w2: self.w2,
            b2: self.b2,
        }
    }

    pub(crate) fn with_params(cfg: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut m = Self::new(cfg)?;
        adopt(&mut m.params, params)?;
        Ok(m)
    }
}

impl<T: Float> Classifier<T> for EnsembleModel<T> {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Ensemble
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn logits_graph(&self, params: &ParamStore<T>, g: &mut Graph<T>, input: &PairedInput, mode: Mode) -> Result<NodeId> {
        let (p1, p2) = input;
        if p1.order != Order::TextFirst || p2.order != Order::EntityFirst {
            return Err(Error::Model(format!(
                "ensemble expects (text-first, entity-first), got ({}, {})",
                p1.order.as_str(),
                p2.order.as_str()
            )));
        }
        self.graph_unchecked(params, g, p1, p2, mode)
    }
}

impl<T: Float> EnsembleModel<T> {
    /// Forward pass without the layout check: `first` feeds branch 1 and
    /// `second` feeds branch 2.
    pub fn graph_unchecked(
        &self,
        params: &ParamStore<T>,
        g: &mut Graph<T>,
        first: &EncodedPair,
        second: &EncodedPair,
        mode: Mode,
    ) -> Result<NodeId> {
        let mut dropout = Dropout::new(self.cfg.dropout_rate, mode);
        let c1 = self.branch1.cls(params, g, first, &mut dropout)?;
        let c2 = self.branch2.cls(params, g, second, &mut dropout)?;
        let c = g.concat_cols(&[c1, c2])?;
        let (w1, b1) = (g.param(params, self.w1), g.param(params, self.b1));
        let h = g.linear(c, w1, b1)?;
        let h = g.gelu(h);
        let h = dropout.apply(g, h)?;
        let (w2, b2) = (g.param(params, self.w2), g.param(params, self.b2));
        g.linear(h, w2, b2)
    }
}

/// One branch reading a single layout, followed by an affine output layer.
#[derive(Debug, Clone)]
pub struct SingleModel<T> {
    cfg: ModelConfig,
    params: ParamStore<T>,
    pub branch: EncoderBranch,
    pub order: Order,
    w: ParamId,
    b: ParamId,
}

impl<T: Float> SingleModel<T> {
    pub fn new(cfg: ModelConfig, order: Order) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(cfg.seed, cfg.init_std);
        let branch = EncoderBranch::new("b1", &cfg, &mut params, &mut init);
        let w = params.add("head.w", init.trunc_normal(&[cfg.d_model, cfg.n_classes]));
        let b = params.add("head.b", Tensor::zeros(&[1, cfg.n_classes]));
        Ok(Self {
            cfg,
            params,
            branch,
            order,
            w,
            b,
        })
    }

    /// Checked forward pass on one packed pair of this model's layout.
    pub fn forward_single(&self, pair: &EncodedPair, mode: Mode) -> Result<Vec<T>> {
        if pair.order != self.order {
            return Err(Error::Model(format!(
                "model reads {} pairs, got {}",
                self.order.as_str(),
                pair.order.as_str()
            )));
        }
        let mut g = Graph::new();
        let z = self.pair_logits(&self.params, &mut g, pair, mode)?;
        Ok(g.value(z).data().to_vec())
    }

    fn pair_logits(&self, params: &ParamStore<T>, g: &mut Graph<T>, pair: &EncodedPair, mode: Mode) -> Result<NodeId> {
        let mut dropout = Dropout::new(self.cfg.dropout_rate, mode);
        let c = self.branch.cls(params, g, pair, &mut dropout)?;
        let c = dropout.apply(g, c)?;
        let (w, b) = (g.param(params, self.w), g.param(params, self.b));
        g.linear(c, w, b)
    }

    pub fn cast<U: Float>(&self) -> SingleModel<U> {
        SingleModel {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            branch: self.branch.clone(),
            order: self.order,
            w: self.w,
            b: self.b,
        }
    }

    pub(crate) fn with_params(cfg: ModelConfig, order: Order, params: ParamStore<T>) -> Result<Self> {
        let mut m = Self::new(cfg, order)?;
        adopt(&mut m.params, params)?;
        Ok(m)
    }
}

impl<T: Float> Classifier<T> for SingleModel<T> {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Single
    }

    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn logits_graph(&self, params: &ParamStore<T>, g: &mut Graph<T>, input: &PairedInput, mode: Mode) -> Result<NodeId> {
        let pair = match self.order {
            Order::TextFirst => &input.0,
            Order::EntityFirst => &input.1,
        };
        self.pair_logits(params, g, pair, mode)
    }
}

/// Replaces freshly initialized tensors with loaded ones, checking that
/// names and shapes line up exactly.
fn adopt<T: Float>(target: &mut ParamStore<T>, loaded: ParamStore<T>) -> Result<()> {
    if target.len() != loaded.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            target.len(),
            loaded.len()
        )));
    }
    for id in loaded.ids() {
        let name = loaded.name(id);
        let slot = target
            .by_name_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
        if slot.shape() != loaded.get(id).shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} does not match config {:?}",
                loaded.get(id).shape(),
                slot.shape()
            )));
        }
        *slot = loaded.get(id).clone();
    }
    Ok(())
}
