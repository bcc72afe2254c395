"""Domain-adaptive detection objective: supervised risk on both domains
plus adversarial feature alignment, trained as a single-optimizer minimax.

Three terms are combined:

  * rep term  — how well a small domain classifier separates pooled
    backbone features drawn from the two domains,
  * shared risk — detection loss of the always-on head over a mixed
    source+target batch,
  * per-domain risk — detection loss where each sample is scored by the
    head belonging to its own domain.

The total objective is::

    total = shared + lambda_risk * (shared - per_domain) + lambda_rep * rep

with the backbone and shared head minimizing it while the domain
classifier and the per-domain heads are simultaneously driven to their
own optima. One backward pass serves every player; the opposing
directions are arranged with gradient reversal layers and value-neutral
constant shifts rather than alternating updates.

Sign handling, spelled out because it is easy to get backwards:

  * rep term. The reported value is
    E_src[log sigma(C(h))] + E_tgt[log(1 - sigma(C(h)))], which a perfect
    classifier drives to 0 from below. Internally the term is the binary
    cross entropy of C on the domain-labeling task (the negation of that
    value), so plain descent trains C to separate; a reversal layer
    between the pooled features and C hands the backbone the negated
    gradient (scaled by grl_lambda), pushing it toward indistinguishable
    features. A constant shift of -2x the detached cross entropy turns
    the returned value back into the conventional form without touching
    any gradient.

  * per-domain risk enters the total with a negative coefficient, so its
    raw gradient would push the per-domain heads to get worse. A reversal
    layer on the features entering those heads (unit strength) flips the
    sign once: head parameters descend their own detection loss, while
    the backbone receives the negated gradient the minus sign calls for.
    risk_loss adds the matching constant shift so its value reads
    shared + lambda_risk * (shared - per_domain) exactly.

Setting a weight to exactly 0.0 skips building that term's graph, which
keeps the reduced objective bit-for-bit identical to a plain supervised
run and leaves the untouched parameter groups frozen (their gradients
stay None).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .autodiff import (
    Linear,
    Module,
    Tensor,
    backward,
    binary_cross_entropy_logit,
    default_dtype,
    gather_rows,
    global_avg_pool,
    grad_reverse,
    no_grad,
)
from .detector.loss import detection_loss_terms
from .detector.matching import match_anchors


class DomainLabel(IntEnum):
    SOURCE = 0
    TARGET = 1


@dataclass(frozen=True)
class LirrConfig:
    lambda_rep: float = 0.1
    lambda_risk: float = 1.0
    grl_lambda: float = 1.0

    def __post_init__(self):
        for name in ("lambda_rep", "lambda_risk", "grl_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class LossBreakdown:
    l_rep: float
    l_i: float
    l_d: float
    l_risk: float
    l_total: float
    l_i_cls: float
    l_i_loc: float
    l_d_cls: float
    l_d_loc: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in vars(self).items()}


class DomainClassifier(Module):
    """Two-layer MLP on pooled backbone features, one domain logit out."""

    def __init__(self, in_features: int, hidden: int = 32, *, rng: np.random.Generator):
        self.fc1 = Linear(in_features, hidden, rng=rng)
        self.fc2 = Linear(hidden, 1, rng=rng)

    def __call__(self, pooled: Tensor) -> Tensor:
        return self.fc2(self.fc1(pooled).relu())


def _pool(feat: Tensor) -> Tensor:
    if feat.data.ndim == 4:
        return global_avg_pool(feat)
    if feat.data.ndim == 2:
        return feat
    raise ValueError(f"expected (N,C,H,W) or (N,C) features, got shape {feat.data.shape}")


def rep_loss(feat_src: Tensor, feat_tgt: Tensor, classifier: DomainClassifier,
             grl_lambda: float = 1.0) -> Tensor:
    """Alignment term. Value: E_src[log sigma] + E_tgt[log(1 - sigma)].

    Gradients descend the underlying cross entropy for the classifier and
    reverse (scaled by grl_lambda) into whatever produced the features.

    The classifier's sigmoid reads as "probability the features came from
    the source batch" (cross-entropy target 1 for source). That is a local
    convention of this term only; DomainLabel's integer values index the
    per-domain heads and play no role here.
    """
    hs, ht = _pool(feat_src), _pool(feat_tgt)
    if hs.data.shape[0] == 0 or ht.data.shape[0] == 0:
        raise ValueError("rep_loss: empty domain batch")
    zs = classifier(grad_reverse(hs, grl_lambda))
    zt = classifier(grad_reverse(ht, grl_lambda))
    bce = binary_cross_entropy_logit(zs, np.ones(zs.data.shape)) \
        + binary_cross_entropy_logit(zt, np.zeros(zt.data.shape))
    return bce - 2.0 * float(bce.data)


def risk_loss(l_i: Tensor, l_d: Tensor, lambda_risk: float) -> Tensor:
    """shared + lambda_risk * (shared - per_domain), as a value.

    The per-domain term carries a +lambda_risk gradient coefficient here;
    the caller puts a reversal layer on the features feeding the
    per-domain heads so every parameter group moves the right way.
    """
    if lambda_risk == 0.0:
        return l_i
    shift = 2.0 * lambda_risk * float(l_d.data)
    return l_i * (1.0 + lambda_risk) + l_d * lambda_risk - shift


def _check_labeled(batch):
    for s in batch:
        boxes = getattr(s, "gt_boxes", None)
        if boxes is None or len(boxes) == 0:
            raise ValueError("unlabeled sample: every sample needs at least one box")


def _stack_images(batch) -> Tensor:
    return Tensor(np.stack([np.asarray(s.image, dtype=default_dtype()) for s in batch]))


def _matches(batch, model):
    return [match_anchors(np.asarray(s.gt_boxes, dtype=np.float64),
                          np.asarray(s.gt_classes, dtype=np.int64), model.anchors)
            for s in batch]


def _risk_sum(cls: Tensor, loc: Tensor, matches, rows):
    """Sum of per-sample normalized losses for samples `rows` of a batch.

    cls: (B, A, K) head output; rows: indices into the batch dimension,
    aligned with matches. Returns (sum Tensor, cls float, loc float).
    """
    num_anchors = cls.data.shape[1]
    flat_cls = cls.reshape(cls.data.shape[0] * num_anchors, cls.data.shape[2])
    flat_loc = loc.reshape(loc.data.shape[0] * num_anchors, 4)
    total = None
    cls_val = 0.0
    loc_val = 0.0
    for b, match in zip(rows, matches):
        idx = np.arange(b * num_anchors, (b + 1) * num_anchors)
        ct, lt, npos = detection_loss_terms(gather_rows(flat_cls, idx),
                                            gather_rows(flat_loc, idx), match)
        norm = 1.0 / max(npos, 1)
        sample = ct if lt is None else ct + lt
        sample = sample * norm
        cls_val += float(ct.data) * norm
        if lt is not None:
            loc_val += float(lt.data) * norm
        total = sample if total is None else total + sample
    return total, cls_val, loc_val


def _head_risk(feats, batch, matches, model, head):
    """Risk sum over a batch through one head ("invariant" or a domain id)."""
    cls, loc = model.predict(feats, head)
    return _risk_sum(cls, loc, matches, range(len(batch)))


def _domain_risk_sum(feats, batch, matches, model):
    """Per-domain-head risk sum; each sample scored by its own domain's head."""
    total = None
    cls_val = 0.0
    loc_val = 0.0
    for d in sorted({int(s.domain) for s in batch}):
        rows = [b for b, s in enumerate(batch) if int(s.domain) == d]
        cls, loc = model.predict(feats, d)
        part, cv, lv = _risk_sum(cls, loc, [matches[b] for b in rows], rows)
        cls_val += cv
        loc_val += lv
        total = part if total is None else total + part
    return total, cls_val, loc_val


def invariant_risk(batch, model) -> Tensor:
    """Mean detection loss of the shared head over a (possibly mixed) batch."""
    batch = list(batch)
    if not batch:
        raise ValueError("invariant_risk: empty batch")
    _check_labeled(batch)
    feats = model.features(_stack_images(batch))
    total, _, _ = _head_risk(feats, batch, _matches(batch, model), model, "invariant")
    return total * (1.0 / len(batch))


def domain_risk(batch, model) -> Tensor:
    """Mean detection loss with each sample scored by its domain's own head."""
    batch = list(batch)
    if not batch:
        raise ValueError("domain_risk: empty batch")
    _check_labeled(batch)
    feats = model.features(_stack_images(batch))
    total, _, _ = _domain_risk_sum(feats, batch, _matches(batch, model), model)
    return total * (1.0 / len(batch))


def _objective(batch_src, batch_tgt, model, classifier, cfg: LirrConfig):
    batch_src, batch_tgt = list(batch_src), list(batch_tgt)
    if not batch_src:
        raise ValueError("empty source batch")
    if not batch_tgt:
        raise ValueError("empty target batch")
    _check_labeled(batch_src + batch_tgt)

    feats_src = model.features(_stack_images(batch_src))
    feats_tgt = model.features(_stack_images(batch_tgt))
    ms = _matches(batch_src, model)
    mt = _matches(batch_tgt, model)
    n = len(batch_src) + len(batch_tgt)

    sum_s, cs, ls = _head_risk(feats_src, batch_src, ms, model, "invariant")
    sum_t, ct, lt = _head_risk(feats_tgt, batch_tgt, mt, model, "invariant")
    l_i = (sum_s + sum_t) * (1.0 / n)
    i_cls, i_loc = (cs + ct) / n, (ls + lt) / n

    if cfg.lambda_risk > 0.0:
        rev_s = [grad_reverse(f, 1.0) for f in feats_src]
        rev_t = [grad_reverse(f, 1.0) for f in feats_tgt]
        dsum_s, dcs, dls = _domain_risk_sum(rev_s, batch_src, ms, model)
        dsum_t, dct, dlt = _domain_risk_sum(rev_t, batch_tgt, mt, model)
        l_d = (dsum_s + dsum_t) * (1.0 / n)
    else:
        with no_grad():
            dsum_s, dcs, dls = _domain_risk_sum(feats_src, batch_src, ms, model)
            dsum_t, dct, dlt = _domain_risk_sum(feats_tgt, batch_tgt, mt, model)
            l_d = (dsum_s + dsum_t) * (1.0 / n)
    d_cls, d_loc = (dcs + dct) / n, (dls + dlt) / n

    if cfg.lambda_rep > 0.0:
        rep = rep_loss(feats_src[-1], feats_tgt[-1], classifier, cfg.grl_lambda)
    else:
        with no_grad():
            rep = rep_loss(feats_src[-1], feats_tgt[-1], classifier, cfg.grl_lambda)

    total = risk_loss(l_i, l_d, cfg.lambda_risk)
    if cfg.lambda_rep > 0.0:
        total = total + rep * cfg.lambda_rep

    l_i_f = float(l_i.data)
    l_d_f = float(l_d.data)
    l_rep_f = float(rep.data)
    l_risk_f = l_i_f + cfg.lambda_risk * (l_i_f - l_d_f)
    breakdown = LossBreakdown(
        l_rep=l_rep_f, l_i=l_i_f, l_d=l_d_f, l_risk=l_risk_f,
        l_total=l_risk_f + cfg.lambda_rep * l_rep_f,
        l_i_cls=i_cls, l_i_loc=i_loc, l_d_cls=d_cls, l_d_loc=d_loc)
    return total, breakdown


def lirr_loss(batch_src, batch_tgt, model, classifier, cfg: LirrConfig) -> LossBreakdown:
    """Evaluate the full objective without building a graph."""
    with no_grad():
        _, breakdown = _objective(batch_src, batch_tgt, model, classifier, cfg)
    return breakdown


def train_step(batch_src, batch_tgt, model, classifier, optimizer,
               cfg: LirrConfig) -> LossBreakdown:
    """One joint update of backbone, heads, and domain classifier."""
    model.zero_grad()
    classifier.zero_grad()
    total, breakdown = _objective(batch_src, batch_tgt, model, classifier, cfg)
    backward(total)
    optimizer.step()
    return breakdown
