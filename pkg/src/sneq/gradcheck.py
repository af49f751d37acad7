"""Central-difference gradient oracle for the autoencoder.

Differences are taken in ``np.longdouble`` so that cancellation in
``(L(w + h) - L(w - h)) / 2h`` does not swamp small gradient entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sneq.vae import Batch, GraphAutoencoder, gradients, forward, loss_from_cache


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: int
    worst_index: tuple[int, ...]
    checked: int


def _loss(model: GraphAutoencoder, batch: Batch, eps) -> np.longdouble:
    cache = forward(model, batch, eps)
    value, _ = loss_from_cache(model, batch, cache)
    return value


def _long(model: GraphAutoencoder) -> GraphAutoencoder:
    return model.with_parameters([p.astype(np.longdouble) for p in model.parameters()])


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(model: GraphAutoencoder, batch: Batch, eps=None, h: float = 1e-5) -> GradCheckReport:
    """Compare every analytic gradient entry with a central difference of step ``h``."""
    analytic = gradients(model, batch, eps)
    lmodel = _long(model)
    lbatch = Batch(batch.adjacency.astype(np.longdouble), batch.vertex_mask.astype(np.longdouble))
    leps = None if eps is None else np.asarray(eps, dtype=np.longdouble)
    params = lmodel.parameters()
    step = np.longdouble(h)
    worst = (0.0, -1, ())
    count = 0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus, minus = p.copy(), p.copy()
            plus[idx] += step
            minus[idx] -= step
            lp = _loss(lmodel.with_parameters(params[:k] + [plus] + params[k + 1:]), lbatch, leps)
            lm = _loss(lmodel.with_parameters(params[:k] + [minus] + params[k + 1:]), lbatch, leps)
            fd = float((lp - lm) / (2 * step))
            err = relative_error(float(analytic[k][idx]), fd)
            count += 1
            if err > worst[0]:
                worst = (err, k, idx)
    return GradCheckReport(worst[0], worst[1], worst[2], count)
