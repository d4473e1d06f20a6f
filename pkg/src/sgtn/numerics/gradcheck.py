"""Central finite-difference checks of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericalError, Tensor, precision

__all__ = ["GradcheckReport", "finite_diff_gradcheck", "gradcheck_parameters"]


@dataclass
class GradcheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_err: np.ndarray

    @property
    def max_rel_err(self) -> float:
        return float(self.rel_err.max()) if self.rel_err.size else 0.0

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_err <= tol


def _rel_err(ga: np.ndarray, gf: np.ndarray) -> np.ndarray:
    return np.abs(ga - gf) / np.maximum(1.0, np.maximum(np.abs(ga), np.abs(gf)))


def _eval(f, *args) -> float:
    val = f(*args)
    v = val.item() if isinstance(val, Tensor) else float(val)
    if not np.isfinite(v):
        raise NumericalError("gradcheck objective is not finite")
    return v


def finite_diff_gradcheck(f, x, h: float = 1e-5, indices=None) -> GradcheckReport:
    """Compare ``d f / d x`` from ``backward`` against central differences.

    ``f`` maps a Tensor to a scalar Tensor. ``x`` must be 64-bit. ``indices``
    optionally restricts the numeric side to a subset of flat positions.
    """
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with precision(np.float64):
        xt = Tensor(x, requires_grad=True)
        out = f(xt)
        if not np.isfinite(out.data).all():
            raise NumericalError("gradcheck objective is not finite")
        out.backward()
        ga = np.zeros_like(x) if xt.grad is None else xt.grad.astype(np.float64)
        flat = x.reshape(-1)
        idx = np.arange(flat.size) if indices is None else np.asarray(indices)
        gf = np.empty(idx.size)
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = _eval(f, Tensor(x))
            flat[i] = orig - h
            fm = _eval(f, Tensor(x))
            flat[i] = orig
            gf[n] = (fp - fm) / (2.0 * h)
    ga_sel = ga.reshape(-1)[idx]
    return GradcheckReport(ga_sel, gf, _rel_err(ga_sel, gf))


def gradcheck_parameters(f, params, h: float = 1e-5, max_per_param: int | None = None,
                         rng: np.random.Generator | None = None) -> dict:
    """Gradient check of a zero-argument scalar objective against each parameter.

    Parameters must already be float64. Returns ``{name: GradcheckReport}``.
    ``max_per_param`` samples that many components per parameter (with
    ``rng``) instead of differentiating every entry.
    """
    rng = rng or np.random.default_rng(0)
    reports = {}
    with precision(np.float64):
        for p in params:
            p.grad = None
        out = f()
        out.backward()
        grads = {id(p): (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params}
        for k, p in enumerate(params):
            if p.data.dtype != np.float64:
                raise TypeError(f"parameter {p.name or k} is not float64")
            flat = p.data.reshape(-1)
            if max_per_param is not None and flat.size > max_per_param:
                idx = np.sort(rng.choice(flat.size, size=max_per_param, replace=False))
            else:
                idx = np.arange(flat.size)
            gf = np.empty(idx.size)
            for n, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + h
                fp = _eval(f)
                flat[i] = orig - h
                fm = _eval(f)
                flat[i] = orig
                gf[n] = (fp - fm) / (2.0 * h)
            ga = grads[id(p)].reshape(-1)[idx]
            reports[p.name or str(k)] = GradcheckReport(ga, gf, _rel_err(ga, gf))
    return reports
