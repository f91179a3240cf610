"""Economic stage costs with softened constraints.

The optimized stage cost is

    l(x, u) = econ(x, u) + reg(x, u) + penalty * max(g(x, u), 0)

where ``econ`` is the economic term (also the metric used for average
performance across formulations), ``reg`` is an optional regularization
(for example a quadratic input deviation that buys dissipativity), and
``g`` is an optional soft constraint.  Derivatives are exact when the cost
was built from expressions; otherwise central finite differences are used.
"""

from __future__ import annotations

import numpy as np

from . import expr
from .exceptions import InputError

_FD_STEP = 1e-6


def _compile_scalar(node, n, m):
    names = [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    fn = expr.compile_fn(node, names)

    def wrapped(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        args = [x[..., i] for i in range(n)] + [u[..., j] for j in range(m)]
        out = fn(*args)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        if shape:
            return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
        return float(out)

    return wrapped


def _compile_gradient(node, n, m):
    names = [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    parts = [_compile_scalar(expr.diff(node, nm), n, m) for nm in names]

    def wrapped(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        vals = [np.broadcast_to(p(x, u), shape) for p in parts]
        gx = np.stack(vals[:n], axis=-1)
        gu = np.stack(vals[n:], axis=-1)
        return gx, gu

    return wrapped


def _compile_hessian(node, n, m):
    names = [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    d = n + m
    entries = {}
    for i in range(d):
        di = expr.diff(node, names[i])
        for j in range(i, d):
            entries[(i, j)] = _compile_scalar(expr.diff(di, names[j]), n, m)

    def wrapped(x, u):
        H = np.empty((d, d))
        for (i, j), fn in entries.items():
            H[i, j] = H[j, i] = fn(x, u)
        return H

    return wrapped


class StageCost:
    """Stage cost with value, gradient, and Hessian access.

    Construct from plain callables (with optional analytic derivatives) or
    from expression strings via :meth:`from_expressions`.
    """

    def __init__(self, n, m, econ, reg=None, g=None, penalty=1e3,
                 econ_grad=None, reg_grad=None, g_grad=None,
                 smooth_hess=None, expr_spec=None):
        if penalty <= 0:
            raise InputError("penalty weight must be positive")
        self.n = int(n)
        self.m = int(m)
        self.penalty = float(penalty)
        self.expr_spec = expr_spec
        self._bind(econ, reg, g, econ_grad, reg_grad, g_grad, smooth_hess)

    def _bind(self, econ, reg, g, econ_grad, reg_grad, g_grad, smooth_hess):
        self._econ = econ
        self._reg = reg
        self._g = g
        self._econ_grad = econ_grad
        self._reg_grad = reg_grad
        self._g_grad = g_grad
        self._smooth_hess = smooth_hess

    @classmethod
    def from_expressions(cls, n, m, econ, reg=None, g=None, penalty=1e3):
        """Build a cost from expression strings in x1.., u1.. variables."""
        spec = {"econ": econ, "reg": reg, "g": g}
        allowed = {f"x{i + 1}" for i in range(n)} | {f"u{j + 1}" for j in range(m)}
        nodes = {}
        for key, text in spec.items():
            if text is None:
                continue
            node = expr.parse(text)
            extra = expr.variables(node) - allowed
            if extra:
                raise InputError(f"cost expression {key!r} uses unknown variables {sorted(extra)}")
            nodes[key] = node
        smooth = nodes["econ"]
        if "reg" in nodes:
            smooth = expr.BinOp("+", smooth, nodes["reg"])
        return cls(
            n, m,
            econ=_compile_scalar(nodes["econ"], n, m),
            reg=_compile_scalar(nodes["reg"], n, m) if "reg" in nodes else None,
            g=_compile_scalar(nodes["g"], n, m) if "g" in nodes else None,
            penalty=penalty,
            econ_grad=_compile_gradient(nodes["econ"], n, m),
            reg_grad=_compile_gradient(nodes["reg"], n, m) if "reg" in nodes else None,
            g_grad=_compile_gradient(nodes["g"], n, m) if "g" in nodes else None,
            smooth_hess=_compile_hessian(smooth, n, m),
            expr_spec=dict(spec, penalty=penalty, n=n, m=m),
        )

    # pickling support: expression-built costs rebuild their compiled parts
    def __getstate__(self):
        state = dict(self.__dict__)
        if self.expr_spec is not None:
            for key in list(state):
                if key.startswith("_"):
                    del state[key]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        if self.expr_spec is not None:
            rebuilt = StageCost.from_expressions(
                self.expr_spec["n"], self.expr_spec["m"], self.expr_spec["econ"],
                reg=self.expr_spec["reg"], g=self.expr_spec["g"],
                penalty=self.expr_spec["penalty"],
            )
            self._bind(rebuilt._econ, rebuilt._reg, rebuilt._g, rebuilt._econ_grad,
                       rebuilt._reg_grad, rebuilt._g_grad, rebuilt._smooth_hess)

    # values -------------------------------------------------------------
    def econ_value(self, x, u):
        """Economic term only; the cross-formulation performance metric."""
        return self._econ(x, u)

    def g_value(self, x, u):
        return None if self._g is None else self._g(x, u)

    def g_grad(self, x, u):
        if self._g is None:
            return None
        if self._g_grad is not None:
            return self._g_grad(x, u)
        return self._fd_grad(self._g, x, u)

    def smooth_value(self, x, u):
        v = self._econ(x, u)
        if self._reg is not None:
            v = v + self._reg(x, u)
        return v

    def stage(self, x, u):
        """Full optimized stage cost including the softened constraint."""
        v = self.smooth_value(x, u)
        if self._g is not None:
            v = v + self.penalty * np.maximum(self._g(x, u), 0.0)
        return v

    # derivatives ----------------------------------------------------------
    def _fd_grad(self, fn, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        gx = np.empty(self.n)
        gu = np.empty(self.m)
        for i in range(self.n):
            h = _FD_STEP * (1.0 + abs(x[i]))
            e = np.zeros(self.n)
            e[i] = h
            gx[i] = (fn(x + e, u) - fn(x - e, u)) / (2 * h)
        for j in range(self.m):
            h = _FD_STEP * (1.0 + abs(u[j]))
            e = np.zeros(self.m)
            e[j] = h
            gu[j] = (fn(x, u + e) - fn(x, u - e)) / (2 * h)
        return gx, gu

    def smooth_grad(self, x, u):
        if self._econ_grad is not None:
            gx, gu = self._econ_grad(x, u)
            if self._reg_grad is not None:
                rx, ru = self._reg_grad(x, u)
                gx, gu = gx + rx, gu + ru
            return gx, gu
        return self._fd_grad(self.smooth_value, x, u)

    def stage_grad(self, x, u):
        """Gradient of the optimized stage cost.

        At a kink of max(g, 0) the subgradient with the penalty term
        switched off is used.
        """
        gx, gu = self.smooth_grad(x, u)
        if self._g is not None:
            active = self._g(x, u) > 0.0
            if np.any(active):
                if self._g_grad is not None:
                    hx, hu = self._g_grad(x, u)
                else:
                    hx, hu = self._fd_grad(self._g, x, u)
                gx = gx + self.penalty * active * hx
                gu = gu + self.penalty * active * hu
        return gx, gu

    def smooth_hessian(self, x, u):
        """Hessian of econ + reg with respect to (x, u), shape (n+m, n+m)."""
        if self._smooth_hess is not None:
            return self._smooth_hess(x, u)
        d = self.n + self.m
        H = np.empty((d, d))
        z0 = np.concatenate([np.asarray(x, float).ravel(), np.asarray(u, float).ravel()])

        def val(z):
            return self.smooth_value(z[: self.n], z[self.n:])

        for i in range(d):
            hi = _FD_STEP * 10 * (1.0 + abs(z0[i]))
            for j in range(i, d):
                hj = _FD_STEP * 10 * (1.0 + abs(z0[j]))
                ei = np.zeros(d)
                ej = np.zeros(d)
                ei[i] = hi
                ej[j] = hj
                H[i, j] = H[j, i] = (
                    val(z0 + ei + ej) - val(z0 + ei - ej)
                    - val(z0 - ei + ej) + val(z0 - ei - ej)
                ) / (4 * hi * hj)
        return H
