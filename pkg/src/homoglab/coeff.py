"""Periodic coefficient tensors a_ij^{ab}(y) and their epsilon rescalings.

Coefficient fields are supplied as analytic evaluators (pure functions of
the sample point), never as gridded data, so every mesh resolution samples
them exactly.  A field carries its declared ellipticity constant, a Holder
pair used for sampled diagnostics, and a symmetry flag meaning
a_ij^{ab}(y) = a_ji^{ba}(y).

Index convention throughout the package: a tensor value at a point has
shape (d, d, m, m) indexed [i, j, alpha, beta], acting on gradients as
a_ij^{ab} dU^b/dx_j dV^a/dx_i.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CoefficientError",
    "EllipticityError",
    "CoefficientField",
    "ScaledCoefficient",
    "ValidationReport",
    "builtin",
    "from_expression",
    "rescale",
    "validate",
]

BUILTIN_FAMILIES = ("constant", "layered", "trigonometric", "smoothed-checkerboard", "user")


class CoefficientError(ValueError):
    """Invalid coefficient definition or parameters."""


class EllipticityError(CoefficientError):
    """Sampled Rayleigh quotients violate the declared ellipticity."""


class CoefficientField:
    """Periodic tensor field with ellipticity/periodicity/Holder metadata.

    The evaluator maps an (npts, d) array of points to an
    (npts, d, d, m, m) array.  Instances are immutable after construction
    and safe to share across concurrent evaluations.
    """

    def __init__(self, evaluator, d=2, m=1, family="user", mu=None,
                 holder=(1.0, 0.0), symmetric=True, params=None):
        if d < 1 or m < 1:
            raise CoefficientError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
        lam, tau = holder
        if not (0.0 < lam <= 1.0) or tau < 0.0:
            raise CoefficientError(f"Holder pair must have exponent in (0,1] and seminorm >= 0, got {holder}")
        if mu is not None and mu <= 0.0:
            raise CoefficientError(f"ellipticity constant must be positive, got {mu}")
        self._evaluator = evaluator
        self.d = int(d)
        self.m = int(m)
        self.family = family
        self.mu = mu
        self.holder = (float(lam), float(tau))
        self.symmetric = bool(symmetric)
        self.params = dict(params or {})

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        squeeze = pts.ndim == 1
        if squeeze:
            pts = pts[None, :]
        if pts.shape[-1] != self.d:
            raise CoefficientError(f"points have dimension {pts.shape[-1]}, field has d={self.d}")
        flat = pts.reshape(-1, self.d)
        vals = np.asarray(self._evaluator(flat), dtype=float)
        expect = (flat.shape[0], self.d, self.d, self.m, self.m)
        if vals.shape != expect:
            raise CoefficientError(f"evaluator returned shape {vals.shape}, expected {expect}")
        vals = vals.reshape(pts.shape[:-1] + expect[1:])
        return vals[0] if squeeze else vals

    def adjoint(self):
        """Field of the adjoint operator: a*_ij^{ab}(y) = a_ji^{ba}(y)."""
        if self.symmetric:
            return self
        base = self._evaluator

        def star(pts):
            return np.transpose(np.asarray(base(pts)), (0, 2, 1, 4, 3))

        return CoefficientField(star, d=self.d, m=self.m, family=self.family,
                                mu=self.mu, holder=self.holder, symmetric=False,
                                params={**self.params, "adjoint": True})

    def key(self):
        """Hashable identity used for caching cell solutions."""
        items = tuple(sorted((k, repr(v)) for k, v in self.params.items()))
        return (self.family, self.d, self.m, items, id(self._evaluator) if self.family == "user" and not self.params else 0)

    def __repr__(self):
        return f"CoefficientField(family={self.family!r}, d={self.d}, m={self.m}, params={self.params})"


class ScaledCoefficient:
    """A(x/eps): the base field evaluated at the rescaled point."""

    def __init__(self, base: CoefficientField, epsilon: float):
        if epsilon <= 0.0:
            raise CoefficientError(f"epsilon must be positive, got {epsilon}")
        self.base = base
        self.epsilon = float(epsilon)

    @property
    def d(self):
        return self.base.d

    @property
    def m(self):
        return self.base.m

    @property
    def symmetric(self):
        return self.base.symmetric

    def __call__(self, points):
        return self.base(np.asarray(points, dtype=float) / self.epsilon)

    def adjoint(self):
        return ScaledCoefficient(self.base.adjoint(), self.epsilon)

    def __repr__(self):
        return f"ScaledCoefficient({self.base!r}, epsilon={self.epsilon})"


def rescale(field: CoefficientField, epsilon: float) -> ScaledCoefficient:
    """A(y) -> A(x/eps).  epsilon is the period length in domain coordinates."""
    if not isinstance(field, CoefficientField):
        raise CoefficientError("rescale expects a CoefficientField")
    return ScaledCoefficient(field, epsilon)


# ---------------------------------------------------------------------------
# builtin families


def _isotropic(scalar_fn, d, m):
    """Wrap a scalar a(y) as the isotropic tensor a(y) delta_ij delta^{ab}.

    Points are reduced to the unit cell first, so integer shifts of exactly
    representable points reproduce values bitwise.
    """
    eye = np.einsum("ij,ab->ijab", np.eye(d), np.eye(m))

    def ev(pts):
        a = np.asarray(scalar_fn(np.asarray(pts) % 1.0), dtype=float)
        return a[:, None, None, None, None] * eye[None]

    return ev


def _constant_field(value, d, m):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        tensor = float(value) * np.einsum("ij,ab->ijab", np.eye(d), np.eye(m))
    elif value.shape == (d, d):
        tensor = np.einsum("ij,ab->ijab", value, np.eye(m))
    elif value.shape == (d, d, m, m):
        tensor = value.copy()
    else:
        raise CoefficientError(f"constant family takes a scalar, ({d},{d}) or ({d},{d},{m},{m}) array")
    sym = bool(np.array_equal(tensor, tensor.transpose(1, 0, 3, 2)))
    mat = tensor.transpose(0, 2, 1, 3).reshape(d * m, d * m)
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if eigs.min() <= 0.0:
        raise EllipticityError(f"constant tensor is not elliptic (min eigenvalue {eigs.min():.3g})")
    mu = min(eigs.min(), 1.0 / eigs.max())

    def ev(pts):
        return np.broadcast_to(tensor, (pts.shape[0],) + tensor.shape).copy()

    return CoefficientField(ev, d=d, m=m, family="constant", mu=mu,
                            holder=(1.0, 0.0), symmetric=sym,
                            params={"value": tensor.tolist()})


def _layered_field(base, amp, axis, wavevector, d, m):
    if base - abs(amp) <= 0.0:
        raise EllipticityError(f"layered field base-|amp| = {base - abs(amp)} is not positive")
    if wavevector is None:
        if axis not in range(d):
            raise CoefficientError(f"layered axis must be in 0..{d-1}")
        wavevector = tuple(1 if k == axis else 0 for k in range(d))
    wavevector = tuple(int(k) for k in wavevector)
    if len(wavevector) != d or not any(wavevector):
        raise CoefficientError(f"wavevector must be a nonzero integer {d}-vector")
    kvec = np.asarray(wavevector, dtype=float)

    def scalar(pts):
        return base + amp * np.sin(2.0 * np.pi * (pts @ kvec))

    lo, hi = base - abs(amp), base + abs(amp)
    tau = abs(amp) * 2.0 * np.pi * float(np.linalg.norm(kvec))
    return CoefficientField(_isotropic(scalar, d, m), d=d, m=m, family="layered",
                            mu=min(lo, 1.0 / hi), holder=(1.0, tau),
                            symmetric=True,
                            params={"base": base, "amp": amp, "wavevector": wavevector})


def _trigonometric_field(base, amp, d, m):
    if base - abs(amp) <= 0.0:
        raise EllipticityError("trigonometric field is not uniformly positive")

    def scalar(pts):
        out = base + amp * np.cos(2.0 * np.pi * pts[:, 0]) * np.cos(2.0 * np.pi * pts[:, 1])
        return out

    lo, hi = base - abs(amp), base + abs(amp)
    return CoefficientField(_isotropic(scalar, d, m), d=d, m=m, family="trigonometric",
                            mu=min(lo, 1.0 / hi), holder=(1.0, abs(amp) * 4.0 * np.pi),
                            symmetric=True, params={"base": base, "amp": amp})


def _checkerboard_field(contrast, width, d, m):
    if contrast <= 0.0:
        raise EllipticityError(f"contrast must be positive, got {contrast}")
    if width <= 0.0:
        raise CoefficientError(f"smoothing width must be positive, got {width}")
    # smooth periodic switch ~ 1 on (0, 1/2), ~ 0 on (1/2, 1), transition width ~ width
    scale = 1.0 / (2.0 * np.pi * width)

    def switch(t):
        return 0.5 * (1.0 + np.tanh(np.sin(2.0 * np.pi * t) * scale))

    def scalar(pts):
        q1 = switch(pts[:, 0])
        q2 = switch(pts[:, 1])
        mask = q1 * q2 + (1.0 - q1) * (1.0 - q2)
        return 1.0 + (contrast - 1.0) * mask

    lo, hi = min(1.0, contrast), max(1.0, contrast)
    tau = abs(contrast - 1.0) * scale * 2.0 * np.pi  # slope of the mollified jump
    return CoefficientField(_isotropic(scalar, d, m), d=d, m=m, family="smoothed-checkerboard",
                            mu=min(lo, 1.0 / hi), holder=(1.0, tau), symmetric=True,
                            params={"contrast": contrast, "width": width})


def builtin(tag, d=2, m=1, **params) -> CoefficientField:
    """Construct one of the builtin coefficient families by tag."""
    if tag == "constant":
        return _constant_field(params.pop("value", 1.0), d, m)
    if tag == "layered":
        return _layered_field(params.pop("base", 2.0), params.pop("amp", 1.0),
                              params.pop("axis", 0), params.pop("wavevector", None), d, m)
    if tag == "trigonometric":
        return _trigonometric_field(params.pop("base", 2.0), params.pop("amp", 0.5), d, m)
    if tag == "smoothed-checkerboard":
        return _checkerboard_field(params.pop("contrast", 10.0), params.pop("width", 1.0 / 16.0), d, m)
    if tag == "user":
        return from_expression(params.pop("expr"), d=d)
    raise CoefficientError(f"unknown builtin family {tag!r}; choose from {BUILTIN_FAMILIES}")


# ---------------------------------------------------------------------------
# user fields from expression strings

_EXPR_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_EXPR_NAMES = {"pi": math.pi}
_EXPR_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_EXPR_UNARY = (ast.USub, ast.UAdd)


def _check_expr_node(node):
    if isinstance(node, ast.Expression):
        _check_expr_node(node.body)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _EXPR_BINOPS):
        _check_expr_node(node.left)
        _check_expr_node(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _EXPR_UNARY):
        _check_expr_node(node.operand)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS) \
                or len(node.args) != 1 or node.keywords:
            raise CoefficientError("only sin(.), cos(.), exp(.) calls are allowed in expressions")
        _check_expr_node(node.args[0])
    elif isinstance(node, ast.Name):
        if node.id not in ("y1", "y2") and node.id not in _EXPR_NAMES:
            raise CoefficientError(f"unknown name {node.id!r} in expression (allowed: y1, y2, pi)")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise CoefficientError(f"non-numeric constant {node.value!r} in expression")
    else:
        raise CoefficientError(f"disallowed syntax {type(node).__name__} in expression")


def from_expression(expr: str, d=2) -> CoefficientField:
    """Scalar coefficient a(y) * I from an arithmetic expression over y1, y2.

    Allowed: +, -, *, /, **, sin, cos, exp, pi and numeric constants.
    """
    if d != 2:
        raise CoefficientError("expression fields are two-dimensional (y1, y2)")
    tree = ast.parse(expr, mode="eval")
    _check_expr_node(tree)
    code = compile(tree, "<coefficient>", "eval")

    def scalar(pts):
        env = {"y1": pts[:, 0], "y2": pts[:, 1], **_EXPR_NAMES, **_EXPR_FUNCS}
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],))

    return CoefficientField(_isotropic(scalar, d, 1), d=d, m=1, family="user",
                            mu=None, holder=(1.0, 0.0), symmetric=True,
                            params={"expr": expr})


# ---------------------------------------------------------------------------
# sampled validation


@dataclass
class ValidationReport:
    rayleigh_min: float
    rayleigh_max: float
    periodicity_residual: float
    holder_quotient: float
    samples: int

    @property
    def mu_measured(self):
        """Best Legendre constant consistent with the sampled quotients."""
        return min(self.rayleigh_min, 1.0 / self.rayleigh_max)


def validate(field, samples=16, seed=0, xi_samples=32) -> ValidationReport:
    """Sampled ellipticity, periodicity and Holder diagnostics for a field.

    Raises CoefficientError on non-finite values and EllipticityError when
    the sampled lower Rayleigh quotient is not positive.  The Holder
    quotient is a diagnostic, never a gate.
    """
    if samples < 2:
        raise CoefficientError("need at least 2 samples per axis")
    d, m = field.d, field.m
    rng = np.random.default_rng(seed)
    axes = [np.linspace(0.0, 1.0, samples, endpoint=False) + 0.5 / samples for _ in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    vals = field(grid)
    if not np.all(np.isfinite(vals)):
        raise CoefficientError("evaluator returned non-finite values")

    xi = rng.standard_normal((xi_samples, d, m))
    xi /= np.sqrt(np.einsum("kia,kia->k", xi, xi))[:, None, None]
    quot = np.einsum("nijab,kia,kjb->nk", vals, xi, xi)
    rmin, rmax = float(quot.min()), float(quot.max())
    if rmin <= 0.0:
        raise EllipticityError(f"sampled lower Rayleigh quotient {rmin:.3g} is not positive")

    shifts = np.vstack([np.eye(d, dtype=int), rng.integers(-3, 4, size=(4, d))])
    per = 0.0
    for z in shifts:
        if not z.any():
            continue
        per = max(per, float(np.abs(field(grid + z) - vals).max()))

    lam = field.holder[0]
    deltas = rng.uniform(1e-4, 5e-2, size=(grid.shape[0], 1)) * rng.standard_normal(grid.shape)
    norms = np.linalg.norm(deltas, axis=1)
    diffs = field(grid + deltas) - vals
    dmax = np.abs(diffs).reshape(grid.shape[0], -1).max(axis=1)
    hq = float((dmax / norms**lam).max())

    return ValidationReport(rayleigh_min=rmin, rayleigh_max=rmax,
                            periodicity_residual=per, holder_quotient=hq,
                            samples=grid.shape[0])
