"""Innovation laws and their score functions.

Two families are supported: the standard normal and Student-t with an
integer number of degrees of freedom ``l >= 4``.  Student-t is stored
standardized to unit variance (the raw variate times ``sqrt((l-2)/l)``);
``NoiseSpec.raw()`` gives the unscaled law, which is what the closed-form
sup-norm bounds on the score derivatives refer to.

All functions accept scalars or numpy arrays for ``x``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import special, stats

from lantest.errors import ConfigError

GAUSSIAN = "gaussian"
STUDENT = "student"


@dataclass(frozen=True)
class QuadratureConfig:
    """Trapezoid rule on [-T, T]; T is set from the tail mass unless ``bound`` is given."""

    tail_mass: float = 1e-10
    start_nodes: int = 4097
    max_nodes: int = 2**22 + 1
    tol: float = 1e-8
    bound: float | None = None


@dataclass(frozen=True)
class NoiseSpec:
    family: str = GAUSSIAN
    dof: int | None = None
    standardized: bool = True
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        if self.family not in (GAUSSIAN, STUDENT):
            raise ConfigError(f"unknown noise family {self.family!r}")
        if self.family == STUDENT:
            if self.dof is None or int(self.dof) != self.dof or self.dof < 4:
                raise ConfigError("student noise needs an integer dof >= 4")
            object.__setattr__(self, "dof", int(self.dof))

    @classmethod
    def gaussian(cls) -> "NoiseSpec":
        return cls(GAUSSIAN)

    @classmethod
    def student(cls, dof: int, standardized: bool = True) -> "NoiseSpec":
        return cls(STUDENT, dof=dof, standardized=standardized)

    @property
    def scale(self) -> float:
        """Multiplier applied to the raw variate."""
        if self.family == STUDENT and self.standardized:
            return math.sqrt((self.dof - 2) / self.dof)
        return 1.0

    @property
    def symmetric(self) -> bool:
        return True

    def raw(self) -> "NoiseSpec":
        return replace(self, standardized=False)

    def label(self) -> str:
        return "gaussian" if self.family == GAUSSIAN else f"student{self.dof}"


@dataclass(frozen=True)
class ScoreValues:
    """M_f, N_f = 1 + x M_f and their first two derivatives at x."""

    m: float | np.ndarray
    m_dot: float | np.ndarray
    m_ddot: float | np.ndarray
    n: float | np.ndarray
    n_dot: float | np.ndarray
    n_ddot: float | np.ndarray


def _out(x_in, value):
    if np.ndim(x_in) == 0:
        return float(value)
    return value


def _student_log_const(l: int) -> float:
    return special.gammaln((l + 1) / 2) - 0.5 * math.log(math.pi * l) - special.gammaln(l / 2)


def log_density(spec: NoiseSpec, x):
    x_arr = np.asarray(x, dtype=float)
    if spec.family == GAUSSIAN:
        val = -0.5 * x_arr * x_arr - 0.5 * math.log(2 * math.pi)
    else:
        l = spec.dof
        s = spec.scale
        u = x_arr / s
        val = _student_log_const(l) - 0.5 * (l + 1) * np.log1p(u * u / l) - math.log(s)
    return _out(x, val)


def density(spec: NoiseSpec, x):
    return _out(x, np.exp(log_density(spec, np.asarray(x, dtype=float))))


def sample(spec: NoiseSpec, rng: np.random.Generator, size=None):
    """Draw from the (standardized) law using the caller's generator."""
    if spec.family == GAUSSIAN:
        return rng.standard_normal(size)
    return rng.standard_t(spec.dof, size) * spec.scale


def scores(spec: NoiseSpec, x) -> ScoreValues:
    x_arr = np.asarray(x, dtype=float)
    if spec.family == GAUSSIAN:
        m = -x_arr
        m_dot = np.full_like(x_arr, -1.0)
        m_ddot = np.zeros_like(x_arr)
    else:
        l = spec.dof
        s = spec.scale
        c = (l + 1) / l
        y = x_arr / s
        u = 1.0 + y * y / l
        # derivatives of the raw score, rescaled by the chain rule
        m = -c * y / u / s
        m_dot = -c * (1.0 / u - 2.0 * y * y / (l * u * u)) / s**2
        m_ddot = -c * (8.0 * y**3 / (l * l * u**3) - 6.0 * y / (l * u * u)) / s**3
    n = 1.0 + x_arr * m
    n_dot = m + x_arr * m_dot
    n_ddot = 2.0 * m_dot + x_arr * m_ddot
    return ScoreValues(*(_out(x, v) for v in (m, m_dot, m_ddot, n, n_dot, n_ddot)))


def location_scale_density(spec: NoiseSpec, x, a, b):
    """F(x; a, b) = f((x - a) / b) / b."""
    if np.any(np.asarray(b) <= 0):
        raise ValueError("scale b must be positive")
    z = (np.asarray(x, dtype=float) - a) / b
    val = density(spec, z) / np.asarray(b, dtype=float)
    return float(val) if np.ndim(val) == 0 else val


# -- quadrature ------------------------------------------------------------

def _truncation(spec: NoiseSpec) -> float:
    q = spec.quadrature
    if q.bound is not None:
        return float(q.bound)
    # 25% margin: the integrands carry polynomial weights up to x^4
    if spec.family == GAUSSIAN:
        return 1.25 * float(stats.norm.isf(q.tail_mass / 2))
    return 1.25 * float(stats.t.isf(q.tail_mass / 2, spec.dof)) * spec.scale


def _trapezoid(spec, integrands, T, start_nodes, max_nodes, tol):
    nodes = start_nodes
    prev = None
    while True:
        x = np.linspace(-T, T, nodes)
        w = density(spec, x)
        vals = np.array([np.trapezoid(g(x) * w, x) for g in integrands])
        if prev is not None and np.max(np.abs(vals - prev)) < tol:
            return vals, nodes, True
        if 2 * nodes - 1 > max_nodes:
            return vals, nodes, False
        prev = vals
        nodes = 2 * nodes - 1


@dataclass(frozen=True)
class QuadratureResult:
    values: np.ndarray
    nodes: int
    bound: float
    converged: bool


def integrate(spec: NoiseSpec, integrands, bound: float | None = None,
              start_nodes: int | None = None) -> QuadratureResult:
    """E[g(eps)] for each g by trapezoid quadrature against the density.

    ``converged`` is False when node doubling did not settle or when
    widening the interval by half moves any value by more than 1e-6.
    """
    q = spec.quadrature
    T = _truncation(spec) if bound is None else float(bound)
    start = start_nodes or q.start_nodes
    vals, nodes, ok = _trapezoid(spec, integrands, T, start, q.max_nodes, q.tol)
    wide, _, ok_wide = _trapezoid(spec, integrands, 1.5 * T, start, q.max_nodes, q.tol)
    ok = ok and ok_wide and bool(np.max(np.abs(wide - vals)) <= 1e-6)
    return QuadratureResult(vals, nodes, T, ok)


@dataclass(frozen=True)
class Moments:
    I0: float
    I1: float
    I2: float
    K0: float
    K1: float
    K2: float
    converged: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


def moments(spec: NoiseSpec, method: str = "auto", start_nodes: int | None = None) -> Moments:
    """I_j = E[eps^j M_f(eps)^2] and K_j = E[eps^j M_f(eps)], j = 0, 1, 2.

    The Gaussian returns closed forms unless ``method="quadrature"``.
    """
    if spec.family == GAUSSIAN and method != "quadrature":
        return Moments(1.0, 0.0, 3.0, 0.0, -1.0, 0.0)
    return _moments_quadrature(spec, start_nodes)


def _moments_quadrature(spec: NoiseSpec, start_nodes=None) -> Moments:
    def M(x):
        return scores(spec, x).m

    gs = [
        lambda x: M(x) ** 2,
        lambda x: x * M(x) ** 2,
        lambda x: x * x * M(x) ** 2,
        M,
        lambda x: x * M(x),
        lambda x: x * x * M(x),
    ]
    res = integrate(spec, gs, start_nodes=start_nodes)
    return Moments(*(float(v) for v in res.values), converged=res.converged)


# -- regularity audit -----------------------------------------------------

@dataclass
class AuditItem:
    name: str
    value: float
    target: float | None = None
    tol: float | None = None
    bound: float | None = None
    passed: bool = True


@dataclass
class AuditReport:
    noise: str
    items: list[AuditItem] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def to_dict(self) -> dict:
        return {
            "noise": self.noise,
            "passed": self.passed,
            "items": [asdict(it) for it in self.items],
        }


def student_bounds(l: int) -> dict:
    """Closed-form sup-norm bounds for the raw Student-t score derivatives."""
    return {
        "sup|M_dot|": 3 * (l + 1) / (2 * l),
        "sup|M_ddot|": 4 * (l + 1) * math.sqrt(l) / l**2,
        "sup|x M_ddot|": 14 * (l + 1) / l,
        # 2 sup|M_dot| + sup|x M_ddot|
        "sup|N_ddot|": 17 * (l + 1) / l,
    }


FUNCTIONAL_NAMES = ("E[M]", "E[x M]", "E[M_dot + M^2]", "E[x (M_dot + M^2)]",
                    "E[x^2 (M_dot + M^2)]")


def audit_regularity(spec: NoiseSpec, grid_halfwidth: float = 50.0,
                     grid_step: float = 1e-3, tol: float = 1e-6) -> AuditReport:
    report = AuditReport(spec.label())

    def A(x):
        sv = scores(spec, x)
        return sv.m_dot + sv.m**2

    gs = [
        lambda x: scores(spec, x).m,
        lambda x: x * scores(spec, x).m,
        A,
        lambda x: x * A(x),
        lambda x: x * x * A(x),
    ]
    targets = [0.0, -1.0, 0.0, 0.0, 2.0]
    res = integrate(spec, gs)
    for name, v, t in zip(FUNCTIONAL_NAMES, res.values, targets):
        ok = bool(abs(v - t) <= tol) and res.converged
        report.items.append(AuditItem(name, float(v), target=t, tol=tol, passed=ok))

    x = np.arange(-grid_halfwidth, grid_halfwidth + grid_step / 2, grid_step)
    law = spec.raw() if spec.family == STUDENT else spec
    sv = scores(law, x)
    sups = {
        "sup|M_dot|": float(np.max(np.abs(sv.m_dot))),
        "sup|M_ddot|": float(np.max(np.abs(sv.m_ddot))),
        "sup|x M_ddot|": float(np.max(np.abs(x * sv.m_ddot))),
        "sup|N_ddot|": float(np.max(np.abs(sv.n_ddot))),
    }
    if spec.family == STUDENT:
        for name, bound in student_bounds(spec.dof).items():
            report.items.append(AuditItem(name, sups[name], bound=bound,
                                          passed=sups[name] <= bound))
    else:
        expected = {"sup|M_dot|": 1.0, "sup|M_ddot|": 0.0,
                    "sup|x M_ddot|": 0.0, "sup|N_ddot|": 2.0}
        for name, t in expected.items():
            report.items.append(AuditItem(name, sups[name], target=t, tol=1e-12,
                                          passed=abs(sups[name] - t) <= 1e-12))
    return report


def power_mean_bound(a, b, xi):
    """Return (lhs, rhs) of (a + b)^xi <= 2^(xi - 1) (a^xi + b^xi) for a, b >= 0."""
    return (a + b) ** xi, 2 ** (xi - 1) * (a**xi + b**xi)
