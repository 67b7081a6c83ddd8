"""Closed-form capacity and generalization bound formulas.

Everything here is evaluated in log space, term by term, so inputs up to
``n, m ~ 1e9`` never overflow. Two existence-only constants appear in the
source formulas and are mandatory explicit inputs (:class:`BoundConstants`):
``C`` scales the distribution-level kernel-cover bound and ``c`` scales the
empirical-to-distributional sample size. Both default to 1 and any reported
number is only meaningful relative to that choice.

Log conventions: natural logs everywhere except the function-class cover
exponent of :func:`cover_bound_fk`, which is written with a base-2 log in its
source and is kept that way. The exponent log of :func:`cover_bound_hn` is
natural by default with a ``log2_exponent`` switch, since its source leaves
the base ambiguous.

Degenerate log arguments (<= 1) clamp that log factor to 0 and add a warning
instead of raising: a covering number is always >= 1, so clamping keeps the
evaluated expression a valid upper bound in regimes the formulas were not
meant for (tiny m, huge margins).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InputError, NumericError

__all__ = [
    "BoundConstants",
    "BoundInputs",
    "LogBound",
    "EpsilonResult",
    "DeltaResult",
    "cover_bound_hn",
    "cover_bound_fk",
    "cover_bound_kernel_nm",
    "cover_bound_kernel_dn",
    "appendix_sample_size",
    "multitask_epsilon",
    "lifelong_delta",
    "invert_epsilon",
]

EPSILON_BRACKET = (1e-6, 2.0)
INVERT_TOL = 1e-9


@dataclass(frozen=True)
class BoundConstants:
    """Existence-only constants; placeholders defaulting to 1."""

    C: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.C <= 0 or self.c <= 0:
            raise InputError("bound constants C, c must be positive")


@dataclass(frozen=True)
class BoundInputs:
    n: int
    m: int
    d_phi: float
    B: float
    gamma: float
    delta: float
    constants: BoundConstants = field(default_factory=BoundConstants)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InputError("n and m must be >= 1")
        if self.d_phi < 1:
            raise InputError("d_phi must be >= 1")
        if self.B <= 0:
            raise InputError("B must be positive")
        if self.gamma <= 0:
            raise InputError("gamma must be positive")
        if not 0.0 < self.delta <= 1.0:
            raise InputError("delta must be in (0, 1]")


@dataclass(frozen=True)
class LogBound:
    log_value: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class EpsilonResult:
    epsilon: float
    valid: bool
    warnings: tuple[str, ...]
    terms: dict[str, float]


@dataclass(frozen=True)
class DeltaResult:
    delta: float
    log_sample_term: float
    log_environment_term: float
    overflow: bool
    valid: bool
    warnings: tuple[str, ...]


def _require_positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise InputError(f"{name} must be positive, got {value!r}")


def _clog(x: float, label: str, warnings: list[str], base2: bool = False) -> float:
    """log(x) clamped to 0 for x <= 1, recording a degraded-regime warning."""
    if x <= 1.0:
        warnings.append(f"degraded regime: log argument {label} = {x:g} <= 1, clamped")
        return 0.0
    return math.log2(x) if base2 else math.log(x)


def cover_bound_hn(n: int, m: int, B: float, d_phi: float, epsilon: float,
                   log2_exponent: bool = False) -> LogBound:
    """Natural log of the sup-metric cover bound for n-tuples of unit-ball
    predictors over a kernel family:

        2^n (4 e n^2 m^3 B / (eps^2 d_phi))^{d_phi}
            * (16 m B / eps^2)^{(64 B n / eps^2) log(e eps m / (8 sqrt(B)))}

    ``log2_exponent`` switches the exponent's inner log to base 2.
    """
    _require_positive(n=n, m=m, B=B, d_phi=d_phi, epsilon=epsilon)
    warns: list[str] = []
    t_patterns = n * math.log(2.0)
    t_kernel = d_phi * _clog(4.0 * math.e * n**2 * m**3 * B / (epsilon**2 * d_phi),
                             "4en^2m^3B/(eps^2 d_phi)", warns)
    exp_log = _clog(math.e * epsilon * m / (8.0 * math.sqrt(B)),
                    "e*eps*m/(8 sqrt(B))", warns, base2=log2_exponent)
    t_function = (64.0 * B * n / epsilon**2) * exp_log * _clog(
        16.0 * m * B / epsilon**2, "16mB/eps^2", warns)
    return LogBound(log_value=t_patterns + t_kernel + t_function,
                    warnings=tuple(warns))


def cover_bound_fk(m: int, B: float, epsilon: float) -> LogBound:
    """Natural log of the single-kernel function-class cover bound
    ``2 (4 m B / eps^2)^{(16 B / eps^2) log2(eps e m / (4 sqrt(B)))}``
    (the inner log is base 2 as written in its source)."""
    _require_positive(m=m, B=B, epsilon=epsilon)
    warns: list[str] = []
    exp_log2 = _clog(epsilon * math.e * m / (4.0 * math.sqrt(B)),
                     "eps*e*m/(4 sqrt(B))", warns, base2=True)
    value = math.log(2.0) + (16.0 * B / epsilon**2) * exp_log2 * _clog(
        4.0 * m * B / epsilon**2, "4mB/eps^2", warns)
    return LogBound(log_value=value, warnings=tuple(warns))


def cover_bound_kernel_nm(n: int, m: int, B: float, d_phi: float,
                          epsilon: float) -> float:
    """Natural log of the sample-based kernel cover chain bound
    ``(e n^2 m^2 B / (eps d_phi))^{d_phi}`` (evaluated exactly as written)."""
    _require_positive(n=n, m=m, B=B, d_phi=d_phi, epsilon=epsilon)
    return d_phi * math.log(math.e * n**2 * m**2 * B / (epsilon * d_phi))


def cover_bound_kernel_dn(n: int, d_phi: float, B: float, epsilon: float,
                          constants: BoundConstants = BoundConstants()) -> float:
    """Natural log of the distribution-level kernel cover bound
    ``(C n^5 d_phi^5 (sqrt(B)/eps)^17)^{d_phi}``."""
    _require_positive(n=n, d_phi=d_phi, B=B, epsilon=epsilon)
    return d_phi * (math.log(constants.C) + 5.0 * math.log(n)
                    + 5.0 * math.log(d_phi)
                    + 17.0 * math.log(math.sqrt(B) / epsilon))


def appendix_sample_size(d_phi: float, B: float, epsilon: float,
                         constants: BoundConstants = BoundConstants()) -> float:
    """Sample size ``c d_phi^2 B^{5/2} / eps^5`` sufficient for empirical
    kernel distances to track their distributional counterparts."""
    _require_positive(d_phi=d_phi, B=B, epsilon=epsilon)
    return constants.c * d_phi**2 * B**2.5 / epsilon**5


def multitask_epsilon(inputs: BoundInputs) -> EpsilonResult:
    """Estimation-error radius for n tasks with m samples each:

        eps = sqrt(8 [ (2 log2 - log delta)/n + log2
                       + (d_phi/n) log(128 e n^2 m^3 B / (gamma^2 d_phi))
                       + (256 B/gamma^2) log(gamma e m / (8 sqrt(B)))
                                        * log(128 m B / gamma^2) ] / m)

    The self-referential validity condition ``m > 2/eps^2`` is evaluated on
    the computed eps and surfaced as ``valid``, never silently.
    """
    n, m = inputs.n, inputs.m
    d_phi, B, gamma, delta = inputs.d_phi, inputs.B, inputs.gamma, inputs.delta
    warns: list[str] = []
    t_confidence = (2.0 * math.log(2.0) - math.log(delta)) / n
    t_patterns = math.log(2.0)
    t_kernel = (d_phi / n) * _clog(128.0 * math.e * n**2 * m**3 * B / (gamma**2 * d_phi),
                                   "128en^2m^3B/(gamma^2 d_phi)", warns)
    t_function = (256.0 * B / gamma**2) * _clog(
        gamma * math.e * m / (8.0 * math.sqrt(B)), "gamma*e*m/(8 sqrt(B))", warns) * _clog(
        128.0 * m * B / gamma**2, "128mB/gamma^2", warns)
    total = t_confidence + t_patterns + t_kernel + t_function
    epsilon = math.sqrt(8.0 * total / m)
    valid = epsilon > 0 and m > 2.0 / epsilon**2
    return EpsilonResult(
        epsilon=epsilon,
        valid=valid,
        warnings=tuple(warns),
        terms={"confidence": t_confidence, "patterns": t_patterns,
               "kernel_overhead": t_kernel, "function_cover": t_function},
    )


def _lifelong_log_terms(inputs: BoundInputs, epsilon: float,
                        warns: list[str]) -> tuple[float, float]:
    n, m = inputs.n, inputs.m
    d_phi, B, gamma = inputs.d_phi, inputs.B, inputs.gamma
    C = inputs.constants.C
    log_sample = ((n + 2) * math.log(2.0)
                  + d_phi * _clog(512.0 * math.e * n**2 * m**3 * B / (gamma**2 * d_phi),
                                  "512en^2m^3B/(gamma^2 d_phi)", warns)
                  + (1024.0 * B * n / gamma**2)
                  * _clog(math.e * gamma * m / (16.0 * math.sqrt(B)),
                          "e*gamma*m/(16 sqrt(B))", warns)
                  * _clog(512.0 * m * B / gamma**2, "512mB/gamma^2", warns)
                  - n * m * epsilon**2 / 32.0)
    log_env = (math.log(4.0)
               + d_phi * (math.log(32.0 * C) + 5.0 * math.log(n)
                          + 5.0 * math.log(d_phi)
                          + 17.0 * math.log(64.0 * math.sqrt(B) / (epsilon * gamma)))
               - n * epsilon**2 / 128.0)
    return log_sample, log_env


def lifelong_delta(inputs: BoundInputs, epsilon: float) -> DeltaResult:
    """Failure probability for learning a kernel over a task environment:
    a within-task deviation summand plus a task-environment cover summand,
    both evaluated in log space. The returned probability is their sum
    clamped to [0, 1]; an ``overflow`` flag records a summand whose log
    exceeded 0. The preconditions ``n > 8/eps^2`` and ``m > 8/eps^2`` are
    reported via ``valid``; the value is computed either way.
    """
    _require_positive(epsilon=epsilon)
    warns: list[str] = []
    log_sample, log_env = _lifelong_log_terms(inputs, epsilon, warns)
    overflow = log_sample > 0.0 or log_env > 0.0
    total_log = max(log_sample, log_env) + math.log1p(
        math.exp(-abs(log_sample - log_env)))
    delta = 1.0 if total_log > 0.0 else math.exp(total_log)
    valid = inputs.n > 8.0 / epsilon**2 and inputs.m > 8.0 / epsilon**2
    return DeltaResult(
        delta=min(delta, 1.0),
        log_sample_term=log_sample,
        log_environment_term=log_env,
        overflow=overflow,
        valid=valid,
        warnings=tuple(warns),
    )


def invert_epsilon(target_confidence: float, n: int, m: int, d_phi: float,
                   B: float, gamma: float,
                   constants: BoundConstants = BoundConstants()) -> float:
    """Solve ``lifelong_delta(eps) = target_confidence`` for eps by bisection
    on the bracket [1e-6, 2] (the failure probability is continuous and
    strictly decreasing in eps). Raises InputError when the target is not
    bracketed at this scale."""
    if not 0.0 < target_confidence <= 1.0:
        raise InputError("target confidence must be in (0, 1]")
    inputs = BoundInputs(n=n, m=m, d_phi=d_phi, B=B, gamma=gamma,
                         delta=min(target_confidence, 1.0), constants=constants)
    log_target = math.log(target_confidence)
    warns: list[str] = []

    def log_total(eps: float) -> float:
        ls, le = _lifelong_log_terms(inputs, eps, warns)
        return max(ls, le) + math.log1p(math.exp(-abs(ls - le)))

    lo, hi = EPSILON_BRACKET
    f_lo = log_total(lo) - log_target
    f_hi = log_total(hi) - log_target
    if f_lo < 0.0 or f_hi > 0.0:
        raise InputError(
            f"target {target_confidence:g} not bracketed on {EPSILON_BRACKET}: "
            "bound infeasible at this scale")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_total(mid) - log_target > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    eps = 0.5 * (lo + hi)
    achieved = lifelong_delta(inputs, eps).delta
    if abs(achieved - target_confidence) > INVERT_TOL:
        raise NumericError(
            f"bisection stalled: |delta(eps) - target| = "
            f"{abs(achieved - target_confidence):g} > {INVERT_TOL:g}")
    return eps
