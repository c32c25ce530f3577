"""One-step estimates and misspecification-robust confidence intervals.

Given a sensitivity ``k``, the one-step estimator ``h_init + k @ g_init``
implements that sensitivity from any root-n consistent start. Two-sided
intervals widen the Wald interval through the bias-aware critical value;
one-sided intervals subtract the worst-case bias outright. With magnitude
zero both reduce exactly to the usual Wald construction.

Also provides the reverse map from a target sensitivity to an equivalent GMM
weighting matrix, so the one-step estimator can be swapped for a full GMM
re-estimation with identical first-order behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import golden_section, orth_complement, solve_psd
from .critval import _check_alpha, cv_alpha, norm_quantile
from .errors import (
    DimensionMismatch,
    NoValidS,
    OutOfRange,
    SingularW1,
)
from .model import (
    MisspecSet,
    MomentModel,
    Sensitivity,
    sensitivity_constraint_residual,
    validate_model,
)
from .sensitivity import (
    LambdaChoice,
    SensitivityFrontier,
    knot_at,
    select_lambda,
    worst_case_bias,
)


@dataclass(frozen=True)
class RobustCI:
    """A robust confidence interval around a one-step estimate.

    ``half_length`` is set for two-sided intervals, ``lower`` for lower
    one-sided ones; ``max_bias`` and ``std_error`` are already on the scale of
    the estimate (divided by sqrt(n)).
    """

    estimate: float
    max_bias: float
    std_error: float
    lambda_star: float | None
    side: str
    half_length: float | None = None
    lower: float | None = None


def one_step(model: MomentModel, k: Sensitivity) -> float:
    """One-step estimate ``h_init + k @ g_init`` implementing sensitivity k."""
    k = np.asarray(k, dtype=float).reshape(-1)
    if k.shape[0] != model.d_g:
        raise DimensionMismatch(
            f"k has length {k.shape[0]}, model has d_g={model.d_g}")
    return model.h_init + float(k @ model.g_init)


def ci_from_sensitivity(model: MomentModel, mset: MisspecSet, k: Sensitivity,
                        alpha: float = 0.05,
                        lambda_star: float | None = None) -> RobustCI:
    """Two-sided robust CI at a caller-chosen sensitivity."""
    _check_alpha(alpha)
    sd = math.sqrt(float(k @ model.sigma @ k))
    bias = worst_case_bias(k, mset)
    root_n = math.sqrt(model.n)
    half = cv_alpha(bias / sd, alpha) * sd / root_n
    return RobustCI(estimate=one_step(model, k), max_bias=bias / root_n,
                    std_error=sd / root_n, lambda_star=lambda_star,
                    side="two_sided", half_length=half)


def two_sided_ci(model: MomentModel, mset: MisspecSet,
                 front: SensitivityFrontier, alpha: float = 0.05) -> RobustCI:
    """Length-optimal two-sided robust CI over the computed frontier."""
    validate_model(model)
    choice = select_lambda(front, mset.m, alpha, "ci_length")
    kn = knot_at(front, choice.lambda_star)
    return ci_from_sensitivity(model, mset, kn.k, alpha,
                               lambda_star=choice.lambda_star)


def one_sided_ci(model: MomentModel, mset: MisspecSet, k: Sensitivity,
                 alpha: float = 0.05,
                 lambda_star: float | None = None) -> RobustCI:
    """Lower one-sided CI: subtract worst-case bias and the one-sided margin.

    The upper variant follows by applying this to the negated functional
    (flip the signs of ``h_deriv`` and ``h_init``).
    """
    _check_alpha(alpha)
    validate_model(model)
    est = one_step(model, k)
    sd = math.sqrt(float(k @ model.sigma @ k))
    bias = worst_case_bias(k, mset)
    root_n = math.sqrt(model.n)
    lower = est - bias / root_n - norm_quantile(1.0 - alpha) * sd / root_n
    return RobustCI(estimate=est, max_bias=bias / root_n,
                    std_error=sd / root_n, lambda_star=lambda_star,
                    side="lower_one_sided", lower=lower)


def select_lambda_one_sided(front: SensitivityFrontier, m: float,
                            alpha: float = 0.05,
                            beta: float = 0.8) -> LambdaChoice:
    """Penalty minimizing the beta-quantile of excess length at correct
    specification: ``m * bbar + (z_{1-alpha} + z_beta) * sd``.
    """
    _check_alpha(alpha)
    if not (0.0 < beta < 1.0):
        raise OutOfRange(f"beta must lie in (0, 1), got {beta}")
    weight = norm_quantile(1.0 - alpha) + norm_quantile(beta)

    def crit(bbar: float, var: float) -> float:
        return m * bbar + weight * math.sqrt(var)

    vals = [crit(kn.bbar, kn.var) for kn in front.knots]
    best = int(np.argmin(vals))
    best_lam, best_val = front.knots[best].lam, vals[best]
    if front.kind == "l2" and len(front.knots) > 1 and m > 0.0:
        lo = front.knots[max(best - 1, 0)].lam
        hi = front.knots[min(best + 1, len(front.knots) - 1)].lam
        if hi > lo:
            def obj(lam):
                kn = knot_at(front, lam)
                return crit(kn.bbar, kn.var)
            lam_ref, val_ref = golden_section(obj, lo, hi,
                                              tol=1e-6 * max(hi - lo, 1.0))
            if val_ref < best_val:
                best_lam = lam_ref
    elif front.kind == "linf" and m > 0.0:
        for j in range(len(front.knots) - 1):
            lo_k, hi_k = front.knots[j], front.knots[j + 1]
            if hi_k.lam <= lo_k.lam:
                continue
            for w in np.linspace(0.0, 1.0, 22)[1:-1]:
                k = (1.0 - w) * lo_k.k + w * hi_k.k
                bbar = worst_case_bias(k, front.set)
                var = float(k @ front.model.sigma @ k)
                v = crit(bbar, var)
                if v < best_val:
                    best_val, best_lam = v, (1.0 - w) * lo_k.lam + w * hi_k.lam
    return LambdaChoice(lambda_star=float(best_lam), criterion="one_sided_quantile",
                        m=m)


def ci_curve(model: MomentModel, b_mat: np.ndarray, p: float,
             m_grid, front: SensitivityFrontier,
             alpha: float = 0.05) -> list[tuple[float, RobustCI]]:
    """Robust CI for every magnitude in an ascending grid, reusing one frontier."""
    m_grid = np.asarray(m_grid, dtype=float).reshape(-1)
    if np.any(m_grid < 0.0) or np.any(np.diff(m_grid) < 0.0):
        raise OutOfRange("m_grid must be nonnegative and ascending")
    out = []
    for m in m_grid:
        mset = MisspecSet(b_mat, p, float(m))
        out.append((float(m), two_sided_ci(model, mset, front, alpha)))
    return out


def equivalent_weighting(model: MomentModel, k: Sensitivity,
                         w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """GMM weighting matrix whose estimator has sensitivity ``k``.

    Builds ``W = S w1 S' + G_perp w2 G_perp'`` from a factor S satisfying
    ``S' Gamma = -I`` and ``S h_deriv = k``; any nonsingular ``w1`` and
    conformable ``w2`` give the same implied sensitivity. The construction
    requires ``k`` to satisfy the regularity constraint.
    """
    validate_model(model)
    k = np.asarray(k, dtype=float).reshape(-1)
    resid = sensitivity_constraint_residual(model, k)
    if resid > 1e-6 * max(1.0, float(np.max(np.abs(model.h_deriv)))):
        raise NoValidS(
            f"k violates the regularity constraint (residual {resid:.3e})")
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    w2 = np.atleast_2d(np.asarray(w2, dtype=float))
    d_th = model.d_theta
    if w1.shape != (d_th, d_th):
        raise DimensionMismatch(f"w1 must be {d_th} x {d_th}, got {w1.shape}")
    if abs(np.linalg.det(w1)) < 1e-300:
        raise SingularW1("w1 is singular")

    # base factor from the efficient direction, then a rank-one correction
    # toward k inside null(Gamma')
    v = solve_psd(model.sigma, model.gamma)
    s_base = -v @ np.linalg.inv(model.gamma.T @ v)
    hh = float(model.h_deriv @ model.h_deriv)
    k_base = s_base @ model.h_deriv
    s_mat = s_base + np.outer(k - k_base, model.h_deriv) / hh

    g_perp = orth_complement(model.gamma)
    if w2.shape != (g_perp.shape[1], g_perp.shape[1]):
        raise DimensionMismatch(
            f"w2 must be {g_perp.shape[1]} x {g_perp.shape[1]}, got {w2.shape}")
    w = s_mat @ w1 @ s_mat.T + g_perp @ w2 @ g_perp.T

    gram = model.gamma.T @ w @ model.gamma
    implied = -w.T @ model.gamma @ np.linalg.solve(gram.T, model.h_deriv)
    if np.max(np.abs(implied - k)) > 1e-8 * max(1.0, np.max(np.abs(k))):
        raise NoValidS("constructed weighting does not reproduce k")
    return w
