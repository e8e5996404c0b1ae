# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 11 2021
import logging
import math
from collections import namedtuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .image import Image
from .sensing import (
    AugmentedDssOperator,
    MeasurementVector,
    StackedOperator,
    make_dss,
    make_enhancement,
)

logger = logging.getLogger(__name__)

TvSolution = namedtuple(
    "TvSolution",
    ["image", "iterations_run", "final_objective", "converged", "history"],
)


class TvSettings:
    """
    Solver knobs shared by every reconstruction. Defaults mirror the ``solver`` section of default.config.

    Attributes
    ----------
    max_iters: int
        Outer ADMM iterations.
    tol: float
        Relative image change below which the solver stops.
    lambda_scale: float
        Constant c of the fidelity weight lambda = c / (sqrt(m) * bin width).
    cg_iters: int
        Conjugate gradient steps per x-update.
    beta_ratio: float
        Initial penalty beta as a fraction of lambda * ||Phi||^2.
    auto_beta: bool
        Rebalance beta from the primal/dual residual ratio.
    min_iters: int
        Iterations run before the tolerance test applies.
    """

    def __init__(
        self,
        max_iters=300,
        tol=1e-4,
        lambda_scale=2.0,
        cg_iters=3,
        beta_ratio=0.125,
        auto_beta=True,
        min_iters=10,
    ):
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self.lambda_scale = float(lambda_scale)
        self.cg_iters = int(cg_iters)
        self.beta_ratio = float(beta_ratio)
        self.auto_beta = bool(auto_beta)
        self.min_iters = int(min_iters)

        if self.max_iters < 1 or self.cg_iters < 1:
            raise ValueError("max_iters and cg_iters must be positive")
        if not (self.tol > 0 and self.lambda_scale > 0 and self.beta_ratio > 0):
            raise ValueError("tol, lambda_scale and beta_ratio must be positive")

    @classmethod
    def from_config(cls, section):
        """
        :param section: The ``solver`` dictionary of a loaded configuration, unknown keys are ignored.
        :type section: dict
        """
        keys = (
            "max_iters",
            "tol",
            "lambda_scale",
            "cg_iters",
            "beta_ratio",
            "auto_beta",
            "min_iters",
        )
        return cls(**{k: section[k] for k in keys if k in section})


class TvProblem:
    """
    min_x TV(x) + lambda / 2 * ||Phi x - y||^2 over width x height images.
    """

    def __init__(self, operator, y, width, height, lam, max_iters=300, tol=1e-4):
        values = y.values if isinstance(y, MeasurementVector) else np.asarray(y)
        values = np.ravel(values).astype(np.float64)

        if operator.shape[1] != width * height:
            raise ValueError(
                "Operator has {} columns but the target is {}x{}".format(
                    operator.shape[1], width, height
                )
            )
        if operator.shape[0] != values.shape[0]:
            raise ValueError(
                "Operator has {} rows but {} measurements were given".format(
                    operator.shape[0], values.shape[0]
                )
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Measurements contain non-finite values")
        if not lam > 0:
            raise ValueError("lambda must be positive, got {}".format(lam))

        self.operator = operator
        self.y = values
        self.width = int(width)
        self.height = int(height)
        self.lam = float(lam)
        self.max_iters = int(max_iters)
        self.tol = float(tol)


def gradient(x):
    """
    Forward differences of a 2-D array; the last row (resp. column) difference is 0.

    :return: (vertical, horizontal) differences
    """
    gy = np.zeros_like(x)
    gx = np.zeros_like(x)
    gy[:-1, :] = x[1:, :] - x[:-1, :]
    gx[:, :-1] = x[:, 1:] - x[:, :-1]
    return gy, gx


def divergence(py, px):
    """
    Discrete divergence with the boundary handling of :func:`gradient`, so that divergence = -gradient^T exactly.
    """
    out = np.zeros_like(py)
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    return out


def _tv(x):
    gy, gx = gradient(x)
    return float(np.sum(np.sqrt(gy * gy + gx * gx)))


def tv_norm(img):
    """
    Isotropic total variation with forward differences and a replicate boundary.

    :type img: Image
    :rtype: float
    """
    return _tv(img.pixels)


def shrink(vy, vx, threshold):
    """
    Isotropic shrinkage: scales every gradient vector (vy, vx) towards zero by threshold.
    """
    magnitude = np.sqrt(vy * vy + vx * vx)
    scale = np.maximum(magnitude - threshold, 0.0)
    np.divide(scale, magnitude, out=scale, where=magnitude > 0)
    return vy * scale, vx * scale


def operator_norm_sq(op, iters=8):
    """
    Power-iteration estimate of ||Phi||^2 from a fixed start vector.
    """
    v = np.random.default_rng(0).standard_normal(op.shape[1])
    v /= np.linalg.norm(v)
    estimate = 1.0

    for _ in range(iters):
        w = op.rmatvec(op.matvec(v))
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            return 1.0
        v = w / estimate

    return estimate


def initial_estimate(op, y):
    """
    x0 = alpha * Phi^T y with alpha the least-squares scale ||Phi^T y||^2 / ||Phi Phi^T y||^2.
    """
    back = op.rmatvec(y)
    forward = op.matvec(back)
    denom = float(forward @ forward)
    if denom == 0.0:
        return np.zeros(op.shape[1])
    return back * (float(back @ back) / denom)


def objective(problem, x, phi_x=None):
    if phi_x is None:
        phi_x = problem.operator.matvec(x.ravel())
    r = phi_x - problem.y
    tv = _tv(x.reshape(problem.height, problem.width))
    return tv + 0.5 * problem.lam * float(r @ r)


def solve_tv(problem, settings=None):
    """
    Minimizes TV(x) + lambda / 2 * ||Phi x - y||^2 by ADMM on the split w = grad x.

    Each outer iteration solves (lambda Phi^T Phi + beta grad^T grad) x = lambda Phi^T y + beta grad^T (w - u) with
    a few warm-started conjugate gradient steps, shrinks grad x + u isotropically by 1 / beta and updates the
    scaled dual u. The incumbent (lowest objective seen) is what gets returned, so the reported objective never
    increases.

    :type problem: TvProblem
    :type settings: TvSettings
    :return: The incumbent image and objective. ``history[k]`` is the incumbent objective after k iterations, not
        the objective of the k-th iterate, which ADMM does not keep monotone.
    :rtype: TvSolution
    """
    settings = settings or TvSettings()
    op = problem.operator
    shape = (problem.height, problem.width)
    n = problem.width * problem.height
    lam = problem.lam

    beta = settings.beta_ratio * lam * operator_norm_sq(op)
    rhs_data = lam * op.rmatvec(problem.y)

    x = initial_estimate(op, problem.y)
    wy, wx = gradient(x.reshape(shape))
    uy = np.zeros(shape)
    ux = np.zeros(shape)

    best_x = x.copy()
    best_obj = objective(problem, x)
    history = [best_obj]
    converged = False
    iterations = 0

    for iterations in range(1, problem.max_iters + 1):
        system = LinearOperator(
            (n, n),
            matvec=lambda v, b=beta: lam * op.rmatvec(op.matvec(v))
            - b * divergence(*gradient(v.reshape(shape))).ravel(),
            dtype=np.float64,
        )
        rhs = rhs_data - beta * divergence(wy - uy, wx - ux).ravel()

        x_prev = x
        x, _ = cg(system, rhs, x0=x, rtol=1e-10, atol=0.0, maxiter=settings.cg_iters)

        gy, gx = gradient(x.reshape(shape))
        wy_prev, wx_prev = wy, wx
        wy, wx = shrink(gy + uy, gx + ux, 1.0 / beta)
        uy += gy - wy
        ux += gx - wx

        obj = objective(problem, x)
        if obj < best_obj:
            best_obj = obj
            best_x = x.copy()
        history.append(best_obj)

        change = np.linalg.norm(x - x_prev) / max(np.linalg.norm(x), 1e-12)

        if settings.auto_beta:
            primal = math.sqrt(float(np.sum((gy - wy) ** 2) + np.sum((gx - wx) ** 2)))
            dual = beta * float(np.linalg.norm(divergence(wy - wy_prev, wx - wx_prev)))
            if primal > 10.0 * dual:
                beta *= 2.0
                uy /= 2.0
                ux /= 2.0
            elif dual > 10.0 * primal:
                beta /= 2.0
                uy *= 2.0
                ux *= 2.0

        if iterations % 25 == 0:
            logger.debug(
                "tv iter=%d objective=%.6e change=%.3e beta=%.3e",
                iterations,
                obj,
                change,
                beta,
            )

        if iterations >= settings.min_iters and change < problem.tol:
            converged = True
            break

    logger.debug(
        "TV solve %dx%d finished after %d iterations, objective=%.6e, converged=%s",
        problem.width,
        problem.height,
        iterations,
        best_obj,
        converged,
    )

    return TvSolution(
        Image.from_vector(best_x, problem.width, problem.height),
        iterations,
        best_obj,
        converged,
        history,
    )


def calibrate_lambda(model, rate, m, scale=2.0):
    """
    Fidelity weight tied to the quantization noise: lambda = scale / (sqrt(m) * bin width), where bin width is the
    quantizer's equivalent uniform bin width at the given rate.

    :param model: Model the measurements were quantized with.
    :type model: CompanderModel or UniformModel
    :param rate: Bits per measurement.
    :param m: Number of measurements.
    :rtype: float
    """
    width = model.equivalent_bin_width(rate)
    return scale / (math.sqrt(max(m, 1)) * width)


def recover_base(y_B, config, lam, settings=None):
    """
    TV reconstruction of the base-resolution image from (dequantized) base measurements with Phi_B.

    :param y_B: m_B base measurements, DC included.
    :type y_B: MeasurementVector or numpy.ndarray
    :type config: SensingConfig
    :param lam: Fidelity weight.
    :rtype: Image
    """
    settings = settings or TvSettings()
    problem = TvProblem(
        make_dss(config),
        y_B,
        config.base_width,
        config.base_height,
        lam,
        settings.max_iters,
        settings.tol,
    )
    return solve_tv(problem, settings).image


def recover_enhancement(residual, y_pred, config, lam, settings=None, base=None):
    """
    Adds the prediction back to the dequantized residuals and reconstructs the full-resolution image with Phi_E.

    :param residual: Dequantized residual measurements (length m_E).
    :param y_pred: Predicted enhancement measurements (length m_E).
    :type config: SensingConfig
    :param lam: Fidelity weight.
    :param base: Optional dequantized base measurements; when given, the augmented Phi_B rows are stacked on top
        of Phi_E and both layers constrain the solution.
    :rtype: Image
    """
    settings = settings or TvSettings()
    r = residual.values if isinstance(residual, MeasurementVector) else residual
    p = y_pred.values if isinstance(y_pred, MeasurementVector) else y_pred
    r, p = np.asarray(r), np.asarray(p)

    if r.shape != p.shape:
        raise ValueError(
            "Residual ({}) and prediction ({}) lengths differ".format(
                r.shape[0], p.shape[0]
            )
        )

    operator = make_enhancement(config)
    y_E = r + p

    if base is not None:
        b = base.values if isinstance(base, MeasurementVector) else np.asarray(base)
        operator = StackedOperator([AugmentedDssOperator(make_dss(config)), operator])
        y_E = np.concatenate([b, y_E])

    problem = TvProblem(
        operator,
        y_E,
        config.width,
        config.height,
        lam,
        settings.max_iters,
        settings.tol,
    )
    return solve_tv(problem, settings).image
