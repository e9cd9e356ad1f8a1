"""Levenberg-Marquardt minimization over the unit dual quaternions.

The solver never parameterizes the 8 components directly: every update is a
6-dim tangent step applied through the left-increment retraction, and every
Jacobian column is a central difference along one tangent basis direction,
perturbed on the same left side.  Damping is multiplicative on the diagonal
of the normal equations; accepted steps are required to lower the robust
total cost, so the reported cost sequence is monotone by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dq import DualQuaternion
from .manifold import TangentVector, boxplus
from .residuals import (
    Correspondences,
    EmptyCorrespondencesError,
    irls_weights,
    residual_blocks,
    residual_vector,
    total_cost,
)

__all__ = [
    "SolverConfig",
    "SolverReport",
    "DegenerateGeometryError",
    "numeric_jacobian",
    "solve",
]


class DegenerateGeometryError(RuntimeError):
    """The correspondences do not observe all six degrees of freedom."""


@dataclass
class SolverConfig:
    max_iterations: int = 30
    function_tolerance: float = 1e-8
    parameter_tolerance: float = 1e-8
    initial_lambda: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    finite_difference_step: float = 1e-6
    min_correspondences: int = 20
    # smallest acceptable ratio of min/max eigenvalue of J^T J before damping
    degenerate_eig_ratio: float = 1e-9
    use_robust_loss: bool = True
    huber_delta: float = 0.5
    std_rotation_weight: float = 1.0
    std_translation_weight: float = 1.0

    def validate(self) -> None:
        for name in (
            "max_iterations",
            "function_tolerance",
            "parameter_tolerance",
            "initial_lambda",
            "lambda_up",
            "lambda_down",
            "finite_difference_step",
            "min_correspondences",
            "degenerate_eig_ratio",
            "huber_delta",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"solver config field {name} must be positive")


@dataclass
class SolverReport:
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    convergence: str = "did_not_run"
    stage_times: dict = field(default_factory=dict)
    # one tuple per iteration: (iteration, cost, lambda, step_norm)
    iteration_log: list = field(default_factory=list)

    def format_log(self) -> str:
        lines = [
            f"iter={it} cost={cost:.12g} lambda={lam:.6g} step_norm={step:.6g}"
            for it, cost, lam, step in self.iteration_log
        ]
        return "\n".join(lines)


def numeric_jacobian(
    q: DualQuaternion, residual_fn, step: float = 1e-6
) -> np.ndarray:
    """Central-difference Jacobian of a residual function in the tangent basis.

    Column ``j`` is ``(r(q boxplus h e_j) - r(q boxplus -h e_j)) / (2 h)``
    with the basis ordered ``[omega; nu]``.
    """
    cols = []
    for j in range(6):
        e = np.zeros(6)
        e[j] = step
        r_plus = np.asarray(residual_fn(boxplus(q, TangentVector.from_array(e))))
        r_minus = np.asarray(residual_fn(boxplus(q, TangentVector.from_array(-e))))
        if not (np.all(np.isfinite(r_plus)) and np.all(np.isfinite(r_minus))):
            raise FloatingPointError(
                f"non-finite residual while probing tangent direction {j}"
            )
        cols.append((r_plus - r_minus) / (2.0 * step))
    return np.stack(cols, axis=1)


def _cost(q, corr, cfg: SolverConfig) -> float:
    return total_cost(
        q,
        corr,
        use_robust_loss=cfg.use_robust_loss,
        huber_delta=cfg.huber_delta,
        rotation_weight=cfg.std_rotation_weight,
        translation_weight=cfg.std_translation_weight,
    )


def solve(
    initial: DualQuaternion, correspondences: Correspondences, cfg: SolverConfig
) -> tuple[DualQuaternion, SolverReport]:
    """Minimize the alignment cost starting from ``initial``.

    Raises :class:`~dqloam.residuals.EmptyCorrespondencesError` when there is
    nothing to align, ``ValueError`` when there are fewer residual rows than
    ``cfg.min_correspondences``, and :class:`DegenerateGeometryError` when the
    normal equations are rank deficient before damping (for example a scene
    consisting of one infinite plane).
    """
    cfg.validate()
    if correspondences.is_empty():
        raise EmptyCorrespondencesError("no correspondences to optimize over")
    if correspondences.n_rows < cfg.min_correspondences:
        raise ValueError(
            f"{correspondences.n_rows} residual rows < required "
            f"{cfg.min_correspondences}"
        )

    report = SolverReport()
    times = {"jacobian": 0.0, "linear_solve": 0.0, "evaluation": 0.0}
    t_eval = time.perf_counter()
    q = initial
    cost = _cost(q, correspondences, cfg)
    times["evaluation"] += time.perf_counter() - t_eval
    report.initial_cost = cost
    lam = cfg.initial_lambda
    reason = "max_iterations"

    for it in range(cfg.max_iterations):
        t_j = time.perf_counter()
        if cfg.use_robust_loss:
            edge, surf, _ = residual_blocks(
                q, correspondences, cfg.std_rotation_weight, cfg.std_translation_weight
            )
            edge_w = irls_weights(np.linalg.norm(edge, axis=1), cfg.huber_delta) if len(edge) else None
            surf_w = irls_weights(np.abs(surf), cfg.huber_delta) if len(surf) else None
        else:
            edge_w = surf_w = None

        def fn(p):
            return residual_vector(
                p,
                correspondences,
                edge_weights=edge_w,
                surf_weights=surf_w,
                rotation_weight=cfg.std_rotation_weight,
                translation_weight=cfg.std_translation_weight,
            )

        r = fn(q)
        jac = numeric_jacobian(q, fn, cfg.finite_difference_step)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        times["jacobian"] += time.perf_counter() - t_j

        if it == 0:
            evals = np.linalg.eigvalsh(jtj)
            if evals[0] < cfg.degenerate_eig_ratio * max(evals[-1], 1e-300):
                null_dir = np.linalg.eigh(jtj)[1][:, 0]
                raise DegenerateGeometryError(
                    "normal equations rank deficient; unobservable tangent "
                    f"direction ~ {np.round(null_dir, 4).tolist()} "
                    f"(eigenvalues {evals[0]:.3e} .. {evals[-1]:.3e})"
                )

        damping_diag = np.maximum(np.diag(jtj), 1e-12)
        accepted = False
        step_norm = 0.0
        while lam < 1e12:
            t_l = time.perf_counter()
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(damping_diag), -jtr)
            except np.linalg.LinAlgError:
                lam *= cfg.lambda_up
                times["linear_solve"] += time.perf_counter() - t_l
                continue
            times["linear_solve"] += time.perf_counter() - t_l
            t_eval = time.perf_counter()
            candidate = boxplus(q, TangentVector.from_array(delta))
            new_cost = _cost(candidate, correspondences, cfg)
            times["evaluation"] += time.perf_counter() - t_eval
            if new_cost < cost:
                q = candidate
                step_norm = float(np.linalg.norm(delta))
                cost_drop = cost - new_cost
                cost = new_cost
                lam = max(lam / cfg.lambda_down, 1e-12)
                accepted = True
                break
            lam *= cfg.lambda_up
        report.iteration_log.append((it, cost, lam, step_norm))
        report.iterations = it + 1
        if not accepted:
            reason = "stalled"
            break
        if cost_drop <= cfg.function_tolerance * max(cost, 1.0):
            reason = "function_tolerance"
            break
        if step_norm <= cfg.parameter_tolerance:
            reason = "parameter_tolerance"
            break

    report.final_cost = cost
    report.convergence = reason
    report.stage_times = times
    return q, report
