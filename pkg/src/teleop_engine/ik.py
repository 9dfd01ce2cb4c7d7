"""Iterative damped least-squares inverse kinematics with joint weighting.

Each iteration forms the task-space error as the twist from the current EEF
pose to the target, expressed in the base frame to match the geometric
Jacobian, then takes a damped Gauss-Newton step. Joint priorities are applied
as column scaling of the Jacobian: down-weighting a joint provably shrinks its
share of the motion. Steps are clamped to joint limits, with simple
backtracking when the residual grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import robot_model, se3
from .robot_model import LimbChain
from .se3 import Pose

DEFAULT_DAMPING = 1e-3


@dataclass(frozen=True)
class IKConfig:
    damping: float = DEFAULT_DAMPING
    max_iterations: int = 100
    position_tolerance: float = 1e-3  # meters
    orientation_tolerance: float = 1e-3  # radians
    joint_weights: np.ndarray | None = None  # per-joint priorities in (0, 1]
    step_scale: float = 1.0

    def __post_init__(self):
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.position_tolerance <= 0 or self.orientation_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if not 0 < self.step_scale <= 1:
            raise ValueError("step_scale must be in (0, 1]")
        if self.joint_weights is not None:
            w = np.asarray(self.joint_weights, dtype=float)
            if (w <= 0).any() or (w > 1).any():
                raise ValueError("joint_weights must be in (0, 1]")
            object.__setattr__(self, "joint_weights", w)


@dataclass(frozen=True)
class IKResult:
    q_solution: np.ndarray
    converged: bool
    iterations_used: int
    residual_position: float  # meters
    residual_orientation: float  # radians


def damped_pinv_apply(a: np.ndarray, rhs: np.ndarray, damping: float) -> np.ndarray:
    """x = A^T (A A^T + damping^2 I)^-1 rhs, total at singularities."""
    m = a.shape[0]
    gram = a @ a.T + (damping * damping) * np.eye(m)
    return a.T @ np.linalg.solve(gram, rhs)


def _pose_errors(current: Pose, target: Pose) -> tuple:
    """(position error m, orientation error rad) between two poses."""
    dp = float(np.linalg.norm(target.translation - current.translation))
    dr = se3.rotation_angle(current.rotation.T @ target.rotation)
    return dp, dr


def _base_frame_error(current: Pose, target: Pose) -> np.ndarray:
    """Twist from current to target, rotated into the base frame."""
    body = se3.log_map_total(se3.compose(se3.inverse(current), target))
    r = current.rotation
    return np.concatenate([r @ body.linear, r @ body.angular])


def _limit_aware_step(jac: np.ndarray, err: np.ndarray, weights: np.ndarray,
                      damping: float, q: np.ndarray, lower: np.ndarray,
                      upper: np.ndarray) -> np.ndarray:
    """Weighted damped step; joints pressing against a limit are removed from
    the Jacobian so the remaining joints absorb their share of the motion."""
    active = np.ones(q.shape[0], dtype=bool)
    for _ in range(q.shape[0]):
        a = jac * weights[None, :]
        a[:, ~active] = 0.0
        dq = weights * damped_pinv_apply(a, err, damping)
        dq[~active] = 0.0
        pressing = active & (((q <= lower + 1e-12) & (dq < 0))
                             | ((q >= upper - 1e-12) & (dq > 0)))
        if not pressing.any():
            break
        active &= ~pressing
    return dq


def solve(chain: LimbChain, target: Pose, q0: np.ndarray, cfg: IKConfig) -> IKResult:
    """Solve IK for `target` starting from `q0`.

    Unreachable targets are not an error: the result carries converged=False
    and the best (lowest-residual) iterate visited, always within joint limits.
    """
    q0 = np.asarray(q0, dtype=float)
    if q0.shape != (chain.num_dof,):
        raise ValueError(f"q0 has {q0.shape} entries, expected ({chain.num_dof},)")
    if not target.is_finite():
        raise ValueError("target pose has non-finite entries")

    weights = cfg.joint_weights
    if weights is None:
        weights = np.ones(chain.num_dof)
    elif weights.shape != (chain.num_dof,):
        raise ValueError(
            f"joint_weights has {weights.shape} entries, expected ({chain.num_dof},)")

    lower = chain.limits_lower()
    upper = chain.limits_upper()
    q = np.clip(q0, lower, upper)

    fk = robot_model.forward_kinematics(chain, q)
    pos_err, ori_err = _pose_errors(fk, target)
    best_q, best_pos, best_ori = q, pos_err, ori_err
    best_score = pos_err + ori_err

    iterations = 0
    for _ in range(cfg.max_iterations):
        if pos_err < cfg.position_tolerance and ori_err < cfg.orientation_tolerance:
            break
        err = _base_frame_error(fk, target)
        jac = robot_model.geometric_jacobian(chain, q)
        dq = _limit_aware_step(jac, err, weights, cfg.damping, q, lower, upper)

        # Backtracking: halve the step up to 4 times while the residual grows,
        # then accept the last candidate anyway (damped GN may need to pass
        # through a worse iterate).
        score = pos_err + ori_err
        step = cfg.step_scale
        for _halving in range(5):
            q_cand = np.clip(q + step * dq, lower, upper)
            fk_cand = robot_model.forward_kinematics(chain, q_cand)
            p_cand, o_cand = _pose_errors(fk_cand, target)
            if p_cand + o_cand <= score or _halving == 4:
                break
            step *= 0.5

        q, fk, pos_err, ori_err = q_cand, fk_cand, p_cand, o_cand
        iterations += 1
        if pos_err + ori_err < best_score:
            best_q, best_pos, best_ori = q, pos_err, ori_err
            best_score = pos_err + ori_err

    converged = bool(best_pos < cfg.position_tolerance and best_ori < cfg.orientation_tolerance)
    return IKResult(
        q_solution=best_q, converged=converged, iterations_used=iterations,
        residual_position=best_pos, residual_orientation=best_ori)


def solve_weighted_demo(chain: LimbChain, target: Pose, q0: np.ndarray,
                        w1: float, cfg: IKConfig | None = None) -> tuple:
    """Side-by-side solve without and with the first joint down-weighted to w1.

    Requires a redundant chain (>= 7 DoF) so the weighting has room to act.
    """
    if chain.num_dof < 7:
        raise ValueError(f"weighted demo needs a redundant chain (>= 7 DoF), "
                         f"got {chain.num_dof}")
    if cfg is None:
        cfg = IKConfig()
    ones = np.ones(chain.num_dof)
    weighted = ones.copy()
    weighted[0] = w1
    plain = solve(chain, target, q0, replace(cfg, joint_weights=ones))
    biased = solve(chain, target, q0, replace(cfg, joint_weights=weighted))
    return plain, biased
