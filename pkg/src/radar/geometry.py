"""Displacement triads and angle/relative-distance trajectory descriptors.

For an anchor sample x and partner x' at layer l, the triad is

    v_sep    = h_l(x') - h_l(x)
    v_detour = h_{l+1}(x) - h_l(x')
    v_traj   = h_{l+1}(x) - h_l(x)

so v_sep + v_detour = v_traj exactly.  A step descriptor summarizes one layer
transition as the angle between separation and detour plus the relative
excess path length of the two-step detour over the direct trajectory.
Descriptors come in three formulations: Euclidean, geodesic (great-circle
arc lengths with the spherical law of cosines), and a pseudo-Cartesian
projection of the geodesic polar pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

EPS = 1e-8  # lower bound for denominators; prevents division by zero


class SpaceKind(str, Enum):
    EUCLIDEAN = "euclidean"
    GEODESIC = "geodesic"
    PSEUDO_CARTESIAN = "cartesian"


@dataclass(frozen=True)
class Triad:
    v_sep: np.ndarray
    v_detour: np.ndarray
    v_traj: np.ndarray


@dataclass(frozen=True)
class StepDescriptor:
    theta: float  # radians in [0, pi]
    d: float  # relative excess path length, >= 0 up to rounding


@dataclass(frozen=True)
class TrajectoryDescriptor:
    values: np.ndarray  # [theta_t0, d_t0, theta_t1, d_t1, ...] (or x,y pairs)
    center_layer: int
    radius: int


def triad(h_l_x: np.ndarray, h_l_xp: np.ndarray, h_l1_x: np.ndarray) -> Triad:
    h_l_x, h_l_xp, h_l1_x = (np.asarray(v, dtype=np.float64) for v in (h_l_x, h_l_xp, h_l1_x))
    if not (h_l_x.shape == h_l_xp.shape == h_l1_x.shape):
        raise ValueError(
            f"dimension mismatch: {h_l_x.shape}, {h_l_xp.shape}, {h_l1_x.shape}"
        )
    return Triad(
        v_sep=h_l_xp - h_l_x,
        v_detour=h_l1_x - h_l_xp,
        v_traj=h_l1_x - h_l_x,
    )


def euclid_descriptor(t: Triad) -> StepDescriptor:
    """Angle and relative distance of one triad in Euclidean space."""
    ns = float(np.linalg.norm(t.v_sep))
    nd = float(np.linalg.norm(t.v_detour))
    nt = float(np.linalg.norm(t.v_traj))
    cos_arg = float(np.dot(t.v_sep, t.v_detour)) / max(ns * nd, EPS)
    theta = float(np.arccos(np.clip(cos_arg, -1.0, 1.0)))
    d = (ns + nd - nt) / max(nt, EPS)
    return StepDescriptor(theta=theta, d=d)


def _arc(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm vector has no direction on the sphere")
    if np.array_equal(u, v):  # rounding in dot/norms would give ~1e-8, not 0
        return 0.0
    return float(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)))


def geodesic_descriptor(
    h_l_x: np.ndarray, h_l_xp: np.ndarray, h_l1_x: np.ndarray
) -> StepDescriptor:
    """Spherical-triangle angle and relative geodesic distance.

    Arc lengths are great-circle distances between the (direction-normalized)
    points; the interior angle at the partner vertex comes from the spherical
    law of cosines.  Inputs must be nonzero since a zero vector has no
    direction.
    """
    h_l_x, h_l_xp, h_l1_x = (np.asarray(v, dtype=np.float64) for v in (h_l_x, h_l_xp, h_l1_x))
    if not (h_l_x.shape == h_l_xp.shape == h_l1_x.shape):
        raise ValueError(
            f"dimension mismatch: {h_l_x.shape}, {h_l_xp.shape}, {h_l1_x.shape}"
        )
    s_sep = _arc(h_l_x, h_l_xp)
    s_detour = _arc(h_l_xp, h_l1_x)
    s_traj = _arc(h_l_x, h_l1_x)
    num = np.cos(s_traj) - np.cos(s_sep) * np.cos(s_detour)
    den = max(np.sin(s_sep) * np.sin(s_detour), EPS)
    theta = float(np.arccos(np.clip(num / den, -1.0, 1.0)))
    d = (s_sep + s_detour - s_traj) / max(s_traj, EPS)
    return StepDescriptor(theta=theta, d=float(d))


def cartesian_project(s: StepDescriptor) -> tuple[float, float]:
    """Project a geodesic (theta, d) polar descriptor to pseudo-Cartesian."""
    return (s.d * float(np.cos(s.theta)), s.d * float(np.sin(s.theta)))


def window_transitions(center_layer: int, radius: int, num_layers: int) -> range:
    """Layer transitions t (meaning t -> t+1) in the clamped window."""
    if num_layers < 2:
        raise ValueError(f"need at least 2 layers, got {num_layers}")
    if not 0 <= center_layer < num_layers:
        raise ValueError(f"center layer {center_layer} out of range")
    lo = max(center_layer - radius, 0)
    hi = min(center_layer + radius, num_layers - 1)
    if hi <= lo:
        raise ValueError(
            f"empty window: center={center_layer} radius={radius} L={num_layers}"
        )
    return range(lo, hi)


def descriptor_dim(
    center_layer: int,
    radius: int,
    num_layers: int,
    use_angle: bool = True,
    use_distance: bool = True,
) -> int:
    t = len(window_transitions(center_layer, radius, num_layers))
    return t * (int(use_angle) + int(use_distance))


def _euclid_steps_batch(
    a: np.ndarray, p: np.ndarray, a1: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    v_sep = p - a
    v_detour = a1 - p
    v_traj = a1 - a
    ns = np.linalg.norm(v_sep, axis=1)
    nd = np.linalg.norm(v_detour, axis=1)
    nt = np.linalg.norm(v_traj, axis=1)
    dot = np.einsum("ij,ij->i", v_sep, v_detour)
    theta = np.arccos(np.clip(dot / np.maximum(ns * nd, EPS), -1.0, 1.0))
    d = (ns + nd - nt) / np.maximum(nt, EPS)
    return theta, d


def _geodesic_steps_batch(
    a: np.ndarray, p: np.ndarray, a1: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    def arcs(u, v):
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        if np.any(nu == 0.0) or np.any(nv == 0.0):
            raise ValueError("zero-norm vector has no direction on the sphere")
        dot = np.einsum("ij,ij->i", u, v)
        out = np.arccos(np.clip(dot / (nu * nv), -1.0, 1.0))
        out[np.all(u == v, axis=1)] = 0.0  # exact coincidence, not rounding
        return out

    s_sep = arcs(a, p)
    s_detour = arcs(p, a1)
    s_traj = arcs(a, a1)
    num = np.cos(s_traj) - np.cos(s_sep) * np.cos(s_detour)
    den = np.maximum(np.sin(s_sep) * np.sin(s_detour), EPS)
    theta = np.arccos(np.clip(num / den, -1.0, 1.0))
    d = (s_sep + s_detour - s_traj) / np.maximum(s_traj, EPS)
    return theta, d


def descriptor_batch(
    layer_features: Sequence[np.ndarray],
    anchors: np.ndarray,
    partners: np.ndarray,
    center_layer: int,
    radius: int,
    space: SpaceKind = SpaceKind.EUCLIDEAN,
    use_angle: bool = True,
    use_distance: bool = True,
) -> np.ndarray:
    """Trajectory descriptors for many (anchor, partner) pairs at once.

    Returns an [n_pairs, k] float64 matrix where columns follow ascending
    transition order.  With both features enabled k = 2T and the layout is
    [theta_t0, d_t0, theta_t1, d_t1, ...] (for pseudo-Cartesian:
    [x_t0, y_t0, ...]); disabling one feature keeps only the matching
    columns (k = T).  Pseudo-Cartesian requires both features since x and y
    jointly encode the polar pair.
    """
    space = SpaceKind(space)
    if not (use_angle or use_distance):
        raise ValueError("at least one of use_angle/use_distance must be set")
    if space is SpaceKind.PSEUDO_CARTESIAN and not (use_angle and use_distance):
        raise ValueError("pseudo-Cartesian space requires both angle and distance")
    transitions = window_transitions(center_layer, radius, len(layer_features))
    anchors = np.asarray(anchors)
    partners = np.asarray(partners)
    n = anchors.shape[0]
    per_step = int(use_angle) + int(use_distance)
    out = np.empty((n, per_step * len(transitions)), dtype=np.float64)
    for j, t in enumerate(transitions):
        a = layer_features[t][anchors].astype(np.float64, copy=False)
        p = layer_features[t][partners].astype(np.float64, copy=False)
        a1 = layer_features[t + 1][anchors].astype(np.float64, copy=False)
        if space is SpaceKind.EUCLIDEAN:
            theta, d = _euclid_steps_batch(a, p, a1)
            first, second = theta, d
        else:
            theta, d = _geodesic_steps_batch(a, p, a1)
            if space is SpaceKind.PSEUDO_CARTESIAN:
                first, second = d * np.cos(theta), d * np.sin(theta)
            else:
                first, second = theta, d
        col = per_step * j
        if per_step == 2:
            out[:, col] = first
            out[:, col + 1] = second
        elif use_angle:
            out[:, col] = first
        else:
            out[:, col] = second
    return out


def trajectory_descriptor(
    layer_features: Sequence[np.ndarray],
    pair: tuple[int, int],
    center_layer: int,
    radius: int,
    space: SpaceKind = SpaceKind.EUCLIDEAN,
) -> TrajectoryDescriptor:
    """Descriptor vector for a single (anchor, partner) pair."""
    anchor, partner = pair
    values = descriptor_batch(
        layer_features,
        np.asarray([anchor]),
        np.asarray([partner]),
        center_layer,
        radius,
        space,
    )[0]
    return TrajectoryDescriptor(values=values, center_layer=center_layer, radius=radius)
