"""Euler-Arnold control system on the dual of a Lie algebra.

The vertical part ``a(t)`` of an extremal solves ``a'(t) = a([u(t), .])``
with the control ``u(t)`` on the face of the unit sphere where ``a(t)`` is
maximal.  Integration is fixed-step RK4 with the control frozen over each
step; whenever the maximizing face changes inside a step the change time is
located by bisection and the step is cut there.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .lie_algebra import LieAlgebra, representation_residual
from .polynorm import FACE_TOL, Face, PolyNorm, relative_interior_point

RESIDUAL_TOL = 1e-6
DEFAULT_STEP = 1e-3
SWITCH_RESOLUTION = 1e-6   # bisection stops at h * SWITCH_RESOLUTION
REP_TOL = 1e-10
CHATTER_WINDOW = 10        # in steps of h
CHATTER_SWITCHES = 100     # face switches tolerated inside one window


class DynamicsError(ValueError):
    """Bad input to the integrator (zero covector, bad step, ...)."""


class PolicyViolationError(RuntimeError):
    """A control policy produced a point off the current maximizing face."""

    def __init__(self, msg: str, time: float):
        super().__init__(f"{msg} (t = {time:.12g})")
        self.time = time


class IntegrationError(RuntimeError):
    pass


# -- control policies -----------------------------------------------------------


@dataclass(frozen=True)
class ControlPolicy:
    """How the control is picked on the maximizing face.

    ``kind`` is one of ``barycenter``, ``fixed-vertex`` (``vertex`` indexes the
    unit ball's vertex array), ``schedule`` (piecewise-constant points, each
    active from its switch time on) or ``custom`` (``func(t) -> point``).
    """

    kind: str = "barycenter"
    vertex: int | None = None
    schedule: tuple = ()
    func: Callable[[float], Sequence[float]] | None = field(default=None, compare=False)

    KINDS = ("barycenter", "fixed-vertex", "schedule", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DynamicsError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed-vertex" and (self.vertex is None or int(self.vertex) < 0):
            raise DynamicsError("fixed-vertex policy needs a nonnegative vertex index")
        if self.kind == "schedule":
            if not self.schedule:
                raise DynamicsError("schedule policy needs at least one entry")
            ts = [float(t) for t, _ in self.schedule]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise DynamicsError("schedule switch times must increase")
        if self.kind == "custom" and not callable(self.func):
            raise DynamicsError("custom policy needs a callable")

    @classmethod
    def barycenter(cls) -> "ControlPolicy":
        return cls("barycenter")

    @classmethod
    def fixed_vertex(cls, index: int) -> "ControlPolicy":
        return cls("fixed-vertex", vertex=int(index))

    @classmethod
    def from_schedule(cls, entries) -> "ControlPolicy":
        sched = tuple((float(t), tuple(float(x) for x in p)) for t, p in entries)
        return cls("schedule", schedule=sched)

    @classmethod
    def custom(cls, func) -> "ControlPolicy":
        return cls("custom", func=func)

    def switch_times(self) -> list[float]:
        return [t for t, _ in self.schedule[1:]] if self.kind == "schedule" else []

    def to_json(self) -> dict:
        if self.kind == "barycenter":
            return {"kind": "barycenter"}
        if self.kind == "fixed-vertex":
            return {"kind": "fixed-vertex", "vertex": self.vertex}
        if self.kind == "schedule":
            return {"kind": "schedule", "schedule": [[t, list(p)] for t, p in self.schedule]}
        raise DynamicsError("custom policies are not serializable")

    @classmethod
    def from_json(cls, desc) -> "ControlPolicy":
        if isinstance(desc, str):
            desc = {"kind": desc}
        if not isinstance(desc, dict) or "kind" not in desc:
            raise DynamicsError("policy must be a name or an object with 'kind'")
        allowed = {"barycenter": {"kind"}, "fixed-vertex": {"kind", "vertex"},
                   "schedule": {"kind", "schedule"}}
        kind = desc["kind"]
        if kind not in allowed:
            raise DynamicsError(f"unknown policy kind {kind!r}")
        extra = set(desc) - allowed[kind]
        if extra:
            raise DynamicsError(f"unexpected policy keys: {sorted(extra)}")
        if kind == "fixed-vertex":
            return cls.fixed_vertex(desc.get("vertex", -1))
        if kind == "schedule":
            try:
                return cls.from_schedule(desc.get("schedule", []))
            except (TypeError, ValueError):
                raise DynamicsError("schedule entries must be [t_switch, point]") from None
        return cls.barycenter()


def select_control(N: PolyNorm, a, policy: ControlPolicy, t: float = 0.0, *,
                   face: Face | None = None, tol: float = FACE_TOL) -> np.ndarray:
    """A point of the maximizing face of ``a`` chosen by ``policy``."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise DynamicsError("covector must be nonzero")
    if face is None:
        face = N.maximizing_face(a, tol)
    if policy.kind == "barycenter":
        return relative_interior_point(face)
    if policy.kind == "fixed-vertex":
        if policy.vertex not in face.vertex_ids:
            raise PolicyViolationError(
                f"vertex {policy.vertex} is not on the maximizing face {face.signature}", t)
        return N.ball.vertices[policy.vertex].copy()
    if policy.kind == "schedule":
        idx = max(0, np.searchsorted([s for s, _ in policy.schedule], t, side="right") - 1)
        u = np.array(policy.schedule[idx][1], dtype=float)
    else:
        u = np.asarray(policy.func(t), dtype=float)
    if u.shape != a.shape or not N.ball.contains(face, u, tol):
        raise PolicyViolationError(f"control {u.tolist()} is off the maximizing face {face.signature}", t)
    return u


# -- trajectories ---------------------------------------------------------------


def _control_breaks(u: np.ndarray) -> np.ndarray:
    if len(u) < 2:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.any(u[1:] != u[:-1], axis=1)) + 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of an extremal.

    The control ``u[j]`` is the one used on ``[t_j, t_{j+1}]``; ``breaks``
    lists the sample indices where it differs from the previous one.
    """

    times: np.ndarray
    a: np.ndarray
    u: np.ndarray
    face_ids: tuple[str, ...]
    switch_times: np.ndarray
    dual_values: np.ndarray
    breaks: np.ndarray | None = None

    def __post_init__(self):
        for name in ("times", "a", "u", "switch_times", "dual_values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "face_ids", tuple(self.face_ids))
        m = len(self.times)
        if self.a.ndim != 2 or self.u.shape != self.a.shape:
            raise DynamicsError("a and u samples must be equal-shaped 2d arrays")
        if not (len(self.a) == len(self.face_ids) == len(self.dual_values) == m):
            raise DynamicsError("trajectory arrays differ in length")
        if m > 1 and np.any(np.diff(self.times) <= 0):
            raise DynamicsError("times must be strictly increasing")
        brk = _control_breaks(self.u) if self.breaks is None else np.asarray(self.breaks, dtype=int)
        object.__setattr__(self, "breaks", brk)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def with_controls(self, u) -> "Trajectory":
        """Same vertical part paired with other controls (kinks kept)."""
        return Trajectory(self.times, self.a, np.asarray(u, dtype=float), self.face_ids,
                          self.switch_times, self.dual_values, self.breaks)

    def with_covectors(self, a, N: PolyNorm | None = None) -> "Trajectory":
        a = np.asarray(a, dtype=float)
        dv = N.dual_eval(a) if N is not None else self.dual_values
        return Trajectory(self.times, a, self.u, self.face_ids, self.switch_times, dv, self.breaks)

    def segment(self, start: int, stop: int) -> "Trajectory":
        """Samples ``start:stop`` (switch times inside the window kept)."""
        t = self.times[start:stop]
        sw = self.switch_times[(self.switch_times >= t[0]) & (self.switch_times <= t[-1])]
        brk = self.breaks[(self.breaks > start) & (self.breaks < stop)] - start
        return Trajectory(t, self.a[start:stop], self.u[start:stop], self.face_ids[start:stop],
                          sw, self.dual_values[start:stop], brk)

    # -- I/O --

    def write_csv(self, path, switch_path=None) -> tuple[Path, Path]:
        """CSV with header ``t, a_1..a_n, u_1..u_n, face_id, dual_value``.

        Floats are written with ``repr`` so a reload is bit-identical.  Switch
        times go to a JSON sidecar (default ``<stem>.switches.json``).
        """
        path = Path(path)
        switch_path = Path(switch_path) if switch_path else path.with_suffix(".switches.json")
        n = self.dim
        header = ["t", *(f"a_{i + 1}" for i in range(n)), *(f"u_{i + 1}" for i in range(n)),
                  "face_id", "dual_value"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(len(self)):
                w.writerow([repr(float(self.times[j])), *map(repr, self.a[j].tolist()),
                            *map(repr, self.u[j].tolist()), self.face_ids[j],
                            repr(float(self.dual_values[j]))])
        switch_path.write_text(json.dumps({"switch_times": self.switch_times.tolist()}, indent=2))
        return path, switch_path

    @classmethod
    def read_csv(cls, path, switch_path=None) -> "Trajectory":
        path = Path(path)
        switch_path = Path(switch_path) if switch_path else path.with_suffix(".switches.json")
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise DynamicsError(f"cannot read trajectory: {exc}") from None
        if not rows:
            raise DynamicsError("empty trajectory file")
        header, body = rows[0], rows[1:]
        n = (len(header) - 3) // 2
        expected = ["t", *(f"a_{i + 1}" for i in range(n)), *(f"u_{i + 1}" for i in range(n)),
                    "face_id", "dual_value"]
        if header != expected or n < 1:
            raise DynamicsError(f"unexpected trajectory header {header}")
        try:
            num = np.array([[float(x) for i, x in enumerate(r) if i != 2 * n + 1] for r in body])
        except ValueError as exc:
            raise DynamicsError(f"bad number in trajectory: {exc}") from None
        if num.shape != (len(body), 2 * n + 2):
            raise DynamicsError("ragged trajectory rows")
        switches = []
        if switch_path.exists():
            try:
                switches = json.loads(switch_path.read_text())["switch_times"]
            except (ValueError, KeyError, TypeError):
                raise DynamicsError(f"bad switch-times file {switch_path}") from None
        return cls(num[:, 0], num[:, 1:n + 1], num[:, n + 1:2 * n + 1],
                   [r[2 * n + 1] for r in body], switches, num[:, -1])


def _rk4(M: np.ndarray, a: np.ndarray, s: float) -> np.ndarray:
    k1 = M @ a
    k2 = M @ (a + 0.5 * s * k1)
    k3 = M @ (a + 0.5 * s * k2)
    k4 = M @ (a + s * k3)
    return a + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(A: LieAlgebra, N: PolyNorm, a0, policy: ControlPolicy, T: float,
              h: float = DEFAULT_STEP, *, face_tol: float = FACE_TOL,
              project: bool = False) -> Trajectory:
    """Integrate ``a' = a([u, .])`` on ``[0, T]`` with controls from ``policy``.

    With ``project`` each accepted step is rescaled radially back onto the
    dual sphere through ``a0``; off by default so drift stays visible.
    """
    a = np.asarray(a0, dtype=float).copy()
    if a.shape != (A.dim,) or N.dim != A.dim:
        raise DynamicsError(f"a0, algebra and norm must all have dimension {A.dim}")
    if not np.all(np.isfinite(a)) or not np.any(a):
        raise DynamicsError("a0 must be a finite nonzero covector")
    if not (T > 0 and h > 0 and math.isfinite(T) and math.isfinite(h)):
        raise DynamicsError("T and h must be positive")
    if not N.validate().ok:
        raise DynamicsError(f"norm is invalid; witness {N.validate().witness}")

    V = N.ball.vertices
    r0 = N.dual_eval(a)
    faces_seen: dict[bytes, Face] = {}

    def face_at(x):
        vals = V @ x
        mx = vals.max()
        mask = vals >= mx - face_tol * abs(mx)
        key = mask.tobytes()
        face = faces_seen.get(key)
        if face is None:
            face = faces_seen[key] = N.ball.face_of_vertices(np.flatnonzero(mask), exact=False)
        return face

    # barycenter and fixed-vertex controls depend on the face only
    per_face = policy.kind in ("barycenter", "fixed-vertex")
    controls: dict[Face, np.ndarray] = {}

    def control(x, f, t):
        if not per_face:
            return select_control(N, x, policy, t, face=f, tol=face_tol)
        if f not in controls:
            controls[f] = select_control(N, x, policy, t, face=f, tol=face_tol)
        return controls[f]

    sched = sorted(t for t in policy.switch_times() if 0 < t < T)
    t = 0.0
    face = face_at(a)
    u = control(a, face, t)
    times, As, Us, faces, switches = [t], [a], [u], [face], []
    eps = h * 1e-9
    u_prev, M, P = None, None, None
    while T - t > eps:
        step = min(h, T - t)
        while sched and sched[0] <= t + eps:
            sched.pop(0)
        if sched:
            step = min(step, sched[0] - t)
        if u is not u_prev and (u_prev is None or not np.array_equal(u, u_prev)):
            M = A.coadjoint_matrix(u)
            hM = h * M
            # RK4 on a linear field is this degree-4 Taylor polynomial of exp(hM)
            P = np.eye(len(a)) + hM @ (np.eye(len(a)) + hM @ (np.eye(len(a)) / 2 + hM @ (np.eye(len(a)) / 6 + hM / 24)))
            u_prev = u
        a_new = P @ a if step == h else _rk4(M, a, step)
        f_new = face_at(a_new)
        if f_new is not face and f_new != face:
            lo, hi = 0.0, step
            while hi - lo > h * SWITCH_RESOLUTION:
                mid = 0.5 * (lo + hi)
                if face_at(_rk4(M, a, mid)) == face:
                    lo = mid
                else:
                    hi = mid
            step = hi
            a_new = _rk4(M, a, step)
            f_new = face_at(a_new)
            switches.append(t + step)
            if len(switches) > CHATTER_SWITCHES and switches[-1] - switches[-CHATTER_SWITCHES - 1] < CHATTER_WINDOW * h:
                raise IntegrationError(f"face switches chatter near t = {t:.12g}")
        t = t + step if T - (t + step) > eps else float(T)
        sq = float(a_new @ a_new)
        if not (0.0 < sq < math.inf):
            raise DynamicsError(f"covector left the admissible domain at t = {t:.12g}")
        if project:
            a_new = a_new * (r0 / N.dual_eval(a_new))
            f_new = face_at(a_new)
        a, face = a_new, f_new
        u = control(a, face, t)
        times.append(t)
        As.append(a)
        Us.append(u)
        faces.append(face)
    As = np.array(As)
    sigs = {f: f.signature for f in set(faces)}
    return Trajectory(np.array(times), As, np.array(Us), [sigs[f] for f in faces], np.array(switches),
                      N.dual_eval(As))


# -- checks ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExtremalCheck:
    """Outcome of :func:`verify_extremal`."""

    residual: float
    face_ok: bool
    first_face_violation: int | None
    checked: int
    tol: float

    @property
    def accepted(self) -> bool:
        return self.face_ok and self.residual <= self.tol

    def __float__(self):
        return self.residual


def derivative_residuals(A: LieAlgebra, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Mismatch between a finite-difference ``a'`` and ``a([u, .])``.

    The derivative at sample ``j`` uses the five-point central stencil on
    ``j-2..j+2`` (weights for the actual, possibly uneven, spacing), so its
    truncation error is fourth order.  Samples whose stencil straddles a
    control break are skipped since ``a`` has a kink there.  Returns
    ``(indices, residuals)``.
    """
    t, a, u = traj.times, traj.a, traj.u
    m = len(t)
    if m < 5:
        return np.zeros(0, dtype=int), np.zeros(0)
    kink = np.zeros(m + 1, dtype=int)
    kink[traj.breaks] = 1
    seen = np.cumsum(kink)
    idx = np.arange(2, m - 2)
    # breaks at j-1..j+2 mean the control is not constant on [t_{j-2}, t_{j+2}]
    idx = idx[seen[idx + 2] - seen[idx - 2] == 0]
    if idx.size == 0:
        return idx, np.zeros(0)
    offs = np.arange(-2, 3)
    scale = (t[idx + 1] - t[idx - 1])[:, None]
    s = (t[idx[:, None] + offs] - t[idx][:, None]) / scale
    V = s[:, None, :] ** np.arange(5)[None, :, None]
    rhs = np.zeros((idx.size, 5))
    rhs[:, 1] = 1.0
    w = np.linalg.solve(V, rhs[..., None])[..., 0] / scale
    # weights sum to zero; differencing against the centre keeps constants exact
    deriv = np.einsum("mk,mki->mi", w, a[idx[:, None] + offs] - a[idx][:, None, :])
    field_ = np.einsum("mj,jik,mk->mi", u[idx], A.structure, a[idx])
    return idx, np.max(np.abs(deriv - field_), axis=1)


def verify_extremal(A: LieAlgebra, N: PolyNorm, traj: Trajectory, tol: float = RESIDUAL_TOL,
                    face_tol: float = FACE_TOL) -> ExtremalCheck:
    """Residual of ``a' = a([u, .])`` and face membership of every control."""
    idx, res = derivative_residuals(A, traj)
    # u is on the maximizing face iff F(u) = 1 and a(u) = F*(a)
    speed = N.eval(traj.u)
    top = N.dual_eval(traj.a)
    gap = top - np.einsum("ij,ij->i", traj.a, traj.u)
    bad = (np.abs(speed - 1.0) > face_tol) | (gap > face_tol * np.maximum(1.0, np.abs(top)))
    first_bad = int(np.argmax(bad)) if bad.any() else None
    return ExtremalCheck(float(res.max()) if res.size else 0.0, first_bad is None, first_bad,
                         int(idx.size), tol)


def dual_value_drift(traj: Trajectory) -> float:
    dv = traj.dual_values
    return float(np.max(np.abs(dv - dv[0]))) if len(dv) else 0.0


# -- group trajectories -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-constant control: ``controls[j]`` holds on ``[times[j], times[j+1])``."""

    times: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if len(t) != len(c) or len(t) < 1:
            raise DynamicsError("schedule needs one control per time")
        if np.any(np.diff(t) <= 0):
            raise DynamicsError("schedule times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "controls", c)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "ControlSchedule":
        return cls(traj.times, traj.u)

    def __call__(self, t: float) -> np.ndarray:
        j = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1))
        return self.controls[j]

    def write_csv(self, path) -> Path:
        path = Path(path)
        n = self.controls.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *(f"u_{i + 1}" for i in range(n))])
            for t, c in zip(self.times, self.controls):
                w.writerow([repr(float(t)), *map(repr, c.tolist())])
        return path


@dataclass(frozen=True, eq=False)
class GroupTrajectory:
    times: np.ndarray
    matrices: np.ndarray
    det_residual: float

    def to_json(self) -> dict:
        return {"times": self.times.tolist(), "matrices": [m.tolist() for m in self.matrices]}

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json()))
        return path


def reconstruct_group(A: LieAlgebra, rep, schedule: ControlSchedule, x0, h: float = DEFAULT_STEP,
                      *, norm: PolyNorm | None = None, unit_tol: float = 1e-8) -> GroupTrajectory:
    """Solve ``x' = x R(u(t))`` by ``x <- x expm(dt R(u))`` over each control piece.

    ``R`` is the matrix representation (``rep[k]`` represents ``e_k``).  With
    ``norm`` the controls are also checked to be unit speed.  ``det_residual``
    compares ``det x`` with ``det x0 * exp(int tr R(u))``.
    """
    R = np.asarray(rep, dtype=float)
    if representation_residual(A, R) > REP_TOL:
        raise DynamicsError("representation does not preserve brackets")
    x = np.asarray(x0, dtype=float)
    if x.shape != R.shape[1:]:
        raise DynamicsError(f"x0 must be {R.shape[1]}x{R.shape[2]}")
    if not h > 0:
        raise DynamicsError("h must be positive")
    if norm is not None:
        speeds = norm.eval(schedule.controls[:-1])
        if np.any(np.abs(speeds - 1.0) > unit_tol):
            raise DynamicsError("controls are not unit speed for the given norm")
    times, mats = [schedule.times[0]], [x]
    det0 = np.linalg.det(x)
    log_det = 0.0
    worst = 0.0
    for j in range(len(schedule.times) - 1):
        X = np.einsum("k,kab->ab", schedule.controls[j], R)
        span = schedule.times[j + 1] - schedule.times[j]
        m = max(1, math.ceil(span / h - 1e-9))
        dt = span / m
        E = expm(dt * X)
        tr = np.trace(X) * dt
        for s in range(m):
            x = x @ E
            log_det += tr
            times.append(schedule.times[j] + (s + 1) * dt if s < m - 1 else schedule.times[j + 1])
            mats.append(x)
            expected = det0 * math.exp(log_det)
            worst = max(worst, abs(np.linalg.det(x) - expected) / max(1.0, abs(expected)))
    return GroupTrajectory(np.array(times), np.array(mats), worst)
