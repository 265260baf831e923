"""Independent brute-force oracle for single-mode time-optimal steering.

Solves the finite-dimensional problem ``y' = A_b y + B u``, ``||u(t)|| <= 1``,
``y(T) = 0`` in minimal time by sweeping candidate adjoint directions on the
unit sphere and bisecting the horizon on a reachability test: the target is
reachable at time ``T`` iff

    min_{|zeta| = 1}  int_0^T ||B^T e^{s A_b^T} zeta|| ds + <e^{T A_b} y0, zeta>  >=  0.

At the optimal time the minimizing direction is the adjoint vector whose
normalized switching function is the bang-bang control; a Newton polish on
the two-point condition tightens the pair (direction, time), and a final
high-order adaptive integration of the closed-loop ODE (segmented at the
pre-located control sign changes, so no step crosses a discontinuity)
certifies the solution.

Deliberately dumb-but-sure and restricted to n <= 3: this module exists to
cross-check the spectral steering pipeline on exactly reducible cases, so it
shares no quadrature or optimization machinery with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .errors import HorizonError
from .linalg import ControlPair, kalman_rank

_TINY = 1e-300


@dataclass(frozen=True)
class OdeInstance:
    """Single-mode reduction: drift block, input matrix, initial state."""

    a_block: np.ndarray
    b: np.ndarray
    y0: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        a = np.array(self.a_block, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True)
        y0 = np.array(self.y0, dtype=float, copy=True).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a_block must be square")
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != a.shape[0]:
            raise ValueError("b must have as many rows as a_block")
        if y0.size != a.shape[0]:
            raise ValueError("y0 must have length n")
        if self.radius != 1.0:
            raise ValueError("only the unit constraint radius is supported")
        for arr in (a, b, y0):
            arr.setflags(write=False)
        object.__setattr__(self, "a_block", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "y0", y0)

    @property
    def n(self) -> int:
        return self.a_block.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True)
class OracleResult:
    t_star: float
    adjoint_dir: np.ndarray
    switch_times: np.ndarray
    terminal_residual: float


@dataclass(frozen=True)
class ClosedFormControl:
    """Phase and switch lattice of the sign-of-sine rotation-case control."""

    theta: float
    t_ref: float
    switch_times: np.ndarray

    def sign(self, t):
        """Sign pattern sin(t_ref - t + theta) / |...| of the scalar control."""
        return np.sign(np.sin(self.t_ref - np.asarray(t) + self.theta))


def _sphere_sweep(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    # Fibonacci sphere
    i = np.arange(count, dtype=float)
    phi = np.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _control_integral(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """``C(sigma) = int_0^sigma e^{u a} b du`` via one augmented exponential."""
    n, m = b.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a
    blk[:n, n:] = b
    return scipy.linalg.expm(sigma * blk)[:n, n:]


class _HorizonContext:
    """Samples of ``e^{s a} b`` on a fixed grid of one horizon."""

    def __init__(self, inst: OdeInstance, horizon: float):
        self.inst = inst
        self.horizon = float(horizon)
        a = inst.a_block
        eigs = np.linalg.eigvals(a)
        w_max = float(np.max(np.abs(eigs.imag))) if eigs.size else 0.0
        n_grid = int(min(16384, max(512, math.ceil(16.0 * horizon * (w_max + 1.0)))))
        self.sigmas = np.linspace(0.0, self.horizon, n_grid + 1)
        step = scipy.linalg.expm((self.sigmas[1] - self.sigmas[0]) * a)
        w = np.empty((n_grid + 1, inst.n, inst.m))
        cur = np.array(inst.b, dtype=float)
        for i in range(n_grid + 1):
            w[i] = cur
            if i < n_grid:
                cur = step @ cur
        self.w = w
        h = np.diff(self.sigmas)
        weights = np.zeros(n_grid + 1)
        weights[:-1] += 0.5 * h
        weights[1:] += 0.5 * h
        self.weights = weights
        self.g = scipy.linalg.expm(self.horizon * a) @ inst.y0

    # -- switching function in sigma = T - t ---------------------------------
    def switching_exact(self, zeta, sigma):
        return (scipy.linalg.expm(sigma * self.inst.a_block) @ self.inst.b).T @ zeta

    def _roots_sigma(self, zeta, refine="secant"):
        """Zeros of the scalar switching function on (0, T); m == 1 only."""
        f_grid = self.w[:, :, 0] @ zeta
        roots = []

        def exact(s):
            return float(self.switching_exact(zeta, s)[0])

        for i in range(f_grid.size - 1):
            flo, fhi = f_grid[i], f_grid[i + 1]
            if flo == 0.0:
                if 0.0 < self.sigmas[i] < self.horizon:
                    roots.append(self.sigmas[i])
                continue
            if flo * fhi < 0.0:
                lo, hi = self.sigmas[i], self.sigmas[i + 1]
                if refine == "brentq":
                    roots.append(
                        scipy.optimize.brentq(exact, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
                    )
                else:
                    x0, x1, f0, f1 = lo, hi, flo, fhi
                    for _ in range(4):
                        if f1 == f0:
                            break
                        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
                        x2 = min(max(x2, lo), hi)
                        f2 = exact(x2)
                        x0, f0, x1, f1 = x1, f1, x2, f2
                    roots.append(x1)
        return [r for r in roots if 0.0 < r < self.horizon]

    def support_accurate(self, zeta) -> float:
        """``int_0^T ||b^T e^{s a^T} zeta|| ds`` to near machine accuracy."""
        if self.inst.m == 1:
            pts = [0.0] + sorted(self._roots_sigma(zeta)) + [self.horizon]
            antideriv = [float(_control_integral(self.inst.a_block, self.inst.b, s).T @ zeta)
                         for s in pts]
            return float(sum(abs(antideriv[i + 1] - antideriv[i]) for i in range(len(pts) - 1)))
        val, _ = scipy.integrate.quad(
            lambda s: float(np.linalg.norm(self.switching_exact(zeta, s))),
            0.0,
            self.horizon,
            epsabs=1e-13,
            epsrel=1e-12,
            limit=400,
        )
        return float(val)

    def support_sweep(self, directions: np.ndarray) -> np.ndarray:
        """Trapezoid support values for many directions at once."""
        if self.inst.m == 1:
            proj = np.abs(self.w[:, :, 0] @ directions.T)
        else:
            proj = np.linalg.norm(
                np.einsum("snm,an->sam", self.w, directions), axis=2
            )
        return self.weights @ proj

    def gap(self, zeta) -> float:
        """Accurate separation value  h(zeta) + <g, zeta>."""
        return self.support_accurate(zeta) + float(self.g @ zeta)

    def min_gap(self, n_sweep: int):
        """Minimum of the separation over the unit sphere, with its argmin."""
        inst = self.inst
        if inst.n == 1:
            zeta = np.array([-math.copysign(1.0, self.g[0])])
            return self.gap(zeta), zeta
        dirs = _sphere_sweep(inst.n, n_sweep)
        vals = self.support_sweep(dirs) + dirs @ self.g
        best = int(np.argmin(vals))
        if inst.n == 2:
            th0 = math.atan2(dirs[best, 1], dirs[best, 0])
            span = 4.0 * (2.0 * np.pi / n_sweep)

            def f(th):
                return self.gap(np.array([math.cos(th), math.sin(th)]))

            res = scipy.optimize.minimize_scalar(
                f, bounds=(th0 - span, th0 + span), method="bounded",
                options={"xatol": 1e-12},
            )
            th = float(res.x)
            zeta = np.array([math.cos(th), math.sin(th)])
            return float(res.fun), zeta
        # n == 3: polish on spherical angles
        z0 = dirs[best]
        th0 = math.acos(min(max(z0[2], -1.0), 1.0))
        ph0 = math.atan2(z0[1], z0[0])

        def f3(par):
            th, ph = par
            zeta = np.array(
                [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
            )
            return self.gap(zeta)

        res = scipy.optimize.minimize(
            f3, np.array([th0, ph0]), method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-13},
        )
        th, ph = res.x
        zeta = np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )
        return float(res.fun), zeta


def _terminal_state_exact(inst: OdeInstance, zeta: np.ndarray, horizon: float):
    """Terminal state of the bang-bang trajectory via exact segment integrals (m == 1)."""
    ctx = _HorizonContext(inst, horizon)
    roots = sorted(ctx._roots_sigma(zeta))
    pts = [0.0] + roots + [horizon]
    y = ctx.g.copy()
    for i in range(len(pts) - 1):
        mid = 0.5 * (pts[i] + pts[i + 1])
        sgn = math.copysign(1.0, float(ctx.switching_exact(zeta, mid)[0]))
        seg = _control_integral(inst.a_block, inst.b, pts[i + 1]) - _control_integral(
            inst.a_block, inst.b, pts[i]
        )
        y += sgn * seg[:, 0]
    return y


def shoot(inst: OdeInstance, zeta: np.ndarray, horizon: float, rtol: float = 1e-12):
    """Integrate the closed-loop ODE under the bang-bang control of ``zeta``.

    Control sign changes are located first by root-finding on the switching
    function, and the adaptive integrator runs segment by segment so it never
    steps across a discontinuity.  Returns ``(y(T), switch_times)`` with
    switch times in ascending ``t``.
    """
    ctx = _HorizonContext(inst, horizon)
    a, b = inst.a_block, inst.b
    if inst.m == 1:
        roots_sigma = sorted(ctx._roots_sigma(zeta, refine="brentq"))
        t_switches = sorted(horizon - np.array(roots_sigma)) if roots_sigma else []
        pts = [0.0] + list(t_switches) + [horizon]
        y = inst.y0.astype(float).copy()
        atol = 1e-13 * max(1.0, float(np.linalg.norm(inst.y0)))
        for i in range(len(pts) - 1):
            t0, t1 = pts[i], pts[i + 1]
            if t1 - t0 <= 1e-14:
                continue
            mid = horizon - 0.5 * (t0 + t1)
            sgn = math.copysign(1.0, float(ctx.switching_exact(zeta, mid)[0]))
            rhs = lambda t, y_: a @ y_ + sgn * b[:, 0]  # noqa: E731
            sol = scipy.integrate.solve_ivp(
                rhs, (t0, t1), y, method="DOP853", rtol=rtol, atol=atol
            )
            y = sol.y[:, -1]
        return y, np.array(t_switches)
    # m > 1: augment the adjoint so the control is evaluated in-state
    p0 = scipy.linalg.expm(horizon * a.T) @ zeta

    def rhs(t, z):
        y_, p_ = z[: inst.n], z[inst.n :]
        s = b.T @ p_
        nrm = np.linalg.norm(s)
        u = s / nrm if nrm > 1e-14 else np.zeros(inst.m)
        return np.concatenate([a @ y_ + b @ u, -a.T @ p_])

    z0 = np.concatenate([inst.y0, p0])
    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, horizon), z0, method="DOP853", rtol=rtol,
        atol=1e-13 * max(1.0, float(np.linalg.norm(z0))),
    )
    y = sol.y[: inst.n, -1]
    # switch candidates: zeros of the switching norm
    ts = np.linspace(0.0, horizon, 4097)
    svals = np.array(
        [np.linalg.norm(ctx.switching_exact(zeta, horizon - t)) for t in ts]
    )
    mask = (svals <= 1e-9 * svals.max()) & (ts > 0) & (ts < horizon)
    return y, ts[mask]


def ode_time_optimal(
    inst: OdeInstance,
    tol: float = 1e-10,
    initial_horizon: float = 1.0,
    max_horizon: float = 256.0,
    n_sweep: int = 10000,
) -> OracleResult:
    """Exact time-optimal bang-bang solution of the reduced ODE problem.

    Bisects the horizon on the sphere-swept reachability margin, polishes
    the (direction, time) pair by Newton on the two-point condition (n <= 2,
    single input), and certifies the result by resimulating the control with
    the event-segmented adaptive integrator.
    """
    n = inst.n
    if n > 3:
        raise ValueError("oracle is restricted to n <= 3")
    pair = ControlPair(inst.a_block, inst.b)
    if kalman_rank(pair) < n:
        raise ValueError("oracle requires the reduced pair to satisfy the rank condition")
    y0_norm = float(np.linalg.norm(inst.y0))
    if y0_norm == 0.0:
        return OracleResult(0.0, np.zeros(n), np.array([]), 0.0)

    def phi(T):
        return _HorizonContext(inst, T).min_gap(n_sweep)

    hi = initial_horizon
    val_hi, zeta_hi = phi(hi)
    lo = 0.0
    while val_hi < 0.0:
        lo = hi
        hi *= 2.0
        if hi > max_horizon:
            raise HorizonError(
                f"oracle found no feasible horizon below {max_horizon}"
            )
        val_hi, zeta_hi = phi(hi)
    if lo == 0.0:
        probe = hi / 2.0
        while probe > 1e-10:
            val, _ = phi(probe)
            if val < 0.0:
                lo = probe
                break
            hi = probe
            probe /= 2.0

    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        val, zeta = phi(mid)
        if val < 0.0:
            lo = mid
        else:
            hi, zeta_hi = mid, zeta

    t_star = 0.5 * (lo + hi)
    _, zeta_star = phi(t_star)

    if n == 2 and inst.m == 1:
        th = math.atan2(zeta_star[1], zeta_star[0])
        z = np.array([th, t_star])

        def resid(zv):
            zeta = np.array([math.cos(zv[0]), math.sin(zv[0])])
            return _terminal_state_exact(inst, zeta, zv[1])

        scale = max(1.0, y0_norm)
        for _ in range(6):
            F = resid(z)
            if np.linalg.norm(F) <= 1e-12 * scale:
                break
            J = np.empty((2, 2))
            for j, d in enumerate((1e-7, 1e-7 * max(1.0, z[1]))):
                zp = z.copy()
                zp[j] += d
                J[:, j] = (resid(zp) - F) / d
            try:
                step = np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                break
            z_new = z - step
            if abs(z_new[1] - t_star) > 1e-3 * max(1.0, t_star) or z_new[1] <= 0:
                break
            z = z_new
        if abs(z[1] - t_star) <= 1e-3 * max(1.0, t_star):
            t_star = float(z[1])
            zeta_star = np.array([math.cos(z[0]), math.sin(z[0])])
    elif n == 1:
        zeta_star = np.array([-math.copysign(1.0, _HorizonContext(inst, t_star).g[0])])

    y_final, t_switches = shoot(inst, zeta_star, t_star)
    residual = float(np.linalg.norm(y_final))
    return OracleResult(
        t_star=t_star,
        adjoint_dir=zeta_star,
        switch_times=np.asarray(t_switches, dtype=float),
        terminal_residual=residual,
    )


def ode_min_norm(inst: OdeInstance, horizon: float, n_sweep: int = 4096) -> float:
    """Minimal control sup-norm for steering the ODE instance to zero by ``horizon``.

    Gauge-dual form: the maximum over unit directions of
    ``<-e^{T a} y0, zeta> / int ||b^T e^{s a^T} zeta|| ds``.
    """
    ctx = _HorizonContext(inst, horizon)
    if float(np.linalg.norm(inst.y0)) == 0.0:
        return 0.0
    if inst.n == 1:
        return abs(float(ctx.g[0])) / ctx.support_accurate(np.array([1.0]))
    dirs = _sphere_sweep(inst.n, n_sweep)
    sup = ctx.support_sweep(dirs)
    num = -(dirs @ ctx.g)
    vals = num / np.maximum(sup, _TINY)
    best = int(np.argmax(vals))
    if inst.n == 2:
        th0 = math.atan2(dirs[best, 1], dirs[best, 0])
        span = 4.0 * (2.0 * np.pi / n_sweep)

        def negratio(th):
            zeta = np.array([math.cos(th), math.sin(th)])
            return -(-float(ctx.g @ zeta)) / max(ctx.support_accurate(zeta), _TINY)

        res = scipy.optimize.minimize_scalar(
            negratio, bounds=(th0 - span, th0 + span), method="bounded",
            options={"xatol": 1e-12},
        )
        return float(-res.fun)
    zeta = dirs[best]
    return float(-(ctx.g @ zeta) / max(ctx.support_accurate(zeta), _TINY))


def example_closed_form(zeta, t_ref: float) -> ClosedFormControl:
    """Phase and switch lattice of the rotation-case sign-of-sine control.

    ``theta = arctan(zeta_1 / zeta_2)`` with the convention ``theta = pi/2``
    when ``zeta_2 = 0``; the predicted switch times are the zeros of
    ``sin(t_ref - t + theta)`` inside ``(0, t_ref)`` (spacing exactly pi).
    """
    z = np.asarray(zeta, dtype=float).ravel()
    if z.size != 2 or not np.any(z):
        raise ValueError("zeta must be a nonzero 2-vector")
    if abs(z[1]) <= 1e-15 * np.linalg.norm(z):
        theta = math.pi / 2.0
    else:
        theta = math.atan(z[0] / z[1])
    # sin(t_ref - t + theta) = 0  <=>  t = t_ref + theta - k pi
    k_min = math.ceil((theta + 1e-15) / math.pi)
    k_max = math.floor((t_ref + theta - 1e-15) / math.pi)
    times = [t_ref + theta - k * math.pi for k in range(k_min, k_max + 1)]
    times = sorted(t for t in times if 0.0 < t < t_ref)
    return ClosedFormControl(
        theta=theta, t_ref=float(t_ref), switch_times=np.array(times)
    )
