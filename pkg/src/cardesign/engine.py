"""Deterministic fixed-timestep 2D rigid-body simulation of a car on terrain.

The body is a rigid polygon; each wheel is a separate rigid disc coupled to
its mount vertex by a spring-damper (stiffness from the suspension frequency
gene) and driven by a speed-seeking motor with torque reaction on the chassis.
Contacts are resolved with restitution-0 impulses, Coulomb friction and
positional projection. The body mesh collides with the terrain but never with
the wheels.

Everything is a pure function of (blueprint, course, config): repeated runs
are bit-identical on one platform. The hot loop is JIT-compiled when numba is
available and falls back to the same Python code otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:                                    # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

from .archive import design_descriptors
from .courses import Course
from .errors import ValidationError
from .genome import CarBlueprint

# state vector layout; _FCBX is the body-center x when first contact happened
_BX, _BY, _BTH, _BVX, _BVY, _BOM, _T, _FCX, _FCY, _FCBX, _MAXPEN = range(11)
_WBASE, _WSTRIDE = 11, 6                     # per wheel: x, y, vx, vy, spin, angle

# scalar parameter layout
_P_DT, _P_G, _P_MU, _P_SLOP, _P_GAIN, _P_TMAX, _P_BOUND, _P_ITERS, \
    _P_BINVM, _P_BINVI = range(10)

# wheel parameter columns: radius, inv_mass, inertia, inv_inertia, k, c, target
_W_R, _W_INVM, _W_I, _W_INVI, _W_K, _W_C, _W_TGT = range(7)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 120.0
    duration: float = 30.0
    gravity: float = 9.81
    damping_ratio: float = 0.7
    friction: float = 0.8
    contact_slop: float = 0.005
    motor_gain: float = 20.0          # Nm per rad/s of speed error
    motor_torque_max: float = 80.0
    world_bound: float = 1e5
    sample_hz: float = 10.0
    position_iterations: int = 3

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def sample_every(self) -> int:
        return max(1, int(round(1.0 / (self.dt * self.sample_hz))))


@dataclass(frozen=True)
class SimulationResult:
    """Outcome of one scored run.

    ``first_contact_x`` is the body-center x at the moment of first contact,
    so a car that never moves after landing scores ~0; the touched course
    point itself is ``first_contact_point``.
    """

    fitness: float | None
    first_contact_x: float | None
    final_x: float | None
    trajectory: tuple[tuple, ...]     # (t, bodyX, bodyY, angle, *wheelAngles)
    descriptors: tuple[float, float, float]
    diverged: bool
    first_contact_point: tuple[float, float] | None = None
    max_penetration: float = 0.0


@njit(cache=True)
def _segment_at(tx, x):
    n = tx.shape[0]
    i = np.searchsorted(tx, x) - 1
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    return i


@njit(cache=True)
def _point_contact(tx, ty, px, py):
    """Penetration of a point below the terrain along the local surface
    normal. Returns (pen, nx, ny); pen <= 0 means no contact."""
    qx = px
    if qx < tx[0]:
        qx = tx[0]
    elif qx > tx[-1]:
        qx = tx[-1]
    i = _segment_at(tx, qx)
    dx = tx[i + 1] - tx[i]
    dy = ty[i + 1] - ty[i]
    inv_len = 1.0 / math.sqrt(dx * dx + dy * dy)
    nx = -dy * inv_len
    ny = dx * inv_len
    line_y = ty[i] + dy * (qx - tx[i]) / dx
    pen = (line_y - py) * ny
    return pen, nx, ny


@njit(cache=True)
def _circle_contact(tx, ty, cx, cy, r):
    """Deepest contact of a disc with the terrain polyline.

    Returns (pen, nx, ny, qx, qy); pen <= 0 means no contact. The normal
    points from the surface toward the disc center."""
    n = tx.shape[0]
    wx = cx
    if wx < tx[0]:
        wx = tx[0]
    elif wx > tx[-1]:
        wx = tx[-1]
    i = _segment_at(tx, wx)
    dx = tx[i + 1] - tx[i]
    dy = ty[i + 1] - ty[i]
    line_y = ty[i] + dy * (wx - tx[i]) / dx
    if cy <= line_y:
        # center sunk below the surface: resolve along that segment's normal
        inv_len = 1.0 / math.sqrt(dx * dx + dy * dy)
        nx = -dy * inv_len
        ny = dx * inv_len
        return r + (line_y - cy) * ny, nx, ny, wx, line_y

    lo = np.searchsorted(tx, cx - r) - 1
    if lo < 0:
        lo = 0
    hi = np.searchsorted(tx, cx + r)
    if hi > n - 2:
        hi = n - 2
    best_d2 = 1e30
    bqx = 0.0
    bqy = 0.0
    for s in range(lo, hi + 1):
        ax, ay = tx[s], ty[s]
        ex, ey = tx[s + 1] - ax, ty[s + 1] - ay
        t = ((cx - ax) * ex + (cy - ay) * ey) / (ex * ex + ey * ey)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx = ax + t * ex
        qy = ay + t * ey
        d2 = (cx - qx) * (cx - qx) + (cy - qy) * (cy - qy)
        if d2 < best_d2:
            best_d2 = d2
            bqx, bqy = qx, qy
    if best_d2 >= r * r:
        return -1.0, 0.0, 1.0, bqx, bqy
    dist = math.sqrt(best_d2)
    if dist > 1e-12:
        nx = (cx - bqx) / dist
        ny = (cy - bqy) / dist
    else:
        nx, ny = 0.0, 1.0
    return r - dist, nx, ny, bqx, bqy


@njit(cache=True)
def _step_kernel(s, p, poly, mounts, wheels, tx, ty):
    """Advance the state vector by one fixed step. Returns 1 on divergence."""
    dt = p[_P_DT]
    g = p[_P_G]
    mu = p[_P_MU]
    slop = p[_P_SLOP]
    binv_m = p[_P_BINVM]
    binv_i = p[_P_BINVI]
    nv = poly.shape[0]
    nw = wheels.shape[0]

    bx, by, th = s[_BX], s[_BY], s[_BTH]
    vx, vy, om = s[_BVX], s[_BVY], s[_BOM]
    cth = math.cos(th)
    sth = math.sin(th)

    # --- forces -> velocities (semi-implicit Euler) ---
    vy -= g * dt
    for k in range(nw):
        b = _WBASE + _WSTRIDE * k
        wvx, wvy = s[b + 2], s[b + 3] - g * dt
        spin = s[b + 4]
        winv_m = wheels[k, _W_INVM]
        winv_i = wheels[k, _W_INVI]

        mlx, mly = mounts[k, 0], mounts[k, 1]
        mx = bx + cth * mlx - sth * mly
        my = by + sth * mlx + cth * mly
        rx, ry = mx - bx, my - by

        dx = s[b] - mx
        dy = s[b + 1] - my
        dist = math.sqrt(dx * dx + dy * dy)
        if dist > 1e-12:
            ax, ay = dx / dist, dy / dist
            # spring pulls the wheel toward its mount (explicit impulse)
            imp = -wheels[k, _W_K] * dist * dt
            wvx += imp * ax * winv_m
            wvy += imp * ay * winv_m
            vx -= imp * ax * binv_m
            vy -= imp * ay * binv_m
            om -= (rx * ay - ry * ax) * imp * binv_i
            # damper along the same axis, implicit so stiff genes stay stable
            mvx = vx - om * ry
            mvy = vy + om * rx
            relv = (wvx - mvx) * ax + (wvy - mvy) * ay
            ra = rx * ay - ry * ax
            meff = 1.0 / (winv_m + binv_m + ra * ra * binv_i)
            cdt = wheels[k, _W_C] * dt
            j = -relv * (cdt * meff) / (meff + cdt)
            wvx += j * ax * winv_m
            wvy += j * ay * winv_m
            vx -= j * ax * binv_m
            vy -= j * ay * binv_m
            om -= ra * j * binv_i

        # speed-seeking motor; gain capped so small discs cannot overshoot
        gain = p[_P_GAIN]
        stable = wheels[k, _W_I] / dt
        if stable < gain:
            gain = stable
        tau = gain * (wheels[k, _W_TGT] - spin)
        if tau > p[_P_TMAX]:
            tau = p[_P_TMAX]
        elif tau < -p[_P_TMAX]:
            tau = -p[_P_TMAX]
        spin += tau * dt * winv_i
        om -= tau * dt * binv_i          # reaction torque on the chassis

        s[b + 2], s[b + 3], s[b + 4] = wvx, wvy, spin

    # --- integrate positions ---
    bx += vx * dt
    by += vy * dt
    th += om * dt
    cth = math.cos(th)
    sth = math.sin(th)
    for k in range(nw):
        b = _WBASE + _WSTRIDE * k
        s[b] += s[b + 2] * dt
        s[b + 1] += s[b + 3] * dt
        s[b + 5] += s[b + 4] * dt

    # --- contacts: restitution-0 impulses + Coulomb friction ---
    fc_pen = 0.0
    fc_x = 0.0
    fc_y = 0.0
    need_fc = math.isnan(s[_FCX])

    for i in range(nv):
        lx, ly = poly[i, 0], poly[i, 1]
        px = bx + cth * lx - sth * ly
        py = by + sth * lx + cth * ly
        pen, nx, ny = _point_contact(tx, ty, px, py)
        if pen <= 0.0:
            continue
        if need_fc and pen > fc_pen:
            fc_pen, fc_x, fc_y = pen, px, py
        rx, ry = px - bx, py - by
        vpx = vx - om * ry
        vpy = vy + om * rx
        vn = vpx * nx + vpy * ny
        if vn < 0.0:
            rn = rx * ny - ry * nx
            meff = 1.0 / (binv_m + rn * rn * binv_i)
            jn = -vn * meff
            vx += jn * nx * binv_m
            vy += jn * ny * binv_m
            om += rn * jn * binv_i
            # friction along the tangent, clamped to the cone
            txv, tyv = -ny, nx
            vpx = vx - om * ry
            vpy = vy + om * rx
            vt = vpx * txv + vpy * tyv
            rt = rx * tyv - ry * txv
            mefft = 1.0 / (binv_m + rt * rt * binv_i)
            jt = -vt * mefft
            lim = mu * jn
            if jt > lim:
                jt = lim
            elif jt < -lim:
                jt = -lim
            vx += jt * txv * binv_m
            vy += jt * tyv * binv_m
            om += rt * jt * binv_i

    max_pen_residual = 0.0
    for k in range(nw):
        b = _WBASE + _WSTRIDE * k
        wx, wy = s[b], s[b + 1]
        pen, nx, ny, qx, qy = _circle_contact(tx, ty, wx, wy, wheels[k, _W_R])
        if pen <= 0.0:
            continue
        if need_fc and pen > fc_pen:
            fc_pen, fc_x, fc_y = pen, qx, qy
        winv_m = wheels[k, _W_INVM]
        winv_i = wheels[k, _W_INVI]
        rx, ry = qx - wx, qy - wy
        wvx, wvy, spin = s[b + 2], s[b + 3], s[b + 4]
        vpx = wvx - spin * ry
        vpy = wvy + spin * rx
        vn = vpx * nx + vpy * ny
        if vn < 0.0:
            rn = rx * ny - ry * nx
            meff = 1.0 / (winv_m + rn * rn * winv_i)
            jn = -vn * meff
            wvx += jn * nx * winv_m
            wvy += jn * ny * winv_m
            spin += rn * jn * winv_i
            txv, tyv = -ny, nx
            vpx = wvx - spin * ry
            vpy = wvy + spin * rx
            vt = vpx * txv + vpy * tyv
            rt = rx * tyv - ry * txv
            mefft = 1.0 / (winv_m + rt * rt * winv_i)
            jt = -vt * mefft
            lim = mu * jn
            if jt > lim:
                jt = lim
            elif jt < -lim:
                jt = -lim
            wvx += jt * txv * winv_m
            wvy += jt * tyv * winv_m
            spin += rt * jt * winv_i
            s[b + 2], s[b + 3], s[b + 4] = wvx, wvy, spin
        # projection: push the disc fully out, keeping the slop margin
        if pen > slop:
            s[b] = wx + nx * (pen - slop)
            s[b + 1] = wy + ny * (pen - slop)
            if slop > max_pen_residual:
                max_pen_residual = slop

    # body projection: repeatedly lift the deepest vertex out
    iters = int(p[_P_ITERS])
    for _ in range(iters + 1):
        deep = 0.0
        dnx = 0.0
        dny = 1.0
        for i in range(nv):
            lx, ly = poly[i, 0], poly[i, 1]
            px = bx + cth * lx - sth * ly
            py = by + sth * lx + cth * ly
            pen, nx, ny = _point_contact(tx, ty, px, py)
            if pen > deep:
                deep, dnx, dny = pen, nx, ny
        if deep <= slop:
            if deep > max_pen_residual:
                max_pen_residual = deep
            break
        if iters == 0:
            if deep > max_pen_residual:
                max_pen_residual = deep
            break
        bx += dnx * (deep - slop)
        by += dny * (deep - slop)
        iters -= 1

    if need_fc and fc_pen > 0.0:
        s[_FCX] = fc_x
        s[_FCY] = fc_y
        s[_FCBX] = bx

    s[_BX], s[_BY], s[_BTH] = bx, by, th
    s[_BVX], s[_BVY], s[_BOM] = vx, vy, om
    s[_T] += dt
    if max_pen_residual > s[_MAXPEN]:
        s[_MAXPEN] = max_pen_residual

    # divergence: non-finite state or a body flung outside the world bound
    total = bx + by + th + vx + vy + om
    for k in range(nw):
        b = _WBASE + _WSTRIDE * k
        total += s[b] + s[b + 1] + s[b + 2] + s[b + 3] + s[b + 4]
    if not math.isfinite(total):
        return 1
    bound = p[_P_BOUND]
    if abs(bx) > bound or abs(by) > bound:
        return 1
    return 0


@njit(cache=True)
def _run_kernel(s, p, poly, mounts, wheels, tx, ty, n_steps, sample_every, traj):
    """Run the full simulation, sampling the trajectory. Returns
    (diverged, samples_written)."""
    nw = wheels.shape[0]
    traj[0, 0] = s[_T]
    traj[0, 1] = s[_BX]
    traj[0, 2] = s[_BY]
    traj[0, 3] = s[_BTH]
    for k in range(nw):
        traj[0, 4 + k] = s[_WBASE + _WSTRIDE * k + 5]
    si = 1
    for i in range(n_steps):
        if _step_kernel(s, p, poly, mounts, wheels, tx, ty) != 0:
            return 1, si
        if (i + 1) % sample_every == 0:
            traj[si, 0] = s[_T]
            traj[si, 1] = s[_BX]
            traj[si, 2] = s[_BY]
            traj[si, 3] = s[_BTH]
            for k in range(nw):
                traj[si, 4 + k] = s[_WBASE + _WSTRIDE * k + 5]
            si += 1
    return 0, si


@dataclass
class WheelState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    spin: float                        # rad/s, spin > 0 drives toward -x
    angle: float
    suspension_extension: float


class WorldState:
    """Immutable snapshot of a running simulation."""

    def __init__(self, raw: np.ndarray, nw: int, diverged: bool = False):
        self._raw = raw
        self.nw = nw
        self.diverged = diverged

    @property
    def raw(self) -> np.ndarray:
        return self._raw

    @property
    def time(self) -> float:
        return float(self._raw[_T])

    @property
    def body_position(self) -> tuple[float, float]:
        return float(self._raw[_BX]), float(self._raw[_BY])

    @property
    def body_angle(self) -> float:
        return float(self._raw[_BTH])

    @property
    def body_velocity(self) -> tuple[float, float]:
        return float(self._raw[_BVX]), float(self._raw[_BVY])

    @property
    def body_angular_velocity(self) -> float:
        return float(self._raw[_BOM])

    @property
    def first_contact(self) -> tuple[float, float] | None:
        if math.isnan(self._raw[_FCX]):
            return None
        return float(self._raw[_FCX]), float(self._raw[_FCY])

    @property
    def max_penetration(self) -> float:
        return float(self._raw[_MAXPEN])

    def wheel(self, k: int, mounts_local: np.ndarray | None = None) -> WheelState:
        b = _WBASE + _WSTRIDE * k
        r = self._raw
        ext = float("nan")
        if mounts_local is not None:
            cth = math.cos(r[_BTH])
            sth = math.sin(r[_BTH])
            mlx, mly = mounts_local[k]
            mx = r[_BX] + cth * mlx - sth * mly
            my = r[_BY] + sth * mlx + cth * mly
            ext = math.hypot(r[b] - mx, r[b + 1] - my)
        return WheelState(position=(float(r[b]), float(r[b + 1])),
                          velocity=(float(r[b + 2]), float(r[b + 3])),
                          spin=float(r[b + 4]), angle=float(r[b + 5]),
                          suspension_extension=ext)


class World:
    """Binds a decoded car to a course and a simulation config."""

    def __init__(self, blueprint: CarBlueprint, course: Course,
                 config: SimConfig = SimConfig()):
        if config.dt <= 0 or config.duration <= 0:
            raise ValidationError("dt and duration must be positive")
        self.blueprint = blueprint
        self.course = course
        self.config = config

        cx, cy = blueprint.body_centroid
        self._poly = np.array([(x - cx, y - cy) for x, y in blueprint.polygon],
                              dtype=np.float64)
        self._mounts = np.array([(mx - cx, my - cy)
                                 for (mx, my), _ in blueprint.wheel_mounts],
                                dtype=np.float64)
        nw = len(blueprint.wheel_mounts)
        self._wheels = np.zeros((nw, 7), dtype=np.float64)
        for k, (_, gene) in enumerate(blueprint.wheel_mounts):
            inertia = 0.5 * gene.mass * gene.radius * gene.radius
            omega = 2.0 * math.pi * gene.suspension_hz
            stiffness = gene.mass * omega * omega
            self._wheels[k, _W_R] = gene.radius
            self._wheels[k, _W_INVM] = 1.0 / gene.mass
            self._wheels[k, _W_I] = inertia
            self._wheels[k, _W_INVI] = 1.0 / inertia
            self._wheels[k, _W_K] = stiffness
            self._wheels[k, _W_C] = 2.0 * config.damping_ratio * gene.mass * omega
            # genes use "positive drives toward +x"; internal spin is CCW
            self._wheels[k, _W_TGT] = -gene.motor_speed

        self._tx = np.array([p[0] for p in course.terrain], dtype=np.float64)
        self._ty = np.array([p[1] for p in course.terrain], dtype=np.float64)

        self._params = np.zeros(10, dtype=np.float64)
        self._params[_P_DT] = config.dt
        self._params[_P_G] = config.gravity
        self._params[_P_MU] = config.friction
        self._params[_P_SLOP] = config.contact_slop
        self._params[_P_GAIN] = config.motor_gain
        self._params[_P_TMAX] = config.motor_torque_max
        self._params[_P_BOUND] = config.world_bound
        self._params[_P_ITERS] = float(config.position_iterations)
        self._params[_P_BINVM] = 1.0 / blueprint.body_mass
        self._params[_P_BINVI] = 1.0 / blueprint.body_inertia

    @property
    def nw(self) -> int:
        return self._wheels.shape[0]

    def spawn(self) -> WorldState:
        """Rest pose with the car's lowest point drop_height above the
        terrain at spawn_x."""
        course = self.course
        low = min(float(self._poly[:, 1].min()),
                  min(self._mounts[k, 1] - self._wheels[k, _W_R]
                      for k in range(self.nw)))
        bx = course.spawn_x
        by = course.height_at(course.spawn_x) + course.drop_height - low
        raw = np.zeros(_WBASE + _WSTRIDE * self.nw, dtype=np.float64)
        raw[_BX] = bx
        raw[_BY] = by
        raw[_FCX] = np.nan
        raw[_FCY] = np.nan
        raw[_FCBX] = np.nan
        for k in range(self.nw):
            b = _WBASE + _WSTRIDE * k
            raw[b] = bx + self._mounts[k, 0]
            raw[b + 1] = by + self._mounts[k, 1]
        return WorldState(raw, self.nw)

    def step(self, state: WorldState, dt: float) -> WorldState:
        """One fixed step. dt must equal the configured timestep."""
        if dt != self.config.dt:
            raise ValidationError(
                f"step dt {dt} does not match configured dt {self.config.dt}")
        raw = state.raw.copy()
        diverged = _step_kernel(raw, self._params, self._poly, self._mounts,
                                self._wheels, self._tx, self._ty) != 0
        return WorldState(raw, self.nw, diverged=diverged)

    def run(self) -> SimulationResult:
        """Full-duration simulation from spawn."""
        config = self.config
        state = self.spawn()
        raw = state.raw.copy()
        n_steps = config.n_steps
        n_samples = n_steps // config.sample_every + 1
        traj = np.zeros((n_samples, 4 + self.nw), dtype=np.float64)
        diverged, written = _run_kernel(raw, self._params, self._poly,
                                        self._mounts, self._wheels,
                                        self._tx, self._ty, n_steps,
                                        config.sample_every, traj)
        trajectory = tuple(tuple(row) for row in traj[:written])
        descriptors = design_descriptors(self.blueprint)
        max_pen = float(raw[_MAXPEN])
        if diverged:
            return SimulationResult(fitness=None, first_contact_x=None,
                                    final_x=None, trajectory=trajectory,
                                    descriptors=descriptors, diverged=True,
                                    max_penetration=max_pen)
        final_x = float(raw[_BX])
        # a car that never touched down scores zero by construction
        never_hit = math.isnan(raw[_FCX])
        fcx = final_x if never_hit else float(raw[_FCBX])
        point = None if never_hit else (float(raw[_FCX]), float(raw[_FCY]))
        return SimulationResult(fitness=final_x - fcx, first_contact_x=fcx,
                                final_x=final_x, trajectory=trajectory,
                                descriptors=descriptors, diverged=False,
                                first_contact_point=point,
                                max_penetration=max_pen)


def simulate(blueprint: CarBlueprint, course: Course,
             config: SimConfig = SimConfig()) -> SimulationResult:
    """Drop the car onto the course and score the 30-second run. Fitness is
    the signed horizontal distance from first ground contact to the final
    position; backwards travel scores negative."""
    return World(blueprint, course, config).run()
