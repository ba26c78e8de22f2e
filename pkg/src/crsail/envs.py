"""Analytic continuous-control environments with scripted expert controllers.

Three desk-scale tasks: an unstable inverted pendulum with early termination,
a planar pushing task with randomized goals and a fixed horizon, and a double
integrator with an LQR expert used as a sanity environment. Dynamics use
fixed-step Euler integration so episodes replay exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from crsail.exceptions import ConfigurationError


@dataclass
class PendulumParams:
    g: float = 9.81
    length: float = 1.0
    mass: float = 1.0
    damping: float = 0.1
    dt: float = 0.05
    # 5.0 N*m rather than 3.0: at 3.0 the gravity torque outruns the actuator
    # before worst-case initial velocity can be dumped, so no gains can meet
    # the 99% expert success certification.
    u_max: float = 5.0
    theta_fail: float = math.pi / 2
    t_max: int = 200
    theta_init: float = 0.3
    theta_dot_init: float = 0.5
    fixed_init: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.u_max <= 0:
            raise ConfigurationError("dt and u_max must be positive")
        if not 0 < self.theta_fail <= math.pi:
            raise ConfigurationError("theta_fail must lie in (0, pi]")


class Pendulum:
    """Inverted pendulum: state (theta, theta_dot), scalar torque action.

    Reward is 1 per non-terminal step; the episode ends when |theta| exceeds
    the failure bound. Semi-implicit Euler: the velocity is advanced first and
    the new velocity moves the angle.
    """

    state_dim = 2
    action_dim = 1

    def __init__(self, params: PendulumParams | None = None):
        self.params = params or PendulumParams()

    @property
    def t_max(self) -> int:
        return self.params.t_max

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if p.fixed_init is not None:
            return np.asarray(p.fixed_init, dtype=np.float64).copy()
        theta = rng.uniform(-p.theta_init, p.theta_init)
        theta_dot = rng.uniform(-p.theta_dot_init, p.theta_dot_init)
        return np.array([theta, theta_dot])

    def step(self, state, action):
        p = self.params
        theta, theta_dot = float(state[0]), float(state[1])
        u = float(np.clip(action[0], -p.u_max, p.u_max))
        theta_dot = theta_dot + p.dt * (
            (p.g / p.length) * math.sin(theta)
            + u / (p.mass * p.length**2)
            - p.damping * theta_dot
        )
        theta = theta + p.dt * theta_dot
        terminal = abs(theta) > p.theta_fail
        reward = 0.0 if terminal else 1.0
        return np.array([theta, theta_dot]), reward, terminal


class PendulumExpert:
    """PD stabilizer; gains certified by the expert success-rate test."""

    def __init__(self, params: PendulumParams | None = None, kp: float = 12.0, kd: float = 3.0,
                 noise_std: float = 0.0, noise_seed: int = 0):
        self.params = params or PendulumParams()
        self.kp = kp
        self.kd = kd
        self.noise_std = noise_std
        self._noise_rng = np.random.default_rng(noise_seed)

    def act(self, state) -> np.ndarray:
        u = -self.kp * state[0] - self.kd * state[1]
        if self.noise_std > 0.0:
            u = u + self.noise_std * self._noise_rng.standard_normal()
        u_max = self.params.u_max
        return np.array([np.clip(u, -u_max, u_max)])


@dataclass
class PusherParams:
    dt: float = 0.1
    speed_cap: float = 1.0
    contact_radius: float = 0.15
    push_gain: float = 0.8
    goal_range: float = 1.0
    object_range: float = 0.6
    agent_range: float = 1.0
    t_max: int = 100
    fixed_init: np.ndarray | None = None

    def __post_init__(self):
        if self.contact_radius <= 0:
            raise ConfigurationError("contact_radius must be positive")
        if not 0 < self.push_gain <= 1:
            raise ConfigurationError("push_gain must lie in (0, 1]")


class Pusher:
    """Kinematic pushing: state (agent xy, object xy, goal xy), velocity action.

    The goal is part of the state so novelty scoring sees target
    randomization. The object moves by push_gain times the agent displacement
    while in contact. Fixed horizon, no early termination; reward is the
    negative object-goal distance.
    """

    state_dim = 6
    action_dim = 2

    def __init__(self, params: PusherParams | None = None):
        self.params = params or PusherParams()

    @property
    def t_max(self) -> int:
        return self.params.t_max

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if p.fixed_init is not None:
            return np.asarray(p.fixed_init, dtype=np.float64).copy()
        agent = rng.uniform(-p.agent_range, p.agent_range, size=2)
        obj = rng.uniform(-p.object_range, p.object_range, size=2)
        goal = rng.uniform(-p.goal_range, p.goal_range, size=2)
        return np.concatenate([agent, obj, goal])

    def step(self, state, action):
        p = self.params
        agent, obj, goal = state[0:2], state[2:4], state[4:6]
        v = np.asarray(action, dtype=np.float64)
        speed = np.linalg.norm(v)
        if speed > p.speed_cap:
            v = v * (p.speed_cap / speed)
        move = p.dt * v
        agent_next = agent + move
        if np.linalg.norm(agent_next - obj) <= p.contact_radius:
            obj_next = obj + p.push_gain * move
        else:
            obj_next = obj.copy()
        reward = -float(np.linalg.norm(obj_next - goal))
        return np.concatenate([agent_next, obj_next, goal]), reward, False


class PusherExpert:
    """Two-phase scripted pusher.

    Phase 1: move to the standoff point behind the object on the object-goal
    line, detouring sideways when the agent sits between object and goal so
    the repositioning move does not drag the object backwards. Phase 2: drive
    through the object toward the goal; since the object follows the agent's
    displacement while in contact, holding full speed carries it along. Stops
    once the object is close enough to the goal.
    """

    def __init__(self, params: PusherParams | None = None, standoff: float = 0.2,
                 align_tol: float = 0.06, goal_tol: float = 0.03):
        self.params = params or PusherParams()
        self.standoff = standoff
        self.align_tol = align_tol
        self.goal_tol = goal_tol

    def act(self, state) -> np.ndarray:
        p = self.params
        agent, obj, goal = state[0:2], state[2:4], state[4:6]
        to_goal = goal - obj
        dist = np.linalg.norm(to_goal)
        if dist < self.goal_tol:
            return np.zeros(2)
        direction = to_goal / dist
        rel = agent - obj
        proj = rel @ direction
        perp_vec = rel - proj * direction
        perp = np.linalg.norm(perp_vec)
        in_contact = np.linalg.norm(rel) <= p.contact_radius
        behind_aligned = proj < 0 and perp < self.align_tol

        if in_contact or behind_aligned:
            v = direction * p.speed_cap
        elif proj <= 0:
            v = (obj - self.standoff * direction - agent) / p.dt
        else:
            # agent is between object and goal; swing wide before coming back
            clearance = p.contact_radius + self.standoff * 0.5
            if perp < clearance:
                side = perp_vec / perp if perp > 1e-12 else np.array([-direction[1], direction[0]])
                v = side * p.speed_cap
            else:
                v = (obj - self.standoff * direction + clearance * (perp_vec / perp) - agent) / p.dt
        speed = np.linalg.norm(v)
        if speed > p.speed_cap:
            v = v * (p.speed_cap / speed)
        return v


@dataclass
class DoubleIntegratorParams:
    dt: float = 0.1
    accel_cap: float = 1.0
    t_max: int = 150
    pos_range: float = 1.0
    vel_range: float = 0.3
    fixed_init: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")


class DoubleIntegrator:
    """Planar double integrator: state (p, v) in R^4, acceleration action.

    Explicit Euler with the old velocity moving the position. Fixed horizon;
    reward penalizes distance from the origin (evaluation only).
    """

    state_dim = 4
    action_dim = 2

    def __init__(self, params: DoubleIntegratorParams | None = None):
        self.params = params or DoubleIntegratorParams()

    @property
    def t_max(self) -> int:
        return self.params.t_max

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if p.fixed_init is not None:
            return np.asarray(p.fixed_init, dtype=np.float64).copy()
        pos = rng.uniform(-p.pos_range, p.pos_range, size=2)
        vel = rng.uniform(-p.vel_range, p.vel_range, size=2)
        return np.concatenate([pos, vel])

    def step(self, state, action):
        p = self.params
        pos, vel = state[0:2], state[2:4]
        a = np.asarray(action, dtype=np.float64)
        mag = np.linalg.norm(a)
        if mag > p.accel_cap:
            a = a * (p.accel_cap / mag)
        pos_next = pos + p.dt * vel
        vel_next = vel + p.dt * a
        reward = -float(pos_next @ pos_next + vel_next @ vel_next)
        return np.concatenate([pos_next, vel_next]), reward, False


def _discrete_lqr_gain(a, b, q, r, iters: int = 500, tol: float = 1e-12) -> np.ndarray:
    """Discrete-time LQR gain via Riccati fixed-point iteration."""
    p = q.copy()
    for _ in range(iters):
        btp = b.T @ p
        k = np.linalg.solve(r + btp @ b, btp @ a)
        p_next = q + a.T @ p @ (a - b @ k)
        if np.max(np.abs(p_next - p)) < tol:
            p = p_next
            break
        p = p_next
    btp = b.T @ p
    return np.linalg.solve(r + btp @ b, btp @ a)


class DoubleIntegratorExpert:
    """LQR controller for the double integrator; gain computed once."""

    def __init__(self, params: DoubleIntegratorParams | None = None):
        self.params = params or DoubleIntegratorParams()
        dt = self.params.dt
        a = np.eye(4)
        a[0, 2] = dt
        a[1, 3] = dt
        b = np.zeros((4, 2))
        b[2, 0] = dt
        b[3, 1] = dt
        self.gain = _discrete_lqr_gain(a, b, np.eye(4), np.eye(2))

    def act(self, state) -> np.ndarray:
        u = -self.gain @ np.asarray(state, dtype=np.float64)
        mag = np.linalg.norm(u)
        cap = self.params.accel_cap
        if mag > cap:
            u = u * (cap / mag)
        return u


class ZeroPolicy:
    """Always outputs the zero action; baseline for expert certification."""

    def __init__(self, action_dim: int):
        self.action_dim = action_dim

    def act(self, state) -> np.ndarray:
        return np.zeros(self.action_dim)


_ENVS = {
    "pendulum": (Pendulum, PendulumParams),
    "pusher": (Pusher, PusherParams),
    "double_integrator": (DoubleIntegrator, DoubleIntegratorParams),
}


def make_env(kind: str, **param_overrides):
    if kind not in _ENVS:
        raise ConfigurationError(f"unknown environment kind: {kind!r}")
    env_cls, params_cls = _ENVS[kind]
    return env_cls(params_cls(**param_overrides))


def make_expert(env, **kwargs):
    if isinstance(env, Pendulum):
        return PendulumExpert(env.params, **kwargs)
    if isinstance(env, Pusher):
        return PusherExpert(env.params, **kwargs)
    if isinstance(env, DoubleIntegrator):
        return DoubleIntegratorExpert(env.params, **kwargs)
    raise ConfigurationError(f"no expert available for {type(env).__name__}")
