"""Shared vocabulary for the simulator: actions, outcomes, payoffs, history
windows, and the experiment configuration with its validation rules.

Everything downstream (networks, policies, agents, the engine) builds on the
types in this module and nothing here imports from the rest of the package.
"""
from __future__ import annotations

import dataclasses
import enum
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

TOMLDecodeError = _toml.TOMLDecodeError


class ConstraintViolation(ValueError):
    """A payoff or configuration constraint does not hold.

    The message names the violated inequality, e.g. "t > r".
    """


class Action(enum.IntEnum):
    COOPERATE = 0
    DEFECT = 1


# one-hot rows indexed by Action: COOPERATE -> [1, 0], DEFECT -> [0, 1]
ONE_HOT = np.eye(2, dtype=np.float64)


class Outcome(enum.IntEnum):
    """Joint outcome of one game, named from the selector's side."""

    MUTUAL_COOPERATION = 0
    EXPLOITATION = 1        # selector defects, partner cooperates
    DECEPTION = 2           # selector cooperates, partner defects
    MUTUAL_DEFECTION = 3


class MatchingMode(enum.Enum):
    PARTNER_SELECTION = "partner_selection"
    RANDOM_MATCHING = "random_matching"
    TWO_PLAYER_FIXED = "two_player_fixed"


class CreditMode(enum.Enum):
    """How a selection decision is rewarded: with the dilemma reward it led
    to, or not at all."""

    ENSUING_REWARD = "ensuing-reward"
    ZERO = "zero"


AgentId = int


@dataclass(frozen=True)
class PayoffMatrix:
    """Symmetric two-player dilemma payoffs.

    t: temptation (defect against a cooperator)
    r: reward (mutual cooperation)
    p: punishment (mutual defection)
    s: sucker (cooperate against a defector)
    """

    t: float = 4.0
    r: float = 3.0
    p: float = 1.0
    s: float = 0.0

    def __post_init__(self):
        # the strict ordering plus 2r > t + s is what makes the game a
        # dilemma where mutual cooperation beats alternating exploitation
        if not self.t > self.r:
            raise ConstraintViolation("t > r")
        if not self.r > self.p:
            raise ConstraintViolation("r > p")
        if not self.p > self.s:
            raise ConstraintViolation("p > s")
        if not 2 * self.r > self.t + self.s:
            raise ConstraintViolation("2r > t + s")


def payoff_lookup(payoff: PayoffMatrix, a_self: Action, a_other: Action) -> tuple[float, float]:
    """Rewards (r_self, r_other) for one game."""
    if a_self == Action.COOPERATE:
        if a_other == Action.COOPERATE:
            return payoff.r, payoff.r
        return payoff.s, payoff.t
    if a_other == Action.COOPERATE:
        return payoff.t, payoff.s
    return payoff.p, payoff.p


class HistoryWindow:
    """The h most recent dilemma actions of one agent, oldest first.

    The window is always full: construction requires exactly h actions, and
    each push drops the oldest entry. Cold starts are seeded with h uniform
    random actions so opponents always see a complete window.
    """

    __slots__ = ("h", "_codes")

    def __init__(self, h: int, actions):
        if h < 1:
            raise ConstraintViolation("h >= 1")
        codes = tuple(int(a) for a in actions)
        if len(codes) != h:
            raise ValueError(f"history needs exactly {h} actions, got {len(codes)}")
        if any(c not in (0, 1) for c in codes):
            raise ValueError("history actions must be COOPERATE or DEFECT")
        self.h = h
        self._codes = codes

    @classmethod
    def seeded(cls, h: int, rng: np.random.Generator) -> "HistoryWindow":
        return cls(h, [int(rng.integers(2)) for _ in range(h)])

    def push(self, action: Action) -> None:
        self._codes = self._codes[1:] + (int(action),)

    @property
    def codes(self) -> tuple[int, ...]:
        return self._codes

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(Action(c) for c in self._codes)

    def last(self) -> Action:
        return Action(self._codes[-1])

    def __len__(self) -> int:
        return self.h

    def __repr__(self):
        return f"HistoryWindow(h={self.h}, {''.join('CD'[c] for c in self._codes)})"


@dataclass
class ExperimentConfig:
    """One experiment: population, game, learning and run-control parameters.

    Defaults reproduce the headline setting: 20 agents, one-step histories,
    partner selection with selection epsilon 0.1 and dilemma epsilon 0.05.
    """

    n_agents: int = 20
    h: int = 1
    rounds_per_episode: int = 10
    n_episodes: int = 20000
    matching_mode: MatchingMode = MatchingMode.PARTNER_SELECTION
    payoff: PayoffMatrix = field(default_factory=PayoffMatrix)
    hidden_size: int = 256
    learning_rate: float = 1e-3
    train_epochs: int = 1
    gamma: float = 0.99
    epsilon_dilemma: float = 0.05
    epsilon_selection: float = 0.1
    credit_mode: CreditMode = CreditMode.ENSUING_REWARD
    seed: int = 0
    metrics_checkpoints: tuple[int, ...] = ()
    network_window: int = 100


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every structural constraint; the raised message names the
    violated inequality."""
    checks = [
        (cfg.n_agents >= 2, "n_agents >= 2"),
        (cfg.h >= 1, "h >= 1"),
        (cfg.rounds_per_episode >= 1, "rounds_per_episode >= 1"),
        (cfg.n_episodes >= 0, "n_episodes >= 0"),
        (cfg.hidden_size >= 1, "hidden_size >= 1"),
        (cfg.learning_rate > 0, "learning_rate > 0"),
        (cfg.train_epochs >= 1, "train_epochs >= 1"),
        (0 <= cfg.gamma < 1, "0 <= gamma < 1"),
        (0 <= cfg.epsilon_dilemma <= 1, "0 <= epsilon_dilemma <= 1"),
        (0 <= cfg.epsilon_selection <= 1, "0 <= epsilon_selection <= 1"),
        (cfg.network_window >= 1, "network_window >= 1"),
    ]
    if cfg.matching_mode is MatchingMode.TWO_PLAYER_FIXED:
        checks.append((cfg.n_agents == 2, "n_agents == 2 when two_player_fixed"))
    for ok, name in checks:
        if not ok:
            raise ConstraintViolation(name)
    if any(not 0 <= e < cfg.n_episodes for e in cfg.metrics_checkpoints):
        raise ConstraintViolation("0 <= checkpoint < n_episodes")
    PayoffMatrix(cfg.payoff.t, cfg.payoff.r, cfg.payoff.p, cfg.payoff.s)
    return cfg


# --- flat TOML round-trip -------------------------------------------------
#
# Config files are a single flat table; payoff entries are payoff_t etc.
# The writer emits every field so a resolved file reloads to the same config.

_ENUM_FIELDS = {"matching_mode": MatchingMode, "credit_mode": CreditMode}


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    payoff_kwargs = {}
    for key, value in raw.items():
        if key.startswith("payoff_"):
            sub = key[len("payoff_"):]
            if sub not in ("t", "r", "p", "s"):
                raise ConstraintViolation(f"unknown config key: {key}")
            payoff_kwargs[sub] = float(value)
        elif key in _ENUM_FIELDS:
            enum_cls = _ENUM_FIELDS[key]
            try:
                kwargs[key] = enum_cls(value)
            except ValueError:
                allowed = ", ".join(m.value for m in enum_cls)
                raise ConstraintViolation(f"{key} must be one of: {allowed}") from None
        elif key == "metrics_checkpoints":
            kwargs[key] = tuple(int(v) for v in value)
        elif key in known:
            kwargs[key] = type(known[key].default)(value) if known[key].default is not dataclasses.MISSING else value
        else:
            raise ConstraintViolation(f"unknown config key: {key}")
    if payoff_kwargs:
        kwargs["payoff"] = PayoffMatrix(**payoff_kwargs)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = _toml.load(fh)
    return validate_config(config_from_dict(raw))


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"cannot serialize {type(value).__name__}")


def config_to_toml(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "payoff":
            for sub in ("t", "r", "p", "s"):
                lines.append(f"payoff_{sub} = {_toml_scalar(getattr(value, sub))}")
        elif f.name in _ENUM_FIELDS:
            lines.append(f"{f.name} = {_toml_scalar(value.value)}")
        elif f.name == "metrics_checkpoints":
            inner = ", ".join(str(int(v)) for v in value)
            lines.append(f"metrics_checkpoints = [{inner}]")
        else:
            lines.append(f"{f.name} = {_toml_scalar(value)}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(config_to_toml(cfg))
