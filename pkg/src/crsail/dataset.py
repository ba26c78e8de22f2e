"""Expert dataset (multiset of state-action pairs) and input standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crsail.exceptions import ConfigurationError


@dataclass
class Standardizer:
    """Per-dimension affine map x -> (x - mean) / std, frozen after fitting."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, states: np.ndarray, std_floor: float = 1e-8) -> "Standardizer":
        states = np.asarray(states, dtype=np.float64)
        mean = states.mean(axis=0)
        std = states.std(axis=0)
        std = np.where(std < std_floor, 1.0, std)
        return cls(mean=mean, std=std)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


class ExpertDataset:
    """Growable multiset of (state, expert action) pairs.

    Duplicates are kept with multiplicity. The standardizer, when set, is the
    one fitted on the initial dataset and stays frozen as the dataset grows;
    it is shared between policy training and novelty scoring.
    """

    def __init__(self, states, actions, standardizer: Standardizer | None = None):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if len(states) != len(actions):
            raise ConfigurationError(
                f"state/action count mismatch: {len(states)} vs {len(actions)}"
            )
        self.states = states
        self.actions = actions
        self.standardizer = standardizer

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def __len__(self) -> int:
        return len(self.states)

    def append(self, states, actions) -> None:
        """Multiset union with a batch of labeled pairs (in place)."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if len(states) == 0:
            return
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ConfigurationError("appended pairs have mismatched dimensions")
        self.states = np.concatenate([self.states, states])
        self.actions = np.concatenate([self.actions, actions])

    def freeze_standardizer(self) -> Standardizer:
        """Fit the standardizer on the current contents and freeze it."""
        self.standardizer = Standardizer.fit(self.states)
        return self.standardizer

    def copy(self) -> "ExpertDataset":
        return ExpertDataset(self.states.copy(), self.actions.copy(), self.standardizer)

    def save(self, path) -> None:
        """Plain-text format: header `d action_dim count`, one pair per row.

        Values are written with 17 significant digits so the decimal
        round-trip is bit exact.
        """
        with open(path, "w") as fh:
            fh.write(f"{self.state_dim} {self.action_dim} {len(self)}\n")
            for x, u in zip(self.states, self.actions):
                row = np.concatenate([x, u])
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "ExpertDataset":
        with open(path) as fh:
            d, a, n = (int(tok) for tok in fh.readline().split())
            rows = np.loadtxt(fh, dtype=np.float64, ndmin=2)
        if rows.shape != (n, d + a):
            raise ConfigurationError(
                f"expected {n} rows of {d + a} values, got shape {rows.shape}"
            )
        return cls(rows[:, :d], rows[:, d:])
