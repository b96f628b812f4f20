"""Registry of the unnamed constants that enter the bound envelopes.

Every constant defaults to 1.0.  Values can be overridden from a config
file or replaced by fitted values; envelopes are always evaluated as
``constant * structure`` so that structural checks stay constant-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

DEFAULT_NAMES = (
    # tail bound, one pair per number of external vertices m
    "tail.outer.0", "tail.inner.0",
    "tail.outer.1", "tail.inner.1",
    "tail.outer.2", "tail.inner.2",
    "tail.outer.3", "tail.inner.3",
    # convergence criterion exp(C L^d rho0 I_g)
    "convergence",
    # error envelopes
    "eps_Z", "eps_2", "eps_3",
    "xi_ge3", "xi_eq1", "xi_i", "xi_ii", "xi_iii",
    "two_body",
    # regime machinery
    "validity", "diluteness", "threshold", "b_cap",
    "delta_high", "delta_low", "delta_final",
    # density of the trial state and the density bound
    "density.quadratic", "density.loop", "density.tree",
    "density.shift",
)


@dataclass
class ConstantRegistry:
    values: dict = field(default_factory=dict)
    fitted: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.values.get(name, 1.0))

    def get(self, name: str, default: float = 1.0) -> float:
        return float(self.values.get(name, default))

    def set(self, name: str, value: float, fitted: bool = False) -> None:
        if not value > 0:
            raise ValueError(f"registry constant {name!r} must be positive, got {value}")
        self.values[name] = float(value)
        if fitted:
            self.fitted[name] = float(value)

    def update(self, overrides: Mapping[str, float]) -> "ConstantRegistry":
        for k, v in overrides.items():
            self.set(k, float(v))
        return self

    def copy(self) -> "ConstantRegistry":
        return ConstantRegistry(dict(self.values), dict(self.fitted))

    def report(self) -> list[tuple[str, float, bool]]:
        names = list(DEFAULT_NAMES) + sorted(set(self.values) - set(DEFAULT_NAMES))
        return [(n, self[n], n in self.fitted) for n in names]


def default_registry() -> ConstantRegistry:
    return ConstantRegistry()
