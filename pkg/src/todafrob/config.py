"""Run configuration: exponent window, sample counts, tolerances."""

from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Window:
    """Global exponent window [lo, hi]; coefficients outside are truncated with a flag."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @classmethod
    def for_point(cls, N: int, M: int, K: int = 32) -> "Window":
        # symmetric window with headroom for the z^N monic top and the z^-M pole
        pad = max(N, M)
        return cls(-(K + pad), K + pad)


DEFAULT_TOLERANCES = {
    "metric": 1e-8,
    "algebra": 1e-9,
    "wdvv": 1e-6,
    "euler": 1e-6,
    "pencil": 1e-9,
    "reduction": 1e-10,
}


@dataclass
class RunConfig:
    """Knobs shared by the CLI and the verification suites."""

    N: int = 1
    M: int = 1
    K: int = 32
    T_max: int = 16
    n_samples: int = 512
    grid_size: int = 64
    dt: float = 1e-3
    steps: int = 1000
    seed: int = 0
    modulus_floor: float = 1e-8
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str | None = None

    def window(self) -> Window:
        return Window.for_point(self.N, self.M, self.K)

    def with_overrides(self, **kwargs) -> "RunConfig":
        tol = dict(self.tolerances)
        for key in list(kwargs):
            if key.startswith("tol_"):
                tol[key[4:]] = kwargs.pop(key)
        cfg = replace(self, **{k: v for k, v in kwargs.items() if v is not None})
        cfg.tolerances = tol
        return cfg
