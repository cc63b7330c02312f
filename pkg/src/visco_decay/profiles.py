"""Analytic descriptors for initial data u0, u1 (space) and prehistory f0 (time)."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError

SHAPES = ("zero", "constant", "sine", "sinusoid", "polynomial")


@dataclass(frozen=True)
class Profile:
    """A scalar function of one variable given by a named shape.

    ``sine``      amplitude * sin(wavenumber * pi * x)      (spatial data)
    ``sinusoid``  amplitude * sin(omega * s + phase)        (prehistory)
    ``polynomial`` sum_i coefficients[i] * x**i
    ``constant``  value
    """

    shape: str = "zero"
    amplitude: float = 0.0
    wavenumber: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    value: float = 0.0
    coefficients: tuple = ()

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown profile shape {self.shape!r}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.shape == "zero":
            out = np.zeros_like(x)
        elif self.shape == "constant":
            out = np.full_like(x, self.value)
        elif self.shape == "sine":
            out = self.amplitude * np.sin(self.wavenumber * math.pi * x)
        elif self.shape == "polynomial":
            out = np.polynomial.polynomial.polyval(x, self.coefficients or (0.0,))
        else:
            out = self.amplitude * np.sin(self.omega * x + self.phase)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor):
        return Profile(self.shape, self.amplitude * factor, self.wavenumber,
                       self.omega, self.phase, self.value * factor,
                       tuple(c * factor for c in self.coefficients))

    @classmethod
    def from_dict(cls, d, where="profile"):
        if d is None:
            return cls()
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
        d = dict(d)
        shape = d.pop("shape", "zero")
        allowed = {"amplitude", "wavenumber", "omega", "phase", "value", "coefficients"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        coeffs = d.pop("coefficients", ())
        try:
            return cls(shape=shape, coefficients=tuple(coeffs),
                       **{k: float(v) for k, v in d.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def to_dict(self):
        out = {"shape": self.shape}
        if self.shape == "constant":
            out["value"] = self.value
        elif self.shape == "sine":
            out.update(amplitude=self.amplitude, wavenumber=self.wavenumber)
        elif self.shape == "sinusoid":
            out.update(amplitude=self.amplitude, omega=self.omega, phase=self.phase)
        elif self.shape == "polynomial":
            out["coefficients"] = list(self.coefficients)
        return out
