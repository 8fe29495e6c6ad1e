"""Physical conventions and numerical constants shared by every module.

All operators use hbar = 1 with quadratures q = (a + a^dag)/sqrt(2),
p = (a - a^dag)/(i sqrt(2)). The remaining sign conventions are:

* squeezing   S(xi) = exp((conj(xi) a^2 - xi a^dag^2) / 2),  xi = r e^{i phi}
* displacement D(alpha) = exp(alpha a^dag - conj(alpha) a)
* beam splitter BS(theta, phi) acting in the Heisenberg picture as
  a -> cos(theta) a + e^{-i phi} sin(theta) b,
  b -> -e^{i phi} sin(theta) a + cos(theta) b
* phase shifter R(theta) = exp(i theta n)
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Conventions:
    hbar: float = 1.0
    n_angles: int = 256
    eps_herald: float = 1e-14
    max_squeezing_db: float = 12.0

    @property
    def r_max(self) -> float:
        return db_to_r(self.max_squeezing_db)

    @property
    def angle_grid(self):
        import numpy as np

        return 2 * np.pi * np.arange(self.n_angles) / self.n_angles


CONVENTIONS = Conventions()


def db_to_r(db: float) -> float:
    """Squeezing parameter r for a squeezing level given in dB (r = dB ln10 / 20)."""
    return db * math.log(10) / 20


def r_to_db(r: float) -> float:
    return 20 * r / math.log(10)
