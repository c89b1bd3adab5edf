"""2x2 complex linear algebra and pure-qubit state helpers.

Long measurement-operator products accumulate Gaussian readout prefactors
such as (dt/2*pi*tau)^(1/4) at every step, so the raw product leaves
double-precision range after a few thousand steps.  ``LogScaledMatrix``
splits any 2x2 complex matrix into a unit-scale matrix part and a real
log-prefactor; products renormalize the matrix part so its largest entry
stays in [0.5, 1] while the prefactor lives in log space.

Time reversal of a measurement operator is the matrix adjugate: for a 2x2
matrix the spin-flip conjugation sigma_y M^T sigma_y equals
[[m11, -m01], [-m10, m00]], and adj(M) @ M = det(M) * I.

Pure qubit states are spinors on the {|e>, |g>} basis with |e> at Bloch
+z.  Global phase is not tracked anywhere: closeness of two states is
always judged by Bloch-vector distance.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularOperatorError

__all__ = [
    "adjugate",
    "det2",
    "LogScaledMatrix",
    "PureQubitState",
]

# matrix parts are renormalized once their largest entry drifts out of this band
_SCALE_LO = 0.5
_SCALE_HI = 1.0


def det2(mat: np.ndarray) -> complex:
    """Determinant of a 2x2 matrix, directly from its entries."""
    return mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]


def adjugate(mat: np.ndarray) -> np.ndarray:
    """Adjugate of a 2x2 matrix: adj(M) @ M = det(M) * I.

    For measurement operators this is the time-reversal conjugation
    sigma_y M^T sigma_y, i.e. the (unnormalized) inverse.
    """
    return np.array(
        [[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]], dtype=complex
    )


@dataclass(frozen=True, eq=False)
class LogScaledMatrix:
    """A 2x2 complex matrix stored as exp(log_scale) * mat.

    ``mat`` is kept with its largest entry magnitude inside [0.5, 1] so
    that arbitrarily long operator products neither overflow nor
    underflow; the scalar prefactor is tracked in ``log_scale``.
    """

    mat: np.ndarray
    log_scale: float

    @classmethod
    def from_matrix(cls, mat: np.ndarray, log_scale: float = 0.0) -> LogScaledMatrix:
        """Wrap a matrix, renormalizing the scale band if needed."""
        m = np.asarray(mat, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        peak = float(np.max(np.abs(m)))
        if peak == 0.0:
            raise ValueError("cannot log-scale the zero matrix")
        while not (_SCALE_LO <= peak <= _SCALE_HI):
            # complex division can leave the peak an ulp above 1, so re-check
            m = m / peak
            log_scale = log_scale + math.log(peak)
            peak = float(np.max(np.abs(m)))
        m = m.copy()
        m.flags.writeable = False
        return cls(m, float(log_scale))

    @classmethod
    def identity(cls) -> LogScaledMatrix:
        return cls.from_matrix(np.eye(2, dtype=complex))

    def to_matrix(self) -> np.ndarray:
        """The represented matrix exp(log_scale) * mat (may overflow)."""
        return math.exp(self.log_scale) * self.mat

    def compose(self, other: LogScaledMatrix) -> LogScaledMatrix:
        """Matrix product self @ other, renormalized."""
        return LogScaledMatrix.from_matrix(
            self.mat @ other.mat, self.log_scale + other.log_scale
        )

    def dagger(self) -> LogScaledMatrix:
        return LogScaledMatrix.from_matrix(self.mat.conj().T, self.log_scale)

    def adjugate(self) -> LogScaledMatrix:
        return LogScaledMatrix.from_matrix(adjugate(self.mat), self.log_scale)

    def det_log(self) -> complex:
        """log det of the represented matrix: 2*log_scale + log det(mat).

        Raises SingularOperatorError when the matrix part is singular.
        """
        d = det2(self.mat)
        if d == 0:
            raise SingularOperatorError("determinant of matrix part is zero")
        return 2.0 * self.log_scale + cmath.log(d)


@dataclass(frozen=True)
class PureQubitState:
    """Pure qubit spinor (amp_e, amp_g) on the energy basis, |e> at +z."""

    amp_e: complex
    amp_g: complex

    def __post_init__(self):
        n = abs(self.amp_e) ** 2 + abs(self.amp_g) ** 2
        if not math.isfinite(n) or abs(n - 1.0) > 1e-8:
            raise ValueError(f"state norm^2 = {n!r}, expected 1")

    @classmethod
    def normalized(cls, amp_e: complex, amp_g: complex) -> PureQubitState:
        n = math.sqrt(abs(amp_e) ** 2 + abs(amp_g) ** 2)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite spinor")
        return cls(complex(amp_e) / n, complex(amp_g) / n)

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> PureQubitState:
        """State with the given Bloch vector; requires |(x,y,z)| = 1 within 1e-9."""
        norm = math.sqrt(x * x + y * y + z * z)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"Bloch vector norm {norm} is not 1")
        theta = math.acos(min(1.0, max(-1.0, z / norm)))
        phi = math.atan2(y, x)
        return cls.normalized(
            math.cos(theta / 2.0),
            cmath.exp(1j * phi) * math.sin(theta / 2.0),
        )

    @classmethod
    def excited(cls) -> PureQubitState:
        return cls(1.0 + 0j, 0j)

    @classmethod
    def ground(cls) -> PureQubitState:
        return cls(0j, 1.0 + 0j)

    @classmethod
    def plus_x(cls) -> PureQubitState:
        s = 1.0 / math.sqrt(2.0)
        return cls(complex(s), complex(s))

    def bloch(self) -> tuple[float, float, float]:
        """Bloch vector (x, y, z) = (<sigma_x>, <sigma_y>, <sigma_z>)."""
        w = self.amp_e.conjugate() * self.amp_g
        return (
            2.0 * w.real,
            2.0 * w.imag,
            abs(self.amp_e) ** 2 - abs(self.amp_g) ** 2,
        )

    def orthogonal(self) -> PureQubitState:
        """The unique (up to phase) state orthogonal to this one."""
        return PureQubitState.normalized(
            -self.amp_g.conjugate(), self.amp_e.conjugate()
        )

    def spinor(self) -> np.ndarray:
        return np.array([self.amp_e, self.amp_g], dtype=complex)
