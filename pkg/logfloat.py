"""
Log-precision floating point with an exact rational reference.

A LogFloat ``⟨m, e⟩`` with profile ``(p_m, p_e)`` represents
``m · 2^(e − |m| + 1)`` where ``|m|`` is the bit length of the mantissa.
Mantissas are normalized to exactly ``p_m`` bits, so the value is
``m · 2^(e − p_m + 1)`` and ``e`` is the binary exponent ``floor(log2 |value|)``.
Zero is ``⟨0, 0⟩``. Rounding is to nearest, ties to even. Overflow saturates
to the largest magnitude and sets ``saturated``; underflow flushes to zero.

The fast paths below work on scaled big integers and cast once; the
``exact_*`` helpers and ``cast_to_float`` on ``Fraction`` values are the
reference they are tested against.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Literal, Optional, Sequence

import mpmath
import numpy as np
from loguru import logger

from config import FloatProfile

ExactRational = Fraction

NonlinearityName = Literal["exp", "log", "softplus"]

DEFAULT_BOUND = 16
DEFAULT_TARGET_BITS = 30
ORACLE_DIGITS = 60

# sampling ranges of the differential suites
MAX_SUITE_TERMS = 64
MAX_MATRIX_DIM = 4
MAX_MATRIX_POWER = 32
NONLINEARITY_DOMAIN = 8.0


@dataclass(frozen=True)
class LogFloat:
    mantissa: int
    exponent: int
    profile: FloatProfile
    saturated: bool = False

    def __post_init__(self):
        if self.mantissa == 0:
            if self.exponent != 0:
                raise ValueError("Zero must be written as ⟨0, 0⟩")
            return
        if abs(self.mantissa).bit_length() != self.profile.mantissa_bits:
            raise ValueError(
                f"Mantissa {self.mantissa} is not normalized to {self.profile.mantissa_bits} bits"
            )
        if not self.profile.min_exponent <= self.exponent <= self.profile.max_exponent:
            raise ValueError(f"Exponent {self.exponent} outside the {self.profile.exponent_bits}-bit range")

    @classmethod
    def zero(cls, profile: FloatProfile) -> "LogFloat":
        return cls(0, 0, profile)

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0

    @property
    def low_exponent(self) -> int:
        """Exponent of the mantissa's least significant bit."""
        return self.exponent - self.profile.mantissa_bits + 1

    @property
    def value(self) -> Fraction:
        if self.mantissa == 0:
            return Fraction(0)
        return self.mantissa * _pow2(self.low_exponent)

    def ulp(self) -> Fraction:
        """Spacing of representable values at this exponent."""
        return _pow2(self.low_exponent)

    def __float__(self) -> float:
        return float(self.value)

    def __neg__(self) -> "LogFloat":
        return LogFloat(-self.mantissa, self.exponent, self.profile, self.saturated)

    def __add__(self, other: "LogFloat") -> "LogFloat":
        return iterated_sum([self, other])

    def __mul__(self, other: "LogFloat") -> "LogFloat":
        return iterated_product([self, other])

    def __repr__(self) -> str:
        flag = ", saturated" if self.saturated else ""
        return f"LogFloat(⟨{self.mantissa}, {self.exponent}⟩ = {float(self.value):.6g}{flag})"


def _pow2(k: int) -> Fraction:
    return Fraction(1 << k) if k >= 0 else Fraction(1, 1 << -k)


def _floor_log2(x: Fraction) -> int:
    """floor(log2 x) for x > 0."""
    e = x.numerator.bit_length() - x.denominator.bit_length()
    if x < _pow2(e):
        e -= 1
    return e


def _finish(mantissa: int, exponent: int, profile: FloatProfile) -> LogFloat:
    if exponent > profile.max_exponent:
        largest = (1 << profile.mantissa_bits) - 1
        logger.debug(f"Exponent {exponent} overflows {profile.exponent_bits} bits, saturating")
        return LogFloat(largest if mantissa > 0 else -largest, profile.max_exponent, profile, saturated=True)
    if exponent < profile.min_exponent:
        return LogFloat.zero(profile)
    return LogFloat(mantissa, exponent, profile)


def cast_to_float(x, profile: FloatProfile) -> LogFloat:
    """
    Round an exact rational to the nearest representable value, ties to even.

    Args:
        x: Fraction, int, or float (converted exactly)
        profile: Target bit widths

    Returns:
        The rounded LogFloat, saturated on overflow
    """
    x = Fraction(x)
    if x == 0:
        return LogFloat.zero(profile)

    sign = -1 if x < 0 else 1
    magnitude = abs(x)
    p = profile.mantissa_bits

    exponent = _floor_log2(magnitude)
    mantissa = round(magnitude * _pow2(p - 1 - exponent))
    if mantissa == 1 << p:
        mantissa >>= 1
        exponent += 1

    return _finish(sign * mantissa, exponent, profile)


def _from_scaled_integer(n: int, shift: int, profile: FloatProfile) -> LogFloat:
    """Cast ``n · 2^shift`` using integer shifts only."""
    if n == 0:
        return LogFloat.zero(profile)

    sign = -1 if n < 0 else 1
    a = abs(n)
    p = profile.mantissa_bits
    length = a.bit_length()
    exponent = length - 1 + shift

    if length <= p:
        return _finish(sign * (a << (p - length)), exponent, profile)

    drop = length - p
    mantissa = a >> drop
    remainder = a - (mantissa << drop)
    half = 1 << (drop - 1)
    if remainder > half or (remainder == half and mantissa & 1):
        mantissa += 1
    if mantissa >> p:
        mantissa >>= 1
        exponent += 1

    return _finish(sign * mantissa, exponent, profile)


def _from_quotient(numerator: int, denominator: int, shift: int, profile: FloatProfile) -> LogFloat:
    """Cast ``(numerator / denominator) · 2^shift`` by integer long division."""
    if denominator <= 0:
        raise ValueError("Denominator must be positive")
    if numerator == 0:
        return LogFloat.zero(profile)

    sign = -1 if numerator < 0 else 1
    a = abs(numerator)
    p = profile.mantissa_bits

    # enough quotient bits for p mantissa bits plus a rounding bit
    extra = max(0, p + 2 + denominator.bit_length() - a.bit_length())
    quotient, remainder = divmod(a << extra, denominator)

    length = quotient.bit_length()
    drop = length - p
    exponent = length - 1 + shift - extra
    mantissa = quotient >> drop
    dropped = quotient - (mantissa << drop)
    half = 1 << (drop - 1)
    if dropped > half or (dropped == half and (remainder > 0 or mantissa & 1)):
        mantissa += 1
    if mantissa >> p:
        mantissa >>= 1
        exponent += 1

    return _finish(sign * mantissa, exponent, profile)


def _shared_profile(values: Sequence[LogFloat], profile: Optional[FloatProfile]) -> FloatProfile:
    profiles = {v.profile for v in values}
    if profile is not None:
        profiles.add(profile)
    if len(profiles) != 1:
        raise ValueError(f"Operands use {len(profiles)} different profiles")
    return profiles.pop()


def _within_budget(profile: FloatProfile, *exponents: int) -> bool:
    limit = profile.intermediate_exponent_limit
    return all(abs(e) <= limit for e in exponents)


def _saturated(sign: int, profile: FloatProfile) -> LogFloat:
    largest = (1 << profile.mantissa_bits) - 1
    return LogFloat(sign * largest, profile.max_exponent, profile, saturated=True)


def exact_sum(values: Sequence[LogFloat]) -> Fraction:
    return sum((v.value for v in values), Fraction(0))


def exact_product(values: Sequence[LogFloat]) -> Fraction:
    return math.prod((v.value for v in values), start=Fraction(1))


def iterated_sum(values: Sequence[LogFloat], profile: Optional[FloatProfile] = None) -> LogFloat:
    """
    Exact sum with a single final rounding.

    Every operand is aligned to the smallest least-significant-bit exponent,
    summed as an integer and cast once.
    """
    profile = _shared_profile(values, profile)
    nonzero = [v for v in values if not v.is_zero]
    if not nonzero:
        return LogFloat.zero(profile)

    base = min(v.low_exponent for v in nonzero)
    total = sum(v.mantissa << (v.low_exponent - base) for v in nonzero)
    return _from_scaled_integer(total, base, profile)


def iterated_product(values: Sequence[LogFloat], profile: Optional[FloatProfile] = None) -> LogFloat:
    """
    Exact product with a single final rounding.

    With ``s_i`` the low-bit exponent of factor ``i`` and ``q = max(0, −min s_i)``,
    each factor is scaled to the integer ``ψ_i = φ_i · 2^q``; the big-integer
    product is divided by ``2^(q z)`` through the exponent and cast once.

    Args:
        values: Factors sharing one profile; the empty product is 1
        profile: Profile to use when ``values`` is empty

    Returns:
        Cast of the exact product
    """
    profile = _shared_profile(values, profile)
    if not values:
        return cast_to_float(1, profile)
    if any(v.is_zero for v in values):
        return LogFloat.zero(profile)

    z = len(values)
    sign = math.prod(1 if v.mantissa > 0 else -1 for v in values)

    # |product| lies in [2^low, 2^(low + z))
    low = sum(v.exponent for v in values)
    if low > profile.max_exponent:
        logger.warning(f"Product of {z} factors overflows {profile.exponent_bits} exponent bits")
        return _saturated(sign, profile)
    if low + z < profile.min_exponent:
        return LogFloat.zero(profile)

    q = max(0, -min(v.low_exponent for v in values))
    product = math.prod(v.mantissa << (v.low_exponent + q) for v in values)
    return _from_scaled_integer(product, -q * z, profile)


# Matrices are 2-D numpy object arrays of LogFloat.


def matrix_from_values(rows, profile: FloatProfile) -> np.ndarray:
    """Cast a nested sequence of numbers to a LogFloat matrix."""
    array = np.asarray(rows, dtype=object)
    if array.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got {array.ndim} dimensions")
    out = np.empty(array.shape, dtype=object)
    for index, value in np.ndenumerate(array):
        out[index] = cast_to_float(Fraction(value), profile)
    return out


def matrix_values(M: np.ndarray) -> np.ndarray:
    """Exact Fraction entries of a LogFloat matrix."""
    out = np.empty(M.shape, dtype=object)
    for index, entry in np.ndenumerate(M):
        out[index] = entry.value
    return out


def _integer_matrix_power(N: np.ndarray, z: int) -> np.ndarray:
    result = np.identity(N.shape[0], dtype=object)
    for index in np.ndindex(result.shape):
        result[index] = int(result[index])
    base = N
    while z:
        if z & 1:
            result = result.dot(base)
        base = base.dot(base)
        z >>= 1
    return result


def exact_matrix_power(M: np.ndarray, z: int) -> np.ndarray:
    """Reference power over Fractions by repeated multiplication."""
    exact = matrix_values(M)
    result = np.empty(exact.shape, dtype=object)
    for index in np.ndindex(exact.shape):
        result[index] = Fraction(int(index[0] == index[1]))
    for _ in range(z):
        result = result.dot(exact)
    return result


def matrix_power(M: np.ndarray, z: int) -> np.ndarray:
    """
    ``M^z`` with one rounding per entry.

    M is scaled to an integer matrix by ``2^q`` (``q`` from the smallest
    low-bit exponent among nonzero entries), raised to the z-th power over big
    integers by repeated squaring, and every entry is cast after dividing by
    ``2^(q z)``.

    Args:
        M: Square LogFloat matrix
        z: Exponent, z >= 0

    Returns:
        LogFloat matrix of the same shape
    """
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix_power needs a square matrix, got {M.shape}")
    if z < 0:
        raise ValueError(f"Matrix power exponent must be >= 0, got {z}")

    profile = _shared_profile(list(M.ravel()), None)
    nonzero = [entry for entry in M.ravel() if not entry.is_zero]
    q = max(0, -min((entry.low_exponent for entry in nonzero), default=0))

    N = np.empty(M.shape, dtype=object)
    for index, entry in np.ndenumerate(M):
        N[index] = 0 if entry.is_zero else entry.mantissa << (entry.low_exponent + q)

    # entries of N^z have at most z * (max entry bits + log2 d) bits
    entry_bits = max((abs(int(n)).bit_length() for n in N.ravel()), default=0)
    scaled_bits = z * (entry_bits + M.shape[0].bit_length())
    if not _within_budget(profile, scaled_bits, q * z):
        result = np.empty(M.shape, dtype=object)
        # every entry of M^z is below 2^(scaled_bits - q z)
        if scaled_bits - q * z < profile.min_exponent:
            for index in np.ndindex(M.shape):
                result[index] = LogFloat.zero(profile)
            return result
        logger.warning(f"Matrix power {z} overflows the intermediate exponent budget")
        for index in np.ndindex(M.shape):
            result[index] = _saturated(1, profile)
        return result

    powered = _integer_matrix_power(N, z)

    result = np.empty(M.shape, dtype=object)
    for index, entry in np.ndenumerate(powered):
        result[index] = _from_scaled_integer(int(entry), -q * z, profile)
    return result


def reciprocal_diagonal(M: np.ndarray) -> np.ndarray:
    """
    Replace each diagonal entry by the rounded reciprocal.

    Raises:
        ValueError: If M is not diagonal or has a zero on the diagonal
    """
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"reciprocal_diagonal needs a square matrix, got {M.shape}")

    result = M.copy()
    for (i, j), entry in np.ndenumerate(M):
        if i != j:
            if not entry.is_zero:
                raise ValueError(f"Entry ({i}, {j}) is off the diagonal and nonzero")
            continue
        if entry.is_zero:
            raise ValueError(f"Diagonal entry {i} is zero")
        # 1 / (m · 2^s) = 2^(-s) / m
        sign = 1 if entry.mantissa > 0 else -1
        result[i, j] = _from_quotient(sign, abs(entry.mantissa), -entry.low_exponent, entry.profile)
    return result


# Nonlinearities by rational Taylor series


def _round_dyadic(x: Fraction, bits: int) -> Fraction:
    return Fraction(round(x * (1 << bits)), 1 << bits)


def _taylor_exp(z: Fraction, bits: int) -> Fraction:
    """exp(z) for |z| < 1 within 2^-bits."""
    work = bits + 8
    term = Fraction(1)
    total = Fraction(1)
    k = 0
    tolerance = _pow2(-(bits + 4))

    while True:
        k += 1
        term = _round_dyadic(term * z / k, work)
        total += term
        if abs(term) < tolerance:
            return total


def _atanh_series(t: Fraction, bits: int) -> Fraction:
    """atanh(t) for 0 <= t <= 1/3 within 2^-bits."""
    work = bits + 8
    t = _round_dyadic(t, work)
    square = t * t
    power = t
    total = t
    j = 0
    tolerance = _pow2(-(bits + 4))

    while power >= tolerance:
        j += 1
        power = _round_dyadic(power * square, work)
        total += _round_dyadic(power / (2 * j + 1), work)
    return total


@lru_cache(maxsize=32)
def _ln2(bits: int) -> Fraction:
    # ln 2 = 2 atanh(1/3)
    return 2 * _atanh_series(Fraction(1, 3), bits + 1)


def _exp_fraction(r: Fraction, bits: int, bound: int) -> Fraction:
    """exp(r) for |r| < bound within 2^-bits, via exp(r / B)^B."""
    growth = math.ceil(abs(r) * 1.4427) + bound.bit_length() + 4
    base = _taylor_exp(r / bound, bits + growth)
    return base ** bound


def _ln_fraction(r: Fraction, bits: int) -> Fraction:
    """ln(r) for r > 0 within 2^-bits, via r = 2^k u with u in [1, 2)."""
    k = _floor_log2(r)
    u = r / _pow2(k)
    work = bits + 4 + abs(k).bit_length()
    return k * _ln2(work) + 2 * _atanh_series((u - 1) / (u + 1), work)


def _softplus_fraction(r: Fraction, bits: int, bound: int) -> Fraction:
    return _ln_fraction(1 + _exp_fraction(r, bits + 2, bound), bits + 2)


_EVALUATORS: dict[str, Callable[[Fraction, int, int], Fraction]] = {
    "exp": lambda r, bits, bound: _exp_fraction(r, bits, bound),
    "log": lambda r, bits, bound: _ln_fraction(r, bits),
    "softplus": _softplus_fraction,
}


def eval_nonlinearity(
    name: NonlinearityName,
    x: LogFloat,
    target_bits: int = DEFAULT_TARGET_BITS,
    bound: int = DEFAULT_BOUND,
) -> LogFloat:
    """
    Evaluate exp, log or softplus to within ``2^-target_bits`` before the final cast.

    The argument is rescaled into (−1, 1) (``exp(r) = exp(r / B)^B``, and
    ``log`` splits off a power of two) and the series is summed in exact
    rational arithmetic.

    Args:
        name: ``exp``, ``log`` or ``softplus``
        x: Argument with |x| < bound; log needs x > 0
        target_bits: Absolute accuracy before rounding
        bound: Domain bound B

    Returns:
        LogFloat in x's profile
    """
    if name not in _EVALUATORS:
        raise ValueError(f"Unknown nonlinearity: {name!r}")

    r = x.value
    if not -bound < r < bound:
        raise ValueError(f"{name} argument {float(r):.6g} outside (−{bound}, {bound})")
    if name == "log" and r <= 0:
        raise ValueError(f"log needs a positive argument, got {float(r):.6g}")

    approximation = _EVALUATORS[name](r, target_bits + 2, bound)
    return cast_to_float(approximation, x.profile)


# Differential suites


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    exact: int = 0
    within_ulp: int = 0
    worse: int = 0

    @property
    def passed(self) -> bool:
        return self.worse == 0

    def record(self, exact: bool, within: bool) -> None:
        self.cases += 1
        if exact:
            self.exact += 1
        elif within:
            self.within_ulp += 1
        else:
            self.worse += 1


def random_logfloat(
    rng: np.random.Generator,
    profile: FloatProfile,
    exponent_range: tuple[int, int] = (-4, 4),
    zero_probability: float = 0.0,
) -> LogFloat:
    if rng.random() < zero_probability:
        return LogFloat.zero(profile)
    p = profile.mantissa_bits
    mantissa = int(rng.integers(1 << (p - 1), 1 << p))
    if rng.random() < 0.5:
        mantissa = -mantissa
    exponent = int(rng.integers(exponent_range[0], exponent_range[1] + 1))
    return LogFloat(mantissa, exponent, profile)


def _compare(result: LogFloat, reference: LogFloat) -> tuple[bool, bool]:
    if result == reference:
        return True, True
    ulp = max(result.ulp(), reference.ulp())
    return False, abs(result.value - reference.value) <= ulp


def _is_nearest(x: Fraction, result: LogFloat) -> bool:
    """Check that no representable neighbor is closer, with ties on an even mantissa."""
    if result.saturated or result.is_zero:
        return True
    if (x < 0) != (result.mantissa < 0):
        return False

    p = result.profile.mantissa_bits
    magnitude, rounded = abs(x), abs(result.value)
    mantissa = abs(result.mantissa)

    # spacing below a power of two is half the spacing above it
    if magnitude < rounded and mantissa == 1 << (p - 1):
        half_gap = result.ulp() / 4
    else:
        half_gap = result.ulp() / 2

    gap = abs(magnitude - rounded)
    return gap < half_gap or (gap == half_gap and mantissa % 2 == 0)


def _mpf_to_fraction(v) -> Fraction:
    magnitude = Fraction(abs(int(v.man))) * _pow2(int(v.exp))
    return -magnitude if v < 0 else magnitude


def _oracle(name: str, r: Fraction) -> Fraction:
    with mpmath.workdps(ORACLE_DIGITS):
        arg = mpmath.mpf(r.numerator) / r.denominator
        if name == "exp":
            value = mpmath.exp(arg)
        elif name == "log":
            value = mpmath.log(arg)
        else:
            value = mpmath.log1p(mpmath.exp(arg))
        return _mpf_to_fraction(value)


def run_differential_suites(
    profile: FloatProfile,
    cases: int = 1000,
    seed: int = 0,
    target_bits: int = DEFAULT_TARGET_BITS,
    domain: float = NONLINEARITY_DOMAIN,
) -> list[SuiteResult]:
    """
    Compare every fast path against its exact reference on random inputs.

    Args:
        profile: Bit widths under test
        cases: Cases per suite
        seed: RNG seed
        target_bits: Accuracy target for the nonlinearities
        domain: Nonlinearities are sampled from (−domain, domain)

    Returns:
        One SuiteResult per suite
    """
    rng = np.random.default_rng(seed)
    results = []

    cast_suite = SuiteResult("cast")
    for _ in range(cases):
        x = Fraction(int(rng.integers(-10**9, 10**9)), int(rng.integers(1, 10**6)))
        result = cast_to_float(x, profile)
        cast_suite.record(_is_nearest(x, result), abs(x - result.value) <= result.ulp())
    results.append(cast_suite)

    sum_suite = SuiteResult("iterated_sum")
    for _ in range(cases):
        count = int(rng.integers(1, MAX_SUITE_TERMS + 1))
        values = [random_logfloat(rng, profile, (-8, 8), 0.05) for _ in range(count)]
        sum_suite.record(*_compare(iterated_sum(values), cast_to_float(exact_sum(values), profile)))
    results.append(sum_suite)

    product_suite = SuiteResult("iterated_product")
    for _ in range(cases):
        count = int(rng.integers(1, MAX_SUITE_TERMS + 1))
        values = [random_logfloat(rng, profile, (-1, 1), 0.01) for _ in range(count)]
        product_suite.record(*_compare(iterated_product(values), cast_to_float(exact_product(values), profile)))
    results.append(product_suite)

    power_suite = SuiteResult("matrix_power")
    for _ in range(cases):
        d = int(rng.integers(1, MAX_MATRIX_DIM + 1))
        z = int(rng.integers(0, MAX_MATRIX_POWER + 1))
        M = np.empty((d, d), dtype=object)
        for index in np.ndindex(M.shape):
            M[index] = random_logfloat(rng, profile, (-3, -1), 0.2)
        fast = matrix_power(M, z)
        exact = exact_matrix_power(M, z)
        outcomes = [_compare(f, cast_to_float(e, profile)) for f, e in zip(fast.ravel(), exact.ravel())]
        power_suite.record(all(o[0] for o in outcomes), all(o[1] for o in outcomes))
    results.append(power_suite)

    reciprocal_suite = SuiteResult("reciprocal_diagonal")
    for _ in range(cases):
        entry = random_logfloat(rng, profile, (-8, 8))
        M = np.array([[entry]], dtype=object)
        fast = reciprocal_diagonal(M)[0, 0]
        reciprocal_suite.record(*_compare(fast, cast_to_float(1 / entry.value, profile)))
    results.append(reciprocal_suite)

    tolerance = _pow2(-target_bits)
    for name in ("exp", "log", "softplus"):
        suite = SuiteResult(name)
        for _ in range(cases):
            low = 0.0 if name == "log" else -domain
            raw = float(rng.uniform(low, domain))
            x = cast_to_float(Fraction(raw), profile)
            if x.is_zero or (name == "log" and x.value <= 0):
                x = cast_to_float(Fraction(1, 2), profile)
            result = eval_nonlinearity(name, x, target_bits)
            reference = _oracle(name, x.value)
            exact = result == cast_to_float(reference, profile)
            suite.record(exact, abs(result.value - reference) <= tolerance + result.ulp())
        results.append(suite)

    for suite in results:
        logger.info(
            f"Suite {suite.name}: {suite.exact}/{suite.cases} exact, "
            f"{suite.within_ulp} within 1 ulp, {suite.worse} worse"
        )
    return results
