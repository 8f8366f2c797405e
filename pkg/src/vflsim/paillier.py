"""Paillier additive homomorphic encryption over fixed-point reals.

Plaintexts are integers in ``[0, n)``.  Signed reals are encoded as
``round(x * 2**frac_bits)`` and negative encodings wrap modulo ``n``
(values ``>= n/2`` decode as negative).  A plaintext-by-ciphertext product
of two encodings carries scale ``2**(2*frac_bits)``; decoders take the scale
explicitly.

:class:`MockPaillier` mirrors the public API with plaintext payloads and the
same fixed-point quantization.  It exists for fast experiment runs; nothing
about it is secret.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass

import gmpy2
import numpy as np

from .errors import FixedPointOverflowError, KeyMismatchError, PlaintextRangeError

DEFAULT_FRAC_BITS = 32
CRYPTO_MODULUS_BITS = 2048
CI_MODULUS_BITS = 512
MIN_CRYPTO_BITS = 512
MIN_TEST_BITS = 64


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def key_id(self) -> str:
        return hashlib.sha256(self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")).hexdigest()[:16]


@dataclass(frozen=True)
class PrivateKey:
    public: PublicKey
    lam: int
    mu: int

    @property
    def key_id(self) -> str:
        return self.public.key_id


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    private: PrivateKey
    modulus_bits: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_id: str

    def serialize(self) -> str:
        width = max(1, (self.value.bit_length() + 7) // 8)
        return f"{self.key_id}:{self.value.to_bytes(width, 'big').hex()}"

    @classmethod
    def deserialize(cls, text: str) -> "Ciphertext":
        key_id, hexval = text.split(":", 1)
        return cls(int.from_bytes(bytes.fromhex(hexval), "big"), key_id)


def _prime(bits: int, rng) -> int:
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits:
            return p


def keygen(modulus_bits: int = CI_MODULUS_BITS, seed: int | None = None) -> KeyPair:
    """Generate a key pair with ``n = p*q`` of exactly ``modulus_bits`` bits.

    Passing ``seed`` selects test mode: primes come from a seeded PRNG, so the
    key is reproducible (and therefore not secret).  Test mode accepts moduli
    down to 64 bits; otherwise at least 512 bits are required.
    """
    floor = MIN_TEST_BITS if seed is not None else MIN_CRYPTO_BITS
    if modulus_bits < floor:
        raise ValueError(f"modulus_bits must be >= {floor}, got {modulus_bits}")
    rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
    half = modulus_bits // 2
    for _ in range(1000):
        p = _prime(half, rng)
        q = _prime(modulus_bits - half, rng)
        n = p * q
        if p != q and n.bit_length() == modulus_bits:
            break
    else:
        raise RuntimeError("prime generation exhausted its retries")
    lam = (p - 1) * (q - 1)
    mu = int(gmpy2.invert(lam, n))
    pub = PublicKey(n, n + 1)
    return KeyPair(pub, PrivateKey(pub, lam, mu), modulus_bits)


def _check_key(key_id: str, c: Ciphertext) -> None:
    if c.key_id != key_id:
        raise KeyMismatchError(f"ciphertext under key {c.key_id}, expected {key_id}")


def _random_r(pk: PublicKey, rng) -> int:
    while True:
        r = rng.randrange(1, pk.n)
        if gmpy2.gcd(r, pk.n) == 1:
            return r


_sysrand = secrets.SystemRandom()


def raw_encrypt(pk: PublicKey, m: int, rng=None) -> int:
    # g = n + 1, so g^m = 1 + m*n (mod n^2)
    nsq = pk.nsquare
    r = _random_r(pk, rng or _sysrand)
    return int((1 + m * pk.n) % nsq * gmpy2.powmod(r, pk.n, nsq) % nsq)


def encrypt(pk: PublicKey, m: int, rng=None) -> Ciphertext:
    m = int(m)
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext must lie in [0, n), got {m}")
    return Ciphertext(raw_encrypt(pk, m, rng), pk.key_id)


def raw_decrypt(sk: PrivateKey, value: int) -> int:
    n = sk.public.n
    u = gmpy2.powmod(value, sk.lam, sk.public.nsquare)
    return int((u - 1) // n * sk.mu % n)


def decrypt(sk: PrivateKey, c: Ciphertext) -> int:
    _check_key(sk.key_id, c)
    return raw_decrypt(sk, c.value)


def add(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _check_key(pk.key_id, c1)
    _check_key(pk.key_id, c2)
    return Ciphertext(c1.value * c2.value % pk.nsquare, pk.key_id)


def scalar_mul(pk: PublicKey, k: int, c: Ciphertext) -> Ciphertext:
    """E(a)^k = E(k*a mod n).  Negative ``k`` works via the ciphertext inverse."""
    _check_key(pk.key_id, c)
    nsq = pk.nsquare
    k = int(k)
    if k < 0:
        return Ciphertext(int(gmpy2.powmod(gmpy2.invert(c.value, nsq), -k, nsq)), pk.key_id)
    return Ciphertext(int(gmpy2.powmod(c.value, k, nsq)), pk.key_id)


# -- fixed point ------------------------------------------------------------


def encode_fixed(x: float, frac_bits: int = DEFAULT_FRAC_BITS, n: int | None = None) -> int:
    """Signed fixed-point integer for ``x``; wrapped into ``[0, n)`` when ``n`` is given.

    With a modulus, ``|x|`` must stay below ``n / 2**(frac_bits + 2)`` so one
    multiply-accumulate chain fits without wrapping.
    """
    x = float(x)
    if not np.isfinite(x):
        raise FixedPointOverflowError(f"cannot encode non-finite value {x}")
    raw = int(round(x * (1 << frac_bits)))
    if n is None:
        return raw
    if abs(x) * (1 << (frac_bits + 2)) >= n:
        raise FixedPointOverflowError(f"|{x}| exceeds the headroom of a {n.bit_length()}-bit modulus")
    return raw % n


def decode_fixed(raw: int, frac_bits: int = DEFAULT_FRAC_BITS, n: int | None = None) -> float:
    """Inverse of :func:`encode_fixed`.  ``frac_bits`` is the total scale, e.g.
    ``2 * frac_bits`` after one plaintext-by-ciphertext product."""
    raw = int(raw)
    if n is not None:
        raw %= n
        if raw >= n // 2:
            raw -= n
    return raw / (1 << frac_bits)


def quantize(x: np.ndarray, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    """Round to the fixed-point grid without leaving float arithmetic."""
    scale = float(1 << frac_bits)
    return np.round(np.asarray(x, dtype=float) * scale) / scale


# -- vector helpers used by the protocol --------------------------------------


@dataclass
class EncryptedArray:
    """Ciphertext values (Python ints) in an object array, plus their scale."""

    values: np.ndarray
    key_id: str
    frac_bits: int
    mock: bool = False

    @property
    def shape(self):
        return self.values.shape

    def ciphertexts(self) -> list[Ciphertext]:
        return [Ciphertext(int(v), self.key_id) for v in self.values.ravel()]

    def serialize(self) -> list[str]:
        if self.mock:
            return [f"{self.key_id}:{float(v).hex()}" for v in self.values.ravel()]
        return [c.serialize() for c in self.ciphertexts()]

    def nbytes(self) -> int:
        if self.mock:
            return 8 * self.values.size
        return sum((int(v).bit_length() + 7) // 8 for v in self.values.ravel())


class Paillier:
    """Real Paillier backend: the party that owns this object holds the private key."""

    mock = False

    def __init__(self, modulus_bits: int = CI_MODULUS_BITS, frac_bits: int = DEFAULT_FRAC_BITS, seed=None):
        self.keys = keygen(modulus_bits, seed)
        self.frac_bits = frac_bits
        self._rng = random.Random(seed) if seed is not None else _sysrand

    @property
    def public_key(self) -> PublicKey:
        return self.keys.public

    def encrypt_array(self, x: np.ndarray) -> EncryptedArray:
        pk = self.keys.public
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape, dtype=object)
        for idx in np.ndindex(x.shape):
            out[idx] = raw_encrypt(pk, encode_fixed(x[idx], self.frac_bits, pk.n), self._rng)
        return EncryptedArray(out, pk.key_id, self.frac_bits)

    def decrypt_array(self, enc: EncryptedArray) -> np.ndarray:
        if enc.key_id != self.keys.public.key_id:
            raise KeyMismatchError(f"array encrypted under {enc.key_id}, this key is {self.keys.public.key_id}")
        sk, n = self.keys.private, self.keys.public.n
        out = np.empty(enc.values.shape, dtype=float)
        for idx in np.ndindex(out.shape):
            out[idx] = decode_fixed(raw_decrypt(sk, enc.values[idx]), enc.frac_bits, n)
        return out


@dataclass(frozen=True)
class MockPublicKey:
    key_id: str


class MockPaillier:
    """Same message flow and quantization as :class:`Paillier`, plaintext payloads."""

    mock = True

    def __init__(self, frac_bits: int = DEFAULT_FRAC_BITS, seed=None):
        self.frac_bits = frac_bits
        self.public_key = MockPublicKey(f"mock-{seed if seed is not None else 0}")
        self._key_id = self.public_key.key_id

    def encrypt_array(self, x: np.ndarray) -> EncryptedArray:
        return EncryptedArray(quantize(x, self.frac_bits), self._key_id, self.frac_bits, mock=True)

    def decrypt_array(self, enc: EncryptedArray) -> np.ndarray:
        if enc.key_id != self._key_id:
            raise KeyMismatchError(f"array encrypted under {enc.key_id}, this key is {self._key_id}")
        return quantize(np.asarray(enc.values, dtype=float), enc.frac_bits)


def make_backend(mode: str, modulus_bits: int = CI_MODULUS_BITS, frac_bits: int = DEFAULT_FRAC_BITS, seed=None):
    if mode == "mock":
        return MockPaillier(frac_bits, seed)
    if mode == "real":
        return Paillier(modulus_bits, frac_bits, seed)
    raise ValueError(f"unknown HE mode {mode!r}")
