"""CASCADE parity reconciliation and universal-hash privacy amplification.

The two parties are logical roles inside one process: Alice answers parity
queries over her (static) key, Bob drives the protocol against his error
burdened copy.  Every disclosed parity goes into a length-prefixed binary
transcript, so the leakage number used downstream is exactly what crossed
the classical channel, not an estimate.

Frame layout: u32 LE payload length, u8 message type, payload.  Types:
0x01 parity request (u8 pass, u32 lo, u32 hi, permuted coordinates),
0x02 parity reply (u8), 0x03 shuffle seed (u64), 0x04 verification
summary (u64 subset seed, u16 round count, packed parity bits).  The
confirmation stage reuses 0x01 with two reserved pass bytes: 0xFE asks
for the parity of round ``lo``'s random subset, 0xFF bisects inside the
current round's subset (lo/hi index its positions in ascending order).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .rates import binary_entropy

__all__ = [
    "ReconciliationConfig",
    "ReconciliationOutcome",
    "SecretKey",
    "cascade",
    "binary_bisect",
    "privacy_amplify",
    "iter_transcript",
]

MSG_PARITY_REQUEST = 0x01
MSG_PARITY_REPLY = 0x02
MSG_SHUFFLE_SEED = 0x03
MSG_VERIFY = 0x04

# stream index for the verification subset generator, distinct from the
# per-pass shuffle streams (which use the pass number)
_VERIFY_STREAM = 0x5EC

# reserved pass bytes for confirmation-stage frames
_ROUND_TAG = 0xFE
_REPAIR_TAG = 0xFF

# hard ceiling on confirmation rounds; the u16 round count in the 0x04
# frame caps it anyway, and a run that needs this many rounds is hopeless
_ROUND_BUDGET = 0xFFFF


@dataclass(frozen=True)
class ReconciliationConfig:
    """CASCADE knobs.

    ``k1`` defaults to the canonical ceil(0.73 / est_qber); block sizes
    double each pass and are clamped at the key length.  The passes are
    followed by a confirmation stage: random-subset parities are compared
    one at a time, a mismatching subset is bisected to a correction (with
    backtracking into the pass blocks), and the keys are declared equal
    after ``verify_bits`` consecutive agreements.  Every disclosed parity,
    confirmation rounds included, is charged to the leakage.
    """

    est_qber: float
    n_passes: int = 4
    k1: int | None = None
    shuffle_seed: int = 0
    verify_bits: int = 50

    def __post_init__(self) -> None:
        if not 0.0 < self.est_qber < 0.5:
            raise ValueError("est_qber must be in (0, 0.5)")
        if self.n_passes < 2:
            raise ValueError("n_passes must be at least 2")
        if self.k1 is not None and self.k1 < 1:
            raise ValueError("k1 must be at least 1")
        if self.shuffle_seed < 0:
            raise ValueError("shuffle_seed must be non-negative")
        if self.verify_bits < 0:
            raise ValueError("verify_bits must be non-negative")

    @property
    def initial_block(self) -> int:
        if self.k1 is not None:
            return self.k1
        return math.ceil(0.73 / self.est_qber)


@dataclass(frozen=True)
class ReconciliationOutcome:
    corrected_bob_key: np.ndarray
    leaked_bits: int
    corrections_made: int
    verified_equal: bool
    transcript: bytes


@dataclass(frozen=True)
class SecretKey:
    """Privacy-amplified key plus the inputs that fixed its length."""

    bits: np.ndarray
    length_formula_inputs: tuple[int, float, float, int, int]
    aborted: bool

    def __len__(self) -> int:
        return int(self.bits.size)


def _frame(msg_type: int, payload: bytes) -> bytes:
    return struct.pack("<IB", len(payload), msg_type) + payload


def iter_transcript(data: bytes) -> Iterator[tuple[int, bytes]]:
    """Yield (message type, payload) frames; raises on truncation."""
    off = 0
    while off < len(data):
        if off + 5 > len(data):
            raise ValueError("truncated frame header")
        length, msg_type = struct.unpack_from("<IB", data, off)
        off += 5
        if off + length > len(data):
            raise ValueError("truncated frame payload")
        yield msg_type, data[off : off + length]
        off += length


def _as_bits(key, name: str) -> np.ndarray:
    arr = np.asarray(key, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError(f"{name} must be 0/1 valued")
    return arr


def _bisect(lo: int, hi: int, parity_differs) -> tuple[int, int]:
    # halving search over an odd-parity-difference range, inclusive bounds;
    # parity_differs(lo, mid) compares the two parties' [lo, mid] parities
    queries = 0
    while lo < hi:
        mid = (lo + hi) // 2
        queries += 1
        if parity_differs(lo, mid):
            hi = mid
        else:
            lo = mid + 1
    return lo, queries


def binary_bisect(alice_block, bob_block) -> tuple[int, int]:
    """Locate one differing bit in a block pair with odd parity difference.

    Returns (position, parities disclosed).  The disclosure count is
    ceil(log2 n) for power-of-two blocks and never exceeds it otherwise.
    """
    a = _as_bits(alice_block, "alice_block")
    b = _as_bits(bob_block, "bob_block")
    if a.size != b.size:
        raise ValueError("blocks must have equal length")
    if a.size == 0:
        raise ValueError("blocks must be non-empty")
    if int(np.bitwise_xor.reduce(a ^ b)) != 1:
        raise ValueError("blocks must differ in an odd number of positions")

    def differs(lo: int, mid: int) -> bool:
        pa = int(np.bitwise_xor.reduce(a[lo : mid + 1]))
        pb = int(np.bitwise_xor.reduce(b[lo : mid + 1]))
        return pa != pb

    return _bisect(0, a.size - 1, differs)


def cascade(alice_key, bob_key, cfg: ReconciliationConfig) -> ReconciliationOutcome:
    """Run CASCADE, returning Bob's corrected key and the exact leakage.

    Pass 1 partitions the key in natural order; later passes partition a
    seeded shuffle with doubled block size.  Every odd-parity block is
    bisected to a correction, and each correction re-exposes the earlier
    blocks containing that position, which are queued and fixed until no
    known parity mismatch remains.  A confirmation stage then compares
    random-subset parities one at a time; a mismatch is bisected to its
    bit (doubled blocks can hide an even number of errors from every
    pass, so this is what makes small hard patterns correctable), and
    ``verify_bits`` consecutive agreements end the protocol.
    """
    alice = _as_bits(alice_key, "alice_key")
    bob = _as_bits(bob_key, "bob_key").copy()
    n = alice.size
    if bob.size != n:
        raise ValueError("keys must have equal length")
    if n < 8:
        raise ValueError("keys must hold at least 8 bits")

    transcript = bytearray()
    transcript += _frame(MSG_SHUFFLE_SEED, struct.pack("<Q", cfg.shuffle_seed))

    perms: list[np.ndarray] = []
    inv_perms: list[np.ndarray] = []
    alice_prefix: list[np.ndarray] = []
    block_size: list[int] = []
    for p in range(cfg.n_passes):
        if p == 0:
            perm = np.arange(n)
        else:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.shuffle_seed, p]))
            perm = rng.permutation(n)
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        prefix = np.zeros(n + 1, dtype=np.uint8)
        prefix[1:] = np.cumsum(alice[perm], dtype=np.int64) & 1
        perms.append(perm)
        inv_perms.append(inv)
        alice_prefix.append(prefix)
        block_size.append(min(n, cfg.initial_block * (1 << p)))

    parity_replies = 0

    def alice_parity(p: int, lo: int, hi: int) -> int:
        nonlocal parity_replies
        transcript.extend(_frame(MSG_PARITY_REQUEST, struct.pack("<BII", p, lo, hi)))
        parity = int(alice_prefix[p][hi + 1] ^ alice_prefix[p][lo])
        transcript.extend(_frame(MSG_PARITY_REPLY, bytes([parity])))
        parity_replies += 1
        return parity

    def bob_parity(p: int, lo: int, hi: int) -> int:
        return int(np.bitwise_xor.reduce(bob[perms[p][lo : hi + 1]]))

    def block_bounds(p: int, block_id: int) -> tuple[int, int]:
        k = block_size[p]
        lo = block_id * k
        return lo, min(lo + k, n) - 1

    corrections = 0
    pending: set[tuple[int, int]] = set()

    def flip(g: int, announced: int) -> None:
        nonlocal corrections
        bob[g] ^= 1
        corrections += 1
        # the flip toggles the parity difference of the containing block
        # in every pass whose parities have been exchanged so far,
        # including any block just bisected (now even again)
        for r in range(announced):
            key = (r, int(inv_perms[r][g]) // block_size[r])
            pending.symmetric_difference_update({key})

    def drain(announced: int) -> None:
        while pending:
            # smallest pass first: cheapest blocks, fastest convergence
            q, block_id = min(pending)
            lo, hi = block_bounds(q, block_id)
            pos, _ = _bisect(
                lo, hi, lambda a, b: alice_parity(q, a, b) != bob_parity(q, a, b)
            )
            flip(int(perms[q][pos]), announced)

    for p in range(cfg.n_passes):
        k = block_size[p]
        for block_id in range((n + k - 1) // k):
            lo, hi = block_bounds(p, block_id)
            if alice_parity(p, lo, hi) != bob_parity(p, lo, hi):
                pending.add((p, block_id))
        drain(p + 1)

    verified = True
    if cfg.verify_bits > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.shuffle_seed, _VERIFY_STREAM])
        )
        round_parities: list[int] = []
        agree_streak = 0
        while agree_streak < cfg.verify_bits:
            if len(round_parities) >= _ROUND_BUDGET:
                verified = False
                break
            subset = rng.random(n) < 0.5
            positions = np.flatnonzero(subset)
            transcript.extend(
                _frame(
                    MSG_PARITY_REQUEST,
                    struct.pack("<BII", _ROUND_TAG, len(round_parities), 0),
                )
            )
            a_par = int(np.bitwise_xor.reduce(alice[positions])) if positions.size else 0
            transcript.extend(_frame(MSG_PARITY_REPLY, bytes([a_par])))
            parity_replies += 1
            round_parities.append(a_par)
            b_par = int(np.bitwise_xor.reduce(bob[positions])) if positions.size else 0
            if a_par == b_par:
                agree_streak += 1
                continue
            agree_streak = 0
            # the subset hides an odd number of differences; bisect it in
            # ascending-position order, then backtrack the pass blocks
            a_prefix = np.zeros(positions.size + 1, dtype=np.uint8)
            a_prefix[1:] = np.cumsum(alice[positions], dtype=np.int64) & 1

            def subset_differs(lo: int, mid: int) -> bool:
                nonlocal parity_replies
                transcript.extend(
                    _frame(
                        MSG_PARITY_REQUEST, struct.pack("<BII", _REPAIR_TAG, lo, mid)
                    )
                )
                pa = int(a_prefix[mid + 1] ^ a_prefix[lo])
                transcript.extend(_frame(MSG_PARITY_REPLY, bytes([pa])))
                parity_replies += 1
                pb = int(np.bitwise_xor.reduce(bob[positions[lo : mid + 1]]))
                return pa != pb

            idx, _ = _bisect(0, positions.size - 1, subset_differs)
            flip(int(positions[idx]), cfg.n_passes)
            drain(cfg.n_passes)
        payload = struct.pack("<QH", cfg.shuffle_seed, len(round_parities))
        payload += np.packbits(np.asarray(round_parities, dtype=np.uint8)).tobytes()
        transcript.extend(_frame(MSG_VERIFY, payload))

    return ReconciliationOutcome(
        corrected_bob_key=bob,
        leaked_bits=parity_replies,
        corrections_made=corrections,
        verified_equal=verified,
        transcript=bytes(transcript),
    )


def privacy_amplify(
    key,
    leaked_bits: int,
    delta: float,
    qber: float,
    safety_margin: int = 30,
    hash_seed: int = 0,
) -> SecretKey:
    """Compress the reconciled key with a seeded Toeplitz hash over GF(2).

    Output length: floor(n (1 - delta) (1 - h2(qber / (1 - delta)))) minus
    the reconciliation leakage and a finite-size safety margin, floored at
    zero.  A zero-length result flags the insecure regime.
    """
    bits = _as_bits(key, "key")
    n = bits.size
    if n < 1:
        raise ValueError("key must hold at least 1 bit")
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must be in [0, 1)")
    if not 0.0 <= qber < 0.5:
        raise ValueError("qber must be in [0, 0.5)")
    if leaked_bits < 0:
        raise ValueError("leaked_bits must be non-negative")
    if safety_margin < 0:
        raise ValueError("safety_margin must be non-negative")
    e_phase = qber / (1.0 - delta)
    if e_phase >= 1.0:
        raise ValueError("qber / (1 - delta) must stay below 1")

    inputs = (n, delta, qber, leaked_bits, safety_margin)
    secure = n * (1.0 - delta) * (1.0 - binary_entropy(e_phase))
    m = max(0, math.floor(secure) - leaked_bits - safety_margin)
    if m == 0:
        return SecretKey(np.zeros(0, dtype=np.uint8), inputs, aborted=True)

    rng = np.random.default_rng(np.random.SeedSequence([hash_seed]))
    diagonals = rng.integers(0, 2, n + m - 1, dtype=np.int64)
    # Toeplitz matrix T[i, j] = diagonals[i - j + n - 1]; row i of T @ key is
    # the full convolution at lag i + n - 1
    out = np.convolve(diagonals, bits.astype(np.int64))[n - 1 : n - 1 + m] & 1
    return SecretKey(out.astype(np.uint8), inputs, aborted=False)
