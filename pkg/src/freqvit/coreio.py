"""Image containers, seeded random streams and the binary file formats.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``float32``
values in ``[0, 1]`` and ``C`` in ``{1, 3}``. Everything else in the package
passes images around in this form.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, TypeVar

import numpy as np

__all__ = [
    "FormatError",
    "Prng",
    "as_image",
    "derive",
    "load_image",
    "map_ordered",
    "resolve_threads",
    "prng_gaussian",
    "prng_uniform",
    "quantize",
    "read_tensor",
    "save_image",
    "write_tensor",
]

TENSOR_MAGIC = b"FVT1"
THREADS_ENV = "FREQVIT_THREADS"

_T = TypeVar("_T")

# Stream ids pack (domain, epoch, index) into 64 bits: 8 | 24 | 32.
_EPOCH_BITS = 24
_INDEX_BITS = 32


class FormatError(ValueError):
    """Raised when an image or tensor file cannot be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def as_image(arr, copy: bool = False) -> np.ndarray:
    """Validate ``arr`` as an image tensor and return it as ``float32`` HxWxC."""
    img = np.array(arr, dtype=np.float32, copy=copy) if copy else np.asarray(arr, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an HxWxC image with C in (1, 3), got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be non-empty, got shape {img.shape}")
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid that :func:`save_image` writes."""
    q = np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5)
    return (q / 255.0).astype(np.float32)


# --------------------------------------------------------------------------- PPM


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("malformed header: unexpected end of file", start)
    return buf[start:pos], pos


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PPM (P6) or PGM (P5) file with maxval 255."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"malformed header: unknown magic {magic!r}", 0)
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        start = pos - len(tok)
        if not tok.isdigit():
            raise FormatError(f"malformed header: expected integer, got {tok!r}", start)
        fields.append((int(tok), start))
    (width, _), (height, _), (maxval, maxval_at) = fields
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", maxval_at)
    if width < 1 or height < 1:
        raise FormatError(f"malformed header: bad size {width}x{height}", fields[0][1])
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise FormatError("malformed header: missing whitespace before payload", pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    if len(buf) - pos < need:
        raise FormatError(
            f"truncated payload: expected {need} bytes, found {len(buf) - pos}", len(buf)
        )
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    return (data.reshape(height, width, channels).astype(np.float32) / np.float32(255.0))


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``img`` as P6 (3 channels) or P5 (1 channel), rounding to 8 bits."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"save_image needs 1 or 3 channels, got shape {arr.shape}")
    h, w, c = arr.shape
    q = np.floor(np.clip(arr.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    header = f"{'P6' if c == 3 else 'P5'}\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


# ------------------------------------------------------------------- TensorFile


def write_tensor(arr: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``arr`` in the FVT1 layout (little-endian float32, row-major)."""
    a = np.asarray(arr)
    if a.ndim > 255:
        raise ValueError("rank must fit in one byte")
    header = TENSOR_MAGIC + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    if len(buf) < 5:
        raise FormatError("truncated header", len(buf))
    rank = buf[4]
    end = 5 + 4 * rank
    if len(buf) < end:
        raise FormatError("truncated dims", len(buf))
    dims = struct.unpack(f"<{rank}I", buf[5:end])
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - end != 4 * count:
        raise FormatError(
            f"payload size mismatch: expected {4 * count} bytes, found {len(buf) - end}", end
        )
    return np.frombuffer(buf, dtype="<f4", count=count, offset=end).astype(np.float32).reshape(dims)


# ------------------------------------------------------------------------- PRNG


def derive(seed: int, epoch: int = 0, index: int = 0, domain: int = 0) -> "Prng":
    """Independent stream for one work item.

    The (domain, epoch, index) triple is packed bit-for-bit into the 64-bit
    stream id, so distinct triples always give distinct Philox keys.
    """
    if not 0 <= domain < 256:
        raise ValueError(f"domain out of range: {domain}")
    if not 0 <= epoch < (1 << _EPOCH_BITS):
        raise ValueError(f"epoch out of range: {epoch}")
    if not 0 <= index < (1 << _INDEX_BITS):
        raise ValueError(f"index out of range: {index}")
    stream = (domain << (_EPOCH_BITS + _INDEX_BITS)) | (epoch << _INDEX_BITS) | index
    return Prng(seed, stream)


class Prng:
    """Counter-based generator (Philox-4x64, 128-bit key = seed, stream).

    Uniform reals use the top 53 bits of each raw 64-bit word. Normals use
    Box-Muller on two consecutive uniforms, cosine branch only, so every
    normal consumes exactly two raw words.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def __repr__(self) -> str:
        return f"Prng(seed={self.seed}, stream={self.stream:#x})"

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n).astype(np.uint64)

    def uniform(self, size=None):
        """Reals in [0, 1); a Python float when ``size`` is None."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return float(u[0]) if size is None else u.reshape(size)

    def gaussian(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = self.uniform(2 * n).reshape(n, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in ``[low, high)``."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        u = self.uniform(1 if size is None else size)
        k = np.minimum(np.floor(np.asarray(u) * (high - low)).astype(np.int64), high - low - 1) + low
        return int(k.reshape(-1)[0]) if size is None else k

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by this stream."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def poisson(self, lam: np.ndarray) -> np.ndarray:
        """Poisson draws by sequential inversion, one uniform per element.

        Deterministic in the number of raw words consumed, which keeps the
        stream layout independent of the sampled values.
        """
        lam = np.asarray(lam, dtype=np.float64)
        u = self.uniform(lam.shape if lam.shape else 1).reshape(lam.shape)
        k = np.zeros(lam.shape, dtype=np.float64)
        p = np.exp(-lam)
        cdf = p.copy()
        active = u > cdf
        # Large rates are approximated by the normal tail; the tables here stay
        # well below the cutoff.
        cutoff = np.maximum(lam * 4.0 + 40.0, 60.0)
        while active.any():
            k = np.where(active, k + 1.0, k)
            p = np.where(active, p * lam / np.maximum(k, 1.0), p)
            cdf = np.where(active, cdf + p, cdf)
            active = active & (u > cdf) & (k < cutoff)
        return k


def prng_uniform(rng: Prng) -> float:
    return rng.uniform()


def prng_gaussian(rng: Prng) -> float:
    return rng.gaussian()


# ------------------------------------------------------------------ parallelism


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``$FREQVIT_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def map_ordered(fn: Callable[..., _T], items: Iterable, threads: int | None = None) -> list[_T]:
    """``[fn(x) for x in items]`` on up to ``threads`` workers.

    Results come back in input order, and each work item is expected to draw
    from its own derived stream, so the output does not depend on the
    worker count.
    """
    n = resolve_threads(threads)
    items = list(items)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
