"""On-disk cache of moment tables keyed by (λ, method, samples, seed)."""

import logging
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Iterator, NamedTuple, Optional, Union

import numpy as np

from ..errors import CacheError, CacheFormatError, CacheVersionError
from ..utils.result_formatter import FLOAT_FORMAT, atomic_write_bytes, atomic_write_text
from .order_stats import MomentMethod, MomentTable

logger = logging.getLogger(__name__)

MAGIC = b"QGMT"
FORMAT_VERSION = 1
LOCK_TIMEOUT = 60.0
DEFAULT_CACHE_DIR = ".qgain_cache"

_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("method", "<u2"),
    ("lam", "<u4"),
    ("has_e2", "<u4"),
    ("samples", "<u8"),
    ("seed", "<i8"),
    ("std_err", "<f8"),
])
_METHOD_CODES: Dict[MomentMethod, int] = {
    MomentMethod.QUADRATURE: 0,
    MomentMethod.MONTE_CARLO: 1,
    MomentMethod.BLOM: 2,
}
_CODE_METHODS = {code: method for method, code in _METHOD_CODES.items()}


class MomentKey(NamedTuple):
    lam: int
    method: MomentMethod
    samples: int = 0
    seed: int = -1

    @classmethod
    def for_table(cls, table: MomentTable) -> "MomentKey":
        return cls(
            table.lam,
            MomentMethod(table.method),
            int(table.mc_samples or 0),
            -1 if table.seed is None else int(table.seed),
        )

    def filename(self, suffix: str = ".qgmt") -> str:
        return f"lambda{self.lam}_{self.method.value}_n{self.samples}_s{self.seed}{suffix}"


def resolve_cache_dir(explicit: Optional[Union[str, Path]] = None) -> Path:
    """--cache-dir, then QGAIN_CACHE_DIR, then ./.qgain_cache."""
    if explicit:
        return Path(explicit)
    env = os.getenv("QGAIN_CACHE_DIR")
    return Path(env) if env else Path(DEFAULT_CACHE_DIR)


class MomentCache:
    """Binary and text persistence for MomentTable, one file per key."""

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        """
        Initialize the cache.

        Args:
            cache_dir: Directory for cache files; resolved with resolve_cache_dir
        """
        self.cache_dir = resolve_cache_dir(cache_dir)

    def path_for(self, key: MomentKey) -> Path:
        return self.cache_dir / key.filename()

    # -- binary ---------------------------------------------------------------

    @staticmethod
    def encode(table: MomentTable) -> bytes:
        header = np.zeros(1, dtype=_HEADER)
        header["magic"] = MAGIC
        header["version"] = FORMAT_VERSION
        header["method"] = _METHOD_CODES[MomentMethod(table.method)]
        header["lam"] = table.lam
        header["has_e2"] = int(table.has_e2)
        header["samples"] = int(table.mc_samples or 0)
        header["seed"] = -1 if table.seed is None else int(table.seed)
        header["std_err"] = np.nan if table.mc_std_err is None else float(table.mc_std_err)

        parts = [header.tobytes(), np.asarray(table.e1, dtype="<f8").tobytes()]
        if table.has_e2:
            parts.append(np.asarray(table.e2, dtype="<f8").tobytes())
        return b"".join(parts)

    @staticmethod
    def decode(data: bytes, source: str = "") -> MomentTable:
        """
        Parse a binary cache payload.

        Raises:
            CacheFormatError: Bad magic, unknown method or truncated payload
            CacheVersionError: Written by another format version
        """
        if len(data) < _HEADER.itemsize:
            raise CacheFormatError(f"cache file {source} is shorter than its header")
        header = np.frombuffer(data[:_HEADER.itemsize], dtype=_HEADER)[0]
        if bytes(header["magic"]) != MAGIC:
            raise CacheFormatError(f"cache file {source} has bad magic {bytes(header['magic'])!r}")
        if int(header["version"]) != FORMAT_VERSION:
            raise CacheVersionError(int(header["version"]), FORMAT_VERSION, source)
        code = int(header["method"])
        if code not in _CODE_METHODS:
            raise CacheFormatError(f"cache file {source} has unknown method code {code}")

        lam = int(header["lam"])
        has_e2 = bool(header["has_e2"])
        expected = _HEADER.itemsize + 8 * lam * (1 + (lam if has_e2 else 0))
        if len(data) != expected:
            raise CacheFormatError(f"cache file {source} has {len(data)} bytes, expected {expected}")

        payload = np.frombuffer(data[_HEADER.itemsize:], dtype="<f8").astype(float)
        e1 = payload[:lam].copy()
        e2 = payload[lam:].reshape(lam, lam).copy() if has_e2 else None
        samples = int(header["samples"])
        seed = int(header["seed"])
        std_err = float(header["std_err"])
        return MomentTable(
            lam=lam,
            e1=e1,
            e2=e2,
            method=_CODE_METHODS[code],
            mc_samples=samples or None,
            mc_std_err=None if np.isnan(std_err) else std_err,
            seed=None if seed < 0 else seed,
        )

    def write(self, table: MomentTable, path: Optional[Union[str, Path]] = None) -> Path:
        path = Path(path) if path else self.path_for(MomentKey.for_table(table))
        atomic_write_bytes(path, self.encode(table))
        logger.debug(f"wrote moment table λ={table.lam} ({table.method}) to {path}")
        return path

    def read(self, path: Union[str, Path]) -> MomentTable:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CacheError(f"cannot read cache file {path}: {e}") from e
        return self.decode(data, str(path))

    # -- text export ------------------------------------------------------------

    @staticmethod
    def write_text(table: MomentTable, path: Union[str, Path]) -> Path:
        """CSV export: '#' metadata lines, one row of e1, then λ rows of e2."""
        fields = {
            "magic": MAGIC.decode(),
            "version": FORMAT_VERSION,
            "lambda": table.lam,
            "method": MomentMethod(table.method).value,
            "has_e2": int(table.has_e2),
            "samples": int(table.mc_samples or 0),
            "seed": -1 if table.seed is None else int(table.seed),
            "std_err": "nan" if table.mc_std_err is None else repr(float(table.mc_std_err)),
        }
        lines = [f"# {name}: {value}" for name, value in fields.items()]
        rows = [np.asarray(table.e1, dtype=float)]
        if table.has_e2:
            rows.extend(np.asarray(table.e2, dtype=float))
        lines.extend(",".join(FLOAT_FORMAT % v for v in row) for row in rows)
        return atomic_write_text(path, "\n".join(lines) + "\n")

    @staticmethod
    def read_text(path: Union[str, Path]) -> MomentTable:
        path = Path(path)
        meta: Dict[str, str] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                name, _, value = line[1:].partition(":")
                meta[name.strip()] = value.strip()

        if meta.get("magic") != MAGIC.decode():
            raise CacheFormatError(f"text export {path} lacks the {MAGIC.decode()} header")
        if int(meta.get("version", -1)) != FORMAT_VERSION:
            raise CacheVersionError(int(meta.get("version", -1)), FORMAT_VERSION, str(path))

        lam = int(meta["lambda"])
        has_e2 = bool(int(meta["has_e2"]))
        values = np.loadtxt(path, comments="#", delimiter=",", ndmin=2)
        if values.shape != ((1 + lam) if has_e2 else 1, lam):
            raise CacheFormatError(f"text export {path} has shape {values.shape} for λ={lam}")
        samples, seed = int(meta["samples"]), int(meta["seed"])
        std_err = float(meta["std_err"])
        return MomentTable(
            lam=lam,
            e1=values[0].copy(),
            e2=values[1:].copy() if has_e2 else None,
            method=MomentMethod(meta["method"]),
            mc_samples=samples or None,
            mc_std_err=None if np.isnan(std_err) else std_err,
            seed=None if seed < 0 else seed,
        )

    # -- keyed access -----------------------------------------------------------

    @contextmanager
    def lock(self, key: MomentKey, timeout: float = LOCK_TIMEOUT) -> Iterator[None]:
        """Exclusive per-key lock file; other keys are never touched."""
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        lock_path = self.path_for(key).with_suffix(".lock")
        deadline = time.monotonic() + timeout
        while True:
            try:
                fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                break
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise CacheError(f"timed out waiting for cache lock {lock_path}")
                time.sleep(0.05)
        try:
            os.write(fd, str(os.getpid()).encode())
            yield
        finally:
            os.close(fd)
            os.unlink(lock_path)

    def lookup(self, key: MomentKey) -> Optional[MomentTable]:
        """Cached table for ``key`` or None; corrupt or foreign-version files raise."""
        path = self.path_for(key)
        if not path.exists():
            return None
        table = self.read(path)
        logger.debug(f"cache hit for {key}")
        return table

    def store(self, table: MomentTable) -> Path:
        key = MomentKey.for_table(table)
        with self.lock(key):
            return self.write(table, self.path_for(key))

    def get_or_compute(self, key: MomentKey, compute: Callable[[], MomentTable]) -> MomentTable:
        """Return the cached table, computing and storing it under the key lock on a miss."""
        table = self.lookup(key)
        if table is not None:
            return table
        with self.lock(key):
            table = self.lookup(key)
            if table is None:
                logger.info(f"cache miss for λ={key.lam} ({key.method.value}); computing")
                table = compute()
                self.write(table, self.path_for(key))
        return table


def cache_roundtrip(table: MomentTable, cache: MomentCache, text: bool = False) -> MomentTable:
    """Write ``table`` into ``cache`` and read it back (binary by default, CSV export with text=True)."""
    key = MomentKey.for_table(table)
    if text:
        path = cache.cache_dir / key.filename(".csv")
        cache.write_text(table, path)
        return cache.read_text(path)
    return cache.read(cache.store(table))
