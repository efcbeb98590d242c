"""Network configuration and the combinatorial bookkeeping everything else shares.

The conventions fixed here are used throughout the package:

* users, streams, files, and subfile parts are 1-indexed;
* every enumeration of r-subsets of ``{1, .., n}`` is lexicographic over
  sorted tuples, and ranks are 0-based positions in that order;
* a physical stream is the pair ``(user, stream)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

from .errors import (
    ConfigError,
    ConfigFileError,
    InsufficientUsers,
    MultiplexingExceedsAntennas,
    NonIntegerEta,
    NonIntegerT,
    OutOfRange,
)

__all__ = [
    "NetworkConfig",
    "validate_config",
    "parse_config_text",
    "parse_config_file",
    "apply_overrides",
    "CONFIG_KEYS",
    "StreamId",
    "SubfileLabel",
    "SubpacketId",
    "CodewordId",
    "enumerate_subsets",
    "subset_rank",
    "subset_unrank",
]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

#: Recognized keys of a configuration file, in canonical order.
CONFIG_KEYS = (
    "users",
    "caching_gain",
    "tx_multiplexing",
    "rx_multiplexing",
    "library_size",
    "tx_antennas",
    "rx_antennas",
)

_REQUIRED_KEYS = ("users", "caching_gain", "tx_multiplexing", "rx_multiplexing")


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters of one cache-aided downlink.

    All fields are integers; ``cache_size`` is derived and may be fractional.
    """

    num_users: int           # K, number of cache-equipped receivers
    caching_gain: int        # t = K M / N, global caching gain
    tx_multiplexing: int     # L, streams the transmitter multiplexes per user group
    rx_multiplexing: int     # G, streams each receiver resolves
    library_size: int        # N, number of unit-size files
    tx_antennas: int         # transmit antennas, >= L
    rx_antennas: int         # receive antennas per user, >= G

    @property
    def eta(self) -> int:
        """Stretch factor L / G (validated to be an integer)."""
        return self.tx_multiplexing // self.rx_multiplexing

    @property
    def cache_size(self) -> Fraction:
        """Per-user cache size M = t N / K in file units."""
        return Fraction(self.caching_gain * self.library_size, self.num_users)

    @property
    def storage_fraction(self) -> Fraction:
        """Fraction of the library each user stores, M / N = t / K."""
        return Fraction(self.caching_gain, self.num_users)

    @property
    def serving_set_size(self) -> int:
        """Users addressed per transmission, t + eta."""
        return self.caching_gain + self.eta


def _as_int(key: str, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            if key == "caching_gain":
                raise NonIntegerT(f"caching_gain must be an integer, got {value}")
            raise ConfigError(f"{key} must be an integer, got {value}")
        return int(value)
    raise ConfigError(f"{key} must be an integer, got {value!r}")


def validate_config(raw: Mapping[str, object]) -> NetworkConfig:
    """Check a raw parameter mapping and return a :class:`NetworkConfig`.

    ``users``, ``caching_gain``, ``tx_multiplexing`` and ``rx_multiplexing``
    are required.  ``library_size`` defaults to the number of users, and the
    antenna counts default to the matching multiplexing order.

    Raises the most specific :class:`~mimo_cc.errors.ConfigError` subclass
    that applies: :class:`NonIntegerEta`, :class:`NonIntegerT`,
    :class:`InsufficientUsers` or :class:`MultiplexingExceedsAntennas`.
    """
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required configuration key {key!r}")

    users = _as_int("users", raw["users"])
    t = _as_int("caching_gain", raw["caching_gain"])
    tx_mult = _as_int("tx_multiplexing", raw["tx_multiplexing"])
    rx_mult = _as_int("rx_multiplexing", raw["rx_multiplexing"])
    library = _as_int("library_size", raw.get("library_size", users))
    tx_antennas = _as_int("tx_antennas", raw.get("tx_antennas", tx_mult))
    rx_antennas = _as_int("rx_antennas", raw.get("rx_antennas", rx_mult))

    if users < 1:
        raise ConfigError(f"users must be positive, got {users}")
    if t < 0:
        raise NonIntegerT(f"caching_gain must be nonnegative, got {t}")
    for key, value in (
        ("tx_multiplexing", tx_mult),
        ("rx_multiplexing", rx_mult),
        ("library_size", library),
        ("tx_antennas", tx_antennas),
        ("rx_antennas", rx_antennas),
    ):
        if value < 1:
            raise ConfigError(f"{key} must be positive, got {value}")

    if tx_mult % rx_mult != 0:
        raise NonIntegerEta(
            f"tx_multiplexing {tx_mult} is not a multiple of rx_multiplexing {rx_mult}"
        )
    eta = tx_mult // rx_mult
    if t + eta > users:
        raise InsufficientUsers(
            f"serving sets need t + eta = {t + eta} users but only {users} exist"
        )
    if tx_mult > tx_antennas:
        raise MultiplexingExceedsAntennas(
            f"tx_multiplexing {tx_mult} exceeds tx_antennas {tx_antennas}"
        )
    if rx_mult > rx_antennas:
        raise MultiplexingExceedsAntennas(
            f"rx_multiplexing {rx_mult} exceeds rx_antennas {rx_antennas}"
        )

    return NetworkConfig(
        num_users=users,
        caching_gain=t,
        tx_multiplexing=tx_mult,
        rx_multiplexing=rx_mult,
        library_size=library,
        tx_antennas=tx_antennas,
        rx_antennas=rx_antennas,
    )


def parse_config_text(text: str) -> dict[str, int]:
    """Parse ``key = value`` lines into a raw parameter mapping.

    Blank lines and ``#`` comments (full-line or trailing) are ignored.
    Problems raise :class:`ConfigFileError` carrying the key and line number.
    """
    raw: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigFileError("expected 'key = value'", line=lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigFileError("unknown key", key=key or None, line=lineno)
        if key in raw:
            raise ConfigFileError("duplicate key", key=key, line=lineno)
        try:
            raw[key] = int(value)
        except ValueError:
            raise ConfigFileError(
                f"value {value!r} is not an integer", key=key, line=lineno
            ) from None
    return raw


def parse_config_file(path) -> dict[str, int]:
    """Read and parse a configuration file from ``path``."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config_text(handle.read())


def apply_overrides(raw: Mapping[str, int], overrides: Iterable[str]) -> dict[str, int]:
    """Apply ``key=value`` override strings on top of a raw mapping."""
    merged = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigFileError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigFileError("unknown key in override", key=key)
        try:
            merged[key] = int(value.strip())
        except ValueError:
            raise ConfigFileError(
                f"override value {value.strip()!r} is not an integer", key=key
            ) from None
    return merged


# ---------------------------------------------------------------------------
# identifiers
# ---------------------------------------------------------------------------


class StreamId(NamedTuple):
    """One spatial stream at one receiver, both 1-indexed."""

    user: int
    stream: int


#: A subfile is named either by the user subset that caches it (combinatorial
#: placement) or by a packet index (packet-style placements).
SubfileLabel = Union[frozenset, int]


def label_sort_key(label: SubfileLabel):
    """Deterministic sort key over mixed subfile labels."""
    if isinstance(label, int):
        return (0, (label,))
    return (1, tuple(sorted(label)))


@dataclass(frozen=True)
class SubpacketId:
    """One deliverable unit: part ``part`` of subfile ``subfile`` of the file
    demanded by ``owner``, carried on the owner's stream ``stream``."""

    owner: int
    subfile: SubfileLabel
    part: int
    stream: int

    def __post_init__(self):
        if self.owner < 1 or self.part < 1 or self.stream < 1:
            raise OutOfRange(f"subpacket indices must be 1-based: {self}")
        if isinstance(self.subfile, int):
            if self.subfile < 1:
                raise OutOfRange(f"packet label must be 1-based: {self}")
        elif self.owner in self.subfile:
            raise OutOfRange(f"user {self.owner} cannot demand a subfile it caches")


@dataclass(frozen=True)
class CodewordId:
    """An XOR of aligned subpackets multicast to ``target_set`` on stream
    index ``stream``; ``components`` holds one subpacket per target user."""

    target_set: frozenset
    stream: int
    components: tuple[SubpacketId, ...]

    def __post_init__(self):
        owners = [c.owner for c in self.components]
        if sorted(owners) != sorted(self.target_set):
            raise OutOfRange("codeword components must cover the target set exactly")
        if any(c.stream != self.stream for c in self.components):
            raise OutOfRange("codeword components must share the stream index")


# ---------------------------------------------------------------------------
# subset enumeration
# ---------------------------------------------------------------------------


def enumerate_subsets(n: int, r: int) -> list[tuple[int, ...]]:
    """All r-subsets of ``{1, .., n}`` as sorted tuples in lexicographic order."""
    if r < 0 or n < 0 or r > n:
        raise OutOfRange(f"need 0 <= r <= n, got n={n} r={r}")
    return list(itertools.combinations(range(1, n + 1), r))


def subset_rank(subset: Iterable[int], n: int) -> int:
    """0-based lexicographic rank of ``subset`` among its size class in {1..n}."""
    elems = sorted(subset)
    r = len(elems)
    if len(set(elems)) != r:
        raise OutOfRange(f"subset has repeated elements: {elems}")
    if elems and (elems[0] < 1 or elems[-1] > n):
        raise OutOfRange(f"subset {elems} not within 1..{n}")
    rank = 0
    prev = 0
    for i, s in enumerate(elems):
        for j in range(prev + 1, s):
            rank += math.comb(n - j, r - i - 1)
        prev = s
    return rank


def subset_unrank(rank: int, n: int, r: int) -> tuple[int, ...]:
    """Inverse of :func:`subset_rank` for the (n, r) size class."""
    if r < 0 or r > n:
        raise OutOfRange(f"need 0 <= r <= n, got n={n} r={r}")
    total = math.comb(n, r)
    if rank < 0 or rank >= total:
        raise OutOfRange(f"rank {rank} outside 0..{total - 1}")
    out: list[int] = []
    j = 1
    remaining = r
    while remaining > 0:
        count = math.comb(n - j, remaining - 1)
        if rank < count:
            out.append(j)
            remaining -= 1
        else:
            rank -= count
        j += 1
    return tuple(out)


def rank_within(subset: Sequence[int], universe: Sequence[int]) -> int:
    """Lexicographic rank of ``subset`` among same-size subsets of an arbitrary
    sorted ``universe`` (elements relabelled by position)."""
    pos = {u: i + 1 for i, u in enumerate(universe)}
    try:
        compressed = [pos[s] for s in subset]
    except KeyError as exc:
        raise OutOfRange(f"element {exc.args[0]} not in universe {list(universe)}") from None
    return subset_rank(compressed, len(universe))
