"""Coincidence-counting Monte Carlo over a configurable detection graph.

Statistical model, per accumulation window:

* every satellite emits ``M ~ Poisson(mean_pairs)`` signal/idler pairs;
* every detector watches one beam and registers ``Binomial(M, eta)``
  photons independently, with ``eta1`` for signal beams and ``eta2`` for
  idler beams;
* a detector *fires* when it registers at least one photon.

A primary channel is a gate over two detectors: ``coincidence`` is true when
both fire, ``anticoincidence`` when exactly one does.  A derived channel is
the exclusive-or of previously defined channels, so its incidence row is the
GF(2) sum of theirs.  The two designated detectors supply the per-window
photon-number difference ``N1 - N2``.

Random streams: Philox4x64 keyed by the 64-bit seed, one stream per block of
``BLOCK_WINDOWS`` windows with the block index in the top counter word.
Blocks are always drawn at full size and truncated, so window ``w`` depends
only on ``(seed, w)`` and results do not change with the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DomainError
from .gf2 import gf2_rank
from .phase_stats import PairCountModel, number_diff_variance

BLOCK_WINDOWS = 8192
SEED_MAX = 2**64 - 1

Polarity = Literal["coincidence", "anticoincidence", "parity"]

MIXING_NOTE = (
    "thinning model has no interferometric mixing between modes; "
    "it is not required to satisfy the correlated-pair lower bound"
)


@dataclass(frozen=True)
class Beam:
    label: str
    satellite: int
    arm: Literal["signal", "idler"]


@dataclass(frozen=True)
class Detector:
    label: str
    beam: str


@dataclass(frozen=True)
class Channel:
    """A gate over a detector pair, or the exclusive-or of earlier channels."""

    label: str
    detectors: tuple[str, ...] = ()
    polarity: Polarity = "coincidence"
    combine: tuple[str, ...] = ()

    @property
    def derived(self) -> bool:
        return bool(self.combine)


@dataclass(frozen=True)
class DetectionGraph:
    beams: tuple[Beam, ...]
    detectors: tuple[Detector, ...]
    channels: tuple[Channel, ...]
    designated: tuple[str, str] | None = None
    incidence: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        beam_labels = [b.label for b in self.beams]
        if len(set(beam_labels)) != len(beam_labels):
            raise DomainError("beam labels must be unique")
        for b in self.beams:
            if b.arm not in ("signal", "idler"):
                raise DomainError(f"beam {b.label!r}: arm must be 'signal' or 'idler'")
            if b.satellite < 1:
                raise DomainError(f"beam {b.label!r}: satellite index must be >= 1")
        det_labels = [d.label for d in self.detectors]
        if len(set(det_labels)) != len(det_labels):
            raise DomainError("detector labels must be unique")
        for d in self.detectors:
            if d.beam not in beam_labels:
                raise DomainError(f"detector {d.label!r} watches unknown beam {d.beam!r}")

        det_index = {lab: i for i, lab in enumerate(det_labels)}
        rows: dict[str, np.ndarray] = {}
        for ch in self.channels:
            if ch.label in rows:
                raise DomainError(f"duplicate channel label {ch.label!r}")
            row = np.zeros(len(det_labels), dtype=np.uint8)
            if ch.derived:
                if ch.detectors:
                    raise DomainError(f"channel {ch.label!r}: give detectors or combine, not both")
                if ch.polarity != "parity":
                    raise DomainError(f"derived channel {ch.label!r} must have polarity 'parity'")
                for part in ch.combine:
                    if part not in rows:
                        raise DomainError(
                            f"channel {ch.label!r} combines {part!r}, which is not defined before it"
                        )
                    row ^= rows[part]
            else:
                if ch.polarity not in ("coincidence", "anticoincidence"):
                    raise DomainError(
                        f"channel {ch.label!r}: polarity must be coincidence or anticoincidence"
                    )
                if len(ch.detectors) != 2 or ch.detectors[0] == ch.detectors[1]:
                    raise DomainError(f"channel {ch.label!r} needs two distinct detectors")
                for d in ch.detectors:
                    if d not in det_index:
                        raise DomainError(f"channel {ch.label!r} uses unknown detector {d!r}")
                    row[det_index[d]] = 1
            rows[ch.label] = row

        if self.designated is not None:
            if len(self.designated) != 2 or any(d not in det_index for d in self.designated):
                raise DomainError(f"designated detectors {self.designated!r} are not in the graph")

        inc = (np.stack(list(rows.values())) if rows
               else np.zeros((0, len(det_labels)), dtype=np.uint8))
        inc.setflags(write=False)
        object.__setattr__(self, "incidence", inc)

    @property
    def channel_labels(self) -> list[str]:
        return [c.label for c in self.channels]

    @property
    def primary_channels(self) -> list[str]:
        return [c.label for c in self.channels if not c.derived]

    def without_channel(self, label: str) -> "DetectionGraph":
        """Copy with ``label`` removed, along with every channel built on it."""
        if label not in self.channel_labels:
            raise DomainError(f"no channel {label!r}")
        dropped = {label}
        kept = []
        for ch in self.channels:
            if ch.label in dropped or any(p in dropped for p in ch.combine):
                dropped.add(ch.label)
            else:
                kept.append(ch)
        return DetectionGraph(self.beams, self.detectors, tuple(kept), self.designated)


def build_default_graph() -> DetectionGraph:
    """Six beams, twelve mirror-port detectors, thirteen gates of rank 6.

    Each beam is split in two: port ``s`` feeds the same-satellite gates,
    port ``x`` the cross-satellite gates.  D1-D3 compare red and nIR from one
    satellite, D4-D6 compare red_i with nIR_(i+1).  D7-D13 are parity
    combinations of D1-D6.
    """
    beams = []
    for s in (1, 2, 3):
        beams.append(Beam(f"red{s}", s, "signal"))
        beams.append(Beam(f"nir{s}", s, "idler"))
    detectors = tuple(Detector(f"{b.label}.{port}", b.label) for b in beams for port in ("s", "x"))
    channels = [
        Channel("D1", ("red1.s", "nir1.s")),
        Channel("D2", ("red2.s", "nir2.s")),
        Channel("D3", ("red3.s", "nir3.s")),
        Channel("D4", ("red1.x", "nir2.x"), "anticoincidence"),
        Channel("D5", ("red2.x", "nir3.x"), "anticoincidence"),
        Channel("D6", ("red3.x", "nir1.x"), "anticoincidence"),
    ]
    combos = {
        "D7": ("D1", "D2"),
        "D8": ("D2", "D3"),
        "D9": ("D3", "D1"),
        "D10": ("D4", "D5"),
        "D11": ("D5", "D6"),
        "D12": ("D6", "D4"),
        "D13": ("D1", "D2", "D3", "D4", "D5", "D6"),
    }
    channels += [Channel(lab, polarity="parity", combine=parts) for lab, parts in combos.items()]
    return DetectionGraph(tuple(beams), detectors, tuple(channels), designated=("red1.s", "nir1.s"))


def independent_channel_count(g: DetectionGraph) -> int:
    return gf2_rank(g.incidence)


@dataclass(frozen=True)
class TrialBatch:
    windows: int
    seed: int
    model: PairCountModel
    channel_labels: tuple[str, ...]
    counts: np.ndarray
    differences: np.ndarray

    @property
    def sample_mean(self) -> float:
        return float(np.mean(self.differences))

    @property
    def sample_variance(self) -> float:
        if self.windows < 2:
            return 0.0
        return float(np.var(self.differences, ddof=1))


def _draw_block(det_sat, det_eta, n_sats, m: PairCountModel, seed: int, block: int):
    gen = np.random.Generator(np.random.Philox(key=seed, counter=block << 192))
    pairs = gen.poisson(m.mean_pairs, size=(BLOCK_WINDOWS, n_sats))
    photons = np.empty((len(det_sat), BLOCK_WINDOWS), dtype=np.int64)
    for d, (col, eta) in enumerate(zip(det_sat, det_eta)):
        photons[d] = gen.binomial(pairs[:, col], eta)
    return photons


def _plan(g: DetectionGraph, m: PairCountModel):
    beam = {b.label: b for b in g.beams}
    sats = sorted({b.satellite for b in g.beams})
    col = {s: i for i, s in enumerate(sats)}
    det_sat = [col[beam[d.beam].satellite] for d in g.detectors]
    det_eta = [m.eta1 if beam[d.beam].arm == "signal" else m.eta2 for d in g.detectors]
    det_index = {d.label: i for i, d in enumerate(g.detectors)}
    gates = []
    chan_index = {}
    for i, ch in enumerate(g.channels):
        chan_index[ch.label] = i
        if ch.derived:
            gates.append(("parity", tuple(chan_index[p] for p in ch.combine)))
        else:
            gates.append((ch.polarity, tuple(det_index[d] for d in ch.detectors)))
    designated = None
    if g.designated is not None:
        designated = (det_index[g.designated[0]], det_index[g.designated[1]])
    return sats, det_sat, det_eta, gates, designated


def _run_block(args):
    (sats, det_sat, det_eta, gates, designated), m, seed, block, take = args
    photons = _draw_block(det_sat, det_eta, len(sats), m, seed, block)[:, :take]
    fires = photons > 0
    outcomes = np.empty((len(gates), take), dtype=bool)
    for i, (kind, refs) in enumerate(gates):
        if kind == "coincidence":
            outcomes[i] = fires[refs[0]] & fires[refs[1]]
        elif kind == "anticoincidence":
            outcomes[i] = fires[refs[0]] ^ fires[refs[1]]
        else:
            acc = np.zeros(take, dtype=bool)
            for r in refs:
                acc ^= outcomes[r]
            outcomes[i] = acc
    tallies = outcomes.sum(axis=1, dtype=np.int64)
    if designated is None:
        diff = np.zeros(take, dtype=np.int64)
    else:
        diff = photons[designated[0]] - photons[designated[1]]
    return tallies, diff


def simulate_windows(g: DetectionGraph, m: PairCountModel, windows: int, seed: int,
                     workers: int = 1) -> TrialBatch:
    if not isinstance(windows, (int, np.integer)) or windows < 1:
        raise DomainError(f"windows must be a positive integer, got {windows!r}")
    if not 0 <= seed <= SEED_MAX:
        raise DomainError("seed must be an unsigned 64-bit integer")
    if workers < 1:
        raise DomainError("workers must be >= 1")
    plan = _plan(g, m)
    n_blocks = math.ceil(windows / BLOCK_WINDOWS)
    jobs = [(plan, m, int(seed), b, min(BLOCK_WINDOWS, windows - b * BLOCK_WINDOWS))
            for b in range(n_blocks)]
    if workers == 1:
        results = [_run_block(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, jobs))
    counts = np.zeros(len(g.channels), dtype=np.int64)
    for tallies, _ in results:
        counts += tallies
    diffs = np.concatenate([d for _, d in results])
    return TrialBatch(int(windows), int(seed), m, tuple(g.channel_labels), counts, diffs)


def thinning_moments(m: PairCountModel) -> tuple[float, float]:
    """Closed-form mean and variance of ``N1 - N2`` under Poisson-binomial thinning."""
    n, e1, e2 = m.mean_pairs, m.eta1, m.eta2
    mean = (e1 - e2) * n
    var = n * ((e1 - e2) ** 2 + e1 * (1 - e1) + e2 * (1 - e2))
    return mean, var


def _z(observed: float, expected: float, se: float) -> float:
    diff = observed - expected
    if se > 0:
        return diff / se
    if diff == 0:
        return 0.0
    return math.copysign(math.inf, diff)


@dataclass(frozen=True)
class AnalyticComparison:
    windows: int
    sample_mean: float
    sample_variance: float
    se_mean: float
    se_variance: float
    thinning_mean: float
    thinning_variance: float
    correlated_bound: float
    z_mean: float
    z_variance: float
    z_correlated: float
    model_divergence: bool
    note: str = MIXING_NOTE


def compare_with_analytic(batch: TrialBatch, m: PairCountModel) -> AnalyticComparison:
    if batch.model != m:
        raise DomainError("batch was produced from a different PairCountModel")
    if batch.windows < 2:
        raise DomainError("need at least two windows to estimate a variance")
    x = batch.differences.astype(np.float64)
    n = x.size
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    m4 = float(np.mean((x - mean) ** 4))
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    t_mean, t_var = thinning_moments(m)
    bound = number_diff_variance(m)
    z_app = _z(var, bound, se_var)
    z_thin = _z(var, t_var, se_var)
    # Divergence: the two analytic references disagree beyond sampling error.
    divergence = abs(bound - t_var) > 3 * max(se_var, 1e-12 * max(abs(bound), 1.0))
    return AnalyticComparison(
        windows=n,
        sample_mean=mean,
        sample_variance=var,
        se_mean=se_mean,
        se_variance=se_var,
        thinning_mean=t_mean,
        thinning_variance=t_var,
        correlated_bound=bound,
        z_mean=_z(mean, t_mean, se_mean),
        z_variance=z_thin,
        z_correlated=z_app,
        model_divergence=divergence,
    )


def summary_rows(batch: TrialBatch, comparison: AnalyticComparison | None = None) -> list[dict]:
    """Rows for the per-channel CSV summary plus one ``N1-N2`` row."""
    rows = []
    w = batch.windows
    for label, count in zip(batch.channel_labels, batch.counts):
        p = int(count) / w
        var = p * (1 - p) * w / (w - 1) if w > 1 else 0.0
        rows.append({"label": label, "count": int(count), "mean": p, "variance": var,
                     "z_mean_thinning": "", "z_variance_thinning": "", "z_variance_correlated": ""})
    if comparison is not None:
        rows.append({"label": "N1-N2", "count": w, "mean": comparison.sample_mean,
                     "variance": comparison.sample_variance,
                     "z_mean_thinning": comparison.z_mean,
                     "z_variance_thinning": comparison.z_variance,
                     "z_variance_correlated": comparison.z_correlated})
    return rows

