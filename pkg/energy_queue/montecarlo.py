"""Simulation slot par slot de la file d'energie et d'une source conditionnee par l'energie.

Deroulement d'un slot (occupation initiale 0) :
1. si la file d'energie est non vide, un paquet part avec la probabilite mu_e ;
2. une arrivee (probabilite delta) est admise si l'occupation apres service
   est inferieure a la capacite (toujours admise si la capacite est infinie).
Les statistiques portent sur l'occupation en debut de slot, apres le warmup.

Generateur : numpy PCG64. La replication i d'une configuration utilise la
graine derive_seed(seed, i) (finaliseur SplitMix64 applique a seed XOR i).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from energy_queue.config import SimConfig, QueueSpec, settings
from energy_queue.errors import EnergyQueueError, InvalidParameterError

logger = logging.getLogger("energy_queue.montecarlo")

GENERATOR_NAME = "PCG64"
MASK64 = (1 << 64) - 1
DATA_STREAM_INDEX = 0xDA7A


def derive_seed(seed: int, index: int) -> int:
    """Graine du flux `index` : SplitMix64(seed XOR index)."""
    z = ((seed ^ index) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class SimResult:
    nonempty_fraction: float
    histogram: Dict[int, int]
    measured_slots: int
    seed: int
    max_occupancy_seen: int
    nonempty_stderr: float = 0.0
    admitted: int = 0
    departed: int = 0
    dropped: int = 0
    final_occupancy: int = 0
    generator: str = GENERATOR_NAME

    def empirical_distribution(self, size: int | None = None) -> np.ndarray:
        """Histogramme normalise, indexe par l'occupation."""
        length = size if size is not None else max(self.histogram, default=0) + 1
        dist = np.zeros(length)
        for level, count in self.histogram.items():
            if level < length:
                dist[level] = count
        return dist / self.measured_slots


@dataclass
class GatedSourceResult:
    arrival_rate: float
    delivered_throughput: float
    mean_queue_length: float
    queue_growth_slope: float
    stable_verdict: bool
    borderline: bool = False
    energy_nonempty_fraction: float = 0.0
    empirical_arrival_rate: float = 0.0
    measured_slots: int = 0
    seed: int = 0


@dataclass
class ReplicationSummary:
    mean_nonempty: float
    stderr: float
    results: List[SimResult] = field(default_factory=list)


@dataclass
class _EnergyState:
    occupancy: int = 0
    admitted: int = 0
    departed: int = 0
    dropped: int = 0
    max_seen: int = 0


def _advance_energy(
    state: _EnergyState,
    capacity: int | None,
    arrivals: Sequence[bool],
    services: Sequence[bool],
) -> List[int]:
    """Fait avancer la file d'energie ; renvoie l'occupation en debut de chaque slot."""
    occ = state.occupancy
    admitted, departed, dropped, max_seen = state.admitted, state.departed, state.dropped, state.max_seen
    starts: List[int] = []
    append = starts.append
    for arrived, served in zip(arrivals, services):
        append(occ)
        if occ and served:
            occ -= 1
            departed += 1
        if arrived:
            if capacity is None or occ < capacity:
                occ += 1
                admitted += 1
                if occ > max_seen:
                    max_seen = occ
            else:
                dropped += 1
    state.occupancy = occ
    state.admitted, state.departed, state.dropped, state.max_seen = admitted, departed, dropped, max_seen
    return starts


def _draw_energy_chunk(rng: np.random.Generator, spec: QueueSpec, n: int) -> tuple[list, list]:
    arrivals = (rng.random(n) < spec.delta).tolist()
    services = (rng.random(n) < spec.mu_e).tolist()
    return arrivals, services


def _check_deterministic_service(spec: QueueSpec, state: _EnergyState) -> None:
    # mu_e = 1, depart vide : les etats >= 2 sont inatteignables
    if spec.mu_e == 1.0 and state.max_seen > 1:
        raise EnergyQueueError(f"occupation {state.max_seen} > 1 avec mu_e = 1")


def batch_means_stderr(values: np.ndarray, batches: int) -> float:
    """Erreur standard par moyennes de lots (serie correlee)."""
    n = len(values)
    if n < 2:
        return 0.0
    batches = min(batches, n)
    means = np.array([chunk.mean() for chunk in np.array_split(values.astype(float), batches)])
    return float(means.std(ddof=1) / math.sqrt(batches))


def _chunks(total: int, size: int):
    start = 0
    while start < total:
        stop = min(start + size, total)
        yield start, stop
        start = stop


def simulate_energy_queue(cfg: SimConfig) -> SimResult:
    """Simule la file d'energie seule et mesure la fraction de slots non vides."""
    spec = cfg.spec
    rng = make_generator(cfg.seed)
    state = _EnergyState()
    measured = cfg.measured_slots
    nonempty_flags = np.zeros(measured, dtype=bool)
    counts: Dict[int, int] = {}

    for start, stop in _chunks(cfg.slots, settings.sim_chunk_slots):
        arrivals, services = _draw_energy_chunk(rng, spec, stop - start)
        starts = np.asarray(_advance_energy(state, spec.capacity, arrivals, services), dtype=np.int64)
        _check_deterministic_service(spec, state)

        skip = max(cfg.warmup_slots - start, 0)
        if skip >= len(starts):
            continue
        window = starts[skip:]
        offset = start + skip - cfg.warmup_slots
        nonempty_flags[offset:offset + len(window)] = window > 0
        for level, count in enumerate(np.bincount(window)):
            if count:
                counts[level] = counts.get(level, 0) + int(count)

    fraction = 1.0 - counts.get(0, 0) / measured
    result = SimResult(
        nonempty_fraction=fraction,
        histogram=dict(sorted(counts.items())),
        measured_slots=measured,
        seed=cfg.seed,
        max_occupancy_seen=state.max_seen,
        nonempty_stderr=batch_means_stderr(nonempty_flags, cfg.batches),
        admitted=state.admitted,
        departed=state.departed,
        dropped=state.dropped,
        final_occupancy=state.occupancy,
    )
    logger.info(
        f"Simulation file d'energie: delta={spec.delta} mu_e={spec.mu_e} c={spec.capacity_label} "
        f"slots={cfg.slots} seed={cfg.seed} -> non vide {fraction:.6f} (+/- {result.nonempty_stderr:.2e})"
    )
    return result


def _least_squares_slope(values: np.ndarray) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    t = np.arange(n, dtype=float)
    t -= t.mean()
    return float(np.dot(t, values - values.mean()) / np.dot(t, t))


def simulate_gated_source(
    lambda_p: float,
    success_prob: float,
    cfg: SimConfig,
    slope_threshold: float = settings.slope_threshold,
) -> GatedSourceResult:
    """Source de donnees dont l'emission exige une file d'energie non vide en debut de slot.

    La file d'energie evolue comme dans simulate_energy_queue (meme flux
    aleatoire) ; la consommation d'energie ne depend pas de la file de donnees.

    Le debit compte les paquets arrives pendant la fenetre mesuree et livres
    pendant celle-ci (ordre FIFO) ; il ne depasse donc jamais le taux d'arrivee
    empirique empirical_arrival_rate.
    """
    for name, value in (("lambda_p", lambda_p), ("success_prob", success_prob)):
        if not (0.0 <= value <= 1.0):
            raise InvalidParameterError(f"{name} doit etre dans [0, 1] (recu {value})")
    if slope_threshold <= 0:
        raise InvalidParameterError(f"slope_threshold doit etre > 0 (recu {slope_threshold})")

    spec = cfg.spec
    energy_rng = make_generator(cfg.seed)
    data_rng = make_generator(derive_seed(cfg.seed, DATA_STREAM_INDEX))
    state = _EnergyState()
    measured = cfg.measured_slots
    queue_trace = np.zeros(measured, dtype=float)
    energy_nonempty = 0
    delivered = 0
    arrived = 0
    backlog = 0
    backlog_at_window: Optional[int] = None

    for start, stop in _chunks(cfg.slots, settings.sim_chunk_slots):
        n = stop - start
        arrivals, services = _draw_energy_chunk(energy_rng, spec, n)
        energy_starts = _advance_energy(state, spec.capacity, arrivals, services)
        _check_deterministic_service(spec, state)
        data_arrivals = (data_rng.random(n) < lambda_p).tolist()
        successes = (data_rng.random(n) < success_prob).tolist()

        slot = start
        for has_energy, has_arrival, success in zip(energy_starts, data_arrivals, successes):
            in_window = slot >= cfg.warmup_slots
            if in_window:
                if backlog_at_window is None:
                    backlog_at_window = backlog
                queue_trace[slot - cfg.warmup_slots] = backlog
                if has_energy:
                    energy_nonempty += 1
            if has_energy and backlog and success:
                backlog -= 1
                if in_window:
                    delivered += 1
            if has_arrival:
                backlog += 1
                if in_window:
                    arrived += 1
            slot += 1

    slope = _least_squares_slope(queue_trace)
    # FIFO : les backlog_at_window premiers departs de la fenetre sont des paquets du warmup
    throughput = max(delivered - (backlog_at_window or 0), 0) / measured
    # aucun depart possible : instable des que lambda_p > 0
    never_served = lambda_p > 0 and (success_prob == 0 or spec.delta == 0)
    stable = slope <= slope_threshold and not never_served
    result = GatedSourceResult(
        arrival_rate=lambda_p,
        delivered_throughput=throughput,
        mean_queue_length=float(queue_trace.mean()),
        queue_growth_slope=slope,
        stable_verdict=stable,
        borderline=not never_served and slope_threshold / 2.0 <= slope <= 2.0 * slope_threshold,
        energy_nonempty_fraction=energy_nonempty / measured,
        empirical_arrival_rate=arrived / measured,
        measured_slots=measured,
        seed=cfg.seed,
    )
    logger.info(
        f"Source conditionnee: lambda_p={lambda_p} s={success_prob} delta={spec.delta} c={spec.capacity_label} "
        f"-> debit {throughput:.6f}, pente {slope:.3e}, stable={result.stable_verdict}"
    )
    return result


def run_replications(cfg: SimConfig, replications: int, jobs: int = 1) -> ReplicationSummary:
    """Replications independantes (graines derive_seed(cfg.seed, i)), resultats dans l'ordre des indices."""
    if replications < 1:
        raise InvalidParameterError(f"replications doit etre >= 1 (recu {replications})")
    if jobs < 1:
        raise InvalidParameterError(f"jobs doit etre >= 1 (recu {jobs})")
    configs = [cfg.model_copy(update={"seed": derive_seed(cfg.seed, i)}) for i in range(replications)]

    if jobs == 1:
        results = [simulate_energy_queue(item) for item in configs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(simulate_energy_queue, configs))

    fractions = np.array([r.nonempty_fraction for r in results])
    stderr = float(fractions.std(ddof=1) / math.sqrt(replications)) if replications > 1 else results[0].nonempty_stderr
    return ReplicationSummary(mean_nonempty=float(fractions.mean()), stderr=stderr, results=results)
