"""Balayage de la grille (delta, capacite) et export CSV / JSON.

Chaque ligne compare la valeur exacte (chaine de Markov, capacite finie),
la formule M/M/1/c, la valeur corrigee delta et, en option, la simulation.
Une erreur sur un point est isolee dans la ligne concernee ; le balayage
continue.
"""

from __future__ import annotations

import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Dict, Iterable, List, Optional, Sequence

import pandas as pd

from energy_queue.chain import build_energy_chain, nonempty_prob, solve_stationary
from energy_queue.closedform import md1c_nonempty, mm1c_gap, mm1c_nonempty
from energy_queue.config import QueueSpec, SimConfig, SweepConfig, settings
from energy_queue.errors import EnergyQueueError, InvalidParameterError, SinkWriteError
from energy_queue.montecarlo import GatedSourceResult, derive_seed, simulate_energy_queue, simulate_gated_source

logger = logging.getLogger("energy_queue.sweep")

CSV_COLUMNS = [
    "delta",
    "capacity",
    "exact_nonempty",
    "mm1c_nonempty",
    "corrected_nonempty",
    "mc_nonempty",
    "mc_stderr",
    "err_mm1c_vs_exact",
]
REAL_COLUMNS = [name for name in CSV_COLUMNS if name != "capacity"]

PRESETS: Dict[str, Dict[str, list]] = {
    "reproduce-comment": {
        "deltas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
        "capacities": [1, 2, 5, 10, 50],
    },
}


@dataclass(frozen=True)
class SweepRow:
    delta: float
    capacity: Optional[int]
    exact_nonempty: Optional[float]
    mm1c_nonempty: Optional[float]
    corrected_nonempty: Optional[float]
    mc_nonempty: Optional[float] = None
    mc_stderr: Optional[float] = None
    err_mm1c_vs_exact: Optional[float] = None
    mu_e: float = 1.0
    error: Optional[str] = None


@dataclass(frozen=True)
class StabilityRow:
    lambda_p: float
    capacity: Optional[int]
    result: GatedSourceResult


def preset_config(name: str, **overrides: object) -> SweepConfig:
    if name not in PRESETS:
        raise InvalidParameterError(f"preset inconnu '{name}' (disponibles: {', '.join(sorted(PRESETS))})")
    return SweepConfig.build(**{**PRESETS[name], **overrides})


def _capacity_key(capacity: Optional[int]) -> float:
    return float("inf") if capacity is None else float(capacity)


def grid_points(cfg: SweepConfig) -> List[tuple[float, Optional[int]]]:
    points = [(d, c) for d in cfg.deltas for c in cfg.capacities]
    return sorted(points, key=lambda point: (point[0], _capacity_key(point[1])))


def mm1c_vs_exact(delta: float, capacity: int, exact: float) -> float:
    """Ecart mm1c - exact.

    Si exact ne differe de delta que par l'arrondi du solveur (<= tolerance
    stationnaire), l'ecart est l'ecart analytique mm1c_gap, dont le signe ne
    depend pas de cet arrondi.
    """
    drift = md1c_nonempty(delta) - exact
    if abs(drift) <= settings.stationary_tol:
        return mm1c_gap(delta, capacity)
    return mm1c_gap(delta, capacity) + drift


def _evaluate_point(cfg: SweepConfig, index: int, delta: float, capacity: Optional[int]) -> SweepRow:
    values: Dict[str, Optional[float]] = {name: None for name in REAL_COLUMNS if name != "delta"}
    try:
        values["mm1c_nonempty"] = mm1c_nonempty(delta, capacity)
        values["corrected_nonempty"] = md1c_nonempty(delta)
        spec = QueueSpec.build(delta=delta, mu_e=cfg.mu_e, capacity=capacity)
        if spec.is_bounded:
            exact = nonempty_prob(solve_stationary(build_energy_chain(spec)))
            values["exact_nonempty"] = exact
            values["err_mm1c_vs_exact"] = mm1c_vs_exact(delta, capacity, exact)
        if cfg.simulate:
            sim_cfg = SimConfig.build(
                spec=spec,
                slots=cfg.sim_slots,
                seed=derive_seed(cfg.base_seed, index),
                batches=cfg.batches,
            )
            result = simulate_energy_queue(sim_cfg)
            values["mc_nonempty"] = result.nonempty_fraction
            values["mc_stderr"] = result.nonempty_stderr
    except EnergyQueueError as exc:
        label = "inf" if capacity is None else capacity
        logger.warning(f"Point (delta={delta}, c={label}) en erreur: {exc}")
        return SweepRow(delta=delta, capacity=capacity, mu_e=cfg.mu_e, error=str(exc), **values)  # type: ignore[arg-type]
    return SweepRow(delta=delta, capacity=capacity, mu_e=cfg.mu_e, **values)  # type: ignore[arg-type]


def run_sweep(cfg: SweepConfig, jobs: int = 1) -> List[SweepRow]:
    """Une ligne par couple (delta, c), triee par (delta, c), deterministe pour base_seed donne."""
    if jobs < 1:
        raise InvalidParameterError(f"jobs doit etre >= 1 (recu {jobs})")
    points = grid_points(cfg)
    tasks = [(cfg, index, delta, capacity) for index, (delta, capacity) in enumerate(points)]

    if jobs == 1:
        rows = [_evaluate_point(*task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            rows = list(executor.map(lambda task: _evaluate_point(*task), tasks))

    failed = sum(1 for row in rows if row.error)
    logger.info(f"Balayage termine: {len(rows)} lignes, {failed} en erreur")
    return rows


def run_stability_scan(
    lambdas: Sequence[float],
    capacities: Sequence[Optional[int]],
    delta: float,
    success_prob: float = 1.0,
    mu_e: float = 1.0,
    slots: int = 200_000,
    base_seed: int = settings.default_seed,
    jobs: int = 1,
) -> List[StabilityRow]:
    """Verdict de stabilite de la source conditionnee sur une grille (lambda_p, c)."""
    points = sorted(
        ((lam, cap) for lam in lambdas for cap in capacities),
        key=lambda point: (point[0], _capacity_key(point[1])),
    )

    def evaluate(item: tuple[int, tuple[float, Optional[int]]]) -> StabilityRow:
        index, (lam, cap) = item
        cfg = SimConfig.build(
            spec=QueueSpec.build(delta=delta, mu_e=mu_e, capacity=cap),
            slots=slots,
            seed=derive_seed(base_seed, index),
        )
        return StabilityRow(lambda_p=lam, capacity=cap, result=simulate_gated_source(lam, success_prob, cfg))

    if jobs == 1:
        return [evaluate(item) for item in enumerate(points)]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(evaluate, enumerate(points)))


# ============================================================
# Rendu et export
# ============================================================

def format_real(value: float) -> str:
    """12 chiffres significatifs ; -0 rendu comme 0."""
    if value == 0:
        value = 0.0
    return f"{value:.12g}"


def format_capacity(capacity: Optional[int]) -> str:
    return "inf" if capacity is None else str(capacity)


def _row_strings(row: SweepRow) -> Dict[str, str]:
    record = {"capacity": format_capacity(row.capacity)}
    for name in REAL_COLUMNS:
        value = getattr(row, name)
        record[name] = "" if value is None else format_real(value)
    return {name: record[name] for name in CSV_COLUMNS}


def rows_to_frame(rows: Iterable[SweepRow]) -> pd.DataFrame:
    """Table de chaines formatees (colonnes CSV), utilisee pour le CSV et l'affichage."""
    return pd.DataFrame([_row_strings(row) for row in rows], columns=CSV_COLUMNS, dtype=str)


def _write(text: str, destination: IO) -> int:
    payload = text.encode("utf-8")
    try:
        if isinstance(destination, (io.RawIOBase, io.BufferedIOBase)):
            destination.write(payload)
        else:
            destination.write(text)
    except (OSError, ValueError) as exc:
        raise SinkWriteError(f"ecriture impossible vers la destination: {exc}") from exc
    return len(payload)


def render_csv(rows: Iterable[SweepRow]) -> str:
    return rows_to_frame(rows).to_csv(index=False, lineterminator="\n")


def emit_csv(rows: Iterable[SweepRow], destination: IO) -> int:
    """Ecrit le CSV UTF-8 ; renvoie le nombre d'octets ecrits."""
    return _write(render_csv(rows), destination)


def _row_record(row: SweepRow) -> Dict[str, object]:
    record: Dict[str, object] = {}
    for name in CSV_COLUMNS:
        if name == "capacity":
            record[name] = row.capacity if row.capacity is not None else "inf"
            continue
        value = getattr(row, name)
        if value is not None:
            record[name] = float(format_real(value))
    if row.error:
        record["error"] = row.error
    return record


def render_json(rows: Iterable[SweepRow]) -> str:
    return json.dumps([_row_record(row) for row in rows], indent=2)


def emit_json(rows: Iterable[SweepRow], destination: IO) -> int:
    """Ecrit un tableau JSON d'objets (champs absents omis) ; renvoie le nombre d'octets."""
    return _write(render_json(rows), destination)


def parse_json_rows(text: str) -> List[SweepRow]:
    """Reconstruit les lignes a partir du JSON emis par emit_json."""
    rows = []
    for record in json.loads(text):
        capacity = record.get("capacity")
        rows.append(
            SweepRow(
                delta=record["delta"],
                capacity=None if capacity == "inf" else int(capacity),
                exact_nonempty=record.get("exact_nonempty"),
                mm1c_nonempty=record.get("mm1c_nonempty"),
                corrected_nonempty=record.get("corrected_nonempty"),
                mc_nonempty=record.get("mc_nonempty"),
                mc_stderr=record.get("mc_stderr"),
                err_mm1c_vs_exact=record.get("err_mm1c_vs_exact"),
                error=record.get("error"),
            )
        )
    return rows
