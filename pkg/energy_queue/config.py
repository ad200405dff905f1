"""Modeles de parametres valides et valeurs numeriques par defaut.

Les entrees (file, simulation, balayage) sont des modeles pydantic figes.
Aucune variable d'environnement ni fichier n'est lu : tout passe par les
arguments (CLI ou appels Python).
"""

from __future__ import annotations

import math
from typing import Annotated, Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from energy_queue.errors import InvalidParameterError

# Capacite non bornee
UNBOUNDED: Optional[int] = None

UNBOUNDED_TOKENS = {"inf", "+inf", "infinity", "unbounded"}
MAX_SEED = 2**64 - 1

Probability = Annotated[float, Field(ge=0.0, le=1.0, allow_inf_nan=False)]


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    stationary_tol: float = 1e-12
    power_tol: float = 1e-14
    power_max_iter: int = 1_000_000
    negative_clamp: float = -1e-14
    warmup_fraction: float = 0.01
    warmup_min_slots: int = 1_000
    batches: int = 100
    slope_threshold: float = 1e-4
    default_seed: int = 42
    sim_chunk_slots: int = 65_536


settings = Settings()


def parse_capacity(value: object) -> Optional[int]:
    """Convertit `inf` / `unbounded` en UNBOUNDED, sinon un entier >= 1."""
    if value is None:
        return UNBOUNDED
    if isinstance(value, float) and math.isinf(value) and value > 0:
        return UNBOUNDED
    if isinstance(value, str):
        token = value.strip().lower()
        if token in UNBOUNDED_TOKENS:
            return UNBOUNDED
        try:
            return int(token)
        except ValueError as exc:
            raise ValueError(f"capacite invalide '{value}' (entier >= 1 ou inf attendu)") from exc
    if isinstance(value, bool):
        raise ValueError("capacite invalide (booleen)")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"capacite invalide {value} (entier attendu)")
    return int(value)  # type: ignore[arg-type]


def _split_list(value: object) -> object:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error.get("loc", ())) or "valeur"
        parts.append(f"{location}: {error.get('msg', 'invalide')}")
    return "; ".join(parts)


class _BuildMixin:
    @classmethod
    def build(cls, **kwargs: Any):
        """Construit le modele en convertissant les erreurs pydantic en InvalidParameterError."""
        try:
            return cls(**kwargs)  # type: ignore[call-arg]
        except ValidationError as exc:
            raise InvalidParameterError(_format_validation_error(exc)) from exc


class QueueSpec(_BuildMixin, BaseModel):
    """Parametres d'une file d'energie en temps discret."""

    model_config = ConfigDict(frozen=True)

    delta: Probability
    mu_e: Probability = 1.0
    capacity: Optional[int] = Field(default=UNBOUNDED, ge=1)

    @field_validator("capacity", mode="before")
    @classmethod
    def _parse_capacity(cls, value: object) -> Optional[int]:
        return parse_capacity(value)

    @property
    def is_bounded(self) -> bool:
        return self.capacity is not None

    @property
    def capacity_label(self) -> str:
        return "inf" if self.capacity is None else str(self.capacity)


class SimConfig(_BuildMixin, BaseModel):
    """Configuration d'une simulation slot par slot."""

    model_config = ConfigDict(frozen=True)

    spec: QueueSpec
    slots: int = Field(ge=1)
    seed: int = Field(default=settings.default_seed, ge=0, le=MAX_SEED)
    warmup_slots: int = Field(default=0, ge=0)
    batches: int = Field(default=settings.batches, ge=2)

    @model_validator(mode="before")
    @classmethod
    def _default_warmup(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("warmup_slots") is None:
            data = dict(data)
            data["warmup_slots"] = default_warmup(data.get("slots"))
        return data

    @model_validator(mode="after")
    def _check_warmup(self) -> "SimConfig":
        if self.warmup_slots >= self.slots:
            raise ValueError(
                f"warmup_slots ({self.warmup_slots}) doit etre strictement inferieur a slots ({self.slots})"
            )
        return self

    @property
    def measured_slots(self) -> int:
        return self.slots - self.warmup_slots


def default_warmup(slots: object) -> int:
    """1% des slots, minimum 1000, toujours strictement inferieur a slots."""
    try:
        total = int(slots)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        return 0
    if total <= 1:
        return 0
    warmup = max(int(total * settings.warmup_fraction), settings.warmup_min_slots)
    return min(warmup, total - 1)


class SweepConfig(_BuildMixin, BaseModel):
    """Grille (delta, capacite) a evaluer."""

    model_config = ConfigDict(frozen=True)

    deltas: List[Probability] = Field(min_length=1)
    capacities: List[Optional[int]] = Field(min_length=1)
    mu_e: Probability = 1.0
    simulate: bool = False
    sim_slots: int = Field(default=100_000, ge=1)
    base_seed: int = Field(default=settings.default_seed, ge=0, le=MAX_SEED)
    batches: int = Field(default=settings.batches, ge=2)

    @field_validator("deltas", mode="before")
    @classmethod
    def _split_deltas(cls, value: object) -> object:
        return _split_list(value)

    @field_validator("capacities", mode="before")
    @classmethod
    def _split_capacities(cls, value: object) -> object:
        items = _split_list(value)
        if isinstance(items, (list, tuple)):
            return [parse_capacity(item) for item in items]
        return items

    @field_validator("capacities")
    @classmethod
    def _check_capacities(cls, value: List[Optional[int]]) -> List[Optional[int]]:
        for item in value:
            if item is not None and item < 1:
                raise ValueError(f"capacite {item} invalide (>= 1 attendu)")
        return value
