"""Formules fermees : M/M/1/c (formule contestee), valeur corrigee et Geo/Geo/1/c.

La formule M/M/1/c Pr{B != 0} = delta (1 - delta^c) / (1 - delta^(c+1)) decrit
une file en temps continu. Pour la file d'energie en temps discret avec
consommation d'un paquet par slot, la probabilite d'etre non vide vaut delta
quelle que soit la capacite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from energy_queue.errors import InvalidParameterError, UnboundedCapacityError

logger = logging.getLogger("energy_queue.closedform")

# Au-dela, 1 - delta^c perd trop de chiffres significatifs : forme en somme
CANCELLATION_THRESHOLD = 0.5


@dataclass(frozen=True)
class FormulaComparison:
    delta: float
    capacity: Optional[int]
    mm1c_value: float
    corrected_value: float
    abs_error: float
    limit_evaluated: bool = False


@dataclass(frozen=True)
class Mm1cValue:
    """Valeur de la formule M/M/1/c et indicateur d'evaluation par limite."""

    value: float
    limit_evaluated: bool


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise InvalidParameterError(f"{name} doit etre dans [0, 1] (recu {value})")


def _check_capacity(c: Optional[int], allow_unbounded: bool = True) -> None:
    if c is None:
        if not allow_unbounded:
            raise UnboundedCapacityError("capacite finie requise")
        return
    if isinstance(c, bool) or int(c) != c or c < 1:
        raise InvalidParameterError(f"capacite doit etre un entier >= 1 (recu {c})")


def _geometric_ratio(delta: float, c: int) -> float:
    """Sum_{j=1..c} delta^j / Sum_{j=0..c} delta^j, stable pour delta proche de 1."""
    powers = np.power(delta, np.arange(c + 1, dtype=float))
    return float(math.fsum(powers[1:]) / math.fsum(powers))


def mm1c_nonempty_detail(delta: float, c: Optional[int]) -> Mm1cValue:
    """Formule M/M/1/c avec indicateur de limite (delta = 1 ou capacite infinie)."""
    _check_probability("delta", delta)
    _check_capacity(c)
    if c is None:
        # c -> inf : delta pour delta < 1, 1 pour delta = 1
        return Mm1cValue(value=float(delta) if delta < 1.0 else 1.0, limit_evaluated=True)
    if delta == 1.0:
        logger.debug(f"delta = 1 : limite c/(c+1) pour c={c}")
        return Mm1cValue(value=c / (c + 1.0), limit_evaluated=True)
    if delta == 0.0:
        return Mm1cValue(value=0.0, limit_evaluated=False)
    if delta > CANCELLATION_THRESHOLD:
        value = _geometric_ratio(delta, c)
    else:
        value = delta * (1.0 - delta**c) / (1.0 - delta ** (c + 1))
    return Mm1cValue(value=min(max(value, 0.0), 1.0), limit_evaluated=False)


def mm1c_nonempty(delta: float, c: Optional[int]) -> float:
    """Pr{B != 0} selon la formule M/M/1/c (limite c/(c+1) en delta = 1)."""
    return mm1c_nonempty_detail(delta, c).value


def mm1c_gap(delta: float, c: Optional[int]) -> float:
    """Ecart signe mm1c_nonempty - delta = -delta^(c+1) / Sum_{j=0..c} delta^j.

    Calcule sans soustraction, donc strictement negatif pour 0 < delta < 1
    meme lorsque la difference est sous la resolution d'un double.
    """
    _check_probability("delta", delta)
    _check_capacity(c)
    if c is None or delta == 0.0:
        return 0.0
    if delta == 1.0:
        return -1.0 / (c + 1.0)
    log_head = (c + 1) * math.log(delta)
    powers = np.power(delta, np.arange(c + 1, dtype=float))
    return -math.exp(log_head - math.log(math.fsum(powers)))


def mm1c_stationary(delta: float, c: int) -> np.ndarray:
    """pi_j = (1 - delta) delta^j / (1 - delta^(c+1)), uniforme en delta = 1."""
    _check_probability("delta", delta)
    _check_capacity(c, allow_unbounded=False)
    if delta == 1.0:
        return np.full(c + 1, 1.0 / (c + 1))
    powers = np.power(delta, np.arange(c + 1, dtype=float))
    return powers / math.fsum(powers)


def md1c_nonempty(delta: float) -> float:
    """Valeur corrigee : Pr{B != 0} = delta pour toute capacite."""
    _check_probability("delta", delta)
    return float(delta)


def compare(delta: float, c: Optional[int]) -> FormulaComparison:
    detail = mm1c_nonempty_detail(delta, c)
    corrected = md1c_nonempty(delta)
    return FormulaComparison(
        delta=float(delta),
        capacity=c,
        mm1c_value=detail.value,
        corrected_value=corrected,
        abs_error=abs(detail.value - corrected),
        limit_evaluated=detail.limit_evaluated,
    )


def geo_geo_1c_stationary(delta: float, mu_e: float, c: int) -> np.ndarray:
    """Distribution stationnaire en forme produit de la file Geo/Geo/1/c.

    Meme convention de slot que la chaine exacte (service puis arrivee) :
    pi_1 = pi_0 delta / (mu_e (1 - delta)), pi_(j+1) = pi_j r avec
    r = (1 - mu_e) delta / (mu_e (1 - delta)).
    """
    _check_probability("delta", delta)
    _check_probability("mu_e", mu_e)
    _check_capacity(c, allow_unbounded=False)

    pi = np.zeros(c + 1)
    if delta == 0.0:
        pi[0] = 1.0
        return pi
    if mu_e == 0.0:
        pi[c] = 1.0
        return pi
    if delta == 1.0:
        # 0 -> 1 puis 1 absorbant si mu_e = 1, sinon derive jusqu'a c
        pi[1 if mu_e == 1.0 else c] = 1.0
        return pi

    down = mu_e * (1.0 - delta)
    ratio = (1.0 - mu_e) * delta / down
    weights = np.empty(c + 1)
    weights[0] = 1.0
    weights[1:] = (delta / down) * np.power(ratio, np.arange(c, dtype=float))
    return weights / math.fsum(weights)


def geo_geo_1c_nonempty(delta: float, mu_e: float, c: Optional[int]) -> float:
    """1 - pi_0 de la file Geo/Geo/1/c ; capacite infinie admise si delta < mu_e."""
    if c is not None:
        return float(min(max(1.0 - geo_geo_1c_stationary(delta, mu_e, c)[0], 0.0), 1.0))

    _check_probability("delta", delta)
    _check_probability("mu_e", mu_e)
    if delta == 0.0:
        return 0.0
    if mu_e == 1.0:
        return float(delta)
    if delta >= mu_e:
        raise UnboundedCapacityError(
            f"file non bornee instable pour delta >= mu_e ({delta} >= {mu_e}) : capacite finie requise"
        )
    ratio = (1.0 - mu_e) * delta / (mu_e * (1.0 - delta))
    head = delta / (mu_e * (1.0 - delta))
    tail = head / (1.0 - ratio)
    return float(tail / (1.0 + tail))
