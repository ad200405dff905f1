"""Chaine de Markov exacte de la file d'energie et distribution stationnaire.

Convention de slot : service puis arrivee. Le service est decide sur
l'occupation en debut de slot (un paquet arrive dans une file vide ne peut
pas etre consomme dans le meme slot) ; une arrivee trouvant la file pleine
apres le service est perdue. Avec mu_e = 1 on retrouve la chaine a deux
etats recurrents {0, 1} : P(0,0)=1-delta, P(0,1)=delta, P(j,j-1)=1-delta,
P(j,j)=delta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from energy_queue.config import QueueSpec, settings
from energy_queue.errors import InvalidParameterError, NonConvergenceError, UnboundedCapacityError

logger = logging.getLogger("energy_queue.chain")

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    """Matrice (c+1)x(c+1) stochastique par ligne sur les occupations 0..c."""

    entries: np.ndarray
    spec: Optional[QueueSpec] = None

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @property
    def states(self) -> range:
        return range(self.size)

    def validate(self) -> None:
        """Verifie bornes, stochasticite des lignes et structure en bande."""
        P = self.entries
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise InvalidParameterError(f"matrice carree attendue, recu {P.shape}")
        if np.any(P < -STOCHASTIC_TOL) or np.any(P > 1.0 + STOCHASTIC_TOL):
            raise InvalidParameterError("entree de transition hors de [0, 1]")
        row_error = np.max(np.abs(P.sum(axis=1) - 1.0))
        if row_error > STOCHASTIC_TOL:
            raise InvalidParameterError(f"lignes non stochastiques (ecart max {row_error:.3e})")
        i, j = np.indices(P.shape)
        if np.any(P[np.abs(i - j) >= 2] != 0.0):
            raise InvalidParameterError("transition hors bande |i - j| >= 2")

    def as_frame(self) -> pd.DataFrame:
        labels = list(self.states)
        return pd.DataFrame(self.entries, index=labels, columns=labels)


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float = 0.0
    method: str = "direct"
    iterations: int = 0

    @property
    def support(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.pi > 0.0)]

    def as_series(self) -> pd.Series:
        return pd.Series(self.pi, index=range(len(self.pi)), name="pi")


def build_energy_chain(spec: QueueSpec) -> TransitionMatrix:
    """Construit la matrice de transition de la file d'energie (Geo/Geo/1/c)."""
    if not spec.is_bounded:
        raise UnboundedCapacityError(
            "la chaine exacte exige une capacite finie (utiliser closedform ou montecarlo pour inf)"
        )
    c = int(spec.capacity)  # type: ignore[arg-type]
    d, m = spec.delta, spec.mu_e

    P = np.zeros((c + 1, c + 1), dtype=float)
    P[0, 0] = 1.0 - d
    P[0, 1] = d
    if c >= 2:
        mid = np.arange(1, c)
        P[mid, mid - 1] = m * (1.0 - d)
        P[mid, mid] = m * d + (1.0 - m) * (1.0 - d)
        P[mid, mid + 1] = (1.0 - m) * d
    P[c, c - 1] = m * (1.0 - d)
    P[c, c] = m * d + (1.0 - m)

    matrix = TransitionMatrix(entries=np.clip(P, 0.0, 1.0), spec=spec)
    matrix.validate()
    return matrix


def reachable_states(P: TransitionMatrix) -> np.ndarray:
    """Indices des etats atteignables depuis l'etat vide (0)."""
    adjacency = P.entries > 0.0
    reached = np.zeros(P.size, dtype=bool)
    reached[0] = True
    while True:
        expanded = reached | adjacency[reached].any(axis=0)
        if np.array_equal(expanded, reached):
            return np.flatnonzero(reached)
        reached = expanded


def _residual(pi: np.ndarray, P: np.ndarray) -> float:
    return float(np.max(np.abs(pi @ P - pi)))


def _clamp(pi: np.ndarray) -> np.ndarray:
    worst = float(pi.min())
    if worst < settings.negative_clamp:
        raise NonConvergenceError("probabilite stationnaire negative", residual=worst)
    if worst < 0.0:
        logger.debug(f"Entrees negatives ramenees a 0 (min {worst:.3e})")
    pi = np.where(pi < 0.0, 0.0, pi)
    return pi / pi.sum()


def _solve_direct(P: TransitionMatrix) -> np.ndarray:
    states = reachable_states(P)
    Q = P.entries[np.ix_(states, states)]
    n = len(states)
    # (Q^T - I) pi = 0, derniere equation remplacee par la normalisation
    A = Q.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi_reach = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(
            "systeme singulier: plusieurs classes recurrentes atteignables depuis 0",
            residual=float("inf"),
        ) from exc
    pi = np.zeros(P.size)
    pi[states] = pi_reach
    return pi


def power_iteration_stationary(
    P: TransitionMatrix,
    tol: float = settings.power_tol,
    max_iter: int = settings.power_max_iter,
    check_every: int = 16,
) -> StationaryDistribution:
    """Iteration pi <- pi P depuis le vecteur indicateur de l'etat 0.

    Arret quand max |pi P - pi| <= tol. Ce critere borne la variation d'un pas,
    pas la distance a la solution : celle-ci peut etre plus grande d'un facteur
    1 / (trou spectral), d'ou une tolerance par defaut de 1e-14.
    """
    if tol < 0:
        raise InvalidParameterError(f"tol doit etre >= 0 (recu {tol})")
    M = P.entries
    pi = np.zeros(P.size)
    pi[0] = 1.0
    residual = float("inf")
    iterations = 0
    while iterations < max_iter:
        steps = min(check_every - 1, max_iter - iterations - 1)
        for _ in range(steps):
            pi = pi @ M
        nxt = pi @ M
        iterations += steps + 1
        residual = float(np.max(np.abs(nxt - pi)))
        pi = nxt
        if residual <= tol:
            logger.info(f"Iteration de puissance convergee: {iterations} pas, residu {residual:.3e}")
            return StationaryDistribution(pi=_clamp(pi), residual=residual, method="power", iterations=iterations)
    raise NonConvergenceError("iteration de puissance non convergee", residual=residual, iterations=iterations)


def solve_stationary(
    P: TransitionMatrix,
    tol: float = settings.stationary_tol,
    method: str = "direct",
) -> StationaryDistribution:
    """Distribution stationnaire de la chaine partie de l'etat vide.

    Les etats non atteignables depuis 0 recoivent une probabilite nulle.
    """
    if tol < 0:
        raise InvalidParameterError(f"tol doit etre >= 0 (recu {tol})")
    if method == "power":
        return power_iteration_stationary(P, tol=min(tol, settings.power_tol))
    if method != "direct":
        raise InvalidParameterError(f"methode inconnue '{method}' (direct ou power)")

    pi = _clamp(_solve_direct(P))
    residual = _residual(pi, P.entries)
    if residual > tol:
        raise NonConvergenceError("resolution directe hors tolerance", residual=residual)
    logger.info(f"Distribution stationnaire: {P.size} etats, residu {residual:.3e}")
    return StationaryDistribution(pi=pi, residual=residual, method="direct")


def nonempty_prob(pi: StationaryDistribution) -> float:
    """Pr{B != 0} = 1 - pi_0, borne a [0, 1].

    Calcule comme la somme des pi_j, j >= 1, pour ne pas perdre les derniers
    chiffres de 1 - pi_0. Avec mu_e = 1 le resultat vaut delta a quelques ulp
    pres (arrondi de la resolution), pas exactement.
    """
    return float(min(max(math.fsum(pi.pi[1:]), 0.0), 1.0))
