"""Exceptions du toolkit de file d'energie."""

from __future__ import annotations


class EnergyQueueError(Exception):
    """Erreur de base du package."""


class InvalidParameterError(EnergyQueueError, ValueError):
    """Parametre hors de son domaine (probabilite, capacite, nombre de slots...)."""


class UnboundedCapacityError(InvalidParameterError):
    """La chaine exacte exige une capacite finie."""


class NonConvergenceError(EnergyQueueError, RuntimeError):
    """Le solveur n'a pas atteint la tolerance demandee."""

    def __init__(self, message: str, residual: float, iterations: int = 0) -> None:
        super().__init__(f"{message} (residu atteint: {residual:.3e}, iterations: {iterations})")
        self.residual = residual
        self.iterations = iterations


class SinkWriteError(EnergyQueueError, OSError):
    """Echec d'ecriture vers la destination (fichier, flux)."""
