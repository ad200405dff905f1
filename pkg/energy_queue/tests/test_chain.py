#!/usr/bin/env python3
"""
Tests de la chaine exacte de la file d'energie.

Construction de la matrice (convention service puis arrivee), resolution
stationnaire directe et par iteration de puissance, probabilite non vide.
"""

import unittest

import numpy as np

from energy_queue.chain import (
    StationaryDistribution,
    build_energy_chain,
    nonempty_prob,
    power_iteration_stationary,
    reachable_states,
    solve_stationary,
)
from energy_queue.config import QueueSpec, settings
from energy_queue.errors import InvalidParameterError, NonConvergenceError, UnboundedCapacityError

GRID_DELTAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
GRID_CAPACITIES = [1, 2, 5, 10, 50]


def _random_spec(rng: np.random.Generator, max_capacity: int = 50) -> QueueSpec:
    return QueueSpec(
        delta=float(rng.uniform(0.05, 0.95)),
        mu_e=float(rng.uniform(0.2, 1.0)),
        capacity=int(rng.integers(1, max_capacity + 1)),
    )


class TestBuildEnergyChain(unittest.TestCase):
    """Matrice de transition."""

    def test_deterministic_service_matches_two_state_chain(self):
        """delta=0.4, mu_e=1, c=2 : lignes [0.6, 0.4, 0], [0.6, 0.4, 0], [0, 0.6, 0.4]."""
        P = build_energy_chain(QueueSpec(delta=0.4, mu_e=1.0, capacity=2))
        expected = np.array([[0.6, 0.4, 0.0], [0.6, 0.4, 0.0], [0.0, 0.6, 0.4]])
        np.testing.assert_allclose(P.entries, expected, atol=1e-15)

    def test_no_arrivals_keeps_mass_at_zero(self):
        """delta=0 : l'etat 0 est absorbant."""
        P = build_energy_chain(QueueSpec(delta=0.0, mu_e=1.0, capacity=3))
        self.assertEqual(P.entries[0, 0], 1.0)
        self.assertEqual(P.size, 4)
        self.assertEqual(list(reachable_states(P)), [0])

    def test_general_service_probability(self):
        """delta=0.5, mu_e=0.5, c=2 : lignes [0.5, 0.5, 0], [0.25, 0.5, 0.25], [0, 0.25, 0.75]."""
        P = build_energy_chain(QueueSpec(delta=0.5, mu_e=0.5, capacity=2))
        expected = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.25, 0.75]])
        np.testing.assert_allclose(P.entries, expected, atol=1e-15)

    def test_capacity_one(self):
        """c=1 : l'etat 1 est a la fois le premier etat occupe et l'etat plein."""
        P = build_energy_chain(QueueSpec(delta=0.3, mu_e=0.6, capacity=1))
        np.testing.assert_allclose(P.entries, [[0.7, 0.3], [0.6 * 0.7, 0.6 * 0.3 + 0.4]], atol=1e-15)

    def test_stochastic_and_banded_for_random_specs(self):
        """Lignes stochastiques a 1e-12 pres et bande |i - j| <= 1 sur des parametres aleatoires."""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            spec = QueueSpec(
                delta=float(rng.uniform(0.0, 1.0)),
                mu_e=float(rng.uniform(0.0, 1.0)),
                capacity=int(rng.integers(1, 60)),
            )
            P = build_energy_chain(spec).entries
            self.assertTrue(np.all(P >= 0.0) and np.all(P <= 1.0))
            self.assertLessEqual(np.max(np.abs(P.sum(axis=1) - 1.0)), 1e-12)
            i, j = np.indices(P.shape)
            self.assertTrue(np.all(P[np.abs(i - j) >= 2] == 0.0))

    def test_boundary_parameters(self):
        """Coins du carre de parametres : matrices valides."""
        for delta in (0.0, 1.0):
            for mu_e in (0.0, 1.0):
                build_energy_chain(QueueSpec(delta=delta, mu_e=mu_e, capacity=4)).validate()

    def test_invalid_parameters_rejected(self):
        """Probabilite hors de [0, 1] ou capacite < 1 : erreur de parametre."""
        with self.assertRaises(InvalidParameterError):
            QueueSpec.build(delta=1.2, mu_e=1.0, capacity=3)
        with self.assertRaises(InvalidParameterError):
            QueueSpec.build(delta=0.5, mu_e=-0.1, capacity=3)
        with self.assertRaises(InvalidParameterError):
            QueueSpec.build(delta=0.5, mu_e=1.0, capacity=0)
        with self.assertRaises(ValueError):
            QueueSpec(delta=float("nan"), capacity=2)

    def test_unbounded_capacity_rejected(self):
        """La chaine exacte exige une capacite finie."""
        with self.assertRaises(UnboundedCapacityError):
            build_energy_chain(QueueSpec(delta=0.5, capacity="inf"))

    def test_as_frame_labels(self):
        """La vue pandas est indexee par les occupations."""
        frame = build_energy_chain(QueueSpec(delta=0.5, capacity=3)).as_frame()
        self.assertEqual(list(frame.index), [0, 1, 2, 3])
        self.assertEqual(list(frame.columns), [0, 1, 2, 3])


class TestSolveStationary(unittest.TestCase):
    """Distribution stationnaire."""

    def test_two_stationary_states(self):
        """delta=0.7, mu_e=1, c=10 : pi_0=0.3, pi_1=0.7, le reste nul."""
        solution = solve_stationary(build_energy_chain(QueueSpec(delta=0.7, mu_e=1.0, capacity=10)))
        self.assertEqual(solution.support, [0, 1])
        pi = solution.pi
        self.assertAlmostEqual(pi[0], 0.3, places=12)
        self.assertAlmostEqual(pi[1], 0.7, places=12)
        self.assertTrue(np.all(pi[2:] <= 1e-12))

    def test_empty_queue_absorbing(self):
        """delta=0 : pi = (1, 0, ..., 0)."""
        pi = solve_stationary(build_energy_chain(QueueSpec(delta=0.0, mu_e=1.0, capacity=5))).pi
        np.testing.assert_array_equal(pi, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_general_service_matches_power_iteration(self):
        """delta=0.5, mu_e=0.5, c=2 : resolution directe et iteration de puissance a 1e-10."""
        P = build_energy_chain(QueueSpec(delta=0.5, mu_e=0.5, capacity=2))
        direct = solve_stationary(P)
        power = power_iteration_stationary(P, tol=1e-14)
        self.assertLessEqual(np.max(np.abs(direct.pi - power.pi)), 1e-10)
        self.assertEqual(power.method, "power")
        self.assertGreater(power.iterations, 0)

    def test_solution_is_stationary_and_normalised(self):
        """pi P = pi a 1e-10 pres, somme 1 a 1e-12 pres, entrees >= 0."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            P = build_energy_chain(_random_spec(rng))
            pi = solve_stationary(P).pi
            self.assertTrue(np.all(pi >= 0.0))
            self.assertAlmostEqual(float(pi.sum()), 1.0, delta=1e-12)
            self.assertLessEqual(np.max(np.abs(pi @ P.entries - pi)), 1e-10)

    def test_correction_on_preset_grid(self):
        """mu_e=1 : pi_0=1-delta, pi_1=delta, masse des etats >= 2 <= 1e-12 sur toute la grille."""
        for delta in GRID_DELTAS:
            for capacity in GRID_CAPACITIES:
                pi = solve_stationary(build_energy_chain(QueueSpec(delta=delta, capacity=capacity))).pi
                self.assertAlmostEqual(pi[0], 1.0 - delta, delta=1e-12)
                self.assertAlmostEqual(pi[1], delta, delta=1e-12)
                self.assertLessEqual(float(pi[2:].sum()), 1e-12)

    def test_capacity_invariance(self):
        """mu_e=1 : la probabilite non vide ne depend pas de c (ecart <= 1e-12)."""
        for delta in GRID_DELTAS:
            values = [
                nonempty_prob(solve_stationary(build_energy_chain(QueueSpec(delta=delta, capacity=c))))
                for c in (1, 2, 5, 10, 50, 500)
            ]
            self.assertLessEqual(max(values) - min(values), 1e-12)

    def test_monotone_in_delta(self):
        """mu_e=1 : strictement croissante en delta."""
        deltas = np.linspace(0.0, 1.0, 41)
        values = [nonempty_prob(solve_stationary(build_energy_chain(QueueSpec(delta=float(d), capacity=5)))) for d in deltas]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

    def test_direct_and_power_agree_on_random_instances(self):
        """200 instances aleatoires (c <= 50) : ecart max <= 1e-10."""
        rng = np.random.default_rng(12345)
        for _ in range(200):
            P = build_energy_chain(_random_spec(rng))
            direct = solve_stationary(P, method="direct")
            power = solve_stationary(P, tol=1e-14, method="power")
            self.assertLessEqual(np.max(np.abs(direct.pi - power.pi)), 1e-10)

    def test_power_default_tolerance_matches_direct(self):
        """Tolerance par defaut de la methode power : ecart max <= 1e-10 avec la methode directe (graine 3)."""
        rng = np.random.default_rng(3)
        for _ in range(200):
            P = build_energy_chain(_random_spec(rng))
            direct = solve_stationary(P)
            power = solve_stationary(P, method="power")
            self.assertLessEqual(np.max(np.abs(direct.pi - power.pi)), 1e-10)
            self.assertLessEqual(power.residual, settings.power_tol)

    def test_absorbing_full_state_when_no_service(self):
        """mu_e=0 : toute la masse finit a l'etat plein."""
        pi = solve_stationary(build_energy_chain(QueueSpec(delta=0.4, mu_e=0.0, capacity=3))).pi
        np.testing.assert_allclose(pi, [0.0, 0.0, 0.0, 1.0], atol=1e-12)

    def test_power_iteration_budget_exhausted(self):
        """Budget epuise : erreur de non convergence avec le residu atteint."""
        P = build_energy_chain(QueueSpec(delta=0.5, mu_e=0.5, capacity=20))
        with self.assertRaises(NonConvergenceError) as ctx:
            power_iteration_stationary(P, tol=1e-14, max_iter=3)
        self.assertGreater(ctx.exception.residual, 1e-14)
        self.assertEqual(ctx.exception.iterations, 3)

    def test_unknown_method_and_negative_tolerance(self):
        """Methode inconnue ou tolerance negative : erreur de parametre."""
        P = build_energy_chain(QueueSpec(delta=0.5, capacity=2))
        with self.assertRaises(InvalidParameterError):
            solve_stationary(P, method="eig")
        with self.assertRaises(InvalidParameterError):
            solve_stationary(P, tol=-1.0)


class TestNonemptyProb(unittest.TestCase):
    """Pr{B != 0}."""

    def test_equals_delta_with_deterministic_service(self):
        """delta=0.7, mu_e=1, toute capacite : 0.7."""
        for capacity in (1, 3, 30):
            pi = solve_stationary(build_energy_chain(QueueSpec(delta=0.7, capacity=capacity)))
            self.assertAlmostEqual(nonempty_prob(pi), 0.7, places=12)

    def test_deterministic_service_equals_delta_up_to_rounding(self):
        """delta in {0.1, 0.2}, c=50 : delta a quelques ulp pres (egalite exacte non garantie)."""
        for delta in (0.1, 0.2):
            value = nonempty_prob(solve_stationary(build_energy_chain(QueueSpec(delta=delta, capacity=50))))
            self.assertLessEqual(abs(value - delta), 8 * np.spacing(delta))

    def test_empty_distribution(self):
        """pi = (1, 0, ..., 0) : 0."""
        self.assertEqual(nonempty_prob(StationaryDistribution(pi=np.array([1.0, 0.0, 0.0]))), 0.0)

    def test_general_service_against_power_iteration(self):
        """delta=0.5, mu_e=0.5, c=2 : 1 - pi_0 de l'oracle par iteration de puissance."""
        P = build_energy_chain(QueueSpec(delta=0.5, mu_e=0.5, capacity=2))
        oracle = power_iteration_stationary(P, tol=1e-15)
        self.assertAlmostEqual(nonempty_prob(solve_stationary(P)), 1.0 - oracle.pi[0], delta=1e-10)
        # forme produit : poids (1, 2, 2) -> pi_0 = 1/5
        self.assertAlmostEqual(nonempty_prob(solve_stationary(P)), 0.8, places=12)


if __name__ == '__main__':
    unittest.main()
