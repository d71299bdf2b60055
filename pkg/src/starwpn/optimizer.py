"""Genetic-algorithm allocation of time and power under an age constraint.

Two problems are solved, one per NOMA scheme.  P1 (time-switching scheme)
optimizes (alpha_ap, beta_r) with the two charging fractions tied equal,
alpha_t = alpha_r = (1 - alpha_ap)/2; P2 (energy-splitting scheme) optimizes
(alpha_et, beta_r) with alpha_it = 1 - alpha_et.  Both decision variables
live in (0.01, 0.99) through a linear binary code, so the protocol equality
constraints hold for every individual by construction.  The age constraint
is enforced through an additive penalty on the fitness.

Chromosomes are fixed-length bit arrays; selection is truncation-style (a
top fraction of the ranked population fathers children, mothers are drawn
uniformly), crossover is single-point, mutation is per-bit, and a configured
number of elites survives unchanged.  Fitness evaluation is vectorized
across the whole population and memoized by chromosome.
"""

import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import analytics, system
from .channel import QuadratureRule, gauss_hermite_rule

VAR_LO = 0.01
VAR_HI = 0.99

_AOI_CAP = 1e12  # age assigned when the success probability underflows

PROBLEM_SCHEME = {"p1": "tep", "p2": "eep"}


@dataclass(frozen=True)
class GaConfig:
    """Hyperparameters of the binary-coded GA."""

    population: int = 50
    generations: int = 100
    bits_per_var: int = 16
    selection_q: float = 0.8
    crossover_p: float = 0.8
    mutation_p: float = 0.01
    penalty_coef: float = 1e3
    seed: int = 20240811
    elitism: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.bits_per_var < 4:
            raise ValueError("bits_per_var must be >= 4")
        if not (0.0 < self.selection_q < 1.0):
            raise ValueError("selection_q must lie in (0,1)")
        if not (0.0 < self.crossover_p <= 1.0):
            raise ValueError("crossover_p must lie in (0,1]")
        if not (0.0 <= self.mutation_p < 1.0):
            raise ValueError("mutation_p must lie in [0,1)")
        if self.penalty_coef <= 0:
            raise ValueError("penalty_coef must be > 0")
        if not (0 <= self.elitism < self.population):
            raise ValueError("elitism must satisfy 0 <= elitism < population")


@dataclass(frozen=True)
class Allocation:
    """Decision variables of one individual.

    alpha is the uplink fraction alpha_ap for the time-switching scheme and
    the charging fraction alpha_et for the energy-splitting scheme.  The
    remaining protocol fractions follow from the equality constraints; the
    extended four-variable mode may override the tied charging fractions.
    """

    scheme: str
    alpha: float
    beta_r: float
    alpha_t: float = None
    alpha_r: float = None

    def __post_init__(self):
        if self.scheme not in ("tep", "eep"):
            raise ValueError(f"scheme must be 'tep' or 'eep', got {self.scheme!r}")
        for name in ("alpha", "beta_r"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie strictly inside (0,1), got {v}")

    def policy(self):
        if self.scheme == "tep":
            alpha_t = (1.0 - self.alpha) / 2.0 if self.alpha_t is None else self.alpha_t
            alpha_r = (1.0 - self.alpha) / 2.0 if self.alpha_r is None else self.alpha_r
            return system.TepPolicy(
                alpha_t=alpha_t,
                alpha_r=alpha_r,
                alpha_ap=self.alpha,
                beta_t=1.0 - self.beta_r,
                beta_r=self.beta_r,
            )
        return system.EepPolicy(
            alpha_et=self.alpha,
            alpha_it=1.0 - self.alpha,
            beta_t=1.0 - self.beta_r,
            beta_r=self.beta_r,
        )


@dataclass(frozen=True)
class GaResult:
    """Best allocation found, its metrics, and the per-generation trace."""

    best: Allocation
    best_fitness: float
    best_throughput: float
    feasible: bool
    history: tuple
    aoi_at_best: float
    generations_to_best: int


def _bits_to_unit(bits: np.ndarray, bits_per_var: int) -> np.ndarray:
    """Rows of bits -> per-variable values in (VAR_LO, VAR_HI), linear code."""
    rows, width = bits.shape
    if width % bits_per_var:
        raise ValueError(f"bitstring length {width} is not a multiple of {bits_per_var}")
    nvar = width // bits_per_var
    weights = 2.0 ** np.arange(bits_per_var - 1, -1, -1)
    levels = bits.reshape(rows, nvar, bits_per_var) @ weights
    return VAR_LO + (VAR_HI - VAR_LO) * levels / (2.0**bits_per_var - 1.0)


def encode(alloc: Allocation, bits_per_var: int = 16) -> np.ndarray:
    """Quantize an allocation to its chromosome (two variables)."""
    top = 2**bits_per_var - 1
    out = np.empty(2 * bits_per_var, dtype=np.uint8)
    for i, v in enumerate((alloc.alpha, alloc.beta_r)):
        level = int(round((v - VAR_LO) / (VAR_HI - VAR_LO) * top))
        level = min(max(level, 0), top)
        out[i * bits_per_var : (i + 1) * bits_per_var] = [
            (level >> shift) & 1 for shift in range(bits_per_var - 1, -1, -1)
        ]
    return out


def decode(bits: np.ndarray, scheme: str, bits_per_var: int = 16) -> Allocation:
    """Inverse of encode; rejects chromosomes that are not two variables long."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size != 2 * bits_per_var:
        raise ValueError(f"expected {2 * bits_per_var} bits, got shape {bits.shape}")
    alpha, beta_r = _bits_to_unit(bits[None, :], bits_per_var)[0]
    return Allocation(scheme=scheme, alpha=float(alpha), beta_r=float(beta_r))


def _batch_policies(scheme: str, values: np.ndarray, extended: bool):
    """Vectorized policy views (plain namespaces) for coefficient formulas."""
    if scheme == "tep":
        if extended:
            raw = values[:, :3]
            share = raw / raw.sum(axis=1, keepdims=True)
            alpha_t, alpha_r, alpha_ap = share[:, 0], share[:, 1], share[:, 2]
            beta_r = values[:, 3]
        else:
            alpha_ap = values[:, 0]
            alpha_t = alpha_r = (1.0 - alpha_ap) / 2.0
            beta_r = values[:, 1]
        return SimpleNamespace(
            alpha_t=alpha_t,
            alpha_r=alpha_r,
            alpha_ap=alpha_ap,
            beta_t=1.0 - beta_r,
            beta_r=beta_r,
        )
    alpha_et = values[:, 0]
    beta_r = values[:, 1]
    return SimpleNamespace(
        alpha_et=alpha_et,
        alpha_it=1.0 - alpha_et,
        beta_t=1.0 - beta_r,
        beta_r=beta_r,
    )


def evaluate_batch(
    scheme: str,
    config: system.SystemConfig,
    values: np.ndarray,
    delta_th: float,
    quad: QuadratureRule,
    penalty_coef: float,
    extended: bool = False,
    chunk: int = 4096,
):
    """Penalized fitness, raw throughput, and age for rows of variables."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    fit_t = analytics.fit_for_user(config, "t")
    fit_r = analytics.fit_for_user(config, "r")
    fitness = np.empty(values.shape[0])
    throughput = np.empty(values.shape[0])
    aoi = np.empty(values.shape[0])
    for start in range(0, values.shape[0], chunk):
        rows = values[start : start + chunk]
        pol = _batch_policies(scheme, rows, extended)
        c_t, c_r = system.snr_coefficients(scheme, pol, config)
        p_t, p_r, phi = analytics.noma_metrics_batch(
            fit_t, fit_r, c_t, c_r, config.snr_threshold, quad
        )
        duration = pol.alpha_ap if scheme == "tep" else pol.alpha_it
        tput = config.rate * duration * (2.0 - p_t - p_r)
        age = 1.0 / np.maximum(phi, 1.0 / _AOI_CAP)
        sl = slice(start, start + rows.shape[0])
        throughput[sl] = tput
        aoi[sl] = age
        fitness[sl] = tput - penalty_coef * np.maximum(0.0, age - delta_th)
    return fitness, throughput, aoi


def penalized_fitness(
    alloc: Allocation,
    config: system.SystemConfig,
    delta_th: float,
    quad: QuadratureRule,
    penalty_coef: float = 1e3,
) -> float:
    """Throughput minus the linear age-violation penalty for one allocation."""
    if not (delta_th > 1.0):
        raise ValueError(f"delta_th must exceed 1, got {delta_th}")
    extended = alloc.scheme == "tep" and alloc.alpha_t is not None
    if extended:
        pol = alloc.policy()
        values = np.array([[pol.alpha_t, pol.alpha_r, pol.alpha_ap, pol.beta_r]])
    else:
        values = np.array([[alloc.alpha, alloc.beta_r]])
    fitness, _, _ = evaluate_batch(
        alloc.scheme, config, values, delta_th, quad, penalty_coef, extended=extended
    )
    return float(fitness[0])


def grid_search(
    problem: str,
    config: system.SystemConfig,
    delta_th: float,
    quad: QuadratureRule,
    steps: int = 256,
    penalty_coef: float = 1e3,
):
    """Exhaustive penalized-fitness search on a steps x steps variable grid.

    Returns (alpha, beta_r, fitness) of the best cell; used as the oracle
    the GA is checked against.
    """
    scheme = _problem_scheme(problem)
    axis = np.linspace(VAR_LO, VAR_HI, steps)
    aa, bb = np.meshgrid(axis, axis, indexing="ij")
    values = np.column_stack([aa.ravel(), bb.ravel()])
    fitness, _, _ = evaluate_batch(scheme, config, values, delta_th, quad, penalty_coef)
    best = int(np.argmax(fitness))
    return float(values[best, 0]), float(values[best, 1]), float(fitness[best])


def _problem_scheme(problem: str) -> str:
    key = problem.lower()
    if key in PROBLEM_SCHEME:
        return PROBLEM_SCHEME[key]
    if key in ("tep", "eep"):
        return key
    raise ValueError(f"problem must be 'p1'/'p2' (or a scheme name), got {problem!r}")


def ga_run(
    problem: str,
    config: system.SystemConfig,
    delta_th: float,
    ga: GaConfig,
    quad: QuadratureRule = None,
    extended: bool = False,
) -> GaResult:
    """Run the GA and return the best allocation with its audit trail.

    Deterministic in ga.seed.  If no evaluated individual ever satisfies the
    age constraint, the least-violating one is returned with feasible=False.
    """
    if not (delta_th > 1.0):
        raise ValueError(f"delta_th must exceed 1, got {delta_th}")
    scheme = _problem_scheme(problem)
    if extended and scheme != "tep":
        raise ValueError("the four-variable extended mode applies to P1 only")
    if quad is None:
        quad = gauss_hermite_rule(30)
    nvar = 4 if extended else 2
    width = nvar * ga.bits_per_var
    rng = np.random.default_rng(np.random.SeedSequence(ga.seed))
    pop = rng.integers(0, 2, size=(ga.population, width), dtype=np.uint8)

    memo = {}
    history = []
    best_bits = None
    best_fit = -math.inf
    best_gen = 0
    least_bits = None
    least_violation = math.inf
    least_fit = -math.inf
    any_feasible = False

    def evaluate(rows: np.ndarray) -> np.ndarray:
        keys = [rows[i].tobytes() for i in range(rows.shape[0])]
        fresh = [i for i, k in enumerate(keys) if k not in memo]
        if fresh:
            values = _bits_to_unit(rows[fresh], ga.bits_per_var)
            fit, tput, age = evaluate_batch(
                scheme, config, values, delta_th, quad, ga.penalty_coef, extended=extended
            )
            for j, i in enumerate(fresh):
                memo[keys[i]] = (float(fit[j]), float(tput[j]), float(age[j]))
        return np.array([memo[k][0] for k in keys])

    for gen in range(1, ga.generations + 1):
        fitness = evaluate(pop)
        order = np.argsort(-fitness, kind="stable")
        gen_best = float(fitness[order[0]])
        history.append(gen_best)
        if gen_best > best_fit:
            best_fit = gen_best
            best_bits = pop[order[0]].copy()
            best_gen = gen
        for i in order:
            _, _, age = memo[pop[i].tobytes()]
            if age < delta_th:
                any_feasible = True
                break
            violation = age - delta_th
            f = float(fitness[i])
            if violation < least_violation or (violation == least_violation and f > least_fit):
                least_violation = violation
                least_fit = f
                least_bits = pop[i].copy()

        if gen == ga.generations:
            break

        nxt = np.empty_like(pop)
        elite = pop[order[: ga.elitism]]
        nxt[: ga.elitism] = elite
        pool = order[: max(1, math.ceil(ga.selection_q * ga.population))]
        children = ga.population - ga.elitism
        fathers = pop[pool[rng.integers(0, pool.size, size=children)]]
        mothers = pop[rng.integers(0, ga.population, size=children)]
        cross = rng.random(children) < ga.crossover_p
        cuts = rng.integers(1, width, size=children)
        for i in range(children):
            child = fathers[i].copy()
            if cross[i]:
                child[cuts[i] :] = mothers[i, cuts[i] :]
            nxt[ga.elitism + i] = child
        flip = rng.random((children, width)) < ga.mutation_p
        nxt[ga.elitism :] ^= flip.astype(np.uint8)
        pop = nxt

    # resolve the returned allocation: best feasible if one exists
    if any_feasible:
        chosen, _ = _best_feasible(memo, delta_th)
        feasible = True
    else:
        chosen = least_bits.tobytes() if least_bits is not None else best_bits.tobytes()
        feasible = False
    fit_val, tput_val, age_val = memo[chosen]
    values = _bits_to_unit(np.frombuffer(chosen, dtype=np.uint8)[None, :], ga.bits_per_var)[0]
    if extended:
        raw = values[:3] / values[:3].sum()
        alloc = Allocation(
            scheme=scheme,
            alpha=float(raw[2]),
            beta_r=float(values[3]),
            alpha_t=float(raw[0]),
            alpha_r=float(raw[1]),
        )
    else:
        alloc = Allocation(scheme=scheme, alpha=float(values[0]), beta_r=float(values[1]))
    return GaResult(
        best=alloc,
        best_fitness=fit_val,
        best_throughput=tput_val,
        feasible=feasible,
        history=tuple(history),
        aoi_at_best=age_val,
        generations_to_best=best_gen,
    )


def _best_feasible(memo: dict, delta_th: float):
    """Highest-fitness chromosome among all evaluated feasible ones."""
    best_key = None
    best_fit = -math.inf
    for key, (fit, _, age) in memo.items():
        if age < delta_th and fit > best_fit:
            best_fit = fit
            best_key = key
    return best_key, best_fit
