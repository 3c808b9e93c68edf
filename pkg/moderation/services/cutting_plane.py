"""
Recomendações de baixo regret por planos de corte.

O moderador mantém o conjunto de conhecimento C = B ∩ {w : ⟨w, q_t⟩ ≥ 0},
consulta o centroide de C + ρB (estimado por hit-and-run), recomenda um CE do
jogo candidato e, quando algum agente desvia, corta C com o hiperplano
construído a partir do desvio.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .behavior import AgentPopulation, FeedbackRecord
from .ce_solver import FEAS_TOL, RegretLedger, StackedLayout, StackedParameter, round_regret, solve_ce, stack_game
from .exceptions import RunAbortedError
from .game_core import Mechanism, slice_mechanism

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-10
PROJECTION_MAX_ITER = 200
BURN_IN_FACTOR = 50
MIN_SAMPLER_BUDGET = 1000
DEFAULT_CHAINS = 32

# Fluxos do gerador da execução (o fluxo 0 e 1 pertencem à população)
_RECOMMEND_STREAM = 2
_SAMPLER_STREAM = 3


@dataclass(frozen=True, eq=False)
class SeparatingHyperplane:
    normal: np.ndarray
    provenance: Tuple[Tuple[int, int, int], ...] = ()


@dataclass(frozen=True, eq=False)
class KnowledgeSet:
    """Bola unitária intersectada com semiespaços pela origem (normais unitárias)."""

    dimension: int
    normals: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"Dimensão inválida: {self.dimension}")
        normals = (
            np.zeros((0, self.dimension))
            if self.normals is None
            else np.array(self.normals, dtype=float).reshape(-1, self.dimension)
        )
        normals.flags.writeable = False
        object.__setattr__(self, "normals", normals)

    @property
    def cut_count(self) -> int:
        return self.normals.shape[0]

    def apply_cut(self, cut: SeparatingHyperplane) -> "KnowledgeSet":
        normal = np.asarray(cut.normal, dtype=float)
        if normal.shape != (self.dimension,) or not np.all(np.isfinite(normal)):
            raise ValueError("Corte com forma inválida ou valores não finitos")
        norm = np.linalg.norm(normal)
        if norm == 0:
            return self
        return KnowledgeSet(self.dimension, np.vstack([self.normals, normal / norm]))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.linalg.norm(points, axis=1) <= 1.0 + tol
        if self.cut_count:
            inside &= np.all(points @ self.normals.T >= -tol, axis=1)
        return inside

    def _lower_bound(self, points: np.ndarray) -> np.ndarray:
        """Maior distância a um único conjunto: limite inferior da distância a C."""
        bound = np.maximum(np.linalg.norm(points, axis=1) - 1.0, 0.0)
        if self.cut_count:
            bound = np.maximum(bound, np.max(-(points @ self.normals.T), axis=1))
        return bound

    def _dykstra(self, points: np.ndarray, radius: Optional[float] = None) -> np.ndarray:
        """Com radius, para quando todo iterado já está em C a distância ≤ radius."""
        current = points.copy()
        increments = np.zeros((self.cut_count + 1,) + points.shape)
        for _ in range(PROJECTION_MAX_ITER):
            previous = current.copy()
            for k, normal in enumerate(self.normals):
                shifted = current + increments[k]
                dots = shifted @ normal
                current = shifted - np.minimum(dots, 0.0)[:, None] * normal
                increments[k] = shifted - current
            shifted = current + increments[-1]
            norms = np.linalg.norm(shifted, axis=1)
            current = shifted / np.maximum(norms, 1.0)[:, None]
            increments[-1] = shifted - current
            if np.max(np.abs(current - previous)) < PROJECTION_TOL:
                break
            if radius is not None and np.all(
                self.contains(current, tol=1e-12) & (np.linalg.norm(points - current, axis=1) <= radius)
            ):
                break
        return current

    def project(self, points: np.ndarray) -> np.ndarray:
        """Projeção euclidiana em C por projeções alternadas de Dykstra."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._dykstra(points)

    def distance(self, points: np.ndarray, radius: Optional[float] = None) -> np.ndarray:
        """dist(x, C); com radius, valores ≤ radius podem vir como limite superior."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        result = self._lower_bound(points)
        pending = result > 0

        # Projeção no conjunto mais violado; se cair em C, é a projeção exata
        if np.any(pending):
            candidates = points[pending]
            norms = np.linalg.norm(candidates, axis=1)
            projected = candidates / np.maximum(norms, 1.0)[:, None]
            if self.cut_count:
                dots = candidates @ self.normals.T
                worst = np.argmin(dots, axis=1)
                cut_violation = -dots[np.arange(len(candidates)), worst]
                onto_cut = candidates + np.maximum(cut_violation, 0.0)[:, None] * self.normals[worst]
                projected = np.where((cut_violation > norms - 1.0)[:, None], onto_cut, projected)
            exact = self.contains(projected, tol=1e-12)
            indices = np.flatnonzero(pending)
            pending[indices[exact]] = False

        if np.any(pending):
            candidates = points[pending]
            result[pending] = np.linalg.norm(candidates - self._dykstra(candidates, radius), axis=1)
        return result

    def within(self, points: np.ndarray, radius: float) -> np.ndarray:
        """dist(x, C) ≤ radius; Dykstra só para os pontos não decididos pelos limites."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lower = self._lower_bound(points)
        result = lower == 0
        ambiguous = (lower > 0) & (lower <= radius)
        if np.any(ambiguous):
            result[ambiguous] = self.distance(points[ambiguous], radius) <= radius
        return result


@dataclass
class CentroidEstimate:
    point: np.ndarray
    standard_error: np.ndarray
    samples: int


def build_oracle_cut(
    mechanism: Mechanism, recommended: int, realized: int, layout: StackedLayout
) -> SeparatingHyperplane:
    """q com ⟨w, q⟩ = Σ_i φ_i(rec_i, real_i, x) para todo w empilhado."""
    if recommended == realized:
        raise ValueError("Sem desvio: não há corte a construir")
    indexing = layout.indexing
    normal = np.zeros(layout.size)
    provenance = []
    for agent, (rec, real) in enumerate(zip(indexing.decode(recommended), indexing.decode(realized))):
        if rec == real:
            continue
        belief = slice_mechanism(mechanism, agent, rec)
        if rec != 0:
            normal[layout.block(agent, rec)] -= belief
        if real != 0:
            normal[layout.block(agent, real)] += belief
        provenance.append((agent, rec, real))
    return SeparatingHyperplane(normal, tuple(provenance))


def interior_start(knowledge: KnowledgeSet) -> np.ndarray:
    """Ponto estritamente dentro de todos os cortes (norma 1/2), ou 0."""
    if not knowledge.cut_count:
        return np.zeros(knowledge.dimension)
    size = knowledge.dimension
    # variáveis (w, s): max s sujeito a s − ⟨q_k, w⟩ ≤ 0, |w_j| ≤ 1, s ≤ 1
    objective = np.zeros(size + 1)
    objective[-1] = -1.0
    a_ub = np.hstack([-knowledge.normals, np.ones((knowledge.cut_count, 1))])
    bounds = [(-1.0, 1.0)] * size + [(None, 1.0)]
    result = linprog(
        objective, A_ub=a_ub, b_ub=np.zeros(knowledge.cut_count), bounds=bounds, method="highs"
    )
    if result.status != 0 or result.x[-1] <= 1e-9:
        logger.warning("Cortes sem interior estrito; amostrador parte de w = 0")
        return np.zeros(size)
    direction = result.x[:size]
    return 0.5 * direction / np.linalg.norm(direction)


def _chord(points, directions, knowledge, radius, offset):
    """Intervalo [t_lo, t_hi] de x + t u dentro de B(radius) ∩ {⟨q, w⟩ ≥ −offset}."""
    b = np.einsum("ij,ij->i", points, directions)
    c = np.einsum("ij,ij->i", points, points) - radius**2
    root = np.sqrt(np.maximum(b**2 - c, 0.0))
    low, high = -b - root, -b + root
    if knowledge.cut_count:
        along = directions @ knowledge.normals.T
        level = points @ knowledge.normals.T + offset
        with np.errstate(divide="ignore", invalid="ignore"):
            limit = -level / along
        low = np.maximum(low, np.max(np.where(along > 0, limit, -np.inf), axis=1))
        high = np.minimum(high, np.min(np.where(along < 0, limit, np.inf), axis=1))
    return low, high


def _hit_and_run_step(points, knowledge, rho, rng):
    """
    Proposta uniforme na corda do envelope B(1+ρ) ∩ {⟨q, w⟩ ≥ −ρ}.

    A corda é a mesma para todo ponto da reta, então aceitar quando o
    proposto cai em C + ρB (e ficar parado caso contrário) preserva a
    distribuição uniforme.
    """
    directions = rng.standard_normal(points.shape)
    directions /= np.linalg.norm(directions, axis=1)[:, None]

    outer_low, outer_high = _chord(points, directions, knowledge, 1.0 + rho, rho)
    steps = rng.uniform(outer_low, np.maximum(outer_high, outer_low))
    proposals = points + steps[:, None] * directions

    # na corda de C estendida por ρ a pertinência é garantida
    in_core = knowledge.contains(points, tol=0.0)
    core_low, core_high = _chord(points, directions, knowledge, 1.0, 0.0)
    accepted = in_core & (steps >= core_low - rho) & (steps <= core_high + rho) & (core_low <= core_high)
    pending = ~accepted
    if np.any(pending):
        accepted[pending] = knowledge.within(proposals[pending], rho)
    return np.where(accepted[:, None], proposals, points)


def buffered_centroid(
    knowledge: KnowledgeSet,
    rho: float,
    budget: int = MIN_SAMPLER_BUDGET,
    rng: Optional[np.random.Generator] = None,
    chains: int = DEFAULT_CHAINS,
) -> CentroidEstimate:
    """
    Centroide de C + ρB por hit-and-run em cadeias paralelas.

    Aquecimento de 50·N passos, uma amostra a cada N passos; o erro padrão
    vem das médias por cadeia.
    """
    if budget < MIN_SAMPLER_BUDGET:
        raise ValueError(f"Orçamento do amostrador precisa ser ≥ {MIN_SAMPLER_BUDGET}: {budget}")
    if not rho > 0:
        raise ValueError(f"ρ precisa ser positivo: {rho}")
    rng = rng or np.random.default_rng()
    size = knowledge.dimension
    points = np.tile(interior_start(knowledge), (chains, 1))

    for _ in range(BURN_IN_FACTOR * size):
        points = _hit_and_run_step(points, knowledge, rho, rng)

    per_chain = math.ceil(budget / chains)
    collected = np.zeros((per_chain, chains, size))
    for sample in range(per_chain):
        for _ in range(size):
            points = _hit_and_run_step(points, knowledge, rho, rng)
        collected[sample] = points

    chain_means = collected.mean(axis=0)
    centroid = chain_means.mean(axis=0)
    error = chain_means.std(axis=0, ddof=1) / math.sqrt(chains) if chains > 1 else np.zeros(size)
    return CentroidEstimate(centroid, error, per_chain * chains)


@dataclass
class LowRegretResult:
    ledger: RegretLedger
    transcript: List[dict]
    knowledge: KnowledgeSet
    true_parameter: np.ndarray


def run_low_regret(
    population: AgentPopulation,
    horizon: int,
    seed: int = 0,
    sampler_budget: int = MIN_SAMPLER_BUDGET,
    chains: int = DEFAULT_CHAINS,
    rho: Optional[float] = None,
    feas_tol: float = FEAS_TOL,
) -> LowRegretResult:
    """
    Laço de recomendações contra a população simulada.

    O CE só é recalculado após uma rodada com desvio; sem desvio o mesmo
    mecanismo é reamostrado. Regret e auditorias usam o jogo verdadeiro
    normalizado (‖w⋆‖ = 1).
    """
    if horizon < 1:
        raise ValueError(f"Horizonte precisa ser ≥ 1: {horizon}")
    rho = 1.0 / horizon if rho is None else rho
    stacked = stack_game(population.game)
    layout = stacked.layout
    norm = stacked.norm()
    game = population.game.scaled(1.0 / norm) if norm > 0 else population.game
    true_parameter = stacked.values / norm if norm > 0 else stacked.values.copy()

    knowledge = KnowledgeSet(layout.size)
    ledger = RegretLedger()
    transcript: List[dict] = []
    mechanism = None
    query = None
    standard_error = 0.0
    deviated = True

    logger.info(f"Iniciando {horizon} rodadas (N = {layout.size}, ρ = {rho:.3g})")
    try:
        for round_index in range(1, horizon + 1):
            if deviated:
                sampler = np.random.default_rng([seed, _SAMPLER_STREAM, round_index])
                estimate = buffered_centroid(knowledge, rho, sampler_budget, sampler, chains)
                query = estimate.point
                standard_error = float(estimate.standard_error.max())
                mechanism = solve_ce(StackedParameter(query, layout), feas_tol=feas_tol)

            rng = np.random.default_rng([seed, _RECOMMEND_STREAM, round_index])
            recommended = mechanism.sample(rng)
            realized = population.sample_response(mechanism, recommended, round_index)
            feedback = FeedbackRecord(mechanism, recommended, realized, round_index)
            regret = ledger.record(round_regret(game, feedback))

            row = {
                "round": round_index,
                "digest": mechanism.digest(),
                "recommended": recommended,
                "realized": realized,
                "regret": regret,
                "cut_applied": False,
                "centroid_se": standard_error,
            }
            deviated = realized != recommended
            if deviated:
                cut = build_oracle_cut(mechanism, recommended, realized, layout)
                knowledge = knowledge.apply_cut(cut)
                row["cut_applied"] = True
                row["cut_true"] = float(true_parameter @ cut.normal)
                row["cut_query"] = float(query @ cut.normal)
                row["deviations"] = [list(d) for d in cut.provenance]
                logger.debug(
                    f"Rodada {round_index}: desvio {cut.provenance}, "
                    f"regret {regret:.3g}, {knowledge.cut_count} cortes"
                )
            transcript.append(row)
    except Exception as e:
        logger.error(f"Execução interrompida na rodada {len(transcript) + 1}: {e}")
        raise RunAbortedError(f"Execução interrompida: {e}", transcript) from e

    logger.info(f"Concluído: regret acumulado {ledger.total:.4g} em {horizon} rodadas")
    return LowRegretResult(ledger, transcript, knowledge, true_parameter)
