"""
Geometria da aprendibilidade.

Equivalência afim positiva entre jogos, leques normais restritos ao quadrante
positivo (d_i = 2), poliedro polarizado P + C° e decisão de
indistinguibilidade sob feedback de melhor resposta.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import PreconditionError
from .game_core import DEFAULT_TOL, Game, has_mixed_signs

logger = logging.getLogger(__name__)

EQUIVALENCE_TOL = 1e-8
ANGLE_TOL = 1e-9
PROPORTIONAL_TOL = 1e-9
DEFAULT_DIRECTIONS = 100_000


@dataclass(frozen=True, eq=False)
class UtilityPolytope:
    """Pontos u_i(a, ·) ∈ R^{d_i}, um por ação, com os rótulos das ações."""

    agent: int
    points: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError(f"Pontos com forma inválida: {points.shape}")
        labels = tuple(self.labels) or tuple(str(k) for k in range(points.shape[0]))
        if len(labels) != points.shape[0]:
            raise ValueError("Quantidade de rótulos difere da quantidade de pontos")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_game(cls, game: Game, agent: int) -> "UtilityPolytope":
        return cls(agent, game.utility_matrix(agent), game.action_labels[agent])

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def argmax(self, direction: np.ndarray, tol: float = DEFAULT_TOL) -> FrozenSet[int]:
        values = self.points @ np.asarray(direction, dtype=float)
        return frozenset(int(a) for a in np.flatnonzero(values >= values.max() - tol))


# Equivalência


@dataclass
class AgentFit:
    agent: int
    scale: float
    shift: List[float]
    residual: float

    @property
    def equivalent(self) -> bool:
        return self.scale > 0 and self.residual <= EQUIVALENCE_TOL


@dataclass
class EquivalenceReport:
    equivalent: bool
    agents: List[AgentFit]


def fit_affine(source: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray, float]:
    """(λ, t, resíduo) de target ≈ λ·source + 1 tᵀ por mínimos quadrados."""
    centered_source = source - source.mean(axis=0)
    centered_target = target - target.mean(axis=0)
    denominator = float(np.sum(centered_source**2))
    if denominator == 0:
        scale = 1.0
    else:
        scale = float(np.sum(centered_source * centered_target)) / denominator
    shift = (target - scale * source).mean(axis=0)
    residual = float(np.abs(target - scale * source - shift).max())
    return scale, shift, residual


def check_equivalence(g1: Game, g2: Game) -> EquivalenceReport:
    """g2 = (λ_i g1_i + t_i) com λ_i > 0 para todo agente?"""
    if g1.radices != g2.radices:
        raise PreconditionError(f"Jogos com formas diferentes: {g1.radices} e {g2.radices}")
    fits = []
    for agent in range(g1.agent_count):
        scale, shift, residual = fit_affine(g1.utility_matrix(agent), g2.utility_matrix(agent))
        fits.append(AgentFit(agent, scale, shift.tolist(), residual))
    return EquivalenceReport(all(fit.equivalent for fit in fits), fits)


# Leque normal restrito (d = 2)


def _direction(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


@dataclass(frozen=True)
class RestrictedFan2D:
    """
    Partição de [0, π/2] pela ação de maior utilidade na direção (cos θ, sin θ).

    breakpoints são crescentes; intervals[k] é o argmax no intervalo aberto
    entre breakpoints k−1 e k; ties[k] é o argmax no próprio breakpoint.
    edges guarda o argmax em θ = 0 e θ = π/2.
    """

    agent: int
    breakpoints: Tuple[float, ...]
    intervals: Tuple[FrozenSet[int], ...]
    ties: Tuple[FrozenSet[int], ...]
    edges: Tuple[FrozenSet[int], FrozenSet[int]]

    def label_at(self, angle: float) -> FrozenSet[int]:
        if not 0 <= angle <= math.pi / 2:
            raise ValueError(f"Ângulo fora do quadrante: {angle}")
        for k, breakpoint in enumerate(self.breakpoints):
            if angle < breakpoint:
                return self.intervals[k]
        return self.intervals[-1]


def _tie_angles(points: np.ndarray) -> List[float]:
    angles = []
    for a in range(points.shape[0]):
        for b in range(a + 1, points.shape[0]):
            d0, d1 = points[b] - points[a]
            if d0 * d1 < 0:
                angles.append(math.atan2(abs(d0), abs(d1)))
    return sorted(angles)


def _require_distinct(points: np.ndarray) -> None:
    if len({tuple(p) for p in points.tolist()}) != points.shape[0]:
        raise PreconditionError("Pontos coincidentes: entrada não genérica")


def restricted_fan_2d(polytope: UtilityPolytope, tol: float = DEFAULT_TOL) -> RestrictedFan2D:
    if polytope.dimension != 2:
        raise ValueError(f"Leque exato só para d = 2 (recebido d = {polytope.dimension})")
    _require_distinct(polytope.points)
    candidates = []
    for angle in _tie_angles(polytope.points):
        if 0 < angle < math.pi / 2 and (not candidates or angle - candidates[-1] > ANGLE_TOL):
            candidates.append(angle)

    bounds = [0.0] + candidates + [math.pi / 2]
    intervals = [
        polytope.argmax(_direction((low + high) / 2), tol) for low, high in zip(bounds, bounds[1:])
    ]
    ties = [polytope.argmax(_direction(angle), tol) for angle in candidates]

    # Mantém só os breakpoints onde o argmax muda de fato
    breakpoints, kept_intervals, kept_ties = [], [intervals[0]], []
    for angle, tie, following in zip(candidates, ties, intervals[1:]):
        if following == kept_intervals[-1] and tie == following:
            continue
        breakpoints.append(angle)
        kept_ties.append(tie)
        kept_intervals.append(following)

    edges = (polytope.argmax(_direction(0.0), tol), polytope.argmax(_direction(math.pi / 2), tol))
    return RestrictedFan2D(
        polytope.agent, tuple(breakpoints), tuple(kept_intervals), tuple(kept_ties), edges
    )


def fans_equal(
    f1: RestrictedFan2D, f2: RestrictedFan2D, compare_labels: bool = True, tol: float = ANGLE_TOL
) -> bool:
    if len(f1.breakpoints) != len(f2.breakpoints):
        return False
    if any(abs(a - b) > tol for a, b in zip(f1.breakpoints, f2.breakpoints)):
        return False
    if not compare_labels:
        return True
    return f1.intervals == f2.intervals and f1.ties == f2.ties and f1.edges == f2.edges


# Indistinguibilidade sob melhor resposta


@dataclass
class IndistinguishabilityReport:
    verdict: str
    mode: str
    witness: Optional[Dict] = None
    certified_agents: List[int] = field(default_factory=list)
    breakpoints: Dict[int, List[List[float]]] = field(default_factory=dict)
    samples: int = 0
    disagreement_bound: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "witness": self.witness,
            "certified_agents": self.certified_agents,
            "breakpoints": {str(k): v for k, v in self.breakpoints.items()},
            "samples": self.samples,
            "disagreement_bound": self.disagreement_bound,
        }


def _fan_witness(p1: UtilityPolytope, p2: UtilityPolytope, tol: float) -> Optional[np.ndarray]:
    """Direção onde os argmax diferem, testando cada trecho do refinamento comum."""
    angles = sorted(set(_tie_angles(p1.points)) | set(_tie_angles(p2.points)))
    bounds = [0.0] + [a for a in angles if 0 < a < math.pi / 2] + [math.pi / 2]
    probes = bounds + [(low + high) / 2 for low, high in zip(bounds, bounds[1:])]
    for angle in probes:
        direction = _direction(angle)
        if p1.argmax(direction, tol) != p2.argmax(direction, tol):
            return direction
    return None


def br_indistinguishable(
    g1: Game,
    g2: Game,
    mode: str = "exact2d",
    samples: int = DEFAULT_DIRECTIONS,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> IndistinguishabilityReport:
    """
    Compara os conjuntos de melhor resposta dos dois jogos agente a agente.

    Agentes com utilidades equivalentes já são certificados; nos demais,
    exact2d compara os leques (exige d_i = 2) e montecarlo sorteia direções
    Dirichlet(1, ..., 1) no ortante positivo.
    """
    if mode not in ("exact2d", "montecarlo"):
        raise ValueError(f"Modo desconhecido: {mode}")
    equivalence = check_equivalence(g1, g2)
    report = IndistinguishabilityReport(verdict="indistinguishable", mode=mode)
    pending = []
    for fit in equivalence.agents:
        if fit.equivalent:
            report.certified_agents.append(fit.agent)
        else:
            pending.append(fit.agent)

    if mode == "exact2d":
        for agent in pending:
            p1, p2 = UtilityPolytope.from_game(g1, agent), UtilityPolytope.from_game(g2, agent)
            if p1.dimension != 2:
                raise PreconditionError(
                    f"exact2d exige d_i = 2 para o agente {agent} (d = {p1.dimension})"
                )
            f1, f2 = restricted_fan_2d(p1, tol), restricted_fan_2d(p2, tol)
            report.breakpoints[agent] = [list(f1.breakpoints), list(f2.breakpoints)]
            if not fans_equal(f1, f2):
                direction = _fan_witness(p1, p2, tol)
                report.verdict = "distinguished"
                report.witness = {
                    "agent": agent,
                    "direction": direction.tolist() if direction is not None else None,
                    "best_responses": [
                        sorted(p1.argmax(direction, tol)), sorted(p2.argmax(direction, tol))
                    ] if direction is not None else None,
                }
                return report
        return report

    rng = np.random.default_rng(seed)
    for agent in pending:
        p1, p2 = UtilityPolytope.from_game(g1, agent), UtilityPolytope.from_game(g2, agent)
        directions = rng.dirichlet(np.ones(p1.dimension), size=samples)
        values1, values2 = directions @ p1.points.T, directions @ p2.points.T
        best1 = values1 >= values1.max(axis=1, keepdims=True) - tol
        best2 = values2 >= values2.max(axis=1, keepdims=True) - tol
        differs = np.flatnonzero(np.any(best1 != best2, axis=1))
        report.samples += samples
        if differs.size:
            k = int(differs[0])
            report.verdict = "distinguished"
            report.witness = {
                "agent": agent,
                "direction": directions[k].tolist(),
                "best_responses": [
                    np.flatnonzero(best1[k]).tolist(), np.flatnonzero(best2[k]).tolist()
                ],
            }
            return report
    if pending:
        # Regra do três: massa de desacordo ≤ 3/n com 95% de confiança
        report.verdict = "inconclusive"
        report.disagreement_bound = 3.0 / samples
    return report


# Poliedro polarizado (d = 2)


def pareto_filter(points: np.ndarray) -> List[int]:
    """Índices dos pontos componente a componente maximais (força bruta)."""
    points = np.asarray(points, dtype=float)
    keep = []
    for k, point in enumerate(points):
        dominated = any(
            np.all(other >= point) and np.any(other > point)
            for j, other in enumerate(points)
            if j != k
        )
        if not dominated:
            keep.append(k)
    return keep


@dataclass(frozen=True, eq=False)
class PolarizedPolygon:
    """
    P + C° com C° o ortante não positivo.

    pareto: maximais de Pareto em x crescente; extreme: o subconjunto que é
    vértice de P + C° (cadeia côncava superior direita).
    """

    source: UtilityPolytope
    pareto: Tuple[int, ...]
    extreme: Tuple[int, ...]

    def extreme_points(self) -> np.ndarray:
        return self.source.points[list(self.extreme)]

    def edge_normal_angles(self) -> List[float]:
        points = self.extreme_points()
        angles = []
        for start, end in zip(points, points[1:]):
            dx, dy = end - start
            angles.append(math.atan2(dx, -dy))
        return sorted(angles)


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def polarize_2d(polytope: UtilityPolytope) -> PolarizedPolygon:
    if polytope.dimension != 2:
        raise ValueError(f"Polarização exata só para d = 2 (recebido d = {polytope.dimension})")
    points = polytope.points
    _require_distinct(points)

    pareto = sorted(pareto_filter(points), key=lambda k: (points[k][0], -points[k][1]))
    chain: List[int] = []
    for k in pareto:
        while len(chain) >= 2 and _cross(points[chain[-2]], points[chain[-1]], points[k]) >= 0:
            chain.pop()
        chain.append(k)
    return PolarizedPolygon(polytope, tuple(pareto), tuple(chain))


def normal_equiv_2d(
    p1: PolarizedPolygon, p2: PolarizedPolygon, cross_check: bool = False
) -> bool:
    """Mesmas normais de aresta (no quadrante positivo) e mesma quantidade de vértices."""
    a1, a2 = p1.edge_normal_angles(), p2.edge_normal_angles()
    equal = len(p1.extreme) == len(p2.extreme) and all(
        abs(x - y) <= ANGLE_TOL for x, y in zip(a1, a2)
    )
    if cross_check:
        fans = fans_equal(
            restricted_fan_2d(p1.source), restricted_fan_2d(p2.source), compare_labels=False
        )
        if fans != equal:
            raise RuntimeError(
                f"Equivalência normal ({equal}) diverge da igualdade dos leques ({fans})"
            )
    return equal


# Sinais e proporcionalidade


@dataclass
class ProportionalityReport:
    verdict: str
    scale: float
    residual: float
    witness: Optional[List[float]] = None


def _tie_rays(w: np.ndarray) -> List[np.ndarray]:
    """Raios extremos do cone {y ≥ 0 : ⟨y, w⟩ = 0}."""
    rays = []
    positive = np.flatnonzero(w > 0)
    negative = np.flatnonzero(w < 0)
    for k in np.flatnonzero(w == 0):
        ray = np.zeros(w.size)
        ray[k] = 1.0
        rays.append(ray)
    for p in positive:
        for n in negative:
            ray = np.zeros(w.size)
            ray[p] = -w[n]
            ray[n] = w[p]
            rays.append(ray)
    return rays


def _signs_split(y: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> bool:
    return float(y @ w1) * float(y @ w2) < 0


def sign_agreement_implies_proportional(
    w1: Sequence[float], w2: Sequence[float], trials: int = 10_000, seed: int = 0
) -> ProportionalityReport:
    """
    Se w2 = λ w1 com λ > 0 devolve "proportional"; senão procura y ≥ 0 com
    sinais opostos de ⟨y, w1⟩ e ⟨y, w2⟩ (sorteio e depois busca nos raios do
    hiperplano de empate de w1).
    """
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != w2.shape or w1.ndim != 1:
        raise ValueError(f"Vetores com formas diferentes: {w1.shape} e {w2.shape}")
    if not has_mixed_signs(w1, 0.0) or not has_mixed_signs(w2, 0.0):
        raise PreconditionError("Os dois vetores precisam ter componentes positivas e negativas")

    scale = float(w1 @ w2) / float(w1 @ w1)
    residual = float(np.abs(w2 - scale * w1).max())
    if scale > 0 and residual <= PROPORTIONAL_TOL * max(1.0, float(np.abs(w2).max())):
        return ProportionalityReport("proportional", scale, residual)

    rng = np.random.default_rng(seed)
    directions = rng.dirichlet(np.ones(w1.size), size=trials)
    split = np.flatnonzero((directions @ w1) * (directions @ w2) < 0)
    if split.size:
        return ProportionalityReport("witness", scale, residual, directions[split[0]].tolist())

    positive = np.flatnonzero(w1 > 0)
    negative = np.flatnonzero(w1 < 0)
    for ray in _tie_rays(w1):
        level = float(ray @ w2)
        if abs(level) <= DEFAULT_TOL:
            continue
        # Empurra ⟨y, w1⟩ para o sinal oposto de ⟨y, w2⟩ sem mudar o sinal deste
        k = negative[0] if level > 0 else positive[0]
        step = min(1.0, abs(level) / (2.0 * abs(w2[k]))) if w2[k] != 0 else 1.0
        candidate = ray.copy()
        candidate[k] += step
        if _signs_split(candidate, w1, w2):
            return ProportionalityReport(
                "witness", scale, residual, (candidate / candidate.sum()).tolist()
            )

    logger.warning("Nenhuma testemunha encontrada para vetores não proporcionais")
    return ProportionalityReport("inconclusive", scale, residual)
