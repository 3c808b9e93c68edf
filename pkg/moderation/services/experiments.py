"""
Orquestração das execuções: configuração, gerador de jogos, réplicas e
artefatos de cada modo (learn-qr, recommend, simulate, check-*, gen-game).
"""

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from django.utils import timezone

from ..models import ExperimentRun
from ..serializers import ExperimentConfigSerializer
from .artifacts import ArtifactService
from .behavior import (
    AgentPopulation,
    BehaviorModel,
    FeedbackRecord,
    IdealizedOracle,
    ReplayOracle,
    SampledOracle,
)
from .ce_solver import RegretLedger, round_regret, solve_ce, stack_game
from .cutting_plane import run_low_regret
from .exceptions import PreconditionError, RunAbortedError
from .game_core import Game, ProfileIndexing, has_mixed_signs, read_game_file
from .polyhedral import br_indistinguishable, check_equivalence
from .qr_learner import (
    alignment_error,
    bisection_steps,
    learn_game,
    membership_query_count,
    query_budget,
    unlearnable_pairs,
)

logger = logging.getLogger(__name__)

# Fluxos derivados da semente mestra
GAME_STREAM = 0
POPULATION_STREAM = 1
RUN_STREAM = 2

COLLINEAR_TOL = 1e-9
AUDIT_TOL = 1e-9


def derive_seed(master: int, replicate: int, stream: int) -> int:
    """Semente por (réplica, fluxo); novas réplicas não alteram as anteriores."""
    return int(np.random.SeedSequence([master, replicate, stream]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    game: Optional[str] = None
    game_b: Optional[str] = None
    agents: int = 2
    actions: Tuple[int, ...] = (2, 2)
    utility_low: float = 1.0
    utility_high: float = 10.0
    min_gap: float = 0.1
    generator_retries: int = 1000
    feedback: str = "qr"
    beta: float = 1.0
    utility_bound: float = 10.0
    oracle: str = "idealized"
    tie_tol: float = 1e-9
    eps: float = 1e-3
    c_ratio: float = 100.0
    delta: float = 0.05
    c_floor: float = 1e-6
    tri_tol: float = 0.05
    reconcile: str = "normal"
    horizon: int = 1000
    sampler_budget: int = 1000
    sampler_chains: int = 32
    feas_tol: float = 1e-9
    check_mode: str = "exact2d"
    check_samples: int = 100_000
    seed: int = 0
    replicates: int = 1
    workers: int = 1
    output_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        serializer = ExperimentConfigSerializer(data=data)
        if not serializer.is_valid():
            raise PreconditionError(f"Configuração inválida: {dict(serializer.errors)}")
        values = dict(serializer.validated_data)
        values["actions"] = tuple(values["actions"])
        return cls(**values)

    @classmethod
    def from_file(cls, path: Path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        """Lê o JSON de configuração; flags não nulas sobrescrevem o arquivo."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Arquivo de configuração não encontrado: {path}")
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise PreconditionError("A configuração precisa ser um objeto JSON")
        data.update({key: value for key, value in (overrides or {}).items() if value is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["actions"] = list(self.actions)
        return data


@dataclass
class RunArtifacts:
    output_dir: Path
    files: Dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def resolve_game_path(name: str) -> Path:
    """Caminho como dado ou relativo ao diretório de jogos."""
    path = Path(name)
    if path.exists():
        return path
    fallback = Path(settings.GAMES_DIR) / name
    if fallback.exists():
        return fallback
    raise FileNotFoundError(f"Arquivo de jogo não encontrado: {name}")


class RandomGameGenerator:
    """
    Utilidades i.i.d. uniformes em [low, high], sorteadas de novo até que toda
    diferença tenha sinais mistos, |w_k| ≥ min_gap e não haja diferenças
    colineares dentro de um agente.
    """

    def __init__(
        self,
        actions: Sequence[int],
        seed: int = 0,
        utility_low: Optional[float] = None,
        utility_high: Optional[float] = None,
        min_gap: Optional[float] = None,
        retries: Optional[int] = None,
    ):
        defaults = settings.MODERATOR
        self.actions = tuple(int(m) for m in actions)
        self.seed = seed
        self.utility_low = defaults["UTILITY_LOW"] if utility_low is None else utility_low
        self.utility_high = defaults["UTILITY_HIGH"] if utility_high is None else utility_high
        self.min_gap = defaults["MIN_GAP"] if min_gap is None else min_gap
        self.retries = retries or defaults["GENERATOR_RETRIES"]
        self.attempts = 0
        if self.utility_low >= self.utility_high:
            raise ValueError("utility_low precisa ser menor que utility_high")

    def is_generic(self, game: Game) -> bool:
        for agent in range(game.agent_count):
            matrix = game.utility_matrix(agent)
            differences = [matrix[b] - matrix[a] for a, b in combinations(range(matrix.shape[0]), 2)]
            for w in differences:
                if not has_mixed_signs(w, 0.0) or np.abs(w).min() < self.min_gap:
                    return False
            for w1, w2 in combinations(differences, 2):
                cosine = abs(w1 @ w2) / (np.linalg.norm(w1) * np.linalg.norm(w2))
                if cosine > 1.0 - COLLINEAR_TOL:
                    return False
        return True

    def generate(self) -> Game:
        rng = np.random.default_rng(self.seed)
        indexing = ProfileIndexing(self.actions)
        labels = [[f"a{i + 1}_{k + 1}" for k in range(m)] for i, m in enumerate(self.actions)]
        for attempt in range(1, self.retries + 1):
            utilities = rng.uniform(
                self.utility_low, self.utility_high, size=(len(self.actions), indexing.size)
            )
            game = Game(labels, utilities)
            if self.is_generic(game):
                self.attempts = attempt
                logger.debug(f"Jogo genérico {self.actions} na tentativa {attempt}")
                return Game(labels, utilities, generic=True)
        raise PreconditionError(
            f"Gerador esgotou {self.retries} tentativas sem jogo genérico para {self.actions}"
        )


def _generated_game(config: ExperimentConfig, replicate: int) -> Game:
    return RandomGameGenerator(
        config.actions,
        seed=derive_seed(config.seed, replicate, GAME_STREAM),
        utility_low=config.utility_low,
        utility_high=config.utility_high,
        min_gap=config.min_gap,
        retries=config.generator_retries,
    ).generate()


def _normalized(game: Game) -> Game:
    norm = stack_game(game).norm()
    return game.scaled(1.0 / norm) if norm > 0 else game


def _tail_ratio(values: np.ndarray) -> Optional[float]:
    """Regret médio nos últimos 10% das rodadas sobre o dos primeiros 10%."""
    window = max(1, len(values) // 10)
    head = float(values[:window].mean())
    if head == 0:
        return None
    return float(values[-window:].mean()) / head


# Réplicas (funções de módulo para o pool de processos)


def _learn_replicate(config: ExperimentConfig, game: Optional[Game], replicate: int, query_constant: float) -> dict:
    started = time.perf_counter()
    game = game or _generated_game(config, replicate)
    weak = unlearnable_pairs(game)
    if weak:
        raise PreconditionError(
            f"Dominância fraca: pares (agente, a, b) sem sinais mistos: {weak[:5]}"
        )
    indexing = game.indexing
    population = None
    if config.oracle == "idealized":
        oracle = IdealizedOracle(game, tie_tol=config.tie_tol)
    else:
        population = AgentPopulation(
            game,
            BehaviorModel.QUANTAL_RESPONSE,
            beta=config.beta,
            seed=derive_seed(config.seed, replicate, POPULATION_STREAM),
            utility_bound=config.utility_bound,
            tie_tol=config.tie_tol,
        )
        per_query = config.delta / membership_query_count(indexing, config.eps, config.c_ratio)
        oracle = SampledOracle(population, per_query)

    options = dict(
        eps=config.eps,
        c_ratio=config.c_ratio,
        c_floor=config.c_floor,
        tri_tol=config.tri_tol,
        reconcile=config.reconcile,
        action_labels=game.action_labels,
    )
    learned = learn_game(oracle, indexing, **options)
    replay = learn_game(ReplayOracle(learned.transcript), indexing, **options)

    errors = [alignment_error(learned.game, game, agent) for agent in range(game.agent_count)]
    budget = sum(
        query_budget(indexing, agent, config.eps, config.c_ratio)
        for agent in range(game.agent_count)
    )
    bound = (
        query_constant
        * game.agent_count
        * max(game.radices)
        * game.profile_count
        * math.log2(config.c_ratio / config.eps)
    )
    summary = {
        "replicate": replicate,
        "alignment_error": errors,
        "max_alignment_error": max(errors),
        "queries": learned.queries,
        "query_budget": budget,
        "query_bound": bound,
        "query_constant": query_constant,
        "within_bound": learned.queries <= bound,
        "bisection_steps": bisection_steps(config.eps, config.c_ratio),
        "oracle_calls": len(learned.transcript),
        "flagged": [list(flag) for estimate in learned.agents for flag in estimate.recovered.flagged],
        "reconciliation_residual": [estimate.reconciliation.residual for estimate in learned.agents],
        "replay_verified": bool(np.array_equal(replay.game.utilities, learned.game.utilities)),
        "wall_time": time.perf_counter() - started,
    }
    if population is not None:
        summary["samples_drawn"] = population.samples_drawn
    return {"game": game, "learned": learned.game, "transcript": learned.transcript, "summary": summary}


def _recommend_replicate(config: ExperimentConfig, game: Optional[Game], replicate: int) -> dict:
    started = time.perf_counter()
    game = _normalized(game or _generated_game(config, replicate))
    population = AgentPopulation(
        game,
        BehaviorModel(config.feedback),
        beta=config.beta,
        seed=derive_seed(config.seed, replicate, POPULATION_STREAM),
        utility_bound=config.utility_bound,
        tie_tol=config.tie_tol,
    )
    try:
        result = run_low_regret(
            population,
            config.horizon,
            seed=derive_seed(config.seed, replicate, RUN_STREAM),
            sampler_budget=config.sampler_budget,
            chains=config.sampler_chains,
            feas_tol=config.feas_tol,
        )
    except RunAbortedError as e:
        return {"aborted": str(e), "transcript": e.transcript, "replicate": replicate}

    cuts = [row for row in result.transcript if row["cut_applied"]]
    dimension = result.knowledge.dimension
    total = result.ledger.total
    summary = {
        "replicate": replicate,
        "rounds": result.ledger.rounds,
        "dimension": dimension,
        "cumulative_regret": total,
        "normalized_regret": total / (dimension * math.log(config.horizon)) if config.horizon > 1 else total,
        "tail_ratio": _tail_ratio(result.ledger.values),
        "cuts": len(cuts),
        "cut_true_violations": sum(row["cut_true"] < -AUDIT_TOL for row in cuts),
        "cut_query_violations": sum(row["cut_query"] > 1e-8 for row in cuts),
        "regret_bound_violations": sum(
            row["regret"] > row["cut_true"] - row["cut_query"] + AUDIT_TOL for row in cuts
        ),
        "true_parameter_inside": bool(result.knowledge.contains(result.true_parameter, tol=AUDIT_TOL)[0]),
        "wall_time": time.perf_counter() - started,
    }
    return {"ledger": result.ledger, "transcript": result.transcript, "summary": summary}


def _simulate_replicate(config: ExperimentConfig, game: Optional[Game], replicate: int) -> dict:
    started = time.perf_counter()
    game = _normalized(game or _generated_game(config, replicate))
    population = AgentPopulation(
        game,
        BehaviorModel(config.feedback),
        beta=config.beta,
        seed=derive_seed(config.seed, replicate, POPULATION_STREAM),
        utility_bound=config.utility_bound,
        tie_tol=config.tie_tol,
    )
    mechanism = solve_ce(stack_game(game), feas_tol=config.feas_tol)
    run_seed = derive_seed(config.seed, replicate, RUN_STREAM)
    ledger = RegretLedger()
    log = []
    membership_violations = 0
    deviations = 0
    for round_index in range(1, config.horizon + 1):
        rng = np.random.default_rng([run_seed, round_index])
        recommended = mechanism.sample(rng)
        realized = population.sample_response(mechanism, recommended, round_index)
        feedback = FeedbackRecord(mechanism, recommended, realized, round_index)
        regret = ledger.record(round_regret(game, feedback))
        pairs = zip(game.indexing.decode(recommended), game.indexing.decode(realized))
        for agent, (rec, real) in enumerate(pairs):
            if real not in population.response_set(mechanism, agent, rec):
                membership_violations += 1
        deviations += realized != recommended
        log.append(
            {"round": round_index, "recommended": recommended, "realized": realized, "regret": regret}
        )
    summary = {
        "replicate": replicate,
        "rounds": ledger.rounds,
        "cumulative_regret": ledger.total,
        "deviations": deviations,
        "membership_violations": membership_violations,
        "mechanism": {"digest": mechanism.digest(), "support": mechanism.support()},
        "wall_time": time.perf_counter() - started,
    }
    return {"ledger": ledger, "transcript": log, "summary": summary}


class ExperimentService:
    """Executa um modo de acordo com a configuração e grava os artefatos."""

    def __init__(
        self,
        config: ExperimentConfig,
        game: Optional[Game] = None,
        game_b: Optional[Game] = None,
        output_dir: Optional[Path] = None,
    ):
        self.config = config
        self._game = game
        self._game_b = game_b
        default_dir = Path(settings.MODERATOR_OUTPUT_ROOT) / f"{config.mode}-seed{config.seed}"
        self.output_dir = Path(output_dir or config.output_dir or default_dir)
        self.artifacts = ArtifactService(self.output_dir)

    def _fixed_game(self) -> Optional[Game]:
        if self._game is not None:
            return self._game
        if self.config.game:
            return read_game_file(resolve_game_path(self.config.game))
        return None

    def _pair(self) -> Tuple[Game, Game]:
        first = self._fixed_game()
        second = self._game_b
        if second is None and self.config.game_b:
            second = read_game_file(resolve_game_path(self.config.game_b))
        if first is None or second is None:
            raise PreconditionError("A verificação exige dois jogos (game e game_b)")
        return first, second

    def _map(self, function: Callable, arguments: List[tuple]) -> list:
        if self.config.workers > 1 and len(arguments) > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as executor:
                return list(executor.map(function, *zip(*arguments)))
        return [function(*args) for args in arguments]

    def run(self) -> RunArtifacts:
        handlers = {
            "learn-qr": self.learn_qr,
            "recommend": self.recommend,
            "simulate": self.simulate,
            "check-equiv": self.check,
            "check-br-indist": self.check,
            "gen-game": self.generate_game,
        }
        logger.info(f"Execução {self.config.mode} (semente {self.config.seed}) em {self.output_dir}")
        return handlers[self.config.mode]()

    def execute(self) -> Tuple[ExperimentRun, RunArtifacts]:
        """run() com registro em ExperimentRun (status, resumo, erro)."""
        record = ExperimentRun.objects.create(
            mode=self.config.mode,
            config=self.config.to_dict(),
            status=ExperimentRun.Status.RUNNING,
            output_dir=str(self.output_dir),
        )
        try:
            artifacts = self.run()
            record.status = ExperimentRun.Status.FINISHED
            record.summary = artifacts.summary
            return record, artifacts
        except Exception as e:
            record.status = ExperimentRun.Status.FAILED
            record.error = f"{type(e).__name__}: {e}"
            raise
        finally:
            record.finished_at = timezone.now()
            record.save()

    def _replicate_dir(self, replicate: int) -> str:
        return f"replicate-{replicate:03d}"

    def learn_qr(self) -> RunArtifacts:
        config = self.config
        game = self._fixed_game()
        constant = settings.MODERATOR["QUERY_CONSTANT"]
        outcomes = self._map(
            _learn_replicate,
            [(config, game, replicate, constant) for replicate in range(config.replicates)],
        )
        artifacts = RunArtifacts(self.output_dir)
        for outcome in outcomes:
            folder = self._replicate_dir(outcome["summary"]["replicate"])
            artifacts.files[f"{folder}/true_game"] = str(self.artifacts.write_game(outcome["game"], f"{folder}/true_game.json"))
            artifacts.files[f"{folder}/recovered_game"] = str(
                self.artifacts.write_game(outcome["learned"], f"{folder}/recovered_game.json")
            )
            artifacts.files[f"{folder}/transcript"] = str(
                self.artifacts.write_jsonl(outcome["transcript"], f"{folder}/transcript.jsonl")
            )

        replicates = [outcome["summary"] for outcome in outcomes]
        artifacts.summary = {
            "mode": config.mode,
            "replicates": replicates,
            "max_alignment_error": max(r["max_alignment_error"] for r in replicates),
            "all_within_bound": all(r["within_bound"] for r in replicates),
            "all_replayed": all(r["replay_verified"] for r in replicates),
        }
        artifacts.files["summary"] = str(self.artifacts.write_summary(artifacts.summary))
        logger.info(f"learn-qr concluído: erro máximo {artifacts.summary['max_alignment_error']:.3g}")
        return artifacts

    def recommend(self) -> RunArtifacts:
        return self._regret_mode(_recommend_replicate)

    def simulate(self) -> RunArtifacts:
        return self._regret_mode(_simulate_replicate)

    def _regret_mode(self, function: Callable) -> RunArtifacts:
        config = self.config
        game = self._fixed_game()
        outcomes = self._map(function, [(config, game, r) for r in range(config.replicates)])
        artifacts = RunArtifacts(self.output_dir)

        aborted = [outcome for outcome in outcomes if "aborted" in outcome]
        for outcome in aborted:
            folder = self._replicate_dir(outcome["replicate"])
            self.artifacts.write_jsonl(outcome["transcript"], f"{folder}/transcript.partial.jsonl")
        if aborted:
            raise RunAbortedError(aborted[0]["aborted"], aborted[0]["transcript"])

        sheets = {}
        for outcome in outcomes:
            folder = self._replicate_dir(outcome["summary"]["replicate"])
            artifacts.files[f"{folder}/ledger"] = str(self.artifacts.write_ledger(outcome["ledger"], f"{folder}/ledger.csv"))
            artifacts.files[f"{folder}/transcript"] = str(
                self.artifacts.write_jsonl(outcome["transcript"], f"{folder}/transcript.jsonl")
            )
            sheets[folder] = outcome["ledger"].as_frame()

        merged = RegretLedger.merge(outcome["ledger"] for outcome in outcomes)
        artifacts.files["ledger_merged"] = str(self.artifacts.write_frame(merged, "ledger_merged.csv"))
        artifacts.files["report"] = str(self.artifacts.write_workbook({"merged": merged, **sheets}))

        replicates = [outcome["summary"] for outcome in outcomes]
        totals = np.array([r["cumulative_regret"] for r in replicates])
        artifacts.summary = {
            "mode": config.mode,
            "feedback": config.feedback,
            "horizon": config.horizon,
            "replicates": replicates,
            "mean_cumulative_regret": float(totals.mean()),
            "sd_cumulative_regret": float(totals.std(ddof=1)) if len(totals) > 1 else 0.0,
        }
        artifacts.files["summary"] = str(self.artifacts.write_summary(artifacts.summary))
        logger.info(
            f"{config.mode} concluído: regret acumulado médio {artifacts.summary['mean_cumulative_regret']:.4g}"
        )
        return artifacts

    def check(self) -> RunArtifacts:
        config = self.config
        first, second = self._pair()
        equivalence = check_equivalence(first, second)
        verdict = {
            "equivalent": equivalence.equivalent,
            "agents": [asdict(fit) for fit in equivalence.agents],
        }
        try:
            report = br_indistinguishable(
                first, second, mode=config.check_mode, samples=config.check_samples, seed=config.seed
            )
        except PreconditionError as e:
            if config.mode == "check-br-indist":
                raise
            # check-equiv segue com o veredito afim quando o modo BR não se aplica
            logger.warning(f"Indistinguibilidade BR não verificada: {e}")
            verdict["br_indistinguishable"] = None
            verdict["br"] = {"verdict": "not-checked", "mode": config.check_mode, "reason": str(e)}
        else:
            verdict["br_indistinguishable"] = report.verdict == "indistinguishable"
            verdict["br"] = report.to_dict()
        artifacts = RunArtifacts(self.output_dir, summary={"mode": config.mode, **verdict})
        artifacts.files["verdict"] = str(self.artifacts.write_summary(artifacts.summary, "verdict.json"))
        return artifacts

    def generate_game(self) -> RunArtifacts:
        config = self.config
        generator = RandomGameGenerator(
            config.actions,
            seed=config.seed,
            utility_low=config.utility_low,
            utility_high=config.utility_high,
            min_gap=config.min_gap,
            retries=config.generator_retries,
        )
        game = generator.generate()
        path = self.artifacts.write_game(game, "game.json")
        summary = {
            "mode": config.mode,
            "actions": list(config.actions),
            "seed": config.seed,
            "attempts": generator.attempts,
            "path": str(path),
        }
        return RunArtifacts(self.output_dir, {"game": str(path)}, summary)
