"""
Comando do moderador: aprendizado QR, recomendações, verificações,
simulação e geração de jogos.
"""

from django.core.management.base import BaseCommand, CommandError

from moderation.services.exceptions import PreconditionError
from moderation.services.experiments import ExperimentConfig, ExperimentService

SUBCOMMANDS = {
    "learn-qr": "Aprende as utilidades com feedback QR",
    "recommend": "Recomendações de baixo regret (planos de corte)",
    "check-equiv": "Verifica equivalência afim entre dois jogos",
    "check-br-indist": "Verifica indistinguibilidade por melhor resposta",
    "simulate": "Simula a população contra o CE do jogo verdadeiro",
    "gen-game": "Gera um jogo genérico aleatório",
}

# (flag, destino, tipo, ajuda)
OVERRIDES = [
    ("--game", "game", str, "Arquivo do jogo (ou nome em data/games)"),
    ("--game-b", "game_b", str, "Segundo jogo das verificações"),
    ("--agents", "agents", int, "Quantidade de agentes do gerador"),
    ("--feedback", "feedback", str, "Modelo de feedback: br ou qr"),
    ("--beta", "beta", float, "Racionalidade β do modelo QR"),
    ("--oracle", "oracle", str, "Oráculo do aprendizado: idealized ou sampled"),
    ("--eps", "eps", float, "Precisão das razões"),
    ("--c-ratio", "c_ratio", float, "Limite superior das razões"),
    ("--delta", "delta", float, "Probabilidade de falha total"),
    ("--reconcile", "reconcile", str, "Reconciliação de escalas: normal ou kaczmarz"),
    ("--horizon", "horizon", int, "Quantidade de rodadas T"),
    ("--sampler-budget", "sampler_budget", int, "Amostras do hit-and-run por centróide"),
    ("--check-mode", "check_mode", str, "exact2d ou montecarlo"),
    ("--check-samples", "check_samples", int, "Direções do modo montecarlo"),
    ("--seed", "seed", int, "Semente mestra"),
    ("--replicates", "replicates", int, "Quantidade de réplicas"),
    ("--workers", "workers", int, "Processos paralelos"),
    ("--output-dir", "output_dir", str, "Diretório de saída"),
]


class Command(BaseCommand):
    help = "Moderador de recomendações correlacionadas"

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="subcommand", required=True)
        for name, description in SUBCOMMANDS.items():
            sub = subparsers.add_parser(name, help=description)
            sub.add_argument("--config", help="Arquivo JSON de configuração")
            sub.add_argument("--actions", type=int, nargs="+", help="Ações por agente do gerador")
            for flag, dest, kind, text in OVERRIDES:
                sub.add_argument(flag, dest=dest, type=kind, help=text)

    def _config(self, options) -> ExperimentConfig:
        overrides = {dest: options.get(dest) for _, dest, _, _ in OVERRIDES}
        overrides["actions"] = options.get("actions")
        overrides["mode"] = options["subcommand"]
        if options.get("config"):
            return ExperimentConfig.from_file(options["config"], overrides)
        return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})

    def handle(self, *args, **options):
        try:
            config = self._config(options)
            self.stdout.write(self.style.NOTICE(f"Executando {config.mode} (semente {config.seed})..."))
            _, artifacts = ExperimentService(config).execute()
        except PreconditionError as e:
            raise CommandError(f"Pré-condição não atendida: {e}", returncode=2)
        except FileNotFoundError as e:
            raise CommandError(f"Arquivo não encontrado: {e}", returncode=2)
        except Exception as e:
            raise CommandError(f"Erro interno: {type(e).__name__}: {e}", returncode=1)

        self._report(config, artifacts.summary)
        for name, path in sorted(artifacts.files.items()):
            self.stdout.write(f"  {name}: {path}")
        self.stdout.write(self.style.SUCCESS(f"Pronto! Artefatos em {artifacts.output_dir}"))

    def _report(self, config: ExperimentConfig, summary: dict):
        if config.mode == "learn-qr":
            style = self.style.SUCCESS if summary["all_within_bound"] else self.style.WARNING
            self.stdout.write(
                style(
                    f"Erro de alinhamento máximo: {summary['max_alignment_error']:.3g}; "
                    f"consultas dentro do limite: {summary['all_within_bound']}; "
                    f"replay confere: {summary['all_replayed']}"
                )
            )
        elif config.mode in ("recommend", "simulate"):
            self.stdout.write(
                self.style.SUCCESS(
                    f"Regret acumulado: {summary['mean_cumulative_regret']:.4g} "
                    f"± {summary['sd_cumulative_regret']:.2g} em {config.horizon} rodadas"
                )
            )
            if config.mode == "recommend":
                violations = sum(
                    r["cut_true_violations"] + r["cut_query_violations"] + r["regret_bound_violations"]
                    for r in summary["replicates"]
                )
                if violations:
                    self.stdout.write(self.style.WARNING(f"Auditoria dos cortes: {violations} violações"))
        elif config.mode.startswith("check"):
            self.stdout.write(self.style.SUCCESS(f"Equivalentes: {summary['equivalent']}"))
            if "br" in summary:
                self.stdout.write(self.style.SUCCESS(f"Indistinguibilidade BR: {summary['br']['verdict']}"))
        else:
            self.stdout.write(
                self.style.SUCCESS(f"Jogo genérico após {summary['attempts']} tentativas: {summary['path']}")
            )
