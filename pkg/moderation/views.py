"""
Views da API do moderador.
CRUD de jogos, geração e verificação de jogos e disparo de execuções.
"""

import logging
import uuid
from pathlib import Path

from django.conf import settings
from django.http import FileResponse
from drf_yasg import openapi
from drf_yasg.utils import no_body, swagger_auto_schema
from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .models import ExperimentRun, GameRecord
from .serializers import (
    ExperimentRunListSerializer,
    ExperimentRunSerializer,
    GameCheckSerializer,
    GameGenerateSerializer,
    GameListSerializer,
    GameRecordSerializer,
    RunLaunchSerializer,
)
from .services.exceptions import PreconditionError
from .services.experiments import ExperimentConfig, ExperimentService, RandomGameGenerator
from .services.game_core import dump_game
from .services.polyhedral import br_indistinguishable, check_equivalence

logger = logging.getLogger(__name__)


def _error(message: str, code: int) -> Response:
    return Response({"error": message}, status=code)


class GameViewSet(viewsets.ModelViewSet):
    """
    ViewSet para os jogos salvos.

    Além do CRUD, gera jogos genéricos aleatórios e compara dois jogos
    (equivalência afim e indistinguibilidade por melhor resposta).
    """

    queryset = GameRecord.objects.all()
    serializer_class = GameRecordSerializer

    def get_serializer_class(self):
        if self.action == "list":
            return GameListSerializer
        return GameRecordSerializer

    @swagger_auto_schema(
        operation_description="Lista os jogos salvos",
        responses={200: GameListSerializer(many=True)},
    )
    def list(self, request, *args, **kwargs):
        return super().list(request, *args, **kwargs)

    @swagger_auto_schema(
        method="post",
        operation_description="Gera um jogo genérico aleatório e salva com o nome informado",
        request_body=GameGenerateSerializer,
        responses={201: GameRecordSerializer(), 400: "Parâmetros inválidos"},
    )
    @action(detail=False, methods=["post"])
    def generate(self, request):
        serializer = GameGenerateSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            game = RandomGameGenerator(
                data["actions"],
                seed=data["seed"],
                utility_low=data["utility_low"],
                utility_high=data["utility_high"],
                min_gap=data["min_gap"],
            ).generate()
        except PreconditionError as e:
            return _error(str(e), status.HTTP_400_BAD_REQUEST)

        record = GameRecord.objects.create(
            name=data["name"],
            description=f"Gerado com semente {data['seed']}",
            **GameRecord.fields_from_game(game),
        )
        logger.info(f"Jogo gerado: {record}")
        return Response(GameRecordSerializer(record).data, status=status.HTTP_201_CREATED)

    @swagger_auto_schema(
        method="post",
        operation_description="Compara dois jogos salvos",
        request_body=GameCheckSerializer,
        responses={
            200: openapi.Response(
                description="Veredito",
                schema=openapi.Schema(
                    type=openapi.TYPE_OBJECT,
                    properties={
                        "equivalent": openapi.Schema(type=openapi.TYPE_BOOLEAN),
                        "br": openapi.Schema(type=openapi.TYPE_OBJECT),
                    },
                ),
            ),
            400: "Jogos incompatíveis",
        },
    )
    @action(detail=False, methods=["post"])
    def check(self, request):
        serializer = GameCheckSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        first, second = data["game"].to_game(), data["game_b"].to_game()
        try:
            equivalence = check_equivalence(first, second)
            report = br_indistinguishable(
                first,
                second,
                mode=data["check_mode"],
                samples=data["check_samples"],
                seed=data["seed"],
            )
        except PreconditionError as e:
            return _error(str(e), status.HTTP_400_BAD_REQUEST)
        return Response(
            {
                "equivalent": equivalence.equivalent,
                "agents": [
                    {"agent": fit.agent, "scale": fit.scale, "residual": fit.residual}
                    for fit in equivalence.agents
                ],
                "br": report.to_dict(),
            }
        )

    @swagger_auto_schema(
        method="get",
        operation_description="Baixa o jogo no formato JSON de arquivo",
        responses={200: openapi.Response(description="Arquivo JSON", schema=openapi.Schema(type=openapi.TYPE_FILE))},
    )
    @action(detail=True, methods=["get"])
    def download(self, request, pk=None):
        record = self.get_object()
        response = FileResponse(
            [dump_game(record.to_game()).encode("utf-8")],
            content_type="application/json",
        )
        response["Content-Disposition"] = f'attachment; filename="{record.name}.json"'
        return response


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Consulta de execuções e disparo síncrono de novas execuções."""

    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer

    def get_serializer_class(self):
        if self.action == "list":
            return ExperimentRunListSerializer
        return ExperimentRunSerializer

    @swagger_auto_schema(
        method="post",
        operation_description=(
            "Executa learn-qr, recommend ou simulate. Sem game nem game_id "
            "o jogo é gerado a partir da semente."
        ),
        request_body=RunLaunchSerializer,
        responses={201: ExperimentRunSerializer(), 400: "Configuração inválida", 500: "Falha na execução"},
    )
    @action(detail=False, methods=["post"])
    def launch(self, request):
        serializer = RunLaunchSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        record = serializer.validated_data.get("game_id")

        data = {key: value for key, value in request.data.items() if key != "game_id"}
        data.setdefault(
            "output_dir",
            str(Path(settings.MODERATOR_OUTPUT_ROOT) / f"api-{data['mode']}-{uuid.uuid4().hex[:8]}"),
        )
        try:
            config = ExperimentConfig.from_dict(data)
            run, _ = ExperimentService(config, game=record.to_game() if record else None).execute()
        except (PreconditionError, FileNotFoundError) as e:
            return _error(str(e), status.HTTP_400_BAD_REQUEST)
        except Exception as e:
            logger.error(f"Erro na execução {data['mode']}: {e}")
            return _error(f"Falha na execução: {e}", status.HTTP_500_INTERNAL_SERVER_ERROR)
        return Response(ExperimentRunSerializer(run).data, status=status.HTTP_201_CREATED)

    @swagger_auto_schema(
        method="get",
        operation_description="Baixa o ledger de regret combinado (CSV)",
        request_body=no_body,
        responses={
            200: openapi.Response(description="Arquivo CSV", schema=openapi.Schema(type=openapi.TYPE_FILE)),
            404: "Execução sem ledger",
        },
    )
    @action(detail=True, methods=["get"])
    def ledger(self, request, pk=None):
        run = self.get_object()
        path = Path(run.output_dir) / "ledger_merged.csv"
        if not path.exists():
            return _error("Execução sem ledger.", status.HTTP_404_NOT_FOUND)
        response = FileResponse(open(path, "rb"), content_type="text/csv")
        response["Content-Disposition"] = f'attachment; filename="ledger-{run.pk}.csv"'
        return response
