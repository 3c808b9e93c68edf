"""
Serviço de artefatos - escrita dos arquivos de cada execução.

Ledgers em CSV, transcrições em JSON lines, resumo em JSON e relatório em
Excel. Toda escrita passa por um arquivo temporário seguido de os.replace.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional

import pandas as pd
from django.conf import settings

from .ce_solver import RegretLedger
from .game_core import Game, dump_game

logger = logging.getLogger(__name__)


class ArtifactService:
    """Gerencia os arquivos de saída de uma execução."""

    FLOAT_FORMAT = "%.17g"

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir or settings.MODERATOR_OUTPUT_ROOT)
        self._ensure_output_directory()

    def _ensure_output_directory(self):
        if not self.output_dir.exists():
            self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _atomic_write(self, name: str, writer: Callable[[Path], None]) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        handle, temporary = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        os.close(handle)
        try:
            writer(Path(temporary))
            os.replace(temporary, target)
        except Exception as e:
            logger.error(f"Erro ao escrever {target}: {e}")
            if os.path.exists(temporary):
                os.remove(temporary)
            raise
        logger.info(f"Arquivo salvo: {target}")
        return target

    def write_ledger(self, ledger: RegretLedger, name: str = "ledger.csv") -> Path:
        frame = ledger.as_frame()
        return self.write_frame(frame, name)

    def write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        return self._atomic_write(
            name,
            lambda path: frame.to_csv(path, index=False, float_format=self.FLOAT_FORMAT),
        )

    def read_ledger(self, name: str = "ledger.csv") -> pd.DataFrame:
        path = self.path(name)
        if not path.exists():
            raise FileNotFoundError(f"Ledger não encontrado: {path}")
        return pd.read_csv(path)

    def write_jsonl(self, rows: Iterable[dict], name: str) -> Path:
        lines = "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)
        return self._atomic_write(name, lambda path: path.write_text(lines, encoding="utf-8"))

    def read_jsonl(self, name: str) -> list:
        path = self.path(name)
        if not path.exists():
            raise FileNotFoundError(f"Transcrição não encontrada: {path}")
        with open(path, encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]

    def write_summary(self, summary: dict, name: str = "summary.json") -> Path:
        text = json.dumps(summary, sort_keys=True, indent=2) + "\n"
        return self._atomic_write(name, lambda path: path.write_text(text, encoding="utf-8"))

    def write_game(self, game: Game, name: str = "game.json") -> Path:
        text = dump_game(game)
        return self._atomic_write(name, lambda path: path.write_text(text, encoding="utf-8"))

    def write_workbook(self, sheets: Dict[str, pd.DataFrame], name: str = "report.xlsx") -> Path:
        """Relatório Excel com uma aba por tabela."""

        def writer(path: Path):
            with pd.ExcelWriter(path, engine="openpyxl") as excel:
                for sheet, frame in sheets.items():
                    frame.to_excel(excel, sheet_name=sheet[:31], index=False)

        return self._atomic_write(name, writer)
