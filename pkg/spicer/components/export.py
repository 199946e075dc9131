"""
SPICER - Componente de Exportação
Gravação atômica de JSON/CSV e agregação de execuções em um relatório
"""

import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from spicer.components.metrics import PSNR_SENTINEL
from spicer.exceptions import FileFormatError
from spicer.services.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"


def _clean(value: Any) -> Any:
    """Tipos numpy → Python; não finitos → sentinela"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return PSNR_SENTINEL
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Union[str, Path], data: Any) -> Path:
    path = Path(path)
    text = json.dumps(_clean(data), indent=2, sort_keys=True, ensure_ascii=False)
    atomic_write_bytes(path, (text + "\n").encode("utf-8"))
    logger.debug(f"JSON gravado: {path}")
    return path


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: JSON inválido: {e}") from e


def write_csv(path: Union[str, Path], rows: Sequence[Dict[str, Any]]) -> Path:
    path = Path(path)
    buffer = io.StringIO()
    pd.DataFrame([_clean(r) for r in rows]).to_csv(buffer, index=False)
    atomic_write_bytes(path, buffer.getvalue().encode("utf-8"))
    logger.debug(f"CSV gravado: {path}")
    return path


class ReportBuilder:
    """Junta summary.json e metrics.json de vários diretórios de execução"""

    def __init__(self, run_dirs: Sequence[Union[str, Path]]):
        self.run_dirs = [Path(d) for d in run_dirs]

    def collect(self) -> List[Dict[str, Any]]:
        rows = []
        for run_dir in self.run_dirs:
            summary_path = run_dir / SUMMARY_FILE
            metrics_path = run_dir / METRICS_FILE
            if not summary_path.exists() and not metrics_path.exists():
                logger.warning(f"⚠️ {run_dir}: sem {SUMMARY_FILE} nem {METRICS_FILE}, ignorado")
                continue

            base: Dict[str, Any] = {"run": str(run_dir)}
            if summary_path.exists():
                summary = read_json(summary_path)
                base.update({
                    "lambda_smooth": summary.get("lambda_smooth"),
                    "epochs": summary.get("epochs"),
                    "final_loss": summary.get("final_loss"),
                    "heldout_smoothness": summary.get("heldout_smoothness"),
                })
            metrics = read_json(metrics_path) if metrics_path.exists() else []
            if not metrics:
                rows.append(base)
            for row in metrics:
                rows.append({**base, **row})
        return rows

    def smoothness_ordering(self, rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
        """Execuções ordenadas por ‖DS‖² em dados não vistos (menor primeiro)"""
        seen = {}
        for row in rows:
            value = row.get("heldout_smoothness")
            if isinstance(value, (int, float)) and row["run"] not in seen:
                seen[row["run"]] = {"run": row["run"], "lambda_smooth": row.get("lambda_smooth"), "heldout_smoothness": value}
        return sorted(seen.values(), key=lambda r: r["heldout_smoothness"])

    def build(self) -> Dict[str, Any]:
        rows = self.collect()
        return {
            "runs": [str(d) for d in self.run_dirs],
            "rows": rows,
            "smoothness_ordering": self.smoothness_ordering(rows),
        }

    def save(self, out_dir: Union[str, Path], report: Optional[Dict[str, Any]] = None) -> Path:
        report = report or self.build()
        out_dir = Path(out_dir)
        path = write_json(out_dir / REPORT_FILE, report)
        if report["rows"]:
            write_csv(out_dir / "report.csv", report["rows"])
        logger.info(f"✅ Relatório gravado: {path} ({len(report['rows'])} linhas)")
        return path
