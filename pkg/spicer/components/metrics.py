"""
SPICER - Componente de Métricas
Tabelas legíveis das linhas de métricas por método
"""

import math
from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.table import Table

PSNR_SENTINEL = "inf"


def format_value(value, precision: int = 2) -> str:
    if value is None or value == PSNR_SENTINEL:
        return "∞" if value == PSNR_SENTINEL else "-"
    if isinstance(value, float) and math.isinf(value):
        return "∞"
    return f"{value:.{precision}f}"


def format_mean_std(mean, std, precision: int = 2) -> str:
    return f"{format_value(mean, precision)} ± {format_value(std, precision)}"


class MetricsDisplay:
    """Formata linhas {method, n_cases, psnr_mean, ...} como na tabela de resultados"""

    columns = (
        ("PSNR (dB)", "psnr", 2),
        ("SSIM", "ssim", 4),
        ("NMSE", "nmse", 5),
    )

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def build_table(self, rows: Sequence[Dict], title: str = "Métricas") -> Table:
        table = Table(title=title)
        table.add_column("Método", style="bold")
        table.add_column("Casos", justify="right")
        for label, _, _ in self.columns:
            table.add_column(label, justify="right")
        table.add_column("Região")
        for row in rows:
            table.add_row(
                str(row["method"]),
                str(row["n_cases"]),
                *[format_mean_std(row[f"{key}_mean"], row[f"{key}_std"], prec) for _, key, prec in self.columns],
                str(row.get("region", "")),
            )
        return table

    def text_lines(self, rows: Sequence[Dict]) -> List[str]:
        """Mesma formatação da tabela, em texto simples"""
        lines = []
        for row in rows:
            cells = [format_mean_std(row[f"{key}_mean"], row[f"{key}_std"], prec) for _, key, prec in self.columns]
            lines.append(f"{row['method']:<12} n={row['n_cases']:<4} " + "  ".join(cells) + f"  [{row.get('region', '')}]")
        return lines

    def render(self, rows: Sequence[Dict], title: str = "Métricas") -> None:
        self.console.print(self.build_table(rows, title))

    def render_key_values(self, values: Dict, title: str) -> None:
        table = Table(title=title)
        table.add_column("Chave", style="bold")
        table.add_column("Valor", justify="right")
        for key, value in values.items():
            shown = format_value(value, 6) if isinstance(value, float) else str(value)
            table.add_row(str(key), shown)
        self.console.print(table)
