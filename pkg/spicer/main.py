"""
SPICER - Interface de linha de comando
Simulação de datasets, treino, reconstrução, baselines, avaliação e relatórios
"""

import functools
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from spicer import __version__
from spicer.components.evaluation import (
    METHODS,
    SPICER_METHOD,
    ReconstructionRunner,
    cases_from_dataset,
    csm_plugin_tv,
    evaluate_methods,
    heldout_smoothness,
    reconstruct_with_checkpoint,
    split_seed,
    summarize,
)
from spicer.components.export import METRICS_FILE, SUMMARY_FILE, ReportBuilder, write_csv, write_json
from spicer.components.metrics import MetricsDisplay, format_value
from spicer.components.visualizations import VisualizationEngine
from spicer.config import configure_logging, get_config, merge_settings, parse_key_value_file
from spicer.exceptions import ConfigError, SpicerError, exit_code_for
from spicer.ml.training import Checkpoint, SpicerTrainer, load_checkpoint, save_checkpoint
from spicer.models.enums import BaselineMethod, CsmMode, LossNorm, MaskKind, MetricRegion, PhantomKind, Precision
from spicer.models.schemas import ExperimentConfig, build_experiment_config
from spicer.services.acquisition import build_dataset
from spicer.services.metrics import image_metrics
from spicer.services.storage import atomic_write_bytes, load_dataset, save_dataset, save_images

logger = logging.getLogger(__name__)
console = Console()

CHECKPOINT_FILE = "spicer.spck"

# =================== Infraestrutura ===================

def handle_errors(func):
    """Erros da biblioteca viram mensagem + código de saída (2 config, 3 E/S, 4 numérico)"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except (SpicerError, OSError) as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            click.echo(f"Erro ({type(e).__name__}): {e}", err=True)
            raise SystemExit(exit_code_for(e))
    return wrapper


def _choice(enum_cls):
    return click.Choice([m.value for m in enum_cls])


_EXPERIMENT_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                 help="Arquivo chave = valor do experimento"),
    click.option("--seed", type=int, default=None),
    click.option("--out", type=str, default=None, help="Diretório de saída"),
    click.option("--precision", type=_choice(Precision), default=None),
    click.option("--h", "h", type=int, default=None),
    click.option("--w", "w", type=int, default=None),
    click.option("--nc", type=int, default=None, help="Número de bobinas"),
    click.option("--r", "r", type=float, default=None, help="Fator de aceleração"),
    click.option("--acs", type=int, default=None, help="Linhas ACS"),
    click.option("--mask-kind", type=_choice(MaskKind), default=None),
    click.option("--phantom", type=_choice(PhantomKind), default=None),
    click.option("--noise", type=float, default=None, help="σ do ruído (padrão: relativo ao pico de k-space)"),
    click.option("--n-train", type=int, default=None),
    click.option("--n-test", type=int, default=None),
    click.option("--K", "K", type=int, default=None, help="Passos desenrolados"),
    click.option("--lambda", "lambda_smooth", type=float, default=None, help="Peso de suavidade dos CSMs"),
    click.option("--epochs", type=int, default=None),
    click.option("--batch-size", type=int, default=None),
    click.option("--lr-schedule", type=str, default=None, help="ex.: 0:1e-3,30:1e-4"),
    click.option("--features", type=str, default=None, help="ex.: 16,32"),
    click.option("--fov-threshold", type=float, default=None),
    click.option("--csm-mode", type=_choice(CsmMode), default=None),
    click.option("--dc/--no-dc", "use_data_consistency", default=None, help="Termo de consistência de dados"),
    click.option("--stop-csm-grad/--csm-grad", "stop_csm_grad_in_loop", default=None),
    click.option("--shared-weights/--per-step-weights", "shared_weights", default=None),
    click.option("--loss-norm", type=_choice(LossNorm), default=None),
    click.option("--workers", type=int, default=None),
    click.option("--tv-tau", type=float, default=None),
    click.option("--tv-iters", type=int, default=None),
    click.option("--grappa-kernel", type=str, default=None, help="ex.: 5x4"),
    click.option("--grappa-ridge", type=float, default=None),
    click.option("--train-data", type=str, default=None),
    click.option("--test-data", type=str, default=None),
    click.option("--checkpoint", type=str, default=None),
]


def experiment_options(func):
    for option in reversed(_EXPERIMENT_OPTIONS):
        func = option(func)
    return func


def load_experiment(config_path: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    """Padrões < arquivo < flags; tudo validado antes de qualquer cálculo"""
    file_values: Dict[str, Any] = parse_key_value_file(Path(config_path)) if config_path else {}
    if "lambda" in file_values:
        file_values["lambda_smooth"] = file_values.pop("lambda")
    settings = merge_settings(file_values, overrides)
    env = get_config()
    settings.setdefault("out", str(env.paths.runs_dir / "default"))
    settings.setdefault("precision", env.numerics.precision)
    settings.setdefault("workers", env.training.workers)
    exp = build_experiment_config(settings)
    logger.debug(f"Experimento: {exp.model_dump(mode='json')}")
    return exp


def _dataset_path(exp: ExperimentConfig, split: str) -> Path:
    explicit = exp.train_data if split == "train" else exp.test_data
    return Path(explicit) if explicit else Path(exp.out) / f"{split}.spcr"


def _checkpoint_path(exp: ExperimentConfig) -> Path:
    return Path(exp.checkpoint) if exp.checkpoint else Path(exp.out) / CHECKPOINT_FILE


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} não encontrado: {path}")
    return path

# =================== Comandos ===================

@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING...")
@click.option("--log-json/--log-text", default=None)
@click.version_option(version=__version__, message="%(version)s")
def cli(log_level, log_json):
    """🧲 SPICER - reconstrução de MRI paralela auto-supervisionada"""
    try:
        configure_logging(log_level, log_json)
    except SpicerError as e:
        click.echo(f"Erro de configuração: {e}", err=True)
        raise SystemExit(exit_code_for(e))


@cli.command()
@experiment_options
@handle_errors
def simulate(config_path, **overrides):
    """Gera train.spcr e test.spcr e imprime as taxas de amostragem"""
    exp = load_experiment(config_path, overrides)
    out = Path(exp.out)

    splits = {"train": exp.n_train, "test": exp.n_test}
    rates = []
    for split, n_pairs in splits.items():
        pairs = build_dataset(
            n_pairs, exp.h, exp.w, exp.nc, exp.r, exp.acs,
            seed=split_seed(exp.seed, split),
            noise_sigma=exp.noise,
            phantom=exp.phantom,
            mask_kind=exp.mask_kind,
            progress=True,
        )
        save_dataset(pairs, out / f"{split}.spcr", seed=split_seed(exp.seed, split), precision=exp.precision)
        rates += [p.y.mask.sampling_rate for p in pairs] + [p.y_prime.mask.sampling_rate for p in pairs]
    write_json(out / "experiment.json", exp.model_dump(mode="json"))

    table = Table(title=f"Máscaras ({exp.mask_kind.value}, R={exp.r:g}, ACS={exp.acs})")
    table.add_column("Taxa de amostragem", justify="right")
    table.add_column("Máscaras", justify="right")
    for rate in sorted(set(round(r, 4) for r in rates)):
        table.add_row(f"{rate:.4f}", str(sum(1 for r in rates if round(r, 4) == rate)))
    console.print(table)
    click.echo(f"sampling_rate={float(np.mean(rates)):.4f}")
    logger.info(f"✅ Datasets gravados em {out}")


@cli.command()
@experiment_options
@click.option("--resume", is_flag=True, help="Continua do checkpoint existente")
@handle_errors
def train(config_path, resume, **overrides):
    """Treina SPICER e grava spicer.spck, histórico de perda e summary.json"""
    exp = load_experiment(config_path, overrides)
    out = Path(exp.out)
    train_cfg = exp.to_train_config()
    dataset = load_dataset(_require(_dataset_path(exp, "train"), "Dataset de treino"))
    ckpt_path = _checkpoint_path(exp)

    start: Optional[Checkpoint] = None
    if resume:
        previous = load_checkpoint(_require(ckpt_path, "Checkpoint"))
        start = Checkpoint(previous.params, previous.adam_state, train_cfg, previous.epoch, previous.loss_history)
        click.echo(f"Retomando da época {previous.epoch}")

    trainer = SpicerTrainer(train_cfg, progress=True)
    ckpt = trainer.fit(dataset, start, on_epoch=lambda c: save_checkpoint(c, ckpt_path))
    save_checkpoint(ckpt, ckpt_path)

    write_json(out / "loss_history.json", {"epochs": ckpt.epoch, "loss_history": ckpt.loss_history})
    VisualizationEngine().save_loss_curve(
        ckpt.loss_history, out / "loss_curve.png", lr_changes=dict(train_cfg.lr_schedule)
    )

    smoothness = None
    test_path = _dataset_path(exp, "test")
    if test_path.exists():
        smoothness = heldout_smoothness([p.y for p in load_dataset(test_path)], ckpt)
    summary = {
        "checkpoint": str(ckpt_path),
        "epochs": ckpt.epoch,
        "K": train_cfg.K,
        "lambda_smooth": train_cfg.lambda_smooth,
        "csm_mode": train_cfg.csm_mode.value,
        "n_params": ckpt.params.n_params(),
        "final_loss": ckpt.loss_history[-1] if ckpt.loss_history else None,
        "heldout_smoothness": smoothness,
    }
    write_json(out / SUMMARY_FILE, summary)
    MetricsDisplay(console).render_key_values(summary, "Resumo do treino")


@cli.command()
@experiment_options
@click.option("--input", "input_path", type=click.Path(dir_okay=False), default=None,
              help="Dataset .spcr (padrão: split de teste)")
@click.option("--index", type=int, default=0, help="Par do dataset a reconstruir")
@handle_errors
def reconstruct(config_path, input_path, index, **overrides):
    """Reconstrói uma medida com o checkpoint: PNG, mapa de erro e .spcr complexo"""
    exp = load_experiment(config_path, overrides)
    out = Path(exp.out) / "reconstruct"
    ckpt = load_checkpoint(_require(_checkpoint_path(exp), "Checkpoint"))
    pairs = load_dataset(_require(Path(input_path) if input_path else _dataset_path(exp, "test"), "Dataset"))
    if not 0 <= index < len(pairs):
        raise ConfigError(f"Índice {index} fora do dataset ({len(pairs)} pares)")
    pair = pairs[index]
    if ckpt.params.phi is not None and ckpt.params.phi.in_channels != 2 * pair.y.n_coils:
        raise ConfigError(
            f"Checkpoint treinado com {ckpt.params.phi.in_channels // 2} bobinas; medida tem {pair.y.n_coils}"
        )

    x, S = reconstruct_with_checkpoint(pair.y, ckpt)
    viz = VisualizationEngine()
    stem = f"sample{index}_{SPICER_METHOD}"
    viz.save_magnitude(x, out / f"{stem}.png", S.fov)
    save_images({"x": x, "csm": S.maps, "fov": S.fov}, out / f"{stem}.spcr", meta={"index": index})

    if pair.ground_truth is not None:
        region = cases_from_dataset([pair], exp.fov_threshold)[0].region
        viz.save_error_map(x, pair.ground_truth, out / f"{stem}_error.png")
        values = image_metrics(x, pair.ground_truth, region)
        write_json(out / f"{stem}_metrics.json", values)
        click.echo("  ".join(f"{k}={format_value(v, 6)}" for k, v in values.items()))
    else:
        click.echo("Sem referência: mapa de erro não gerado")


@cli.command()
@experiment_options
@click.option("--method", type=click.Choice([m.value for m in BaselineMethod]), required=True)
@click.option("--input", "input_path", type=click.Path(dir_okay=False), default=None)
@handle_errors
def baseline(config_path, method, input_path, **overrides):
    """Reconstruções clássicas (zero_filled, tv, grappa) com métricas"""
    exp = load_experiment(config_path, overrides)
    out = Path(exp.out) / "baseline" / method
    pairs = load_dataset(_require(Path(input_path) if input_path else _dataset_path(exp, "test"), "Dataset"))
    runner = ReconstructionRunner(exp)
    viz = VisualizationEngine()

    images, records = {}, []
    for i, pair in enumerate(pairs):
        image = runner.reconstruct(method, pair.y, i)
        images[f"sample{i}"] = image
        viz.save_magnitude(image, out / f"sample{i}.png")
        if pair.ground_truth is not None:
            case = cases_from_dataset([pair], exp.fov_threshold)[0]
            viz.save_error_map(image, pair.ground_truth, out / f"sample{i}_error.png")
            records.append({"method": method, "case": i, **image_metrics(image, case.reference, case.region)})
    save_images(images, out / "images.spcr", meta={"method": method})

    if method == BaselineMethod.TV.value:
        write_json(out / "tv_history.json", {
            "tau": runner.tv_tau,
            "histories": {str(k): v for k, v in runner.tv_history.items()},
        })
    if records:
        rows = summarize(records, MetricRegion.FOV)
        write_json(out / METRICS_FILE, rows)
        MetricsDisplay(console).render(rows, title=f"Baseline {method}")


@cli.command(name="eval")
@experiment_options
@click.option("--methods", "methods", multiple=True, type=click.Choice(list(METHODS)),
              help="Repetível; padrão: todos (spicer só com checkpoint)")
@click.option("--region", type=_choice(MetricRegion), default=MetricRegion.FOV.value)
@click.option("--csm-plugin", is_flag=True, help="Também avalia TV com CSMs clássicos, aprendidos e verdadeiros")
@handle_errors
def evaluate(config_path, methods, region, csm_plugin, **overrides):
    """Métricas médias ± desvio por método no split de teste"""
    exp = load_experiment(config_path, overrides)
    out = Path(exp.out)
    cases = cases_from_dataset(load_dataset(_require(_dataset_path(exp, "test"), "Dataset de teste")),
                               exp.fov_threshold, region)

    ckpt_path = _checkpoint_path(exp)
    checkpoint = load_checkpoint(ckpt_path) if ckpt_path.exists() else None
    methods = list(methods) or [m for m in METHODS if m != SPICER_METHOD or checkpoint is not None]
    if SPICER_METHOD in methods and checkpoint is None:
        raise FileNotFoundError(f"Checkpoint não encontrado: {ckpt_path}")

    runner = ReconstructionRunner(exp, checkpoint)
    records = evaluate_methods(cases, runner, methods)
    rows = summarize(records, region)

    write_json(out / METRICS_FILE, rows)
    write_csv(out / "metrics_cases.csv", records)
    display = MetricsDisplay(console)
    atomic_write_bytes(out / "metrics.txt", ("\n".join(display.text_lines(rows)) + "\n").encode("utf-8"))
    display.render(rows, title=f"Avaliação ({len(cases)} casos, região {MetricRegion(region).value})")

    if csm_plugin:
        result = csm_plugin_tv(cases, exp.to_tv_config(runner.ensure_tv_tau()), checkpoint, region, exp.fov_threshold)
        write_json(out / "csm_plugin.json", result.rows)
        display.render(result.rows, title="TV com CSMs plugados")


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(file_okay=False))
@click.option("--out", type=str, default=None, help="Padrão: <runs_dir>/report")
@handle_errors
def report(run_dirs, out):
    """Agrega summary.json e metrics.json de várias execuções"""
    out = out or str(get_config().paths.runs_dir / "report")
    builder = ReportBuilder(run_dirs)
    data = builder.build()
    builder.save(out, data)

    table = Table(title="Suavidade dos CSMs em dados não vistos")
    table.add_column("Execução")
    table.add_column("λ", justify="right")
    table.add_column("‖DS‖²", justify="right")
    for row in data["smoothness_ordering"]:
        table.add_row(row["run"], format_value(row["lambda_smooth"], 4), format_value(row["heldout_smoothness"], 6))
    console.print(table)
    metric_rows = [r for r in data["rows"] if "method" in r]
    if metric_rows:
        MetricsDisplay(console).render(metric_rows, title="Métricas por execução")


def main():
    cli()


if __name__ == "__main__":
    main()
