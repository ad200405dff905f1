"""CLI du toolkit de file d'energie.

Sous-commandes :
    chain        chaine exacte et distribution stationnaire (capacite finie)
    closed-form  formule M/M/1/c contre valeur corrigee (et Geo/Geo/1/c)
    simulate     simulation Monte Carlo de la file d'energie
    gated        source de donnees conditionnee par l'energie (stabilite)
    sweep        balayage (delta, c) en CSV / JSON / tableau

Exemples :

    python -m energy_queue chain --delta 0.7 --capacity 10
    python -m energy_queue closed-form --delta 0.9 --capacity 2 --format json
    python -m energy_queue sweep --preset reproduce-comment --format csv --output out.csv

Codes de sortie : 0 succes, 2 option invalide, 1 erreur de calcul.
Aucune variable d'environnement n'est lue.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from io import StringIO
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from energy_queue.chain import build_energy_chain, nonempty_prob, solve_stationary
from energy_queue.closedform import compare, geo_geo_1c_nonempty
from energy_queue.config import MAX_SEED, QueueSpec, SimConfig, SweepConfig, parse_capacity, settings
from energy_queue.errors import EnergyQueueError, InvalidParameterError, SinkWriteError
from energy_queue.montecarlo import simulate_energy_queue, simulate_gated_source
from energy_queue.sweep import PRESETS, emit_csv, emit_json, format_capacity, format_real, preset_config, rows_to_frame, run_sweep

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"
logger = logging.getLogger("energy_queue.cli")

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2


# ============================================================
# Types d'arguments (validation avant tout calcul)
# ============================================================

def probability_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"reel dans [0, 1] attendu (recu '{text}')") from exc
    if not (0.0 <= value <= 1.0):
        raise argparse.ArgumentTypeError(f"doit etre dans [0, 1] (recu {text})")
    return value


def capacity_arg(text: str) -> Optional[int]:
    try:
        value = parse_capacity(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"entier >= 1 ou inf attendu (recu '{text}')") from exc
    if value is not None and value < 1:
        raise argparse.ArgumentTypeError(f"doit etre un entier >= 1 ou inf (recu {text})")
    return value


def _int_arg(minimum: int, maximum: Optional[int] = None) -> Callable[[str], int]:
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"entier attendu (recu '{text}')") from exc
        if value < minimum or (maximum is not None and value > maximum):
            bound = f"[{minimum}, {maximum}]" if maximum is not None else f">= {minimum}"
            raise argparse.ArgumentTypeError(f"doit etre {bound} (recu {text})")
        return value

    return parse


def positive_real_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"reel attendu (recu '{text}')") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"doit etre > 0 (recu {text})")
    return value


def probability_list_arg(text: str) -> List[float]:
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("liste non vide attendue")
    return [probability_arg(item) for item in items]


def capacity_list_arg(text: str) -> List[Optional[int]]:
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("liste non vide attendue")
    return [capacity_arg(item) for item in items]


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["csv", "json", "human"], default="human", help="Format de sortie (defaut: human).")
    common.add_argument("--output", type=Path, help="Fichier de sortie (defaut: sortie standard).")
    common.add_argument("--verbose", action="store_true", help="Journalisation INFO sur la sortie d'erreur.")

    queue = argparse.ArgumentParser(add_help=False)
    queue.add_argument("--delta", type=probability_arg, required=True, help="Probabilite d'arrivee d'energie par slot.")
    queue.add_argument("--capacity", type=capacity_arg, required=True, help="Capacite (entier >= 1 ou inf).")
    queue.add_argument("--mu-e", dest="mu_e", type=probability_arg, default=1.0, help="Probabilite de service (defaut: 1).")

    simulation = argparse.ArgumentParser(add_help=False)
    simulation.add_argument("--slots", type=_int_arg(1), default=1_000_000, help="Nombre de slots (defaut: 10^6).")
    simulation.add_argument("--seed", type=_int_arg(0, MAX_SEED), default=settings.default_seed, help="Graine u64.")
    simulation.add_argument("--warmup", type=_int_arg(0), help="Slots exclus des statistiques (defaut: 1%%, min 1000).")
    simulation.add_argument("--batches", type=_int_arg(2), default=settings.batches, help="Lots pour l'erreur standard.")

    parser = argparse.ArgumentParser(
        prog="energy_queue",
        description="Analyse exacte et simulation de la file d'energie d'un emetteur rechargeable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("chain", parents=[common, queue], help="Chaine exacte et distribution stationnaire.")

    sub.add_parser("closed-form", parents=[common, queue], help="Formule M/M/1/c contre valeur corrigee.")

    sub.add_parser("simulate", parents=[common, queue, simulation], help="Simulation de la file d'energie.")

    gated = sub.add_parser("gated", parents=[common, queue, simulation], help="Source conditionnee par l'energie.")
    gated.add_argument("--lambda-p", dest="lambda_p", type=probability_arg, required=True, help="Arrivees de donnees par slot.")
    gated.add_argument("--success-prob", dest="success_prob", type=probability_arg, default=1.0, help="Probabilite de succes.")
    gated.add_argument(
        "--slope-threshold",
        dest="slope_threshold",
        type=positive_real_arg,
        default=settings.slope_threshold,
        help="Seuil de pente pour le verdict de stabilite (paquets/slot).",
    )

    sweep = sub.add_parser("sweep", parents=[common], help="Balayage (delta, c).")
    sweep.add_argument("--deltas", type=probability_list_arg, help="Liste de delta separes par des virgules.")
    sweep.add_argument("--capacities", type=capacity_list_arg, help="Liste de capacites (inf accepte).")
    sweep.add_argument("--mu-e", dest="mu_e", type=probability_arg, help="Probabilite de service (defaut: 1).")
    sweep.add_argument("--simulate", action="store_true", help="Ajoute la colonne Monte Carlo.")
    sweep.add_argument("--slots", type=_int_arg(1), help="Slots par simulation (defaut: 10^5).")
    sweep.add_argument("--seed", type=_int_arg(0, MAX_SEED), help="Graine de base u64.")
    sweep.add_argument("--batches", type=_int_arg(2), help="Lots pour l'erreur standard.")
    sweep.add_argument("--preset", choices=sorted(PRESETS), help="Grille predefinie.")
    sweep.add_argument("--jobs", type=_int_arg(1), default=1, help="Lignes evaluees en parallele (sortie identique).")
    return parser


# ============================================================
# Validation croisee -> objets de configuration
# ============================================================

def _sim_config(args: argparse.Namespace, spec: QueueSpec) -> SimConfig:
    return SimConfig.build(spec=spec, slots=args.slots, seed=args.seed, warmup_slots=args.warmup, batches=args.batches)


def prepare(args: argparse.Namespace, parser: argparse.ArgumentParser) -> Dict[str, object]:
    """Construit les configurations ; toute incoherence sort en code 2 via parser.error."""
    try:
        if args.command == "sweep":
            overrides = {
                key: value
                for key, value in {
                    "deltas": args.deltas,
                    "capacities": args.capacities,
                    "mu_e": args.mu_e,
                    "sim_slots": args.slots,
                    "base_seed": args.seed,
                    "batches": args.batches,
                }.items()
                if value is not None
            }
            if args.simulate:
                overrides["simulate"] = True
            if args.preset:
                return {"sweep": preset_config(args.preset, **overrides)}
            if args.deltas is None or args.capacities is None:
                parser.error("argument --deltas/--capacities: requis sans --preset")
            return {"sweep": SweepConfig.build(**overrides)}

        if args.command == "chain" and args.capacity is None:
            parser.error("argument --capacity: inf non supporte par chain (capacite finie requise)")
        spec = QueueSpec.build(delta=args.delta, mu_e=args.mu_e, capacity=args.capacity)
        if args.command in ("simulate", "gated"):
            if args.warmup is not None and args.warmup >= args.slots:
                parser.error(f"argument --warmup: doit etre < --slots ({args.warmup} >= {args.slots})")
            return {"spec": spec, "sim": _sim_config(args, spec)}
        return {"spec": spec}
    except InvalidParameterError as exc:
        parser.error(str(exc))
    return {}


# ============================================================
# Rendu
# ============================================================

def _text_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_real(value)
    if value is None:
        return ""
    return str(value)


def _json_value(value: object) -> object:
    if isinstance(value, float):
        return float(format_real(value))
    if isinstance(value, dict):
        return {str(key): _json_value(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_json_value(item) for item in value]
    return value


def render_record(record: Dict[str, object], fmt: str, table: Optional[pd.DataFrame] = None) -> str:
    """Rendu d'un enregistrement : cle=valeur (human), une ligne CSV, ou objet JSON.

    `table` est une table de detail (etats, histogramme) ajoutee en human et csv.
    """
    scalars = {key: value for key, value in record.items() if not isinstance(value, (dict, list))}
    if fmt == "json":
        return json.dumps({key: _json_value(value) for key, value in record.items()}, indent=2)
    if fmt == "csv":
        frame = pd.DataFrame([{key: _text_value(value) for key, value in scalars.items()}], dtype=str)
        text = frame.to_csv(index=False, lineterminator="\n")
        if table is not None:
            text += "\n" + table.to_csv(index=False, lineterminator="\n")
        return text
    lines = [f"{key}={_text_value(value)}" for key, value in scalars.items()]
    if table is not None:
        lines.append("")
        lines.append(table.to_string(index=False))
    return "\n".join(lines) + "\n"


def command_chain(spec: QueueSpec, fmt: str) -> str:
    pi = solve_stationary(build_energy_chain(spec))
    nonempty = nonempty_prob(pi)
    if fmt == "human":
        lines = [f"delta={format_real(spec.delta)} mu_e={format_real(spec.mu_e)} capacity={spec.capacity_label}"]
        lines += [f"pi[{j}]={format_real(float(value))}" for j, value in enumerate(pi.pi)]
        lines.append(f"nonempty={format_real(nonempty)}")
        lines.append(f"residual={pi.residual:.3e}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        series = pi.as_series()
        frame = pd.DataFrame({"state": [str(j) for j in series.index], "pi": [format_real(float(v)) for v in series]}, dtype=str)
        return frame.to_csv(index=False, lineterminator="\n")
    record = {
        "delta": spec.delta,
        "mu_e": spec.mu_e,
        "capacity": spec.capacity,
        "pi": [float(v) for v in pi.pi],
        "nonempty": nonempty,
        "residual": pi.residual,
    }
    return render_record(record, fmt)


def command_closed_form(spec: QueueSpec, fmt: str) -> str:
    comparison = compare(spec.delta, spec.capacity)
    record: Dict[str, object] = {
        "delta": comparison.delta,
        "capacity": format_capacity(comparison.capacity),
        "mm1c_nonempty": comparison.mm1c_value,
        "corrected_nonempty": comparison.corrected_value,
        "abs_error": comparison.abs_error,
        "limit_evaluated": comparison.limit_evaluated,
    }
    if spec.mu_e != 1.0:
        record["mu_e"] = spec.mu_e
        try:
            record["geo_geo_1c_nonempty"] = geo_geo_1c_nonempty(spec.delta, spec.mu_e, spec.capacity)
        except InvalidParameterError as exc:
            logger.warning(f"Geo/Geo/1/c non evaluee: {exc}")
    return render_record(record, fmt)


def command_simulate(cfg: SimConfig, fmt: str) -> str:
    result = simulate_energy_queue(cfg)
    record: Dict[str, object] = {
        "delta": cfg.spec.delta,
        "mu_e": cfg.spec.mu_e,
        "capacity": cfg.spec.capacity_label,
        "slots": cfg.slots,
        "warmup_slots": cfg.warmup_slots,
        "seed": result.seed,
        "generator": result.generator,
        "measured_slots": result.measured_slots,
        "nonempty_fraction": result.nonempty_fraction,
        "nonempty_stderr": result.nonempty_stderr,
        "max_occupancy_seen": result.max_occupancy_seen,
        "admitted": result.admitted,
        "departed": result.departed,
        "dropped": result.dropped,
        "final_occupancy": result.final_occupancy,
    }
    if fmt == "json":
        record["histogram"] = dict(result.histogram)
        return render_record(record, fmt)
    table = pd.DataFrame(
        {
            "occupancy": [str(level) for level in result.histogram],
            "slots": [str(count) for count in result.histogram.values()],
        },
        dtype=str,
    )
    return render_record(record, fmt, table=table)


def command_gated(args: argparse.Namespace, cfg: SimConfig, fmt: str) -> str:
    result = simulate_gated_source(args.lambda_p, args.success_prob, cfg, slope_threshold=args.slope_threshold)
    record: Dict[str, object] = {
        "delta": cfg.spec.delta,
        "mu_e": cfg.spec.mu_e,
        "capacity": cfg.spec.capacity_label,
        "success_prob": args.success_prob,
        "slots": cfg.slots,
        "seed": result.seed,
        "arrival_rate": result.arrival_rate,
        "empirical_arrival_rate": result.empirical_arrival_rate,
        "delivered_throughput": result.delivered_throughput,
        "mean_queue_length": result.mean_queue_length,
        "queue_growth_slope": result.queue_growth_slope,
        "stable_verdict": result.stable_verdict,
        "borderline": result.borderline,
        "energy_nonempty_fraction": result.energy_nonempty_fraction,
    }
    return render_record(record, fmt)


def command_sweep(cfg: SweepConfig, fmt: str, jobs: int) -> str:
    rows = run_sweep(cfg, jobs=jobs)
    if fmt == "human":
        return rows_to_frame(rows).to_string(index=False) + "\n"
    buffer = StringIO()
    (emit_csv if fmt == "csv" else emit_json)(rows, buffer)
    return buffer.getvalue()


# ============================================================
# Sortie
# ============================================================

def write_output(text: str, output: Optional[Path]) -> None:
    """Ecrit sur la sortie standard ou de facon atomique (fichier temporaire puis rename)."""
    if output is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        sys.stdout.flush()
        return

    target = output.resolve()
    tmp_name = None
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            "w", encoding="utf-8", newline="", dir=target.parent, prefix=f".{target.name}.", suffix=".tmp", delete=False
        ) as handle:
            tmp_name = handle.name
            handle.write(text)
        os.replace(tmp_name, target)
        tmp_name = None
        logger.info(f"Sortie ecrite dans {target}")
    except OSError as exc:
        raise SinkWriteError(f"ecriture impossible vers {target}: {exc}") from exc
    finally:
        if tmp_name is not None and os.path.exists(tmp_name):
            os.unlink(tmp_name)


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger("energy_queue").setLevel(logging.INFO if verbose else logging.WARNING)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_arg_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(args.verbose)
        prepared = prepare(args, parser)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    try:
        if args.command == "chain":
            text = command_chain(prepared["spec"], args.format)  # type: ignore[arg-type]
        elif args.command == "closed-form":
            text = command_closed_form(prepared["spec"], args.format)  # type: ignore[arg-type]
        elif args.command == "simulate":
            text = command_simulate(prepared["sim"], args.format)  # type: ignore[arg-type]
        elif args.command == "gated":
            text = command_gated(args, prepared["sim"], args.format)  # type: ignore[arg-type]
        else:
            text = command_sweep(prepared["sweep"], args.format, args.jobs)  # type: ignore[arg-type]
        write_output(text, args.output)
    except EnergyQueueError as exc:
        logger.error(f"Echec de la commande {args.command}: {exc}")
        return EXIT_COMPUTATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
