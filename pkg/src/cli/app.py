# src/cli/app.py
"""
Punto de entrada de línea de comandos: python -m src.cli.app <subcomando>.

Códigos de salida: 0 éxito, 2 error de configuración o de datos, 3 calibración,
4 entrenamiento (todas las corridas divergieron), 5 datos sin emparejar, 6 sin trazas.
"""
import argparse
import os
import sys
from typing import List, Optional

# Añadir la raíz del proyecto para importaciones cuando se ejecuta como script
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.cli.commands import cmd_analyze, cmd_calibrate, cmd_gradstats, cmd_sweep, cmd_train, parse_orders
from src.cli.experiment_config import load_experiment
from src.common.exceptions import CalibrationOutOfRange, DivergedStep, MissingTraces, UnpairedData
from src.common.utils import log_error, log_info
from config.setting import OUT_DIR, THREADS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_TRAINING = 4
EXIT_PAIRING = 5
EXIT_TRACES = 6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairclip",
                                     description="Entrenamiento DP con recorte de gradientes y análisis de equidad")
    sub = parser.add_subparsers(dest="command", required=True)

    calibrate = sub.add_parser("calibrate", help="Calibra el multiplicador de ruido para (epsilon, delta)")
    calibrate.add_argument("--config", required=True, help="Archivo YAML del experimento")
    calibrate.add_argument("--orders", default=None, help="Órdenes de Rényi separados por coma (ej. 2,4,8,16)")
    calibrate.add_argument("--out", default=None, help="Directorio de salida")

    for name, help_text in (("train", "Entrena una corrida"), ("sweep", "Entrena varias semillas consecutivas")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Archivo YAML del experimento")
        p.add_argument("--out", default=None, help="Directorio de salida")
        p.add_argument("--threads", type=int, default=THREADS, help="Hilos de cálculo (no cambia resultados)")
        if name == "train":
            p.add_argument("--seed", type=int, default=None, help="Semilla (por defecto train.seed)")
        else:
            p.add_argument("--seeds", type=int, default=5, help="Número de semillas")
            p.add_argument("--base-seed", type=int, default=None, help="Primera semilla (por defecto train.seed)")

    analyze = sub.add_parser("analyze", help="Disparidad, reducciones y pruebas de Wilcoxon entre métodos")
    analyze.add_argument("results", nargs="*", help="Directorios de corridas o barridos (uno por método)")
    analyze.add_argument("--gaps", default=None, help="CSV largo: method,dataset,seed,attribute,gap")
    analyze.add_argument("--reference", default="softadaclip", help="Método cuyas reducciones se reportan")
    analyze.add_argument("--mean-reduction", action="store_true", help="Pérdida promedio por ejemplo en vez de suma")
    analyze.add_argument("--alpha", type=float, default=0.05, help="Nivel de significancia")
    analyze.add_argument("--out", default=None, help="Directorio de salida")

    gradstats = sub.add_parser("gradstats", help="Normas por subgrupo antes y después del recorte")
    gradstats.add_argument("results", nargs="+", help="Directorios de corridas o barridos (uno por método)")
    gradstats.add_argument("--out", default=None, help="Directorio de salida")
    return parser


def run(args: argparse.Namespace) -> int:
    out_dir = args.out or os.path.join(OUT_DIR, args.command)
    if args.command == "calibrate":
        cmd_calibrate(load_experiment(args.config), out_dir, parse_orders(args.orders))
    elif args.command == "train":
        cmd_train(load_experiment(args.config), out_dir, threads=args.threads, seed=args.seed)
    elif args.command == "sweep":
        cmd_sweep(load_experiment(args.config), out_dir, seeds=args.seeds, base_seed=args.base_seed,
                  threads=args.threads)
    elif args.command == "analyze":
        cmd_analyze(out_dir, args.results, args.gaps, args.reference, args.mean_reduction, args.alpha)
    elif args.command == "gradstats":
        cmd_gradstats(out_dir, args.results)
    log_info(f"Salida en {out_dir}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    try:
        return run(args)
    except CalibrationOutOfRange as e:
        log_error(f"Calibración imposible: {e}")
        return EXIT_CALIBRATION
    except DivergedStep as e:
        log_error(f"Entrenamiento fallido: {e}")
        return EXIT_TRAINING
    except UnpairedData as e:
        log_error(f"Datos sin emparejar: {e}")
        for method, key in e.missing_keys:
            print(f"missing {method}: {key}", file=sys.stderr)
        return EXIT_PAIRING
    except MissingTraces as e:
        log_error(f"Sin trazas: {e}")
        return EXIT_TRACES
    except (ValueError, FileNotFoundError) as e:
        log_error(f"Error de configuración o de datos: {e}")
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
