#!/usr/bin/env python3
"""
MIMO Secrecy Lab
Main application file

Вероятность нулевой секретной ёмкости для схем STT, SAS и OAS
Главный файл приложения
"""

import argparse
import logging
import logging.handlers
import os
import sys
from pathlib import Path

import coloredlogs
import yaml
from dotenv import load_dotenv

# Добавление путей
sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(1, str(Path(__file__).resolve().parent.parent))

from src import __version__
from modules.analytic import p_zero
from modules.errors import OutputError, SecrecyError, ValidationError
from modules.model import SchemeKind, SystemConfig, load_scenario, mer
from modules.montecarlo import estimate_partitioned
from services.experiments import (
    ExperimentRunner,
    FIGURE_IDS,
    fit_diversity,
    parse_grid,
    parse_window,
    rows_exit_code,
)

DEFAULT_SETTINGS = 'config/config.yaml'
LOG_FORMAT = '[%(asctime)s] %(levelname)s [%(name)s] %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


class SecrecyLab:
    """Главный класс: настройки, логирование и команды"""

    def __init__(self, settings_path=DEFAULT_SETTINGS, setup_logging=True):
        """
        Инициализация

        Args:
            settings_path: Путь к файлу настроек
            setup_logging: Настроить обработчики логирования
        """
        self.config = self._load_config(settings_path)

        if setup_logging:
            self._setup_logging()

        self.logger = logging.getLogger(__name__)
        self.logger.info(f"MIMO Secrecy Lab {__version__}")

        self.runner = ExperimentRunner(self.config)
        self.numerics = self.config.get('numerics', {})
        self.mc_config = self.config.get('montecarlo', {})
        self.exp_config = self.config.get('experiments', {})

    def _load_config(self, settings_path):
        """Загрузка настроек"""
        # Загрузка .env
        load_dotenv()

        path = Path(settings_path)
        if path.exists():
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    config = yaml.safe_load(f) or {}
            except OSError as e:
                raise OutputError(f"cannot read settings file {path}: {e}") from e
            except yaml.YAMLError as e:
                raise ValidationError(f"settings file {path} is not valid YAML: {e}") from e
        elif settings_path != DEFAULT_SETTINGS:
            raise ValidationError(f"settings file {path} does not exist")
        else:
            config = {}

        if not isinstance(config, dict):
            raise ValidationError(f"settings file {path} must contain a mapping")

        # Переопределения из окружения
        log_level = os.getenv('SECRECY_LOG_LEVEL')
        if log_level:
            config.setdefault('logging', {})['level'] = log_level.upper()

        seed = os.getenv('SECRECY_SEED')
        if seed:
            try:
                config.setdefault('experiments', {})['seed'] = int(seed)
            except ValueError:
                raise ValidationError(f"SECRECY_SEED must be an integer, got '{seed}'") from None

        return config

    def _setup_logging(self):
        """Настройка системы логирования"""
        log_config = self.config.get('logging', {})

        level_name = str(log_config.get('level', 'INFO')).upper()
        log_level = getattr(logging, level_name, None)
        if not isinstance(log_level, int):
            raise ValidationError(f"unknown log level '{level_name}'")

        root_logger = logging.getLogger()
        root_logger.setLevel(log_level)

        log_file = log_config.get('file')
        if log_file:
            # Создание директории для логов
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)

            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=log_config.get('max_bytes', 10485760),
                backupCount=log_config.get('backup_count', 5),
                encoding='utf-8'
            )
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
            root_logger.addHandler(file_handler)

        # Консольный вывод только в stderr: stdout занят результатами
        if log_config.get('console_output', True):
            coloredlogs.install(level=log_level, fmt=LOG_FORMAT, datefmt=LOG_DATEFMT, stream=sys.stderr)

    # --- Команды ---

    def default_seed(self):
        return int(self.exp_config.get('seed', 0))

    def default_samples(self):
        return int(self.exp_config.get('samples', 0))

    def scenario(self, path=None):
        """Сценарий из файла или секции system настроек"""
        if path:
            return load_scenario(path)
        return SystemConfig.from_dict(self.config.get('system', {}))

    def analytic(self, scheme, m_tx, n_dest, n_eve, mer_db, rel_tol=None):
        """
        Аналитическая вероятность нулевой секретной ёмкости

        Returns:
            float: Вероятность
        """
        config = SystemConfig.iid(m_tx, n_dest, n_eve, mer_db=mer_db)
        rel_tol = rel_tol if rel_tol is not None else self.numerics.get('rel_tol', 1e-9)
        p = p_zero(
            scheme, config.m_tx, config.n_dest, config.n_eve, mer(config), rel_tol=rel_tol,
            max_panels=self.numerics.get('max_panels', 64), clamp_tol=self.numerics.get('clamp_tol', 1e-12),
        )
        self.logger.info(f"{SchemeKind.parse(scheme).value} {config.summary()} @ {mer_db} дБ: p = {p:.6e}")
        return p

    def simulate(self, scheme, m_tx, n_dest, n_eve, mer_db, snr_db, samples, seed, partitions=1):
        """
        Моделирование Монте-Карло

        Returns:
            EstimateWithCI
        """
        config = SystemConfig.iid(m_tx, n_dest, n_eve, mer_db=mer_db, snr_db=snr_db)
        return estimate_partitioned(
            scheme, config, samples, seed,
            partitions=partitions,
            workers=self.mc_config.get('workers', 1),
            chunk_size=self.mc_config.get('chunk_size', 65536),
            confidence=self.mc_config.get('confidence', 0.95),
            complex_gaussian=self.mc_config.get('complex_gaussian', False),
        )

    def sweep(self, scenario_path, schemes, grid_spec, out_dir, samples=0, with_bounds=False, seed=None):
        """
        Развёртка по MER с записью CSV на каждую схему и манифеста

        Returns:
            tuple: (пути к записанным файлам, код завершения по ошибкам точек)
        """
        config = self.scenario(scenario_path)
        seed = self.default_seed() if seed is None else seed
        grid = parse_grid(grid_spec)
        rows = self.runner.sweep_mer(schemes, config, grid, samples, with_bounds, seed)
        written = self.runner.write_sweep(rows, config, grid, out_dir, samples, seed, __version__)
        return written, rows_exit_code(rows)

    def diversity(self, scenario_path, scheme, window_spec):
        """
        Оценка порядка секретного разнесения по аналитической кривой

        Returns:
            DiversityEstimate
        """
        config = self.scenario(scenario_path)
        lo, hi = parse_window(window_spec)
        step = float(self.exp_config.get('diversity_step_db', 1.0))
        rows = self.runner.sweep_mer([scheme], config, parse_grid(f"{lo}:{hi}:{step}"))
        return fit_diversity(rows, (lo, hi))

    def figure(self, fig_id, out_dir, samples=None, seed=None):
        """Воспроизведение рисунка"""
        samples = self.default_samples() if samples is None else samples
        seed = self.default_seed() if seed is None else seed
        return self.runner.figure(fig_id, out_dir, mc_samples=samples, seed=seed, version=__version__)


def _add_system_args(parser):
    parser.add_argument('--scheme', required=True, choices=[s.value for s in SchemeKind], help='Схема передачи')
    parser.add_argument('--m', type=int, required=True, help='Число передающих антенн M')
    parser.add_argument('--nd', type=int, required=True, help='Число антенн получателя N_d')
    parser.add_argument('--ne', type=int, required=True, help='Число антенн перехватчика N_e')
    parser.add_argument('--mer-db', type=float, required=True, help='MER в дБ')


def build_parser():
    parser = argparse.ArgumentParser(prog='secrecy', description='MIMO Secrecy Lab')
    parser.add_argument('--settings', type=str, default=DEFAULT_SETTINGS, help='Путь к файлу настроек')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('analytic', help='Аналитическая вероятность')
    _add_system_args(p)
    p.add_argument('--rel-tol', type=float, default=None, help='Относительная точность квадратуры')

    p = sub.add_parser('simulate', help='Оценка Монте-Карло')
    _add_system_args(p)
    p.add_argument('--snr-db', type=float, default=0.0, help='SNR в дБ')
    p.add_argument('--samples', type=int, required=True, help='Число реализаций')
    p.add_argument('--seed', type=int, default=None, help='Главное зерно')
    p.add_argument('--partitions', type=int, default=1, help='Число независимых разделов')

    p = sub.add_parser('sweep', help='Развёртка по MER')
    p.add_argument('--config', required=True, help='Файл сценария (YAML)')
    p.add_argument('--schemes', required=True, help='Схемы через запятую (stt,sas,oas)')
    p.add_argument('--mer-db', required=True, help='Сетка LO:HI:STEP в дБ')
    p.add_argument('--samples', type=int, default=0, help='Реализаций Монте-Карло на точку')
    p.add_argument('--seed', type=int, default=None, help='Главное зерно')
    p.add_argument('--bounds', action='store_true', help='Добавить асимптотические границы')
    p.add_argument('--out', required=True, help='Каталог результатов')

    p = sub.add_parser('diversity', help='Порядок секретного разнесения')
    p.add_argument('--config', required=True, help='Файл сценария (YAML)')
    p.add_argument('--scheme', required=True, choices=[s.value for s in SchemeKind], help='Схема передачи')
    p.add_argument('--window-db', required=True, help='Окно LO:HI в дБ')

    p = sub.add_parser('figure', help='Воспроизведение рисунка')
    p.add_argument('--id', type=int, required=True, choices=FIGURE_IDS, help='Номер рисунка')
    p.add_argument('--out', required=True, help='Каталог результатов')
    p.add_argument('--samples', type=int, default=None, help='Реализаций Монте-Карло на точку')
    p.add_argument('--seed', type=int, default=None, help='Главное зерно')

    return parser


def run(args, out=None):
    """
    Выполнение команды

    Returns:
        int: Код завершения
    """
    out = out or sys.stdout
    lab = SecrecyLab(settings_path=args.settings)

    if args.command == 'analytic':
        p = lab.analytic(args.scheme, args.m, args.nd, args.ne, args.mer_db, args.rel_tol)
        print(f"{p:.12g}", file=out)

    elif args.command == 'simulate':
        seed = lab.default_seed() if args.seed is None else args.seed
        result = lab.simulate(args.scheme, args.m, args.nd, args.ne, args.mer_db, args.snr_db,
                              args.samples, seed, args.partitions)
        print(result.as_csv(), file=out)

    elif args.command == 'sweep':
        schemes = [s.strip() for s in args.schemes.split(',') if s.strip()]
        written, code = lab.sweep(args.config, schemes, args.mer_db, args.out, args.samples, args.bounds, args.seed)
        for path in written:
            print(path, file=out)
        if code:
            print(f"error: some sweep points failed, see {written[-1]}", file=sys.stderr)
            return code

    elif args.command == 'diversity':
        est = lab.diversity(args.config, args.scheme, args.window_db)
        print("slope,expected,window_lo_db,window_hi_db,residual", file=out)
        print(f"{est.slope:.6f},{est.expected},{est.window_db[0]:g},{est.window_db[1]:g},{est.residual:.3e}", file=out)

    elif args.command == 'figure':
        for path in lab.figure(args.id, args.out, args.samples, args.seed):
            print(path, file=out)

    return 0


def main(argv=None):
    """Точка входа"""
    args = build_parser().parse_args(argv)

    try:
        return run(args)
    except SecrecyError as e:
        logging.getLogger(__name__).error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logging.getLogger(__name__).info("Получен сигнал остановки")
        return 130


if __name__ == '__main__':
    sys.exit(main())
