"""
Gaze Toolkit - Estimação de olhar a partir de imagens sintéticas do olho
Versão 1.0 - Linha de comando: gerar dados, treinar, avaliar, inferir, plotar e sweep

Uso:
    python main.py generate --n 1000 --seed 7 --out data/desk
    python main.py train --config configs/landmark_desk.json --dataset data/desk
    python main.py eval --checkpoint runs/landmark/checkpoint.gzk --dataset data/desk
    python main.py infer --checkpoint runs/landmark/checkpoint.gzk --dataset data/desk --index 3
    python main.py plot --report runs/landmark/report.json --angle yaw --out yaw.svg
    python main.py sweep --config configs/landmark_desk.json --param base_lr --values 1e-3,1e-4,1e-5

Opções de treino podem ser sobrescritas com --chave valor (chaves
pontuadas alcançam configs aninhadas: --hourglass.n_stacks 3).

Códigos de saída: 0 sucesso, 1 erro de uso, 2 falha em execução.
GZK_THREADS limita o paralelismo (workers e threads do BLAS).
"""
import os
import sys

# Threads do BLAS fixadas antes de importar numpy (determinismo por número de threads)
if os.environ.get("GZK_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["GZK_THREADS"])

import math
import argparse

from utils import (Fore, GazeToolkitError, print_colored, print_header, print_info, print_success,
                   print_error, set_quiet, load_json, ConfigError)
from eye_geometry import SamplingRanges, RenderSettings, read_dataset, split_by_subject, DEFAULT_HEATMAP_SIGMA
from estimators import LightweightModel, FitSettings
from trainer import TrainConfig, Trainer, generate_dataset, run_sweep, parse_override_value, default_chain
from evaluator import (CHAINS, BASE_CHAINS, REFERENCE_RESULTS, EvalReport, evaluate, table_row,
                       reference_rows, write_table_csv, plot_pred_vs_actual)
from networks import load_network

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Argumentos inválidos na linha de comando"""

    def __init__(self, message, usage=''):
        super().__init__(message)
        self.usage = usage


class ToolkitArgumentParser(argparse.ArgumentParser):
    """ArgumentParser que levanta UsageError em vez de encerrar o processo"""

    def error(self, message):
        raise UsageError(message, self.format_usage())


def parse_overrides(extra, parser):
    """
    Converte ['--chave', 'valor', ...] em dict de overrides

    Raises:
        UsageError: Flag sem valor ou argumento solto
    """
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith('--') or len(token) <= 2:
            raise UsageError(f"argumento não reconhecido: {token}", parser.format_usage())
        if '=' in token:
            key, value = token[2:].split('=', 1)
            i += 1
        else:
            if i + 1 >= len(extra) or extra[i + 1].startswith('--'):
                raise UsageError(f"flag {token} exige um valor", parser.format_usage())
            key, value = token[2:], extra[i + 1]
            i += 2
        overrides[key] = value
    return overrides


def build_parser():
    parser = ToolkitArgumentParser(prog='gaze-toolkit', description='Estimação de olhar com dados sintéticos')
    parser.add_argument('--quiet', action='store_true', help='Suprime mensagens informativas')
    sub = parser.add_subparsers(dest='command', metavar='{generate,train,eval,infer,plot,sweep}')
    sub.required = True

    gen = sub.add_parser('generate', help='Gera um dataset sintético')
    gen.add_argument('--n', type=int, required=True, help='Número de amostras')
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out', required=True, help='Pasta de saída')
    gen.add_argument('--ranges', help='JSON com SamplingRanges')
    gen.add_argument('--render', help='JSON com RenderSettings')
    gen.add_argument('--sigma', type=float, default=DEFAULT_HEATMAP_SIGMA)
    gen.add_argument('--height', type=int, default=64)
    gen.add_argument('--width', type=int, default=96)
    gen.add_argument('--workers', type=int)

    train = sub.add_parser('train', help='Treina um modelo (aceita --chave valor)')
    train.add_argument('--config', help='TrainConfig em JSON')
    train.add_argument('--dataset')
    train.add_argument('--out', help='Pasta de saída (output_dir)')
    train.add_argument('--resume', help='Checkpoint para retomar')

    for name, help_text in (('eval', 'Avalia uma cadeia de estimação'),
                            ('infer', 'Estima o olhar de uma amostra')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--dataset', required=True)
        p.add_argument('--checkpoint', help='Checkpoint .gzk da rede ou JSON do modelo leve')
        p.add_argument('--truth-landmarks', action='store_true',
                       help='Usa os landmarks reais (avaliação só do estimador)')
        p.add_argument('--lightweight', help='JSON do modelo leve para a cadeia lightweight')
        p.add_argument('--chain', choices=CHAINS)
        p.add_argument('--base-chain', choices=BASE_CHAINS, default='fit')
        p.add_argument('--landmark-set', choices=('iris', 'full'), default='iris')
        if name == 'eval':
            p.add_argument('--split', choices=('train', 'val', 'test', 'all'), default='test')
            p.add_argument('--calibration-samples', type=int, default=10)
            p.add_argument('--model-id')
            p.add_argument('--out', help='Relatório JSON')
            p.add_argument('--table', help='Tabela CSV')
            p.add_argument('--study', choices=sorted(REFERENCE_RESULTS))
        else:
            p.add_argument('--index', type=int, default=0)

    plot = sub.add_parser('plot', help='Gráfico SVG predito vs real')
    plot.add_argument('--report', required=True)
    plot.add_argument('--angle', choices=('pitch', 'yaw'), required=True)
    plot.add_argument('--out', required=True)

    sweep = sub.add_parser('sweep', help='Treina e avalia uma grade de configurações')
    sweep.add_argument('--config', help='TrainConfig base em JSON')
    sweep.add_argument('--dataset')
    sweep.add_argument('--grid', help='JSON com lista de overrides')
    sweep.add_argument('--param', help='Chave variada')
    sweep.add_argument('--values', help='Valores separados por vírgula')
    sweep.add_argument('--out', required=True, help='CSV combinado')
    sweep.add_argument('--study', choices=sorted(REFERENCE_RESULTS))
    sweep.add_argument('--output-dir')
    parser.subcommands = sub.choices
    return parser


class GazeToolkitApp:
    """
    Aplicação de linha de comando do Gaze Toolkit

    Cada subcomando é um método cmd_<nome> que recebe os argumentos já
    validados.
    """

    def __init__(self, parser):
        self.parser = parser

    def show_banner(self):
        print_colored("=" * 70, Fore.CYAN)
        print_colored("                    GAZE TOOLKIT v1.0", Fore.YELLOW)
        print_colored("        Estimação de olhar com landmarks, gazemaps e DenseNet", Fore.WHITE)
        print_colored("=" * 70, Fore.CYAN)

    # --- treino ---------------------------------------------------------

    def _train_config(self, args, extra, subparser):
        try:
            cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
            cfg = cfg.with_overrides(parse_overrides(extra, subparser))
        except ConfigError as e:
            raise UsageError(str(e), subparser.format_usage()) from e
        if args.dataset:
            cfg.dataset = args.dataset
        if not cfg.dataset:
            raise UsageError("--dataset é obrigatório (ou 'dataset' na configuração)", subparser.format_usage())
        return cfg

    def cmd_generate(self, args):
        ranges = SamplingRanges.from_dict(load_json(args.ranges)) if args.ranges else SamplingRanges()
        render = RenderSettings.from_dict(load_json(args.render)) if args.render else RenderSettings()
        generate_dataset(args.n, args.seed, args.out, ranges, (args.height, args.width), render,
                         args.sigma, args.workers)

    def cmd_train(self, args, extra, subparser):
        cfg = self._train_config(args, extra, subparser)
        if args.out:
            cfg.output_dir = args.out
        if args.resume:
            cfg.resume_from = args.resume
        result = Trainer(cfg).train()
        print_success(f"Checkpoint: {result['checkpoint']}")

    def cmd_sweep(self, args, extra, subparser):
        cfg = self._train_config(args, extra, subparser)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        if args.grid:
            grid = load_json(args.grid)
            if not isinstance(grid, list) or not all(isinstance(g, dict) for g in grid):
                raise UsageError("--grid deve conter uma lista de objetos", subparser.format_usage())
        elif args.param and args.values:
            grid = [{args.param: parse_override_value(v.strip())} for v in args.values.split(',') if v.strip()]
        else:
            raise UsageError("informe --grid ou --param com --values", subparser.format_usage())
        run_sweep(cfg, grid, args.out, args.study)

    # --- avaliação ------------------------------------------------------

    def _estimator_inputs(self, args, subparser):
        """Resolve (chain, checkpoint de rede, modelo leve)"""
        network_ckpt = None
        lightweight = None
        if args.checkpoint and args.checkpoint.endswith('.json'):
            lightweight = LightweightModel.from_json(load_json(args.checkpoint))
            if not args.truth_landmarks:
                print_info("Modelo leve sem rede de landmarks: usando landmarks reais")
        elif args.checkpoint:
            network_ckpt = args.checkpoint
        if args.lightweight:
            lightweight = LightweightModel.from_json(load_json(args.lightweight))

        chain = args.chain
        if chain is None:
            if network_ckpt:
                _, _, metadata = load_network(network_ckpt)
                chain = default_chain(metadata['kind'])
            elif lightweight is not None:
                chain = 'lightweight'
            else:
                chain = 'fit'
        if chain not in ('oracle', 'constant') and not (args.checkpoint or args.truth_landmarks):
            raise UsageError(f"cadeia '{chain}' exige --checkpoint (ou --truth-landmarks)",
                             subparser.format_usage())
        return chain, network_ckpt, lightweight

    def _view(self, args):
        dataset = read_dataset(args.dataset)
        split = getattr(args, 'split', 'all')
        if split == 'all':
            return dataset
        train_idx, val_idx, test_idx = split_by_subject(dataset.subject_ids)
        return dataset.subset({'train': train_idx, 'val': val_idx, 'test': test_idx}[split])

    def cmd_eval(self, args, subparser):
        chain, network_ckpt, lightweight = self._estimator_inputs(args, subparser)
        view = self._view(args)
        report = evaluate(view, chain, checkpoint=network_ckpt, lightweight_model=lightweight,
                          base_chain=args.base_chain, calibration_samples=args.calibration_samples,
                          fit_settings=FitSettings(landmark_set=args.landmark_set), model_id=args.model_id)
        print_header(f"AVALIAÇÃO: {report.model_id}")
        print_colored(f"  Amostras:      {report.n_samples}", Fore.WHITE)
        print_colored(f"  MAE pitch:     {report.mae_pitch_deg:.3f}°", Fore.WHITE)
        print_colored(f"  MAE yaw:       {report.mae_yaw_deg:.3f}°", Fore.WHITE)
        print_colored(f"  MAE angular:   {report.mae_angular_deg:.3f}°", Fore.GREEN)
        if report.landmark_error_px is not None:
            print_colored(f"  Erro landmarks (mediana): {report.landmark_error_px:.3f} px", Fore.WHITE)
        if args.out:
            report.save(args.out)
            print_success(f"Relatório salvo: {args.out}")
        if args.table:
            rows = [table_row(report)] + (reference_rows(args.study) if args.study else [])
            write_table_csv(args.table, rows)
            print_success(f"Tabela salva: {args.table}")

    def cmd_infer(self, args, subparser):
        if args.chain == 'with-calibration':
            raise UsageError("infer não suporta with-calibration", subparser.format_usage())
        chain, network_ckpt, lightweight = self._estimator_inputs(args, subparser)
        dataset = read_dataset(args.dataset)
        if not 0 <= args.index < len(dataset):
            raise UsageError(f"--index fora do intervalo [0, {len(dataset)})", subparser.format_usage())
        report = evaluate(dataset.subset([args.index]), chain, checkpoint=network_ckpt,
                          lightweight_model=lightweight,
                          fit_settings=FitSettings(landmark_set=args.landmark_set))
        sample = report.per_sample[0]
        pitch, yaw = sample['prediction']
        print_header(f"AMOSTRA {args.index} ({chain})")
        print_colored(f"  Predito: pitch={pitch:+.5f} rad ({math.degrees(pitch):+.2f}°)  "
                      f"yaw={yaw:+.5f} rad ({math.degrees(yaw):+.2f}°)", Fore.GREEN)
        t_pitch, t_yaw = sample['truth']
        print_colored(f"  Real:    pitch={t_pitch:+.5f} rad  yaw={t_yaw:+.5f} rad  "
                      f"(erro angular {report.mae_angular_deg:.2f}°)", Fore.WHITE)

    def cmd_plot(self, args):
        plot_pred_vs_actual(EvalReport.load(args.report), args.angle, args.out)

    def run(self, argv):
        """
        Executa um subcomando

        Returns:
            int: Código de saída
        """
        args, extra = self.parser.parse_known_args(argv)
        subparser = self.parser.subcommands[args.command]
        if extra and args.command not in ('train', 'sweep'):
            raise UsageError(f"argumentos não reconhecidos: {' '.join(extra)}", subparser.format_usage())
        set_quiet(args.quiet)
        if not args.quiet:
            self.show_banner()

        if args.command == 'generate':
            self.cmd_generate(args)
        elif args.command == 'train':
            self.cmd_train(args, extra, subparser)
        elif args.command == 'sweep':
            self.cmd_sweep(args, extra, subparser)
        elif args.command == 'eval':
            self.cmd_eval(args, subparser)
        elif args.command == 'infer':
            self.cmd_infer(args, subparser)
        elif args.command == 'plot':
            self.cmd_plot(args)
        return EXIT_OK


def cli(argv=None):
    """
    Ponto de entrada testável

    Args:
        argv: Argumentos (padrão: sys.argv[1:])

    Returns:
        int: 0 sucesso, 1 erro de uso, 2 falha em execução
    """
    parser = build_parser()
    app = GazeToolkitApp(parser)
    try:
        return app.run(sys.argv[1:] if argv is None else list(argv))
    except UsageError as e:
        sys.stderr.write(e.usage or parser.format_usage())
        sys.stderr.write(f"erro: {e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    except (GazeToolkitError, OSError) as e:
        print_error(str(e))
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print()
        print_info("Interrompido pelo usuário")
        return EXIT_RUNTIME
    finally:
        set_quiet(False)


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
