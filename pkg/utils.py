"""
Utilitários para o Gaze Toolkit
Versão 2 - Logging colorido, exceções do toolkit e serialização JSON
"""
import os
import json
import dataclasses
from datetime import datetime

import numpy as np
import psutil
from colorama import init, Fore, Style

# Inicializa colorama para cores no terminal
init(autoreset=True)

# Quando True, mensagens [INFO] são suprimidas (flag --quiet da CLI)
QUIET = False


class GazeToolkitError(Exception):
    """Erro base de todas as operações do toolkit"""


class ShapeError(GazeToolkitError, ValueError):
    """Formas (shapes) incompatíveis ou extensões espaciais inválidas"""


class GradientError(GazeToolkitError):
    """Uso inválido do backward (loss não escalar, backward repetido)"""


class ConfigError(GazeToolkitError, ValueError):
    """Valor de configuração inválido ou chave desconhecida"""


class DatasetError(GazeToolkitError):
    """Dataset ilegível, faixas de amostragem inválidas ou caminho sem escrita"""


class CheckpointError(GazeToolkitError):
    """Checkpoint corrompido ou incompatível com a arquitetura"""


class TrainingError(GazeToolkitError):
    """
    Falha durante o treinamento

    Args:
        message: Descrição do erro
        step: Passo de treinamento em que a falha ocorreu
        terms: Termos da loss no passo da falha (quando houver)
    """

    def __init__(self, message, step=None, terms=None):
        super().__init__(message)
        self.step = step
        self.terms = terms


def set_quiet(quiet):
    """Liga/desliga as mensagens informativas"""
    global QUIET
    QUIET = bool(quiet)


def print_colored(text, color=Fore.WHITE):
    """
    Imprime texto colorido no terminal

    Args:
        text: Texto a ser impresso
        color: Cor do Fore (colorama) para usar
    """
    print(f"{color}{text}{Style.RESET_ALL}")


def print_header(text):
    """
    Imprime cabeçalho estilizado com bordas

    Args:
        text: Texto do cabeçalho
    """
    if QUIET:
        return
    print_colored("=" * 60, Fore.CYAN)
    print_colored(f" {text} ", Fore.YELLOW)
    print_colored("=" * 60, Fore.CYAN)


def print_info(text):
    """
    Imprime informação em azul com prefixo [INFO]

    Args:
        text: Texto informativo
    """
    if QUIET:
        return
    print_colored(f"[INFO] {text}", Fore.BLUE)


def print_success(text):
    """
    Imprime mensagem de sucesso em verde com prefixo [SUCCESS]

    Args:
        text: Texto de sucesso
    """
    if QUIET:
        return
    print_colored(f"[SUCCESS] {text}", Fore.GREEN)


def print_warning(text):
    """
    Imprime aviso em amarelo com prefixo [WARNING]

    Args:
        text: Texto de aviso
    """
    print_colored(f"[WARNING] {text}", Fore.YELLOW)


def print_error(text):
    """
    Imprime erro em vermelho com prefixo [ERROR]

    Args:
        text: Texto de erro
    """
    print_colored(f"[ERROR] {text}", Fore.RED)


def make_serializable(obj):
    """
    Converte objetos para formato serializável preservando estrutura

    Além dos tipos primitivos, trata escalares/arrays numpy, dataclasses
    e namedtuples (psutil).

    Args:
        obj: Objeto a ser convertido

    Returns:
        Objeto em formato serializável para JSON
    """
    if obj is None:
        return None
    elif isinstance(obj, (str, int, bool, float)):
        return obj
    elif isinstance(obj, np.generic):
        # Escalares numpy (float32, int64, bool_)
        return obj.item()
    elif isinstance(obj, np.ndarray):
        return make_serializable(obj.tolist())
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: make_serializable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    elif isinstance(obj, dict):
        return {str(k): make_serializable(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [make_serializable(item) for item in obj]
    elif hasattr(obj, '_asdict'):
        return make_serializable(obj._asdict())
    else:
        return str(obj)


def save_json(file_path, data):
    """
    Salva dados em JSON com formatação legível

    Args:
        file_path: Caminho do arquivo de saída
        data: Estrutura a serializar

    Returns:
        str: Caminho do arquivo salvo
    """
    folder = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(folder, exist_ok=True)

    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(make_serializable(data), f, indent=2, ensure_ascii=False)
        f.write("\n")

    return file_path


def load_json(file_path):
    """
    Carrega um arquivo JSON

    Args:
        file_path: Caminho do arquivo

    Returns:
        Estrutura carregada
    """
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def create_output_folder(path):
    """
    Cria pasta de saída verificando permissão de escrita

    Args:
        path: Caminho da pasta

    Returns:
        str: Caminho absoluto da pasta

    Raises:
        DatasetError: Se a pasta não puder ser criada ou não aceitar escrita
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"Não foi possível criar a pasta '{path}': {e}") from e

    if not os.access(path, os.W_OK):
        raise DatasetError(f"Pasta sem permissão de escrita: '{path}'")

    return os.path.abspath(path)


def get_thread_count():
    """
    Número de workers permitido para paralelismo

    Lê GZK_THREADS; sem a variável usa os núcleos físicos (psutil), no
    máximo 4.

    Returns:
        int: Número de threads (>= 1)
    """
    value = os.environ.get("GZK_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"GZK_THREADS deve ser inteiro, recebido '{value}'")

    physical = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return max(1, min(4, physical))


def get_process_info(process_id=None):
    """
    Obtém informações do processo atual (metadados de execução)

    Args:
        process_id: ID do processo (padrão: processo atual)

    Returns:
        dict: Informações do processo ou erro se não acessível
    """
    try:
        process = psutil.Process(process_id or os.getpid())

        return {
            'pid': process.pid,
            'name': process.name(),
            'create_time': datetime.fromtimestamp(process.create_time()).isoformat(),
            'memory_rss_mb': round(process.memory_info().rss / (1024 * 1024), 1),
            'cpu_count': psutil.cpu_count(),
            'threads': get_thread_count(),
        }
    except (psutil.NoSuchProcess, psutil.AccessDenied, psutil.ZombieProcess):
        return {
            'name': 'Unknown',
            'error': 'Process access denied or not found'
        }


def run_metadata():
    """
    Metadados de execução (timestamp + processo) para relatórios

    Returns:
        dict: Metadados serializáveis
    """
    return {
        'created_at': datetime.now().isoformat(),
        'process': get_process_info(),
    }
