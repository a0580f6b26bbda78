"""
Treinamento e Geração de Dados
Versão 1.0 - Dataset sintético, agenda de learning rate, augmentation, Adam
e loop de treino com checkpoints retomáveis

O loop é determinístico para um número fixo de threads: o batch do passo
t vem de default_rng([seed, t]) e a augmentation da amostra k desse
batch usa a semente (seed, t, k). Retomar de um checkpoint no passo k e
treinar 1 passo reproduz exatamente k+1 passos sem interrupção.
"""
import os
import csv
import math
import time
import json
import dataclasses
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import tensor_core as tc
from tensor_core import Tensor
from eye_geometry import (EyeSampleGenerator, EyeSample, EyeballParams, SamplingRanges, RenderSettings,
                          DEFAULT_IMAGE_SHAPE, DEFAULT_HEATMAP_SIGMA, landmarks_in_bounds, render_heatmaps,
                          render_gazemap, gazemap_one_hot, write_dataset, read_dataset, split_by_subject)
from networks import (HourglassConfig, DenseNetConfig, LandmarkNetwork, GazemapNetwork,
                      save_network, load_network)
from losses import (LossWeights, LandmarkTargets, GazemapTargets, total_landmark_objective,
                    total_gazemap_objective)
from estimators import train_lightweight, LightweightModel
from evaluator import evaluate, table_row, reference_rows, write_table_csv
from utils import (ConfigError, TrainingError, CheckpointError, DatasetError, print_info, print_success, print_error,
                   print_header, get_thread_count, save_json, load_json, create_output_folder, run_metadata)

LOG_HEADER = ['step', 'lr', 'loss_total', 'loss_hm', 'loss_rad', 'loss_gaze', 'loss_gm', 'wall_ms']
MODEL_KINDS = ('landmark', 'gazemap', 'lightweight')


# ---------------------------------------------------------------------
# Geração do dataset
# ---------------------------------------------------------------------

def generate_dataset(n, seed, out_path, ranges=None, image_shape=DEFAULT_IMAGE_SHAPE, render=None,
                     sigma=DEFAULT_HEATMAP_SIGMA, n_workers=None):
    """
    Gera n EyeSamples e grava meta.json + samples.bin

    A amostra i depende só de (seed, i); os workers preservam a ordem.

    Args:
        n: Número de amostras (>= 1)
        seed: Semente base
        out_path: Pasta de saída
        ranges: SamplingRanges
        image_shape: (H, W)
        render: RenderSettings
        sigma: Sigma dos heatmaps registrado no meta.json
        n_workers: Threads (padrão: GZK_THREADS)

    Returns:
        str: Pasta do dataset
    """
    if n < 1:
        raise DatasetError(f"n deve ser >= 1, recebido {n}")
    if not sigma > 0:
        raise DatasetError(f"sigma deve ser positivo, recebido {sigma}")
    ranges = ranges or SamplingRanges()
    render = render or RenderSettings()
    generator = EyeSampleGenerator(seed, ranges, image_shape, render)
    create_output_folder(out_path)
    workers = n_workers or get_thread_count()

    print_info(f"Gerando {n} amostras (seed={seed}, {workers} worker(s))...")
    start = time.time()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(generator.sample, range(n)))
    samples = [s for s, _ in results]
    rejections = int(sum(r for _, r in results))

    meta = {
        'dims': list(generator.image_shape),
        'sigma': float(sigma),
        'seed': int(seed),
        'ranges': ranges.to_dict(),
        'render': render.to_dict(),
        'rejections': rejections,
    }
    folder = write_dataset(out_path, samples, meta)
    print_success(f"Dataset salvo em {folder} ({n} amostras, {rejections} rejeições, {time.time() - start:.1f}s)")
    return folder


# ---------------------------------------------------------------------
# Configuração
# ---------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Configuração de um treino (JSON + overrides --chave valor)"""
    model: str = 'landmark'
    hourglass: HourglassConfig = field(default_factory=HourglassConfig)
    densenet: DenseNetConfig = field(default_factory=DenseNetConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    base_lr: float = 1e-4
    lr_decay_every: int = 5000
    lr_decay_factor: float = 0.1
    batch_size: int = 16
    max_steps: int = 2000
    max_epochs: int = 99
    seed: int = 0
    weight_decay: float = 0.0
    augment: bool = True
    translate_px: int = 4
    scale_range: tuple = (0.9, 1.1)
    dataset: str = ''
    output_dir: str = 'runs/default'
    checkpoint_every: int = 1000
    log_every: int = 50
    resume_from: str = None
    n_workers: int = None
    ridge_lambda: float = 1e-3

    NESTED = {'hourglass': HourglassConfig, 'densenet': DenseNetConfig, 'weights': LossWeights}

    def validate(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model deve ser um de {MODEL_KINDS}, recebido '{self.model}'")
        for name in ('base_lr', 'lr_decay_every', 'batch_size', 'max_steps', 'checkpoint_every', 'log_every'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} deve ser positivo, recebido {getattr(self, name)}")
        if not 0 < self.lr_decay_factor < 1:
            raise ConfigError(f"lr_decay_factor deve estar em (0, 1), recebido {self.lr_decay_factor}")
        if not 1 <= self.max_epochs < 100:
            raise ConfigError(f"max_epochs deve estar em [1, 100), recebido {self.max_epochs}")
        if self.weight_decay < 0 or self.translate_px < 0 or self.ridge_lambda < 0:
            raise ConfigError("weight_decay, translate_px e ridge_lambda devem ser não negativos")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigError(f"scale_range inválido: {self.scale_range}")
        if self.n_workers is not None and self.n_workers < 1:
            raise ConfigError(f"n_workers deve ser >= 1, recebido {self.n_workers}")
        self.hourglass.validate()
        self.densenet.validate()
        self.weights.validate()
        return self

    def to_dict(self):
        data = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            data[f.name] = value.to_dict() if hasattr(value, 'to_dict') else (
                list(value) if isinstance(value, tuple) else value)
        return data

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Chaves desconhecidas na configuração: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in cls.NESTED:
                kwargs[key] = cls.NESTED[key].from_dict(value)
            elif key == 'scale_range':
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        """Carrega de um arquivo JSON"""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Não foi possível ler a configuração '{path}': {e}") from e
        return cls.from_dict(data)

    def with_overrides(self, overrides):
        """
        Nova configuração com overrides em chaves pontuadas

        Args:
            overrides: dict chave → valor (strings da CLI são interpretadas
                como JSON quando possível: '1e-3', 'true', '[0.9, 1.1]')

        Returns:
            TrainConfig
        """
        data = self.to_dict()
        for key, raw in overrides.items():
            value = parse_override_value(raw)
            parts = key.replace('-', '_').split('.')
            target = data
            for part in parts[:-1]:
                if part not in target or not isinstance(target[part], dict):
                    raise ConfigError(f"Chave de override desconhecida: '{key}'")
                target = target[part]
            if parts[-1] not in target:
                raise ConfigError(f"Chave de override desconhecida: '{key}'")
            target[parts[-1]] = value
        return TrainConfig.from_dict(data)


def parse_override_value(raw):
    if not isinstance(raw, str):
        return raw
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def lr_schedule(step, cfg):
    """base_lr · factor^⌊step / decay_every⌋"""
    if step < 0:
        raise ConfigError(f"step deve ser >= 0, recebido {step}")
    return cfg.base_lr * cfg.lr_decay_factor ** (step // cfg.lr_decay_every)


# ---------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------

def image_center(image_shape):
    h, w = image_shape
    return (w - 1) / 2.0, (h - 1) / 2.0


def transform_points(points, dx, dy, s, image_shape):
    """p′ = s·(p − c) + c + Δ, com c o centro da imagem"""
    cu, cv = image_center(image_shape)
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty_like(pts)
    out[..., 0] = s * (pts[..., 0] - cu) + cu + dx
    out[..., 1] = s * (pts[..., 1] - cv) + cv + dy
    return out


def resample_image(image, dx, dy, s):
    """
    Reamostragem bilinear da imagem transformada (bordas replicadas)

    Cada pixel de saída q busca p = (q − c − Δ)/s + c na imagem original.
    """
    h, w = image.shape
    cu, cv = image_center(image.shape)
    src_u = np.clip((np.arange(w) - cu - dx) / s + cu, 0, w - 1)
    src_v = np.clip((np.arange(h) - cv - dy) / s + cv, 0, h - 1)
    u0 = np.minimum(np.floor(src_u).astype(np.int64), max(w - 2, 0))
    v0 = np.minimum(np.floor(src_v).astype(np.int64), max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    tu = (src_u - u0)[None, :]
    tv = (src_v - v0)[:, None]
    img = image.astype(np.float64)
    top = img[v0][:, u0] + tu * (img[v0][:, u1] - img[v0][:, u0])
    bottom = img[v1][:, u0] + tu * (img[v1][:, u1] - img[v1][:, u0])
    return (top + tv * (bottom - top)).astype(image.dtype)


def apply_transform(sample, dx, dy, s):
    """Aplica translação (dx, dy) e escala s à imagem e aos alvos geométricos"""
    shape = sample.image.shape
    landmarks = transform_points(sample.landmarks, dx, dy, s, shape)
    cu, cv = sample.eyeball.center(shape)
    (new_cu, new_cv), = transform_points([[cu, cv]], dx, dy, s, shape)
    eyeball = EyeballParams(sample.eyeball.radius * s, float(new_cu), float(new_cv))
    image = sample.image if (dx, dy, s) == (0, 0, 1) else resample_image(sample.image, dx, dy, s)
    return EyeSample(image=image, landmarks=landmarks, gaze=sample.gaze, eyeball=eyeball,
                     subject_id=sample.subject_id, seed=sample.seed)


def augment(sample, seed, translate_px=4, scale_range=(0.9, 1.1), max_tries=10):
    """
    Translação inteira em [−4, 4]² e escala em [0.9, 1.1] sobre o centro

    Transformações que tiram algum landmark da imagem são sorteadas de
    novo (até max_tries); depois disso a amostra passa sem alteração.
    O olhar nunca muda.

    Args:
        sample: EyeSample
        seed: Semente (int ou sequência de ints)

    Returns:
        tuple: (EyeSample, (dx, dy, s))
    """
    rng = np.random.default_rng(seed)
    shape = sample.image.shape
    for _ in range(max_tries):
        dx, dy = (int(v) for v in rng.integers(-translate_px, translate_px + 1, size=2))
        s = float(rng.uniform(*scale_range))
        if landmarks_in_bounds(transform_points(sample.landmarks, dx, dy, s, shape), shape):
            return apply_transform(sample, dx, dy, s), (dx, dy, s)
    return sample, (0, 0, 1.0)


# ---------------------------------------------------------------------
# Otimizador
# ---------------------------------------------------------------------

class Adam:
    """
    Adam (β₁=0.9, β₂=0.999, ε=1e-8) com weight decay L2 opcional

    Args:
        named_parameters: Lista de (nome, Tensor)
        weight_decay: Coeficiente somado ao gradiente (wd·w)
    """

    def __init__(self, named_parameters, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.names = [n for n, _ in named_parameters]
        self.params = [p for _, p in named_parameters]
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + p.data.dtype.type(self.weight_decay) * p.data
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            p.assign(p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps))

    def state_arrays(self):
        arrays = {}
        for name, m, v in zip(self.names, self.m, self.v):
            arrays['adam.m.' + name] = m
            arrays['adam.v.' + name] = v
        return arrays

    def load_state(self, arrays, t):
        for i, name in enumerate(self.names):
            try:
                m, v = arrays['adam.m.' + name], arrays['adam.v.' + name]
            except KeyError as e:
                raise CheckpointError(f"Estado do Adam ausente para '{name}'") from e
            if m.shape != self.m[i].shape:
                raise CheckpointError(f"Estado do Adam de '{name}' com forma {m.shape}, esperado {self.m[i].shape}")
            self.m[i] = m.astype(self.m[i].dtype).copy()
            self.v[i] = v.astype(self.v[i].dtype).copy()
        self.t = int(t)


# ---------------------------------------------------------------------
# Loop de treino
# ---------------------------------------------------------------------

class Trainer:
    """
    Treina a rede de landmarks, a de gazemap ou o regressor leve

    Args:
        cfg: TrainConfig
    """

    def __init__(self, cfg):
        self.cfg = cfg.validate()
        self.dataset = read_dataset(cfg.dataset) if cfg.dataset else None
        if self.dataset is None:
            raise ConfigError("TrainConfig.dataset é obrigatório")
        if cfg.model != 'lightweight' and tuple(self.dataset.image_shape) != tuple(cfg.hourglass.input_shape):
            raise ConfigError(f"Dimensões do dataset {self.dataset.image_shape} diferem do "
                              f"input_shape {tuple(cfg.hourglass.input_shape)}")
        train_idx, val_idx, test_idx = split_by_subject(self.dataset.subject_ids)
        self.train_view = self.dataset.subset(train_idx)
        self.val_view = self.dataset.subset(val_idx)
        self.test_view = self.dataset.subset(test_idx)
        self.output_dir = create_output_folder(cfg.output_dir)
        self.log_path = os.path.join(self.output_dir, 'train_log.csv')
        self.checkpoint_path = os.path.join(self.output_dir, 'checkpoint.gzk')
        self.n_workers = cfg.n_workers or get_thread_count()
        self.step = 0
        self.network = None
        self.optimizer = None
        if cfg.model != 'lightweight':
            self._build_model()

    def _build_model(self):
        cfg = self.cfg
        if cfg.model == 'landmark':
            self.network = LandmarkNetwork(cfg.hourglass, seed=cfg.seed)
        else:
            self.network = GazemapNetwork(cfg.hourglass, cfg.densenet, seed=cfg.seed)
        self.optimizer = Adam(list(self.network.named_parameters()), weight_decay=cfg.weight_decay)
        if cfg.resume_from:
            self.resume(cfg.resume_from)

    @property
    def total_steps(self):
        steps_per_epoch = math.ceil(len(self.train_view) / self.cfg.batch_size)
        return min(self.cfg.max_steps, self.cfg.max_epochs * steps_per_epoch)

    def resume(self, path):
        """Restaura pesos, buffers, estado do Adam e passo"""
        network, extras, metadata = load_network(path)
        if metadata.get('kind') != self.network.kind:
            raise CheckpointError(f"Checkpoint de '{metadata.get('kind')}' não serve para '{self.network.kind}'")
        self.network.load_state_dict(network.state_dict())
        self.optimizer.load_state(extras, metadata.get('adam_t', 0))
        self.step = int(metadata.get('step', 0))
        print_info(f"Retomando de {path} no passo {self.step}")

    def save_checkpoint(self, path=None):
        path = path or self.checkpoint_path
        metadata = {'step': self.step, 'adam_t': self.optimizer.t, 'seed': self.cfg.seed,
                    'model': self.cfg.model}
        return save_network(path, self.network, self.optimizer.state_arrays(), metadata)

    def _prepare_sample(self, step, k, index):
        sample = self.train_view[index]
        if self.cfg.augment:
            sample, _ = augment(sample, [self.cfg.seed, step, k], self.cfg.translate_px, self.cfg.scale_range)
        return sample

    def prepare_batch(self, step):
        """
        Monta o batch do passo (imagens e alvos)

        Returns:
            tuple: (Tensor N×1×H×W, alvos)
        """
        n = len(self.train_view)
        rng = np.random.default_rng([self.cfg.seed, step])
        indices = rng.choice(n, size=self.cfg.batch_size, replace=n < self.cfg.batch_size)
        jobs = [(step, k, int(i)) for k, i in enumerate(indices)]
        with ThreadPoolExecutor(max_workers=self.n_workers) as pool:
            samples = list(pool.map(lambda job: self._prepare_sample(*job), jobs))

        images = np.stack([s.image for s in samples])[:, None].astype(tc.get_default_dtype())
        shape = self.dataset.image_shape
        if self.cfg.model == 'landmark':
            targets = LandmarkTargets(
                heatmaps=np.stack([render_heatmaps(s.landmarks, self.dataset.sigma, shape) for s in samples]),
                radius=np.array([[s.eyeball.radius] for s in samples], dtype=np.float64))
        else:
            targets = GazemapTargets(
                gazemap=np.stack([gazemap_one_hot(render_gazemap(s.gaze, s.eyeball, shape)) for s in samples]),
                gaze=np.stack([s.gaze.as_array() for s in samples]))
        return Tensor(images), targets

    def train_step(self, step):
        """Um passo de gradiente; devolve (lr, ObjectiveTerms)"""
        images, targets = self.prepare_batch(step)
        self.network.train()
        self.network.zero_grad()
        outputs = self.network(images)
        if self.cfg.model == 'landmark':
            loss, terms = total_landmark_objective(outputs, targets, self.cfg.weights)
        else:
            loss, terms = total_gazemap_objective(outputs, targets, self.cfg.weights)
        if not np.isfinite(terms.total):
            raise TrainingError(f"Loss não finita no passo {step}: {terms.total}", step=step, terms=terms)
        tc.backward(loss)
        lr = lr_schedule(step, self.cfg)
        self.optimizer.step(lr)
        return lr, terms

    def _log_row(self, writer, lr, terms, start):
        wall_ms = (time.perf_counter() - start) * 1000.0
        writer.writerow([self.step, repr(lr), repr(terms.total), repr(terms.hm), repr(terms.rad),
                         repr(terms.gaze), repr(terms.gm), f"{wall_ms:.1f}"])
        return wall_ms

    def _open_log(self):
        append = self.step > 0 and os.path.exists(self.log_path)
        handle = open(self.log_path, 'a' if append else 'w', newline='', encoding='utf-8')
        writer = csv.writer(handle)
        if not append:
            writer.writerow(LOG_HEADER)
        return handle, writer

    def train(self):
        """
        Executa o treino até total_steps

        Returns:
            dict: Resumo (checkpoint, log, passos, última loss)
        """
        if self.cfg.model == 'lightweight':
            return self.train_lightweight()

        total = self.total_steps
        print_header(f"TREINO {self.cfg.model.upper()} ({self.step} → {total} passos)")
        print_info(f"{self.network.num_parameters()} parâmetros, {len(self.train_view)} amostras de treino")
        handle, writer = self._open_log()
        last_terms = None
        try:
            while self.step < total:
                start = time.perf_counter()
                try:
                    lr, terms = self.train_step(self.step)
                except TrainingError as e:
                    # Passo da divergência vai para o log
                    if e.terms is not None:
                        self._log_row(writer, lr_schedule(self.step, self.cfg), e.terms, start)
                    print_error(f"Treino divergiu no passo {self.step} (log: {self.log_path})")
                    raise
                wall_ms = self._log_row(writer, lr, terms, start)
                last_terms = terms
                if self.step % self.cfg.log_every == 0:
                    handle.flush()
                    print_info(f"passo {self.step}: loss={terms.total:.6g} lr={lr:.3g} ({wall_ms:.0f} ms)")
                self.step += 1
                if self.step % self.cfg.checkpoint_every == 0 and self.step < total:
                    self.save_checkpoint(os.path.join(self.output_dir, f"checkpoint_{self.step:06d}.gzk"))
        finally:
            handle.close()

        self.save_checkpoint()
        save_json(os.path.join(self.output_dir, 'run_info.json'),
                  {'config': self.cfg.to_dict(), 'steps': self.step, 'run': run_metadata()})
        print_success(f"Treino concluído: {self.step} passos, checkpoint em {self.checkpoint_path}")
        return {
            'checkpoint': self.checkpoint_path,
            'log': self.log_path,
            'steps': self.step,
            'final_loss': None if last_terms is None else last_terms.total,
        }

    def train_lightweight(self):
        """Ajusta o regressor leve nos landmarks reais do split de treino"""
        view = self.train_view
        landmarks, eyeball, gaze = view.landmarks, view.eyeball, view.gaze
        samples = [(landmarks[i], eyeball[i, 2], gaze[i]) for i in range(len(view))]
        model = train_lightweight(samples, ridge_lambda=self.cfg.ridge_lambda)
        path = os.path.join(self.output_dir, 'lightweight.json')
        save_json(path, model.to_json())
        print_success(f"Regressor leve salvo em {path} ({len(samples)} amostras)")
        return {'checkpoint': path, 'log': None, 'steps': 0, 'final_loss': None}


def read_train_log(path):
    """Lê o CSV de log como lista de dicts com valores float"""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        return [{k: (int(v) if k == 'step' else float(v)) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------

def format_overrides(overrides):
    """Rótulo 'chave=valor' da coluna parameters (só o último segmento da chave)"""
    return ' '.join(f"{k.split('.')[-1]}={parse_override_value(v)}" for k, v in overrides.items())


def default_chain(model):
    return {'landmark': 'fit', 'gazemap': 'network', 'lightweight': 'lightweight'}[model]


def evaluate_run(cfg, result, trainer, model_id, parameters=''):
    """Avalia o resultado de um treino no split de teste com a cadeia padrão do modelo"""
    chain = default_chain(cfg.model)
    if cfg.model == 'lightweight':
        model = LightweightModel.from_json(load_json(result['checkpoint']))
        return evaluate(trainer.test_view, chain, lightweight_model=model, model_id=model_id,
                        parameters=parameters)
    return evaluate(trainer.test_view, chain, checkpoint=result['checkpoint'], model_id=model_id,
                    parameters=parameters)


def run_sweep(base_cfg, grid, out_csv, study=None):
    """
    Treina e avalia cada configuração da grade; grava um CSV combinado

    Args:
        base_cfg: TrainConfig base
        grid: Lista de dicts de overrides (chaves pontuadas)
        out_csv: Caminho do CSV da tabela
        study: Estudo de referência anexado ao final (opcional)

    Returns:
        list: Linhas escritas
    """
    if not grid:
        raise ConfigError("Grade de sweep vazia")
    rows = []
    print_header(f"SWEEP ({len(grid)} configurações)")
    for i, overrides in enumerate(grid):
        cfg = base_cfg.with_overrides(overrides)
        cfg.output_dir = os.path.join(base_cfg.output_dir, f"run_{i:02d}")
        trainer = Trainer(cfg)
        result = trainer.train()
        parameters = format_overrides(overrides)
        report = evaluate_run(cfg, result, trainer, f"{cfg.model}-{i:02d}", parameters)
        report.save(os.path.join(cfg.output_dir, 'report.json'))
        rows.append(table_row(report))
    if study:
        rows.extend(reference_rows(study))
    write_table_csv(out_csv, rows)
    print_success(f"Tabela do sweep salva em {out_csv} ({len(grid)} execuções)")
    return rows
