"""
Redes Neurais do Toolkit
Versão 1.0 - Stacked hourglass (landmarks + raio) e DenseNet (gazemap → olhar)

Construídas sobre as primitivas de tensor_core. As formas são validadas
na construção (ShapeError) a partir do input_shape configurado, antes de
qualquer forward.
"""
import math
import dataclasses
from dataclasses import dataclass
from collections import OrderedDict

import numpy as np

import tensor_core as tc
from tensor_core import Tensor
from utils import ShapeError, ConfigError, CheckpointError, print_info
from eye_geometry import N_LANDMARKS, N_GAZEMAP_CLASSES, DEFAULT_IMAGE_SHAPE


def _from_dict(cls, data):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Chaves desconhecidas para {cls.__name__}: {', '.join(unknown)}")
    data = dict(data)
    if 'input_shape' in data:
        data['input_shape'] = tuple(data['input_shape'])
    return cls(**data)


@dataclass
class HourglassConfig:
    """
    Configuração do stacked hourglass

    Attributes:
        n_stacks: Número de módulos hourglass empilhados
        n_features: Canais do tronco (32 em escala de bancada, 64 no original)
        n_scales: Escalas por módulo (3 reduções para 4 escalas)
        n_landmarks: Heatmaps emitidos por stack
        input_shape: (H, W) da imagem de entrada
        soft_argmax_tau: Nitidez do soft-argmax
        stem_residuals: Blocos residuais após a convolução 7×7 inicial
        radius_prior: Valor inicial do bias da cabeça de raio (pixels)
    """
    n_stacks: int = 2
    n_features: int = 32
    n_scales: int = 4
    n_landmarks: int = N_LANDMARKS
    input_shape: tuple = DEFAULT_IMAGE_SHAPE
    soft_argmax_tau: float = tc.DEFAULT_SOFT_ARGMAX_TAU
    stem_residuals: int = 2
    radius_prior: float = 23.0

    def validate(self):
        if self.n_stacks < 1:
            raise ConfigError(f"n_stacks deve ser >= 1, recebido {self.n_stacks}")
        if self.n_scales < 1:
            raise ConfigError(f"n_scales deve ser >= 1, recebido {self.n_scales}")
        if self.n_features < 2 or self.n_features % 2:
            raise ShapeError(f"n_features deve ser par e >= 2 (bottleneck C/2), recebido {self.n_features}")
        if self.soft_argmax_tau <= 0:
            raise ConfigError(f"soft_argmax_tau deve ser positivo, recebido {self.soft_argmax_tau}")
        h, w = self.input_shape
        factor = 2 ** (self.n_scales - 1)
        if h <= 0 or w <= 0 or h % factor or w % factor:
            raise ShapeError(f"input_shape {tuple(self.input_shape)} não é divisível por {factor} "
                             f"({self.n_scales} escalas)")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d['input_shape'] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


@dataclass
class DenseNetConfig:
    """
    Configuração da DenseNet de regressão do olhar

    Attributes:
        n_blocks: Blocos densos (transições entre eles)
        layers_per_block: Camadas densas por bloco
        growth_rate: Canais adicionados por camada
        compression: Fração de canais mantida na transição (0.5)
        initial_channels: Canais da convolução inicial (padrão 2·growth)
    """
    n_blocks: int = 5
    layers_per_block: int = 5
    growth_rate: int = 8
    compression: float = 0.5
    initial_channels: int = None

    def validate(self):
        if self.n_blocks < 1 or self.layers_per_block < 1 or self.growth_rate < 1:
            raise ConfigError(f"DenseNetConfig com valores não positivos: {self}")
        if self.compression != 0.5:
            raise ConfigError(f"compression é fixo em 0.5, recebido {self.compression}")
        if self.initial_channels is not None and self.initial_channels < 1:
            raise ConfigError(f"initial_channels deve ser positivo, recebido {self.initial_channels}")
        return self

    @property
    def stem_channels(self):
        return self.initial_channels or 2 * self.growth_rate

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


@dataclass
class NetworkOutput:
    """Saídas das redes (campos não usados ficam vazios)"""
    per_stack_heatmaps: list = dataclasses.field(default_factory=list)
    radius: Tensor = None
    landmarks_soft: Tensor = None
    gazemaps_per_module: list = dataclasses.field(default_factory=list)
    gaze: Tensor = None


# ---------------------------------------------------------------------
# Base de módulos
# ---------------------------------------------------------------------

class Module:
    """
    Base com registro ordenado de parâmetros, buffers e submódulos

    Atribuir um Tensor com requires_grad registra um parâmetro; atribuir
    um Module registra um submódulo. A ordem de registro define a ordem
    do state_dict (e dos payloads do checkpoint).
    """

    def __init__(self):
        object.__setattr__(self, '_parameters', OrderedDict())
        object.__setattr__(self, '_modules', OrderedDict())
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=''):
        for name, p in self._parameters.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + '.')

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def _local_buffers(self):
        return OrderedDict()

    def _load_buffer(self, name, value):
        raise CheckpointError(f"Buffer desconhecido: {name}")

    def named_buffers(self, prefix=''):
        for name, b in self._local_buffers().items():
            yield prefix + name, b
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + '.')

    def buffers(self):
        return [b for _, b in self.named_buffers()]

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            object.__setattr__(m, 'training', mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self):
        """Pesos e buffers (cópias) na ordem de registro"""
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data.copy()
        for name, b in self.named_buffers():
            state[name] = np.array(b, copy=True)
        return state

    def load_state_dict(self, state):
        """
        Carrega pesos e buffers

        Raises:
            CheckpointError: Nomes faltando/sobrando ou formas incompatíveis
        """
        expected = list(self.state_dict().keys())
        missing = [k for k in expected if k not in state]
        extra = [k for k in state if k not in expected]
        if missing or extra:
            raise CheckpointError(f"State dict incompatível (faltando: {missing[:5]}, sobrando: {extra[:5]})")
        for name, p in self.named_parameters():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"'{name}': forma {value.shape} no checkpoint, esperado {p.shape}")
            p.assign(value)
        self._load_buffers_recursive('', state)

    def _load_buffers_recursive(self, prefix, state):
        for name in self._local_buffers():
            self._load_buffer(name, np.asarray(state[prefix + name]))
        for name, m in self._modules.items():
            m._load_buffers_recursive(prefix + name + '.', state)


class ModuleList(Module):
    """Lista indexável de submódulos (nomes '0', '1', ...)"""

    def __init__(self, modules=()):
        super().__init__()
        for m in modules:
            self.append(m)

    def append(self, module):
        setattr(self, str(len(self._modules)), module)

    def __len__(self):
        return len(self._modules)

    def __iter__(self):
        return iter(self._modules.values())

    def __getitem__(self, index):
        return list(self._modules.values())[index]


def he_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    """Convolução com inicialização He-uniform e bias zero"""

    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=None, bias=True,
                 dtype=None):
        super().__init__()
        dtype = dtype or tc.get_default_dtype()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(he_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return tc.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def output_shape(self, h, w):
        return (tc.conv_output_size(h, self.kernel_size, self.stride, self.padding),
                tc.conv_output_size(w, self.kernel_size, self.stride, self.padding))


class Linear(Module):
    """Camada totalmente conectada (peso F×G)"""

    def __init__(self, in_features, out_features, rng, dtype=None):
        super().__init__()
        dtype = dtype or tc.get_default_dtype()
        self.weight = Tensor(he_uniform(rng, (in_features, out_features), in_features, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def forward(self, x):
        return tc.fully_connected(x, self.weight, self.bias)


class BatchNorm(Module):
    """Batch norm por canal com estatísticas acumuladas (momentum 0.9)"""

    def __init__(self, channels, dtype=None):
        super().__init__()
        dtype = dtype or tc.get_default_dtype()
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.stats = tc.RunningStats(channels, dtype=dtype)

    def forward(self, x):
        return tc.batch_norm(x, self.gamma, self.beta, self.stats, training=self.training)

    def _local_buffers(self):
        return OrderedDict([('running_mean', self.stats.mean), ('running_var', self.stats.var)])

    def _load_buffer(self, name, value):
        target = self.stats.mean if name == 'running_mean' else self.stats.var
        if value.shape != target.shape:
            raise CheckpointError(f"Buffer '{name}' com forma {value.shape}, esperado {target.shape}")
        if name == 'running_mean':
            self.stats.mean = value.astype(target.dtype).copy()
        else:
            self.stats.var = value.astype(target.dtype).copy()


class BnReluConv(Module):
    """Função composta BN → ReLU → Conv"""

    def __init__(self, in_channels, out_channels, kernel_size, rng):
        super().__init__()
        self.bn = BatchNorm(in_channels)
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng)

    def forward(self, x):
        return self.conv(tc.relu(self.bn(x)))


# ---------------------------------------------------------------------
# Stacked hourglass
# ---------------------------------------------------------------------

class ResidualBlock(Module):
    """
    Bottleneck residual: BN-ReLU-1×1 (C/2) → BN-ReLU-3×3 (C/2) →
    BN-ReLU-1×1 (C), somado ao skip identidade
    """

    def __init__(self, channels, rng):
        super().__init__()
        if channels < 2 or channels % 2:
            raise ShapeError(f"ResidualBlock exige canais pares, recebido {channels}")
        half = channels // 2
        self.channels = channels
        self.reduce = BnReluConv(channels, half, 1, rng)
        self.spatial = BnReluConv(half, half, 3, rng)
        self.expand = BnReluConv(half, channels, 1, rng)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ShapeError(f"ResidualBlock({self.channels}) recebeu {x.shape}")
        return tc.add(x, self.expand(self.spatial(self.reduce(x))))


class Hourglass(Module):
    """
    Módulo hourglass recursivo

    Em cada escala: ramo skip (residual) na resolução atual e descida por
    max-pool → residual → hourglass interno (ou residual no fundo) →
    residual → upsample bilinear, somados ao skip.

    Args:
        depth: Número de reduções (n_scales − 1)
        channels: Canais constantes
    """

    def __init__(self, depth, channels, rng):
        super().__init__()
        if depth < 0:
            raise ConfigError(f"Profundidade inválida do hourglass: {depth}")
        self.depth = depth
        if depth == 0:
            self.body = ResidualBlock(channels, rng)
            return
        self.up1 = ResidualBlock(channels, rng)
        self.low1 = ResidualBlock(channels, rng)
        self.low2 = Hourglass(depth - 1, channels, rng) if depth > 1 else ResidualBlock(channels, rng)
        self.low3 = ResidualBlock(channels, rng)

    def forward(self, x):
        if self.depth == 0:
            return self.body(x)
        h, w = x.shape[2:]
        if h % 2 or w % 2:
            raise ShapeError(f"Hourglass: extensão ímpar {x.shape} na profundidade {self.depth}")
        up1 = self.up1(x)
        low = self.low1(tc.pool2d(x, 'max'))
        low = self.low2(low)
        low = self.low3(low)
        return tc.add(up1, tc.upsample_bilinear(low))


def residual_count(depth):
    """Blocos residuais em um hourglass de profundidade d: 3d + 1"""
    return 1 if depth == 0 else 3 * depth + 1


class LandmarkNetwork(Module):
    """
    Stacked hourglass com saída intermediária por stack e cabeça de raio

    Stem 7×7 (stride 1) → residuais → n_stacks hourglasses. Cada stack
    emite 18 heatmaps via 1×1; entre stacks, features e heatmaps voltam
    ao tronco por convoluções 1×1. Os heatmaps finais passam pelo
    soft-argmax (36 coordenadas) → 3×(FC 100 + BN + ReLU) → FC 1 (raio).
    """

    kind = 'landmark'

    def __init__(self, cfg=None, seed=0):
        super().__init__()
        self.cfg = (cfg or HourglassConfig()).validate()
        rng = np.random.default_rng(seed)
        f = self.cfg.n_features
        k = self.cfg.n_landmarks
        depth = self.cfg.n_scales - 1

        self.stem_conv = Conv2d(1, f, 7, rng)
        self.stem_bn = BatchNorm(f)
        self.stem_res = ModuleList(ResidualBlock(f, rng) for _ in range(self.cfg.stem_residuals))

        self.hourglasses = ModuleList()
        self.stack_res = ModuleList()
        self.stack_conv = ModuleList()
        self.stack_bn = ModuleList()
        self.heat_conv = ModuleList()
        self.merge_feat = ModuleList()
        self.merge_heat = ModuleList()
        for s in range(self.cfg.n_stacks):
            self.hourglasses.append(Hourglass(depth, f, rng))
            self.stack_res.append(ResidualBlock(f, rng))
            self.stack_conv.append(Conv2d(f, f, 1, rng))
            self.stack_bn.append(BatchNorm(f))
            self.heat_conv.append(Conv2d(f, k, 1, rng))
            if s < self.cfg.n_stacks - 1:
                self.merge_feat.append(Conv2d(f, f, 1, rng))
                self.merge_heat.append(Conv2d(k, f, 1, rng))

        self.fc = ModuleList()
        self.fc_bn = ModuleList()
        in_features = 2 * k
        for _ in range(3):
            self.fc.append(Linear(in_features, 100, rng))
            self.fc_bn.append(BatchNorm(100))
            in_features = 100
        self.radius_fc = Linear(100, 1, rng)
        self.radius_fc.bias.assign(np.full(1, self.cfg.radius_prior))

    def check_input(self, image):
        expected = (1,) + tuple(self.cfg.input_shape)
        if image.ndim != 4 or tuple(image.shape[1:]) != expected:
            raise ShapeError(f"Entrada {image.shape} incompatível com (N,) + {expected}")

    def forward(self, image):
        """
        Args:
            image: Tensor N×1×H×W

        Returns:
            NetworkOutput com per_stack_heatmaps, landmarks_soft (N,18,2) e radius (N,1)
        """
        self.check_input(image)
        x = tc.relu(self.stem_bn(self.stem_conv(image)))
        for block in self.stem_res:
            x = block(x)

        heatmaps = []
        for s in range(self.cfg.n_stacks):
            y = self.hourglasses[s](x)
            y = self.stack_res[s](y)
            feat = tc.relu(self.stack_bn[s](self.stack_conv[s](y)))
            heat = self.heat_conv[s](feat)
            heatmaps.append(heat)
            if s < self.cfg.n_stacks - 1:
                x = tc.add(tc.add(x, self.merge_feat[s](feat)), self.merge_heat[s](heat))

        coords = tc.soft_argmax(heatmaps[-1], self.cfg.soft_argmax_tau)
        z = tc.reshape(coords, (coords.shape[0], 2 * self.cfg.n_landmarks))
        for fc, bn in zip(self.fc, self.fc_bn):
            z = tc.relu(bn(fc(z)))
        radius = self.radius_fc(z)
        return NetworkOutput(per_stack_heatmaps=heatmaps, radius=radius, landmarks_soft=coords)

    def config_dict(self):
        return {'hourglass': self.cfg.to_dict()}


# ---------------------------------------------------------------------
# DenseNet
# ---------------------------------------------------------------------

class DenseLayer(Module):
    """BN-ReLU-1×1 (4·growth) → BN-ReLU-3×3 (growth)"""

    def __init__(self, in_channels, growth, rng):
        super().__init__()
        self.bottleneck = BnReluConv(in_channels, 4 * growth, 1, rng)
        self.conv = BnReluConv(4 * growth, growth, 3, rng)

    def forward(self, x):
        return self.conv(self.bottleneck(x))


class DenseBlock(Module):
    """Cada camada recebe a concatenação de todas as anteriores"""

    def __init__(self, in_channels, layers, growth, rng):
        super().__init__()
        if layers < 1 or growth < 1:
            raise ConfigError(f"DenseBlock exige layers e growth positivos: {layers}, {growth}")
        self.in_channels = in_channels
        self.out_channels = in_channels + layers * growth
        self.layers = ModuleList(DenseLayer(in_channels + i * growth, growth, rng) for i in range(layers))

    def forward(self, x):
        features = x
        for layer in self.layers:
            features = tc.concat_channels([features, layer(features)])
        return features


class TransitionLayer(Module):
    """BN-ReLU-1×1 para ⌈C/2⌉ canais, depois avg-pool 2×2"""

    def __init__(self, in_channels, rng):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = (in_channels + 1) // 2
        self.conv = BnReluConv(in_channels, self.out_channels, 1, rng)

    def forward(self, x):
        h, w = x.shape[2:]
        if h % 2 or w % 2:
            raise ShapeError(f"TransitionLayer: extensão ímpar {x.shape}")
        return tc.pool2d(self.conv(x), 'avg')


class DenseNetRegressor(Module):
    """
    Regressão do olhar a partir do gazemap

    Conv 3×3 inicial → blocos densos alternados com transições →
    BN-ReLU → média global → FC(2) = (θ, φ).
    """

    def __init__(self, in_channels, cfg, input_shape, rng):
        super().__init__()
        self.cfg = cfg.validate()
        h, w = input_shape
        factor = 2 ** (cfg.n_blocks - 1)
        if h % factor or w % factor:
            raise ShapeError(f"input_shape {tuple(input_shape)} não suporta {cfg.n_blocks - 1} transições")

        channels = cfg.stem_channels
        self.stem = Conv2d(in_channels, channels, 3, rng)
        self.blocks = ModuleList()
        self.transitions = ModuleList()
        for b in range(cfg.n_blocks):
            block = DenseBlock(channels, cfg.layers_per_block, cfg.growth_rate, rng)
            self.blocks.append(block)
            channels = block.out_channels
            if b < cfg.n_blocks - 1:
                transition = TransitionLayer(channels, rng)
                self.transitions.append(transition)
                channels = transition.out_channels
        self.final_bn = BatchNorm(channels)
        self.head = Linear(channels, 2, rng)
        self.out_channels = channels

    def channel_trace(self):
        """Canais após a conv inicial e após cada bloco/transição"""
        trace = [self.cfg.stem_channels]
        for b, block in enumerate(self.blocks):
            trace.append(block.out_channels)
            if b < len(self.transitions):
                trace.append(self.transitions[b].out_channels)
        return trace

    def forward(self, x):
        x = self.stem(x)
        for b, block in enumerate(self.blocks):
            x = block(x)
            if b < len(self.transitions):
                x = self.transitions[b](x)
        x = tc.relu(self.final_bn(x))
        return self.head(tc.global_avg_pool(x))


class GazemapNetwork(Module):
    """
    Hourglasses → logits do gazemap (supervisão só no último módulo) →
    softmax → DenseNet → (θ, φ)
    """

    kind = 'gazemap'

    def __init__(self, hg_cfg=None, dn_cfg=None, seed=0):
        super().__init__()
        self.cfg = (hg_cfg or HourglassConfig(n_stacks=3)).validate()
        self.dn_cfg = (dn_cfg or DenseNetConfig()).validate()
        rng = np.random.default_rng(seed)
        f = self.cfg.n_features
        depth = self.cfg.n_scales - 1

        self.stem_conv = Conv2d(1, f, 7, rng)
        self.stem_bn = BatchNorm(f)
        self.stem_res = ModuleList(ResidualBlock(f, rng) for _ in range(self.cfg.stem_residuals))
        self.hourglasses = ModuleList()
        self.stack_res = ModuleList()
        self.stack_conv = ModuleList()
        self.stack_bn = ModuleList()
        self.merge_feat = ModuleList()
        for s in range(self.cfg.n_stacks):
            self.hourglasses.append(Hourglass(depth, f, rng))
            self.stack_res.append(ResidualBlock(f, rng))
            self.stack_conv.append(Conv2d(f, f, 1, rng))
            self.stack_bn.append(BatchNorm(f))
            if s < self.cfg.n_stacks - 1:
                self.merge_feat.append(Conv2d(f, f, 1, rng))
        self.gazemap_conv = Conv2d(f, N_GAZEMAP_CLASSES, 1, rng)
        self.densenet = DenseNetRegressor(N_GAZEMAP_CLASSES, self.dn_cfg, self.cfg.input_shape, rng)

    def check_input(self, image):
        expected = (1,) + tuple(self.cfg.input_shape)
        if image.ndim != 4 or tuple(image.shape[1:]) != expected:
            raise ShapeError(f"Entrada {image.shape} incompatível com (N,) + {expected}")

    def forward(self, image):
        """
        Returns:
            NetworkOutput com gazemaps_per_module (1 elemento) e gaze (N,2)
        """
        self.check_input(image)
        x = tc.relu(self.stem_bn(self.stem_conv(image)))
        for block in self.stem_res:
            x = block(x)
        for s in range(self.cfg.n_stacks):
            y = self.stack_res[s](self.hourglasses[s](x))
            feat = tc.relu(self.stack_bn[s](self.stack_conv[s](y)))
            if s < self.cfg.n_stacks - 1:
                x = tc.add(x, self.merge_feat[s](feat))
        logits = self.gazemap_conv(feat)
        gaze = self.densenet(tc.softmax_channels(logits))
        return NetworkOutput(gazemaps_per_module=[logits], gaze=gaze)

    def config_dict(self):
        return {'hourglass': self.cfg.to_dict(), 'densenet': self.dn_cfg.to_dict()}


def build_network(kind, config, seed=0):
    """
    Constrói a rede a partir do dicionário de configs do checkpoint

    Args:
        kind: 'landmark' ou 'gazemap'
        config: {'hourglass': {...}, 'densenet': {...}}
    """
    hg = HourglassConfig.from_dict(config.get('hourglass', {}))
    if kind == 'landmark':
        return LandmarkNetwork(hg, seed=seed)
    if kind == 'gazemap':
        return GazemapNetwork(hg, DenseNetConfig.from_dict(config.get('densenet', {})), seed=seed)
    raise ConfigError(f"Tipo de rede desconhecido: '{kind}'")


def save_network(path, network, extra_arrays=None, extra_metadata=None):
    """
    Salva pesos, buffers e configs (JSON no bloco de metadados)

    Args:
        path: Arquivo .gzk
        network: LandmarkNetwork ou GazemapNetwork
        extra_arrays: Arrays adicionais (estado do otimizador)
        extra_metadata: Metadados adicionais (passo, seed)
    """
    arrays = OrderedDict(('model.' + k, v) for k, v in network.state_dict().items())
    for k, v in (extra_arrays or {}).items():
        arrays[k] = v
    metadata = {'kind': network.kind, 'config': network.config_dict()}
    metadata.update(extra_metadata or {})
    tc.save_tensors(path, arrays, metadata)
    print_info(f"Checkpoint salvo: {path}")
    return path


def load_network(path):
    """
    Reconstrói a arquitetura a partir do checkpoint e carrega os pesos

    Returns:
        tuple: (rede, arrays extras, metadata)
    """
    arrays, metadata = tc.load_tensors(path)
    if 'kind' not in metadata or 'config' not in metadata:
        raise CheckpointError(f"'{path}' não contém configuração de rede")
    network = build_network(metadata['kind'], metadata['config'])
    state = OrderedDict((k[len('model.'):], v) for k, v in arrays.items() if k.startswith('model.'))
    extras = OrderedDict((k, v) for k, v in arrays.items() if not k.startswith('model.'))
    network.load_state_dict(state)
    return network, extras, metadata
