"""
Núcleo de Tensores com Diferenciação Automática Reversa
Versão 1.0 - Primitivas densas (numpy) para as redes de landmarks e gazemaps

Este módulo implementa um motor mínimo de tensores densos com grafo de
operações e backward em ordem topológica reversa. Cada primitiva registra
um nó com os tensores de entrada e os intermediários necessários para o
gradiente. Inclui também o formato de checkpoint GZK1.

Convenções:
    - Imagens e mapas em NCHW, kernels em OIKK
    - Coordenadas de pixel: u = coluna, v = linha, origem no centro do
      pixel (0, 0)
    - Upsample bilinear com cantos alinhados (align corners):
      src = dst * (n - 1) / (2n - 1)
"""
import os
import json
import contextlib

import numpy as np

from utils import ShapeError, GradientError, CheckpointError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True

CHECKPOINT_MAGIC = b"GZK1"


def set_default_dtype(dtype):
    """
    Define a precisão padrão (float32 para treino, float64 para gradcheck)

    Args:
        dtype: np.float32 ou np.float64
    """
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Precisão não suportada: {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def no_grad():
    """Desabilita o registro do grafo (inferência/avaliação)"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """
    Array denso n-dimensional com rastreamento opcional de gradiente

    Os dados ficam em ordem row-major (numpy C-contiguous). Após o
    backward, `grad` é populado nas folhas que rastreiam gradiente; nós
    intermediários só guardam gradiente se `retain_grad()` foi chamado.
    """

    def __init__(self, data, requires_grad=False, dtype=None):
        """
        Args:
            data: array-like com os valores
            requires_grad: Se True, o tensor participa do backward
            dtype: Precisão (padrão: dtype do array float ou o padrão global)
        """
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        self.data = np.array(data, dtype=dtype, copy=True, order='C')
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = 'leaf'
        self._retain = False
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        """Cópia dos dados como ndarray"""
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float('nan')

    def retain_grad(self):
        """Mantém o gradiente deste nó intermediário após o backward"""
        self._retain = True
        return self

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def assign(self, values):
        """
        Substitui os valores (usado pelo otimizador e pelo carregamento
        de checkpoints)

        Args:
            values: ndarray com a mesma forma
        """
        values = np.asarray(values)
        if values.shape != self.data.shape:
            raise ShapeError(f"assign: forma {values.shape} difere de {self.data.shape}")
        self.data = np.array(values, dtype=self.data.dtype, copy=True, order='C')

    def backward(self):
        """Executa o backward a partir deste tensor escalar"""
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}, requires_grad={self.requires_grad})"

    # Operadores de conveniência
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, other)
        return add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -other)
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(value, like=None):
    """
    Converte arrays/escalares em Tensor constante (sem gradiente)

    Args:
        value: Tensor, ndarray ou escalar
        like: Tensor de referência para a precisão
    """
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, requires_grad=False, dtype=dtype)


def _make(data, parents, backward_fn, op):
    """Cria o tensor de saída e registra o nó quando alguma entrada rastreia gradiente"""
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data)
    out.grad = None
    out._retain = False
    out._consumed = False
    out._op = op
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


class OpGraph:
    """
    Grafo de operações em ordem topológica

    Attributes:
        nodes: Lista de tensores; cada nó aparece depois de todas as suas entradas
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def build(cls, root):
        """
        Ordena topologicamente os nós alcançáveis a partir de `root`

        Busca em profundidade iterativa (as redes empilhadas passam do
        limite de recursão do Python).
        """
        order = []
        visited = set()
        stack = [(root, 0)]
        while stack:
            node, index = stack.pop()
            if index == 0:
                if id(node) in visited:
                    continue
                visited.add(id(node))
            if index < len(node._parents):
                stack.append((node, index + 1))
                parent = node._parents[index]
                if id(parent) not in visited and parent.requires_grad:
                    stack.append((parent, 0))
            else:
                order.append(node)
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def leaves(self):
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]


def backward(loss):
    """
    Propaga gradientes a partir de uma loss escalar

    Args:
        loss: Tensor escalar resultante do forward

    Raises:
        GradientError: loss não escalar, grafo já consumido ou folhas com
            gradiente ainda populado (acúmulo silencioso não é permitido)
    """
    if loss.data.size != 1:
        raise GradientError(f"backward exige loss escalar, recebido shape {loss.shape}")
    if loss._consumed:
        raise GradientError("backward repetido sobre um grafo já consumido; refaça o forward")
    if not loss.requires_grad:
        raise GradientError("loss não rastreia gradientes (nenhuma entrada com requires_grad)")

    graph = OpGraph.build(loss)
    leaves = graph.leaves()
    for leaf in leaves:
        if leaf.grad is not None:
            raise GradientError("gradiente já populado em uma folha; chame zero_grad() antes do backward")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if node.is_leaf:
            node.grad = g if g is not None else np.zeros_like(node.data)
            continue
        if g is not None:
            if node._retain:
                node.grad = g
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        # Libera intermediários salvos
        node._backward = None
        node._parents = ()
        node._consumed = True
    loss._consumed = True


# ---------------------------------------------------------------------
# Convolução, pooling e interpolação
# ---------------------------------------------------------------------

def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _conv_windows(xp, kernel, stride, out_h, out_w):
    """Janelas (N, C, Ho, Wo, K, K) como view, sem cópia (im2col implícito)"""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :out_h, :out_w]


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """
    Correlação cruzada 2D

    Args:
        x: Tensor N×C×H×W
        weight: Tensor O×I×K×K (I == C)
        bias: Tensor O opcional
        stride: Passo positivo
        padding: Padding com zeros (não negativo)

    Returns:
        Tensor: N×O×Ho×Wo com Ho = ⌊(H+2p−K)/s⌋+1
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: esperado input NCHW e kernel OIKK, recebido {x.shape} e {weight.shape}")
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise ShapeError(f"conv2d: canais do input {x.shape} não batem com o kernel {weight.shape}")
    if kh != kw:
        raise ShapeError(f"conv2d: kernel deve ser quadrado, recebido {weight.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride={stride} e padding={padding} inválidos")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias {bias.shape} incompatível com kernel {weight.shape}")
    k = kh
    out_h = conv_output_size(h, k, stride, padding)
    out_w = conv_output_size(w, k, stride, padding)
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"conv2d: saída vazia para input {x.shape} e kernel {weight.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = _conv_windows(xp, k, stride, out_h, out_w)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def _backward(g):
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            # col2im: espalha as colunas de volta na imagem com padding
            dcol = np.tensordot(g, weight.data, axes=([1], [0]))
            dxp = np.zeros(xp.shape, dtype=x.dtype)
            h_span = stride * (out_h - 1) + 1
            w_span = stride * (out_w - 1) + 1
            for a in range(k):
                for b in range(k):
                    dxp[:, :, a:a + h_span:stride, b:b + w_span:stride] += dcol[:, :, :, :, a, b].transpose(0, 3, 1, 2)
            gx = dxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out.astype(x.dtype, copy=False), parents, _backward, 'conv2d')


def pool2d(x, mode='max', window=2, stride=2):
    """
    Pooling 2×2 com stride 2 (max ou média)

    No modo max o gradiente vai para a primeira ocorrência do máximo em
    ordem row-major; no modo avg é distribuído uniformemente.

    Args:
        x: Tensor N×C×H×W com H e W pares
        mode: 'max' ou 'avg'
    """
    if window != 2 or stride != 2:
        raise ShapeError(f"pool2d suporta apenas janela 2 e stride 2, recebido {window}/{stride}")
    if mode not in ('max', 'avg'):
        raise ValueError(f"pool2d: modo desconhecido '{mode}'")
    if x.ndim != 4:
        raise ShapeError(f"pool2d: esperado NCHW, recebido {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pool2d: extensão espacial ímpar em {x.shape}")
    h2, w2 = h // 2, w // 2
    blocks = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)

    def _unblock(gb):
        return gb.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)

    if mode == 'max':
        idx = blocks.argmax(axis=-1)
        out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

        def _backward(g):
            gb = np.zeros(blocks.shape, dtype=x.dtype)
            np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
            return (_unblock(gb),)
    else:
        out = blocks.mean(axis=-1, dtype=x.dtype)

        def _backward(g):
            gb = np.broadcast_to((g * 0.25)[..., None], blocks.shape)
            return (_unblock(np.ascontiguousarray(gb)),)

    return _make(out, (x,), _backward, f'pool2d_{mode}')


def _align_corners_index(n_in, dtype):
    """Índices e pesos da interpolação com cantos alinhados para fator 2"""
    n_out = 2 * n_in
    if n_in == 1:
        i0 = np.zeros(n_out, dtype=np.int64)
        return i0, i0.copy(), np.zeros(n_out, dtype=dtype)
    pos = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
    t = pos - i0
    return i0, i0 + 1, t.astype(dtype)


def _interp_matrix(i0, i1, t, n_in, dtype):
    m = np.zeros((len(i0), n_in), dtype=dtype)
    rows = np.arange(len(i0))
    np.add.at(m, (rows, i0), 1 - t)
    np.add.at(m, (rows, i1), t)
    return m


def upsample_bilinear(x, factor=2):
    """
    Upsample bilinear 2× com cantos alinhados

    Para a saída de índice d em um eixo de tamanho n:
        src = d·(n−1)/(2n−1), i0 = ⌊src⌋, t = src − i0
        y = x[i0] + t·(x[i0+1] − x[i0])
    A forma incremental mantém mapas constantes exatamente constantes.

    Args:
        x: Tensor N×C×H×W
        factor: Apenas 2
    """
    if factor != 2:
        raise ShapeError(f"upsample_bilinear suporta apenas fator 2, recebido {factor}")
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"upsample_bilinear: esperado NCHW não vazio, recebido {x.shape}")
    n, c, h, w = x.shape
    r0, r1, rt = _align_corners_index(h, x.dtype)
    c0, c1, ct = _align_corners_index(w, x.dtype)

    d = x.data
    tmp = d[:, :, :, c0] + ct * (d[:, :, :, c1] - d[:, :, :, c0])
    out = tmp[:, :, r0, :] + rt[:, None] * (tmp[:, :, r1, :] - tmp[:, :, r0, :])

    def _backward(g):
        mh = _interp_matrix(r0, r1, rt, h, x.dtype)
        mw = _interp_matrix(c0, c1, ct, w, x.dtype)
        gw = np.tensordot(g, mw, axes=([3], [0]))
        gx = np.tensordot(mh, gw, axes=([0], [2])).transpose(1, 2, 0, 3)
        return (np.ascontiguousarray(gx),)

    return _make(out, (x,), _backward, 'upsample_bilinear')


# ---------------------------------------------------------------------
# Normalização e camadas densas
# ---------------------------------------------------------------------

class RunningStats:
    """
    Estatísticas acumuladas do batch norm (média e variância por canal)

    Args:
        channels: Número de canais
        momentum: Fator de retenção (0.9)
    """

    def __init__(self, channels, momentum=0.9, dtype=None):
        dtype = dtype or _DEFAULT_DTYPE
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum

    def update(self, batch_mean, batch_var, count):
        unbiased = batch_var * (count / (count - 1)) if count > 1 else batch_var
        m = self.momentum
        self.mean = (m * self.mean + (1 - m) * batch_mean).astype(self.mean.dtype)
        self.var = (m * self.var + (1 - m) * unbiased).astype(self.var.dtype)


BN_EPS = 1e-5


def batch_norm(x, gamma, beta, running, training=True, eps=BN_EPS):
    """
    Batch normalization por canal (N×C×H×W ou N×F)

    Args:
        x: Tensor de entrada
        gamma: Escala por canal
        beta: Deslocamento por canal
        running: RunningStats atualizado no modo treino
        training: True usa estatísticas do batch; False usa as acumuladas
        eps: Regularização da variância

    Returns:
        Tensor normalizado com a mesma forma
    """
    if x.ndim not in (2, 4):
        raise ShapeError(f"batch_norm: esperado N×C×H×W ou N×F, recebido {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError(f"batch_norm: batch vazio {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batch_norm: gamma {gamma.shape}/beta {beta.shape} incompatíveis com {x.shape}")

    axes = (0, 2, 3) if x.ndim == 4 else (0,)
    bshape = (1, channels, 1, 1) if x.ndim == 4 else (1, channels)
    count = x.data.size // channels

    if training:
        mean = x.data.mean(axis=axes, dtype=x.dtype)
        var = x.data.var(axis=axes, dtype=x.dtype)
        running.update(mean, var, count)
    else:
        mean, var = running.mean.astype(x.dtype), running.var.astype(x.dtype)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def _backward(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=axes)
        if beta.requires_grad:
            gbeta = g.sum(axis=axes)
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(bshape)
            if training:
                sum_d = dxhat.sum(axis=axes).reshape(bshape)
                sum_dx = (dxhat * xhat).sum(axis=axes).reshape(bshape)
                gx = (inv_std.reshape(bshape) / count) * (count * dxhat - sum_d - xhat * sum_dx)
            else:
                gx = dxhat * inv_std.reshape(bshape)
        return gx, ggamma, gbeta

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), _backward, 'batch_norm')


def fully_connected(x, weight, bias=None):
    """
    Camada afim N×F → N×G

    Args:
        x: Tensor N×F
        weight: Tensor F×G
        bias: Tensor G opcional
    """
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"fully_connected: input {x.shape} incompatível com peso {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"fully_connected: bias {bias.shape} incompatível com peso {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def _backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, _backward, 'fully_connected')


# ---------------------------------------------------------------------
# Soft-argmax
# ---------------------------------------------------------------------

DEFAULT_SOFT_ARGMAX_TAU = 10.0


def soft_argmax(heatmap, tau=DEFAULT_SOFT_ARGMAX_TAU):
    """
    Coordenadas esperadas sob o softmax de τ·heatmap

    Args:
        heatmap: Tensor (..., H, W)
        tau: Multiplicador de nitidez do softmax (padrão 10.0)

    Returns:
        Tensor (..., 2) com (u, v) = (coluna, linha) em pixels
    """
    if heatmap.ndim < 2:
        raise ShapeError(f"soft_argmax: esperado (..., H, W), recebido {heatmap.shape}")
    *lead, h, w = heatmap.shape
    dtype = heatmap.dtype
    z = heatmap.data.reshape(*lead, h * w) * dtype.type(tau)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    cols = np.tile(np.arange(w, dtype=dtype), h)
    rows = np.repeat(np.arange(h, dtype=dtype), w)
    u = p @ cols
    v = p @ rows
    out = np.stack([u, v], axis=-1)

    def _backward(g):
        gu = g[..., 0:1]
        gv = g[..., 1:2]
        dz = p * (gu * (cols - u[..., None]) + gv * (rows - v[..., None]))
        return ((dz * dtype.type(tau)).reshape(heatmap.shape),)

    return _make(out, (heatmap,), _backward, 'soft_argmax')


# ---------------------------------------------------------------------
# Operações elementares e de forma
# ---------------------------------------------------------------------

def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: formas diferentes {a.shape} e {b.shape}")


def relu(x):
    """ReLU com gradiente 0 exatamente em 0"""
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return _make(out, (x,), lambda g: (g * mask,), 'relu')


def add(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _same_shape('add', a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g), 'add')


def sub(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _same_shape('sub', a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), 'sub')


def mul(a, b):
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _same_shape('mul', a, b)
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), 'mul')


def scale(x, factor):
    """Multiplica por constante"""
    f = x.dtype.type(factor)
    return _make(x.data * f, (x,), lambda g: (g * f,), 'scale')


def shift(x, offset):
    """Soma constante"""
    o = x.dtype.type(offset)
    return _make(x.data + o, (x,), lambda g: (g,), 'shift')


def square(x):
    return _make(x.data * x.data, (x,), lambda g: (2 * g * x.data,), 'square')


def log(x):
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), 'log')


def sigmoid(x):
    out = (0.5 * (1.0 + np.tanh(0.5 * x.data))).astype(x.dtype, copy=False)
    return _make(out, (x,), lambda g: (g * out * (1 - out),), 'sigmoid')


def softmax_channels(x):
    """Softmax sobre o eixo de canais (eixo 1)"""
    if x.ndim < 2:
        raise ShapeError(f"softmax_channels: esperado eixo de canais, recebido {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def _backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _make(p, (x,), _backward, 'softmax_channels')


def log_softmax_channels(x):
    """Log-softmax estável sobre o eixo de canais"""
    if x.ndim < 2:
        raise ShapeError(f"log_softmax_channels: esperado eixo de canais, recebido {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def _backward(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _make(out, (x,), _backward, 'log_softmax_channels')


def concat_channels(tensors):
    """
    Concatena no eixo de canais preservando a ordem

    Args:
        tensors: Lista de Tensors com extensões iguais fora do eixo 1
    """
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_channels: lista vazia")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:1] != ref[:1] or t.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels: formas incompatíveis {ref} e {t.shape}")
    sizes = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=1)

    def _backward(g):
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(tensors)))

    return _make(out, tuple(tensors), _backward, 'concat_channels')


def reshape(x, shape):
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), 'reshape')


def tensor_sum(x, axis=None):
    """Soma (total ou em um eixo)"""
    out = np.asarray(x.data.sum(axis=axis, dtype=x.dtype))

    def _backward(g):
        if axis is None:
            return (np.full(x.shape, g.reshape(-1)[0], dtype=x.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _make(out, (x,), _backward, 'sum')


def tensor_mean(x, axis=None):
    count = x.data.size if axis is None else x.shape[axis]
    return scale(tensor_sum(x, axis=axis), 1.0 / count)


def global_avg_pool(x):
    """Média espacial N×C×H×W → N×C"""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: esperado NCHW, recebido {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=x.dtype)

    def _backward(g):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape).astype(x.dtype),)

    return _make(out, (x,), _backward, 'global_avg_pool')


# ---------------------------------------------------------------------
# Verificação de gradiente por diferenças finitas
# ---------------------------------------------------------------------

def numerical_gradient(fn, arrays, index, h):
    """
    Gradiente por diferenças centrais em relação a arrays[index]

    Args:
        fn: Função que recebe a lista de arrays e devolve um float
        arrays: Lista de ndarrays (não modificados ao final)
        index: Qual array perturbar
        h: Passo da diferença finita
    """
    target = arrays[index]
    grad = np.zeros(target.shape, dtype=np.float64)
    flat = target.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + h
        plus = fn(arrays)
        flat[k] = original - h
        minus = fn(arrays)
        flat[k] = original
        grad.reshape(-1)[k] = (plus - minus) / (2 * h)
    return grad


def gradient_check(build_loss, arrays, h=None):
    """
    Compara gradientes analíticos com diferenças finitas centrais

    O erro de cada entrada é normalizado pela maior magnitude de
    gradiente daquele array.

    Args:
        build_loss: Função que recebe Tensors e devolve a loss escalar
        arrays: Lista de ndarrays (a precisão dos arrays define a do teste)
        h: Passo (padrão 1e-3 em float32, 1e-6 em float64)

    Returns:
        float: Maior erro relativo entre todos os arrays
    """
    arrays = [np.array(a, copy=True) for a in arrays]
    if h is None:
        h = 1e-3 if arrays[0].dtype == np.float32 else 1e-6

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    backward(loss)

    def evaluate(current):
        with no_grad():
            return float(build_loss(*[Tensor(a) for a in current]).data)

    worst = 0.0
    for index, tensor in enumerate(tensors):
        numeric = numerical_gradient(evaluate, arrays, index, h)
        analytic = tensor.grad.astype(np.float64)
        scale_ = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        worst = max(worst, float(np.abs(analytic - numeric).max() / scale_))
    return worst


# ---------------------------------------------------------------------
# Checkpoint GZK1
# ---------------------------------------------------------------------

_DTYPE_CODES = {
    'float32': '<f4',
    'float64': '<f8',
    'int32': '<i4',
    'int64': '<i8',
}


def save_tensors(path, tensors, metadata=None):
    """
    Salva arrays nomeados no formato GZK1

    Layout: linha 'GZK1', linha com o bloco JSON (nomes, formas, dtypes e
    offsets), depois os payloads little-endian na ordem de declaração.

    Args:
        path: Arquivo de saída
        tensors: dict ordenado nome -> ndarray
        metadata: dict serializável (configs da rede, passo, etc.)

    Returns:
        str: Caminho salvo
    """
    entries = []
    payloads = []
    offset = 0
    for name, array in tensors.items():
        array = np.asarray(array)
        if array.dtype.name not in _DTYPE_CODES:
            raise CheckpointError(f"dtype não suportado em '{name}': {array.dtype}")
        raw = np.ascontiguousarray(array, dtype=np.dtype(_DTYPE_CODES[array.dtype.name])).tobytes()
        entries.append({
            'name': name,
            'shape': list(array.shape),
            'dtype': array.dtype.name,
            'offset': offset,
            'nbytes': len(raw),
        })
        payloads.append(raw)
        offset += len(raw)

    header = json.dumps({'format': 1, 'tensors': entries, 'metadata': metadata or {}},
                        separators=(',', ':'), ensure_ascii=True)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(header.encode('utf-8') + b"\n")
        for raw in payloads:
            f.write(raw)
    os.replace(tmp_path, path)
    return path


def load_tensors(path):
    """
    Carrega um checkpoint GZK1

    Args:
        path: Arquivo do checkpoint

    Returns:
        tuple: (dict nome -> ndarray, metadata)

    Raises:
        CheckpointError: Cabeçalho inválido ou payload truncado
    """
    with open(path, 'rb') as f:
        blob = f.read()

    first = blob.find(b"\n")
    if first < 0 or blob[:first] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"'{path}' não é um checkpoint GZK1")
    second = blob.find(b"\n", first + 1)
    if second < 0:
        raise CheckpointError(f"'{path}': bloco de metadados ausente")
    try:
        header = json.loads(blob[first + 1:second].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"'{path}': metadados ilegíveis ({e})") from e

    payload = memoryview(blob)[second + 1:]
    arrays = {}
    for entry in header.get('tensors', []):
        start, nbytes = entry['offset'], entry['nbytes']
        if start + nbytes > len(payload):
            raise CheckpointError(f"'{path}': payload truncado em '{entry['name']}'")
        dtype = np.dtype(_DTYPE_CODES[entry['dtype']])
        values = np.frombuffer(payload[start:start + nbytes], dtype=dtype)
        arrays[entry['name']] = values.reshape(entry['shape']).astype(entry['dtype'])
    return arrays, header.get('metadata', {})
