"""
Geometria do Olho Sintético
Versão 1.0 - Imagens, 18 landmarks, heatmaps, gazemaps e métrica angular

Modelo esquemático do olho: esfera do globo ocular de raio r (em pixels),
íris como círculo de raio r/2 sobre a esfera e projeção ortográfica na
imagem. A direção do olhar g = (θ, φ) = (pitch, yaw) em radianos.

Convenções:
    - image_shape = (H, W) = (n, m); m é a largura
    - u = coluna, v = linha, origem no centro do pixel (0, 0)
    - Landmarks: 0-7 pálpebras, 8-15 borda da íris, 16 centro da íris,
      17 centro do globo ocular
    - Classes do gazemap: 0 íris, 1 globo ocular, 2 fundo
"""
import os
import math
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from utils import (ConfigError, DatasetError, save_json, load_json,
                   create_output_folder)

N_LANDMARKS = 18
N_EYELID = 8
N_IRIS = 8
IRIS_CENTER_INDEX = 16
EYEBALL_CENTER_INDEX = 17

IRIS_TO_EYEBALL_RATIO = 0.5
# Distância do plano da íris ao centro do globo: r·cos(asin(½))
IRIS_PLANE_FACTOR = math.cos(math.asin(IRIS_TO_EYEBALL_RATIO))

DEFAULT_IMAGE_SHAPE = (64, 96)
DEFAULT_HEATMAP_SIGMA = 2.0

GAZEMAP_IRIS = 0
GAZEMAP_EYEBALL = 1
GAZEMAP_BACKGROUND = 2
N_GAZEMAP_CLASSES = 3

# Pálpebras: cantos em c_u ± 1.15r, arcos quadráticos cuja abertura
# acompanha cos(pitch)
EYELID_HALF_WIDTH = 1.15
UPPER_LID_OPENING = 0.75
LOWER_LID_OPENING = 0.55
EYELID_ARC_T = (-0.5, 0.0, 0.5)

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GazeAngles:
    """Direção do olhar (pitch θ, yaw φ) em radianos"""
    pitch: float
    yaw: float

    def as_array(self):
        return np.array([self.pitch, self.yaw], dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), float(values[1]))


@dataclass(frozen=True)
class EyeballParams:
    """
    Globo ocular projetado

    Attributes:
        radius: Raio projetado r_uv em pixels
        center_u, center_v: Centro em pixels (None = centro da imagem)
        iris_ratio: Razão íris/globo (fixa em 0.5)
    """
    radius: float
    center_u: float = None
    center_v: float = None
    iris_ratio: float = IRIS_TO_EYEBALL_RATIO

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"Raio do globo ocular deve ser positivo, recebido {self.radius}")
        if self.iris_ratio != IRIS_TO_EYEBALL_RATIO:
            raise ConfigError(f"iris_ratio é fixo em {IRIS_TO_EYEBALL_RATIO}")

    def center(self, image_shape=DEFAULT_IMAGE_SHAPE):
        """Centro (u, v); sem centro explícito usa (m/2, n/2)"""
        n, m = image_shape
        cu = m / 2.0 if self.center_u is None else float(self.center_u)
        cv = n / 2.0 if self.center_v is None else float(self.center_v)
        return cu, cv

    def as_array(self, image_shape=DEFAULT_IMAGE_SHAPE):
        cu, cv = self.center(image_shape)
        return np.array([cu, cv, self.radius], dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        return cls(radius=float(values[2]), center_u=float(values[0]), center_v=float(values[1]))


@dataclass
class EyeSample:
    """Um registro sintético de treinamento"""
    image: np.ndarray
    landmarks: np.ndarray
    gaze: GazeAngles
    eyeball: EyeballParams
    subject_id: int = 0
    seed: int = 0

    @property
    def image_shape(self):
        return self.image.shape


def _angles(gaze):
    if isinstance(gaze, GazeAngles):
        return gaze.pitch, gaze.yaw
    return float(gaze[0]), float(gaze[1])


# ---------------------------------------------------------------------
# Direções e métrica angular
# ---------------------------------------------------------------------

def gaze_to_vector(gaze):
    """
    Converte (θ, φ) em vetor unitário 3D

    v = (−cosθ·sinφ, −sinθ, −cosθ·cosφ)

    Args:
        gaze: GazeAngles ou array (..., 2)

    Returns:
        np.ndarray: (3,) ou (..., 3)
    """
    if isinstance(gaze, GazeAngles):
        gaze = gaze.as_array()
    g = np.asarray(gaze, dtype=np.float64)
    theta, phi = g[..., 0], g[..., 1]
    return np.stack([-np.cos(theta) * np.sin(phi),
                     -np.sin(theta),
                     -np.cos(theta) * np.cos(phi)], axis=-1)


def vector_to_gaze(vector):
    """
    Inverso de gaze_to_vector

    Args:
        vector: Vetor 3D (não precisa ser unitário)

    Returns:
        GazeAngles
    """
    v = np.asarray(vector, dtype=np.float64)
    v = v / np.linalg.norm(v)
    theta = math.asin(float(np.clip(-v[1], -1.0, 1.0)))
    phi = math.atan2(float(-v[0]), float(-v[2]))
    return GazeAngles(theta, phi)


def angular_error(a, b):
    """
    Ângulo em graus entre duas direções de olhar

    Args:
        a, b: GazeAngles ou arrays (..., 2)

    Returns:
        float ou np.ndarray em graus
    """
    va = gaze_to_vector(a)
    vb = gaze_to_vector(b)
    va = va / np.linalg.norm(va, axis=-1, keepdims=True)
    vb = vb / np.linalg.norm(vb, axis=-1, keepdims=True)
    cos = np.clip(np.sum(va * vb, axis=-1), -1.0, 1.0)
    deg = np.degrees(np.arccos(cos))
    return float(deg) if np.ndim(deg) == 0 else deg


# ---------------------------------------------------------------------
# Landmarks
# ---------------------------------------------------------------------

def iris_center(gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    Centro projetado da íris

        r′ = r·cos(asin ½)
        u_i = c_u − r′·sinφ·cosθ
        v_i = c_v − r′·sinθ

    Com o centro padrão, (c_u, c_v) = (m/2, n/2).

    Args:
        gaze: GazeAngles
        eyeball: EyeballParams
        image_shape: (H, W)

    Returns:
        tuple: (u_i, v_i)
    """
    theta, phi = _angles(gaze)
    cu, cv = eyeball.center(image_shape)
    r_prime = eyeball.radius * IRIS_PLANE_FACTOR
    return cu - r_prime * math.sin(phi) * math.cos(theta), cv - r_prime * math.sin(theta)


def iris_axes(gaze):
    """
    Eixos ortonormais do plano da íris projetados em (u, v)

    Returns:
        tuple: (e1_uv, e2_uv) cada um com 2 componentes
    """
    theta, phi = _angles(gaze)
    e1 = (-math.cos(phi), 0.0)
    e2 = (math.sin(theta) * math.sin(phi), -math.cos(theta))
    return e1, e2


def eyelid_points(gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    8 pontos das pálpebras

    Ordem: 0 canto esquerdo, 1-3 arco superior da esquerda para a
    direita, 4 canto direito, 5-7 arco inferior da direita para a
    esquerda.
    """
    theta, _ = _angles(gaze)
    cu, cv = eyeball.center(image_shape)
    r = eyeball.radius
    half = EYELID_HALF_WIDTH * r
    opening = math.cos(theta)
    points = [(cu - half, cv)]
    for t in EYELID_ARC_T:
        points.append((cu + half * t, cv - UPPER_LID_OPENING * r * opening * (1 - t * t)))
    points.append((cu + half, cv))
    for t in reversed(EYELID_ARC_T):
        points.append((cu + half * t, cv + LOWER_LID_OPENING * r * opening * (1 - t * t)))
    return np.array(points, dtype=np.float64)


def synth_landmarks(gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    Gera os 18 landmarks do modelo do olho

    A borda da íris é o círculo de raio r/2 sobre a esfera, amostrado em
    α_k = 2πk/8 e projetado ortograficamente.

    Args:
        gaze: GazeAngles
        eyeball: EyeballParams
        image_shape: (H, W)

    Returns:
        np.ndarray: (18, 2) em pixels (u, v)
    """
    landmarks = np.zeros((N_LANDMARKS, 2), dtype=np.float64)
    landmarks[:N_EYELID] = eyelid_points(gaze, eyeball, image_shape)

    iu, iv = iris_center(gaze, eyeball, image_shape)
    (e1u, e1v), (e2u, e2v) = iris_axes(gaze)
    iris_radius = eyeball.radius * IRIS_TO_EYEBALL_RATIO
    alphas = 2 * np.pi * np.arange(N_IRIS) / N_IRIS
    landmarks[N_EYELID:N_EYELID + N_IRIS, 0] = iu + iris_radius * (np.cos(alphas) * e1u + np.sin(alphas) * e2u)
    landmarks[N_EYELID:N_EYELID + N_IRIS, 1] = iv + iris_radius * (np.cos(alphas) * e1v + np.sin(alphas) * e2v)

    landmarks[IRIS_CENTER_INDEX] = (iu, iv)
    landmarks[EYEBALL_CENTER_INDEX] = eyeball.center(image_shape)
    return landmarks


# Relabeling que preserva a taxonomia sob espelhamento horizontal
MIRROR_PERMUTATION = np.array(
    [4, 3, 2, 1, 0, 7, 6, 5]
    + [N_EYELID + (4 - k) % N_IRIS for k in range(N_IRIS)]
    + [IRIS_CENTER_INDEX, EYEBALL_CENTER_INDEX]
)


def mirror_landmarks(landmarks, width):
    """
    Espelha horizontalmente (u → m − u) mantendo o significado dos índices

    Args:
        landmarks: (18, 2)
        width: Largura m usada no espelhamento

    Returns:
        np.ndarray: (18, 2)
    """
    mirrored = np.array(landmarks, dtype=np.float64, copy=True)
    mirrored[:, 0] = width - mirrored[:, 0]
    return mirrored[MIRROR_PERMUTATION]


def landmarks_in_bounds(landmarks, image_shape=DEFAULT_IMAGE_SHAPE):
    """True se todos os landmarks estão dentro da grade de pixels"""
    h, w = image_shape
    lm = np.asarray(landmarks)
    return bool(np.all(lm[:, 0] >= 0) and np.all(lm[:, 0] <= w - 1)
                and np.all(lm[:, 1] >= 0) and np.all(lm[:, 1] <= h - 1))


# ---------------------------------------------------------------------
# Heatmaps e gazemaps
# ---------------------------------------------------------------------

def render_heatmaps(landmarks, sigma=DEFAULT_HEATMAP_SIGMA, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    Gaussianas 2D de pico 1 centradas nos landmarks (sub-pixel)

    Args:
        landmarks: (K, 2)
        sigma: Largura em pixels (> 0)
        image_shape: (H, W)

    Returns:
        np.ndarray: (K, H, W) float32
    """
    if not sigma > 0:
        raise ConfigError(f"sigma do heatmap deve ser positivo, recebido {sigma}")
    h, w = image_shape
    lm = np.asarray(landmarks, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    du = (cols[None, :] - lm[:, 0:1]) ** 2
    dv = (rows[None, :] - lm[:, 1:2]) ** 2
    # Separável: exp(−(du+dv)/2σ²) = exp(−dv/2σ²)·exp(−du/2σ²)
    gu = np.exp(-du / (2 * sigma * sigma))
    gv = np.exp(-dv / (2 * sigma * sigma))
    return (gv[:, :, None] * gu[:, None, :]).astype(np.float32)


def _iris_coordinates(u, v, gaze, eyeball, image_shape):
    """Coordenadas (a, b) de pontos da imagem na base (e1, e2) do plano da íris"""
    iu, iv = iris_center(gaze, eyeball, image_shape)
    (e1u, e1v), (e2u, e2v) = iris_axes(gaze)
    det = e1u * e2v - e2u * e1v
    du = u - iu
    dv = v - iv
    a = (du * e2v - dv * e2u) / det
    b = (e1u * dv - e1v * du) / det
    return a, b


def region_masks(u, v, gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    Máscaras booleanas (globo, íris, pupila) nos pontos (u, v)
    """
    cu, cv = eyeball.center(image_shape)
    r = eyeball.radius
    ball = (u - cu) ** 2 + (v - cv) ** 2 <= r * r
    a, b = _iris_coordinates(u, v, gaze, eyeball, image_shape)
    rho2 = a * a + b * b
    iris_r = r * IRIS_TO_EYEBALL_RATIO
    iris = ball & (rho2 <= iris_r * iris_r)
    pupil = iris & (rho2 <= (iris_r / 2) ** 2)
    return ball, iris, pupil


def eyelid_opening_mask(u, v, gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """Pontos visíveis entre as pálpebras"""
    theta, _ = _angles(gaze)
    cu, cv = eyeball.center(image_shape)
    r = eyeball.radius
    t = (u - cu) / (EYELID_HALF_WIDTH * r)
    inside = np.abs(t) < 1
    arc = np.clip(1 - t * t, 0, None) * r * math.cos(theta)
    upper = cv - UPPER_LID_OPENING * arc
    lower = cv + LOWER_LID_OPENING * arc
    return inside & (v >= upper) & (v <= lower)


def render_gazemap(gaze, eyeball, image_shape=DEFAULT_IMAGE_SHAPE):
    """
    Gazemap de 3 classes avaliado nos centros de pixel

    Args:
        gaze: GazeAngles
        eyeball: EyeballParams
        image_shape: (H, W)

    Returns:
        np.ndarray: (H, W) int com as classes GAZEMAP_*
    """
    h, w = image_shape
    v, u = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing='ij')
    ball, iris, _ = region_masks(u, v, gaze, eyeball, image_shape)
    classes = np.full((h, w), GAZEMAP_BACKGROUND, dtype=np.int64)
    classes[ball] = GAZEMAP_EYEBALL
    classes[iris] = GAZEMAP_IRIS
    return classes


def gazemap_one_hot(classes):
    """(H, W) classes → (3, H, W) float32"""
    return np.stack([(classes == k) for k in range(N_GAZEMAP_CLASSES)]).astype(np.float32)


# ---------------------------------------------------------------------
# Renderização
# ---------------------------------------------------------------------

@dataclass
class RenderSettings:
    """Parâmetros do renderizador esquemático"""
    noise_sigma: float = 0.02
    brightness_jitter: float = 0.05
    supersample: int = 4
    sclera_shade: float = 0.9
    pupil_shade: float = 0.08
    iris_shade: float = 0.38
    skin_shade: float = 0.62

    def validate(self):
        if self.noise_sigma < 0 or self.brightness_jitter < 0:
            raise ConfigError("noise_sigma e brightness_jitter devem ser não negativos")
        if self.supersample < 1:
            raise ConfigError(f"supersample deve ser >= 1, recebido {self.supersample}")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return _dataclass_from_dict(cls, data)


def render_eye(gaze, eyeball, seed, image_shape=DEFAULT_IMAGE_SHAPE, settings=None,
               iris_shade=None, skin_shade=None):
    """
    Renderiza a imagem em tons de cinza do olho

    Camadas: pele, esclera sombreada (mais escura na borda do globo),
    íris plana, pupila concêntrica (metade do raio da íris) e oclusão
    pelas pálpebras. Supersampling 4×4 suaviza as bordas. Depois somam-se
    ruído gaussiano e jitter de brilho, com clamp em [0, 1].

    Args:
        gaze: GazeAngles
        eyeball: EyeballParams
        seed: Semente do ruído
        image_shape: (H, W)
        settings: RenderSettings
        iris_shade, skin_shade: Tons do sujeito (padrão: settings)

    Returns:
        np.ndarray: (H, W) float32
    """
    settings = settings or RenderSettings()
    iris_shade = settings.iris_shade if iris_shade is None else iris_shade
    skin_shade = settings.skin_shade if skin_shade is None else skin_shade
    h, w = image_shape
    s = settings.supersample
    offsets = (np.arange(s) + 0.5) / s - 0.5
    rows = (np.arange(h)[:, None] + offsets[None, :]).reshape(-1)
    cols = (np.arange(w)[:, None] + offsets[None, :]).reshape(-1)
    v, u = np.meshgrid(rows, cols, indexing='ij')

    cu, cv = eyeball.center(image_shape)
    r = eyeball.radius
    ball, iris, pupil = region_masks(u, v, gaze, eyeball, image_shape)
    opening = eyelid_opening_mask(u, v, gaze, eyeball, image_shape)

    d2 = np.minimum(((u - cu) ** 2 + (v - cv) ** 2) / (r * r), 1.0)
    sclera = settings.sclera_shade * (1 - 0.3 * d2)

    fine = np.full(u.shape, skin_shade, dtype=np.float64)
    fine = np.where(opening, sclera, fine)
    fine = np.where(opening & iris, iris_shade, fine)
    fine = np.where(opening & pupil, settings.pupil_shade, fine)

    image = fine.reshape(h, s, w, s).mean(axis=(1, 3))

    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-settings.brightness_jitter, settings.brightness_jitter)
    noise = rng.normal(0.0, 1.0, size=image.shape) * settings.noise_sigma
    image = np.clip(image + jitter + noise, 0.0, 1.0)
    return image.astype(np.float32)


# ---------------------------------------------------------------------
# Gerador de amostras
# ---------------------------------------------------------------------

@dataclass
class SamplingRanges:
    """Faixas de amostragem do gerador"""
    pitch: tuple = (-0.7, 0.7)
    yaw: tuple = (-0.7, 0.7)
    radius: tuple = (20.0, 26.0)
    n_subjects: int = 20
    iris_shade: tuple = (0.28, 0.48)
    skin_shade: tuple = (0.5, 0.72)

    def validate(self):
        limit = math.pi / 2 - 0.05
        for name in ('pitch', 'yaw', 'radius', 'iris_shade', 'skin_shade'):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise DatasetError(f"Faixa inválida para {name}: ({lo}, {hi})")
        for name in ('pitch', 'yaw'):
            lo, hi = getattr(self, name)
            if abs(lo) > limit or abs(hi) > limit:
                raise DatasetError(f"Faixa de {name} excede ±{limit:.4f} rad: ({lo}, {hi})")
        if self.radius[0] <= 0:
            raise DatasetError(f"Raio mínimo deve ser positivo: {self.radius}")
        if self.n_subjects < 1:
            raise DatasetError(f"n_subjects deve ser >= 1, recebido {self.n_subjects}")
        return self

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, data):
        obj = _dataclass_from_dict(cls, data)
        for f in dataclasses.fields(cls):
            value = getattr(obj, f.name)
            if isinstance(value, list):
                setattr(obj, f.name, tuple(value))
        return obj


def _dataclass_from_dict(cls, data, error=ConfigError):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise error(f"Chaves desconhecidas para {cls.__name__}: {', '.join(unknown)}")
    return cls(**data)


class EyeSampleGenerator:
    """
    Gera EyeSamples determinísticos por índice

    A amostra i depende apenas de (seed, i): geração paralela em qualquer
    ordem produz o mesmo dataset.

    Args:
        seed: Semente base
        ranges: SamplingRanges
        image_shape: (H, W), ambos divisíveis por 8
        render: RenderSettings
    """

    MAX_TRIES = 20

    def __init__(self, seed=0, ranges=None, image_shape=DEFAULT_IMAGE_SHAPE, render=None):
        self.seed = int(seed)
        self.ranges = (ranges or SamplingRanges()).validate()
        self.render = (render or RenderSettings()).validate()
        h, w = image_shape
        if h % 8 or w % 8 or h <= 0 or w <= 0:
            raise DatasetError(f"Dimensões da imagem devem ser positivas e divisíveis por 8: {image_shape}")
        self.image_shape = (int(h), int(w))
        self.rejections = 0

    def subject_profile(self, subject_id):
        """Tons de íris e pele do sujeito"""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1, subject_id)))
        return {
            'iris_shade': float(rng.uniform(*self.ranges.iris_shade)),
            'skin_shade': float(rng.uniform(*self.ranges.skin_shade)),
        }

    def draw_parameters(self, rng):
        gaze = GazeAngles(float(rng.uniform(*self.ranges.pitch)), float(rng.uniform(*self.ranges.yaw)))
        eyeball = EyeballParams(radius=float(rng.uniform(*self.ranges.radius)))
        return gaze, eyeball

    def sample(self, index):
        """
        Amostra de índice `index`

        Parâmetros com landmarks fora da imagem são rejeitados e
        reamostrados.

        Returns:
            tuple: (EyeSample, número de rejeições)
        """
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0, index)))
        subject_id = int(index % self.ranges.n_subjects)
        profile = self.subject_profile(subject_id)

        rejected = 0
        for _ in range(self.MAX_TRIES):
            gaze, eyeball = self.draw_parameters(rng)
            landmarks = synth_landmarks(gaze, eyeball, self.image_shape)
            if landmarks_in_bounds(landmarks, self.image_shape):
                break
            rejected += 1
        else:
            raise DatasetError(f"Amostra {index}: nenhum parâmetro válido em {self.MAX_TRIES} tentativas")

        render_seed = int(rng.integers(0, 2 ** 62))
        image = render_eye(gaze, eyeball, render_seed, self.image_shape, self.render,
                           iris_shade=profile['iris_shade'], skin_shade=profile['skin_shade'])
        sample = EyeSample(image=image, landmarks=landmarks, gaze=gaze,
                           eyeball=EyeballParams(eyeball.radius, *eyeball.center(self.image_shape)),
                           subject_id=subject_id, seed=render_seed)
        return sample, rejected


# ---------------------------------------------------------------------
# Formato do dataset (meta.json + samples.bin)
# ---------------------------------------------------------------------

def record_dtype(image_shape):
    """Registro de tamanho fixo little-endian do samples.bin"""
    h, w = image_shape
    return np.dtype([
        ('image', '<f4', (h, w)),
        ('landmarks', '<f4', (N_LANDMARKS, 2)),
        ('gaze', '<f4', (2,)),
        ('eyeball', '<f4', (3,)),
        ('subject_id', '<i4'),
        ('seed', '<i8'),
    ])


def samples_to_records(samples, image_shape):
    records = np.zeros(len(samples), dtype=record_dtype(image_shape))
    for i, s in enumerate(samples):
        if s.image.shape != tuple(image_shape):
            raise DatasetError(f"Imagem {i} com forma {s.image.shape}, esperado {tuple(image_shape)}")
        records[i]['image'] = s.image
        records[i]['landmarks'] = s.landmarks
        records[i]['gaze'] = s.gaze.as_array()
        records[i]['eyeball'] = s.eyeball.as_array(image_shape)
        records[i]['subject_id'] = s.subject_id
        records[i]['seed'] = s.seed
    return records


def write_dataset(out_path, samples, meta):
    """
    Escreve o dataset em uma pasta

    Args:
        out_path: Pasta de saída
        samples: Lista de EyeSample
        meta: dict com dims, sigma, faixas, etc. (sem timestamps)

    Returns:
        str: Caminho absoluto da pasta
    """
    folder = create_output_folder(out_path)
    image_shape = tuple(meta['dims'])
    records = samples_to_records(samples, image_shape)
    meta = dict(meta)
    meta['format_version'] = DATASET_FORMAT_VERSION
    meta['count'] = len(samples)
    meta['record_bytes'] = records.dtype.itemsize
    records.tofile(os.path.join(folder, 'samples.bin'))
    save_json(os.path.join(folder, 'meta.json'), meta)
    return folder


class DatasetView:
    """
    Leitura do dataset (memory-mapped)

    Args:
        records: Array estruturado (ou memmap)
        meta: Conteúdo do meta.json
        indices: Subconjunto opcional de índices
    """

    def __init__(self, records, meta, indices=None):
        self.records = records
        self.meta = meta
        self.indices = np.arange(len(records)) if indices is None else np.asarray(indices, dtype=np.int64)
        self.image_shape = tuple(meta['dims'])
        self.sigma = float(meta.get('sigma', DEFAULT_HEATMAP_SIGMA))

    def __len__(self):
        return len(self.indices)

    def _field(self, name):
        return np.asarray(self.records[name][self.indices])

    @property
    def images(self):
        return self._field('image')

    @property
    def landmarks(self):
        return self._field('landmarks').astype(np.float64)

    @property
    def gaze(self):
        return self._field('gaze').astype(np.float64)

    @property
    def eyeball(self):
        return self._field('eyeball').astype(np.float64)

    @property
    def subject_ids(self):
        return self._field('subject_id').astype(np.int64)

    def __getitem__(self, i):
        rec = self.records[self.indices[i]]
        return EyeSample(
            image=np.array(rec['image'], dtype=np.float32),
            landmarks=np.array(rec['landmarks'], dtype=np.float64),
            gaze=GazeAngles.from_array(rec['gaze']),
            eyeball=EyeballParams.from_array(rec['eyeball']),
            subject_id=int(rec['subject_id']),
            seed=int(rec['seed']),
        )

    def subset(self, indices):
        """Visão sobre um subconjunto (índices relativos a esta visão)"""
        return DatasetView(self.records, self.meta, self.indices[np.asarray(indices, dtype=np.int64)])


def read_dataset(path):
    """
    Abre um dataset escrito por write_dataset

    Raises:
        DatasetError: meta.json ausente, versão desconhecida ou tamanho
            do samples.bin inconsistente
    """
    meta_path = os.path.join(path, 'meta.json')
    bin_path = os.path.join(path, 'samples.bin')
    if not os.path.isfile(meta_path) or not os.path.isfile(bin_path):
        raise DatasetError(f"Dataset não encontrado em '{path}' (meta.json/samples.bin)")
    meta = load_json(meta_path)
    if meta.get('format_version') != DATASET_FORMAT_VERSION:
        raise DatasetError(f"Versão de dataset não suportada: {meta.get('format_version')}")
    dtype = record_dtype(tuple(meta['dims']))
    size = os.path.getsize(bin_path)
    if size != dtype.itemsize * meta['count']:
        raise DatasetError(f"samples.bin com {size} bytes; esperado {dtype.itemsize * meta['count']}")
    records = np.memmap(bin_path, dtype=dtype, mode='r', shape=(meta['count'],))
    return DatasetView(records, meta)


def split_by_subject(subject_ids, fractions=(0.8, 0.1, 0.1)):
    """
    Divide índices em treino/validação/teste por sujeito

    Sujeitos em ordem crescente; os primeiros 80% vão para treino, os
    10% seguintes para validação e o resto para teste.

    Returns:
        tuple: (train_idx, val_idx, test_idx)
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ConfigError(f"Frações de split inválidas: {fractions}")
    ids = np.asarray(subject_ids)
    subjects = np.unique(ids)
    n = len(subjects)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n >= 3:
        n_train = min(max(n_train, 1), n - 2)
        n_val = min(max(n_val, 1), n - n_train - 1)
    groups = (subjects[:n_train], subjects[n_train:n_train + n_val], subjects[n_train + n_val:])
    return tuple(np.flatnonzero(np.isin(ids, g)) for g in groups)
