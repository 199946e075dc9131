"""
services/storage.py
Contêiner binário versionado (.spcr datasets/imagens, base do .spck) com CRC64 e escrita atômica

Layout:
    magic (4 bytes) | u32 versão | u64 tamanho do cabeçalho | cabeçalho JSON (utf-8)
    | arrays little-endian na ordem declarada em header["arrays"] | u64 CRC64(cabeçalho + payload)
"""

import json
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import crcmod.predefined
import numpy as np

from spicer.exceptions import ChecksumError, FileFormatError, VersionError
from spicer.models.enums import Precision
from spicer.models.types import CoilSensitivities, MultiCoilKspace, SamplingMask, TrainingPair

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"SPCR"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_TRAILER = struct.Struct("<Q")
_crc64 = crcmod.predefined.mkCrcFun("crc-64-we")

_DTYPES = {
    "c128": np.dtype("<c16"),
    "c64": np.dtype("<c8"),
    "f64": np.dtype("<f8"),
    "f32": np.dtype("<f4"),
    "u1": np.dtype("u1"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}

# =================== Contêiner genérico ===================

def _dtype_name(array: np.ndarray) -> str:
    if array.dtype == np.bool_:
        return "u1"
    name = _DTYPE_NAMES.get(array.dtype.newbyteorder("<"))
    if name is None:
        raise FileFormatError(f"dtype não suportado no contêiner: {array.dtype}")
    return name


def atomic_write_bytes(path: Union[str, Path], blob: bytes) -> None:
    """Escreve em arquivo temporário no mesmo diretório e renomeia"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path: Union[str, Path], magic: bytes, header: Dict[str, Any], arrays: Sequence[Tuple[str, np.ndarray]]) -> None:
    """Serializa cabeçalho + arrays em um único arquivo"""
    descriptors = []
    chunks = []
    for name, array in arrays:
        array = np.asarray(array)
        dtype_name = _dtype_name(array)
        stored = np.ascontiguousarray(array.astype(_DTYPES[dtype_name], copy=False))
        descriptors.append({"name": name, "shape": list(array.shape), "dtype": dtype_name})
        chunks.append(stored.tobytes())

    full_header = dict(header)
    full_header["arrays"] = descriptors
    header_bytes = json.dumps(full_header, sort_keys=True).encode("utf-8")
    payload = b"".join(chunks)
    crc = _crc64(header_bytes + payload)

    blob = _PREFIX.pack(magic, FORMAT_VERSION, len(header_bytes)) + header_bytes + payload + _TRAILER.pack(crc)
    atomic_write_bytes(path, blob)
    logger.debug(f"Contêiner {magic.decode()} gravado em {path} ({len(blob)} bytes)")


def read_container(path: Union[str, Path], magic: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Lê e valida um contêiner; retorna (cabeçalho, arrays por nome)"""
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        if blob[:4] != magic[: len(blob[:4])]:
            raise FileFormatError(f"{path}: magic inválido")
        raise ChecksumError(f"{path}: arquivo truncado")

    found_magic, version, header_len = _PREFIX.unpack_from(blob)
    if found_magic != magic:
        raise FileFormatError(f"{path}: magic {found_magic!r}, esperado {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: versão {version} desconhecida (suportada: {FORMAT_VERSION})")

    body_end = len(blob) - _TRAILER.size
    header_end = _PREFIX.size + header_len
    if header_end > body_end:
        raise ChecksumError(f"{path}: arquivo truncado")
    (stored_crc,) = _TRAILER.unpack_from(blob, body_end)
    body = blob[_PREFIX.size:body_end]
    if _crc64(body) != stored_crc:
        raise ChecksumError(f"{path}: CRC64 divergente")

    try:
        header = json.loads(blob[_PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FileFormatError(f"{path}: cabeçalho JSON inválido: {e}") from e

    arrays: Dict[str, np.ndarray] = {}
    cursor = header_end
    for desc in header.get("arrays", []):
        dtype = _DTYPES.get(desc["dtype"])
        if dtype is None:
            raise FileFormatError(f"{path}: dtype desconhecido {desc['dtype']}")
        count = int(np.prod(desc["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if cursor + nbytes > body_end:
            raise ChecksumError(f"{path}: payload menor que o declarado")
        array = np.frombuffer(blob, dtype=dtype, count=count, offset=cursor).reshape(desc["shape"])
        arrays[desc["name"]] = array.astype(dtype.newbyteorder("="))
        cursor += nbytes
    if cursor != body_end:
        raise FileFormatError(f"{path}: bytes excedentes após os arrays")
    return header, arrays

# =================== Datasets ===================

def save_dataset(
    pairs: List[TrainingPair],
    path: Union[str, Path],
    seed: Optional[int] = None,
    precision: Union[str, Precision] = Precision.F64,
) -> None:
    """Grava pares (medidas, máscaras e, se presentes, referências) em .spcr"""
    if not pairs:
        raise FileFormatError("Nenhum par para gravar")
    complex_dtype = np.complex64 if Precision(precision) == Precision.F32 else np.complex128
    first = pairs[0].y
    entries = []
    arrays: List[Tuple[str, np.ndarray]] = []
    for i, pair in enumerate(pairs):
        entries.append({
            "mask": pair.y.mask.to_descriptor(),
            "mask_prime": pair.y_prime.mask.to_descriptor(),
            "noise_sigma": pair.y.noise_sigma,
            "has_ground_truth": pair.ground_truth is not None,
            "has_true_csm": pair.true_csm is not None,
            "meta": pair.meta,
        })
        arrays.append((f"pair{i}.y", pair.y.data.astype(complex_dtype)))
        arrays.append((f"pair{i}.y_prime", pair.y_prime.data.astype(complex_dtype)))
        if pair.ground_truth is not None:
            arrays.append((f"pair{i}.ground_truth", pair.ground_truth.astype(complex_dtype)))
        if pair.true_csm is not None:
            arrays.append((f"pair{i}.true_csm", pair.true_csm.maps.astype(complex_dtype)))
            arrays.append((f"pair{i}.true_fov", pair.true_csm.fov))

    header = {
        "content": "dataset",
        "n_pairs": len(pairs),
        "n_c": first.n_coils,
        "H": first.shape[0],
        "W": first.shape[1],
        "dtype": "c64" if complex_dtype == np.complex64 else "c128",
        "seed": seed,
        "noise_sigma": first.noise_sigma,
        "pairs": entries,
    }
    write_container(path, DATASET_MAGIC, header, arrays)
    logger.info(f"✅ Dataset gravado: {path} ({len(pairs)} pares)")


def load_dataset(path: Union[str, Path]) -> List[TrainingPair]:
    """Leitura sem perdas de um .spcr de dataset"""
    header, arrays = read_container(path, DATASET_MAGIC)
    if header.get("content") != "dataset":
        raise FileFormatError(f"{path}: conteúdo '{header.get('content')}' não é um dataset")

    pairs = []
    for i, entry in enumerate(header["pairs"]):
        sigma = float(entry["noise_sigma"])
        y = MultiCoilKspace(arrays[f"pair{i}.y"], SamplingMask.from_descriptor(entry["mask"]), sigma)
        y_prime = MultiCoilKspace(arrays[f"pair{i}.y_prime"], SamplingMask.from_descriptor(entry["mask_prime"]), sigma)
        truth = arrays.get(f"pair{i}.ground_truth") if entry.get("has_ground_truth") else None
        csm = None
        if entry.get("has_true_csm"):
            csm = CoilSensitivities(arrays[f"pair{i}.true_csm"], arrays[f"pair{i}.true_fov"].astype(bool))
        pairs.append(TrainingPair(y, y_prime, truth, csm, dict(entry.get("meta") or {})))
    logger.info(f"Dataset carregado: {path} ({len(pairs)} pares)")
    return pairs

# =================== Imagens reconstruídas ===================

def save_images(images: Dict[str, np.ndarray], path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> None:
    """Saída complexa bruta reutilizando o contêiner .spcr"""
    header = {"content": "images", "meta": meta or {}}
    write_container(path, DATASET_MAGIC, header, sorted(images.items()))


def load_images(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    header, arrays = read_container(path, DATASET_MAGIC)
    if header.get("content") != "images":
        raise FileFormatError(f"{path}: conteúdo '{header.get('content')}' não é um arquivo de imagens")
    return arrays, header.get("meta", {})
