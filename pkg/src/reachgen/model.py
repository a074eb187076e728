"""Conditional VAE over pose deltas: encoder/decoder assembly, the
three-term loss, model bundling, and checkpoint IO.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ag
from .body import (Pose, Skeleton, forward_kinematics, integrate_delta,
                   pose_dim, vector_to_delta)
from .errors import (CorruptFileError, DimensionMismatchError,
                     ModelMismatchError, VersionMismatchError)
from .intention import condition_dim
from .nn import (GaussianParams, MlpConfig, ParameterStore, init_mlp_params,
                 kl_divergence, mlp_forward)

CHECKPOINT_MAGIC = b"RGCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions of the delta autoencoder for one skeleton."""

    latent_dim: int
    n_rotated: int
    encoder: MlpConfig
    decoder: MlpConfig

    @property
    def delta_dim(self) -> int:
        return pose_dim(self.n_rotated)

    @property
    def condition_dim(self) -> int:
        return condition_dim(self.n_rotated)

    @classmethod
    def build(cls, n_rotated: int, latent_dim: int = 16, hidden_dim: int = 64,
              n_layers: int = 4, dropout: float = 0.1,
              layer_norm: bool = True) -> "ModelSpec":
        d = pose_dim(n_rotated)
        c = condition_dim(n_rotated)
        enc = MlpConfig(in_dim=d + c, out_dim=2 * latent_dim, hidden_dim=hidden_dim,
                        n_layers=n_layers, dropout=dropout, layer_norm=layer_norm)
        dec = MlpConfig(in_dim=latent_dim + c, out_dim=d, hidden_dim=hidden_dim,
                        n_layers=n_layers, dropout=dropout, layer_norm=layer_norm)
        return cls(latent_dim, n_rotated, enc, dec)

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "n_rotated": self.n_rotated,
            "encoder": asdict(self.encoder),
            "decoder": asdict(self.decoder),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["latent_dim"], d["n_rotated"],
                   MlpConfig(**d["encoder"]), MlpConfig(**d["decoder"]))


def init_params(spec: ModelSpec, seed: int) -> ParameterStore:
    store = ParameterStore()
    rng = np.random.default_rng(seed)
    init_mlp_params(spec.encoder, store, "enc", rng)
    init_mlp_params(spec.decoder, store, "dec", rng)
    return store


def encode(spec: ModelSpec, store: ParameterStore, delta_vec, cond_vec,
           train: bool = False, dropout_seed: int | None = None) -> GaussianParams:
    """MLP over (delta, condition), split into mean and clamped log-std."""
    x = ag.concatenate([delta_vec, cond_vec], axis=-1)
    if ag.value(x).shape[-1] != spec.encoder.in_dim:
        raise DimensionMismatchError("encoder input dim mismatch")
    out = mlp_forward(spec.encoder, store, x, prefix="enc", train=train,
                      dropout_seed=dropout_seed)
    return GaussianParams.from_stacked(out)


def decode(spec: ModelSpec, store: ParameterStore, z, cond_vec,
           train: bool = False, dropout_seed: int | None = None):
    """MLP over (latent, condition), returned in pose-delta vector layout."""
    x = ag.concatenate([z, cond_vec], axis=-1)
    if ag.value(x).shape[-1] != spec.decoder.in_dim:
        raise DimensionMismatchError("decoder input dim mismatch")
    return mlp_forward(spec.decoder, store, x, prefix="dec", train=train,
                       dropout_seed=dropout_seed)


@dataclass
class LossBreakdown:
    """rec + alpha * kl + joint; `total` is assembled from the parts."""

    rec: object
    kl: object
    joint: object
    total: object

    def as_floats(self) -> "LossBreakdown":
        return LossBreakdown(*(float(ag.value(v)) for v in
                               (self.rec, self.kl, self.joint, self.total)))


def compute_loss(true_delta_vec, pred_delta_vec, gaussian: GaussianParams,
                 prev_pose: Pose, skeleton: Skeleton, alpha: float,
                 kl_direction: str = "standard") -> LossBreakdown:
    """MSE on deltas + alpha * KL + MSE on FK joints of the integrated poses.

    Accepts batched inputs; every term is averaged over batch rows (KL is
    first summed over latent dims per row).
    """
    diff = pred_delta_vec - true_delta_vec
    rec = ag.mean(diff * diff)
    kl = ag.mean(kl_divergence(gaussian, kl_direction))
    n = skeleton.n_rotated
    pred_pose = integrate_delta(prev_pose, vector_to_delta(pred_delta_vec, n))
    true_pose = integrate_delta(prev_pose, vector_to_delta(true_delta_vec, n))
    jdiff = forward_kinematics(pred_pose, skeleton) - forward_kinematics(true_pose, skeleton)
    joint = ag.mean(jdiff * jdiff)
    total = rec + alpha * kl + joint
    return LossBreakdown(rec, kl, joint, total)


@dataclass
class MotionModel:
    """A trained (or fresh) delta autoencoder bound to its skeleton."""

    spec: ModelSpec
    params: ParameterStore
    skeleton: Skeleton
    meta: dict = field(default_factory=dict)

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.spec.to_dict(), sort_keys=True).encode())
        h.update(self.skeleton.hash().encode())
        for name in self.params.names():
            h.update(name.encode())
            h.update(self.params[name].data.tobytes())
        return h.hexdigest()

    def decode_delta(self, z, cond_vec, train=False, dropout_seed=None):
        return decode(self.spec, self.params, z, cond_vec, train=train,
                      dropout_seed=dropout_seed)

    def encode_delta(self, delta_vec, cond_vec, train=False, dropout_seed=None):
        return encode(self.spec, self.params, delta_vec, cond_vec, train=train,
                      dropout_seed=dropout_seed)


def fresh_model(skeleton: Skeleton, latent_dim=16, hidden_dim=64, n_layers=4,
                dropout=0.1, seed=0) -> MotionModel:
    spec = ModelSpec.build(skeleton.n_rotated, latent_dim=latent_dim,
                           hidden_dim=hidden_dim, n_layers=n_layers, dropout=dropout)
    return MotionModel(spec, init_params(spec, seed), skeleton)


def save_checkpoint(model: MotionModel, path, adam_state=None,
                    train_meta: dict | None = None) -> None:
    """Versioned binary container: params (+ optimizer moments) and configs.

    Byte-identical for identical contents; no timestamps.
    """
    arrays: list[tuple[str, np.ndarray]] = [
        (name, model.params[name].data) for name in model.params.names()
    ]
    adam_payload = None
    if adam_state is not None:
        adam_payload = {
            "lr_base": adam_state.lr_base, "lr_final": adam_state.lr_final,
            "total_steps": adam_state.total_steps, "beta1": adam_state.beta1,
            "beta2": adam_state.beta2, "eps": adam_state.eps,
            "step": adam_state.step,
        }
        for name in model.params.names():
            if name in adam_state.m:
                arrays.append((f"adam.m.{name}", adam_state.m[name]))
                arrays.append((f"adam.v.{name}", adam_state.v[name]))
    manifest = []
    offset = 0
    for name, arr in arrays:
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format_version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "skeleton_text": model.skeleton.to_text(),
        "skeleton_hash": model.skeleton.hash(),
        "meta": model.meta,
        "train_meta": train_meta,
        "adam": adam_payload,
        "arrays": manifest,
        "payload_bytes": offset,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<HQ", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected_skeleton_hash: str | None = None):
    """Returns (model, adam_state_or_None). Validates magic, version, size."""
    from .body import Skeleton as _Skeleton  # local to avoid cycle confusion
    from .nn import AdamState

    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 14 or raw[:4] != CHECKPOINT_MAGIC:
        raise CorruptFileError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<HQ", raw[4:14])
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}")
    try:
        header = json.loads(raw[14:14 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptFileError(f"{path}: bad header ({e})") from e
    payload = raw[14 + header_len:]
    if len(payload) != header["payload_bytes"]:
        raise CorruptFileError(
            f"{path}: payload truncated ({len(payload)} of {header['payload_bytes']} bytes)")
    if expected_skeleton_hash is not None and header["skeleton_hash"] != expected_skeleton_hash:
        raise ModelMismatchError(
            f"{path}: checkpoint skeleton {header['skeleton_hash'][:12]} does not match "
            f"expected {expected_skeleton_hash[:12]}")

    skel_payload = json.loads(header["skeleton_text"])
    names = tuple(j["name"] for j in skel_payload["joints"])
    parents = tuple(-1 if j["parent"] is None else names.index(j["parent"])
                    for j in skel_payload["joints"])
    offsets = np.array([j["offset"] for j in skel_payload["joints"]])
    skeleton = _Skeleton(names, parents, offsets,
                         np.asarray(skel_payload["forward_axis"], dtype=np.float64))

    spec = ModelSpec.from_dict(header["spec"])
    values = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        values[entry["name"]] = np.frombuffer(
            payload, dtype="<f8", count=n, offset=start).reshape(shape).copy()

    store = ParameterStore()
    param_names = [e["name"] for e in header["arrays"] if not e["name"].startswith("adam.")]
    for name in param_names:
        store.add(name, values[name])
    model = MotionModel(spec, store, skeleton, meta=header.get("meta", {}))

    adam = None
    if header.get("adam"):
        a = header["adam"]
        adam = AdamState(a["lr_base"], a["lr_final"], a["total_steps"],
                         beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
                         step=a["step"])
        for name in param_names:
            if f"adam.m.{name}" in values:
                adam.m[name] = values[f"adam.m.{name}"]
                adam.v[name] = values[f"adam.v.{name}"]
    return model, adam
