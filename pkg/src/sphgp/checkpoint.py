"""Versioned model checkpoints: basis, spectrum, variational state, scalers.

Everything is stored as plain arrays in an ``.npz`` container (no pickling),
so checkpoints are portable and diffable by key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import harmonics as H
from . import kernels as K
from . import vargp as V
from .data_io import Scaler

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    model: V.InducingModel
    state: V.VariationalState
    likelihood: object
    task: str
    bias: float
    input_scaler: Scaler | None
    target_scaler: Scaler | None
    config_text: str
    config_hash: str
    schema_text: str
    moments: dict | None


def _opt(value, default=np.nan):
    return default if value is None else value


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    state, model = ckpt.state, ckpt.model
    arrays = {
        "checkpoint_version": np.asarray(CHECKPOINT_VERSION, dtype=np.int64),
        "task": np.asarray(ckpt.task),
        "bias": np.asarray(ckpt.bias, dtype=np.float64),
        "config_text": np.asarray(ckpt.config_text),
        "config_hash": np.asarray(ckpt.config_hash),
        "schema_text": np.asarray(ckpt.schema_text),
        # spectrum
        "spectrum_dim": np.asarray(model.spectrum.dim, dtype=np.int64),
        "spectrum_eigenvalues": model.spectrum.eigenvalues,
        "spectrum_source": np.asarray(model.spectrum.source),
        "spectrum_variance": np.asarray(model.spectrum.variance, dtype=np.float64),
        "spectrum_beta": np.asarray(_opt(model.spectrum.beta), dtype=np.float64),
        "spectrum_lambda0": np.asarray(model.spectrum.lambda0, dtype=np.float64),
        # state
        "state_mean": state.mean,
        "state_cov_params": state.cov_params,
        "state_log_variance": np.asarray(state.log_variance, dtype=np.float64),
        "state_log_beta": np.asarray(_opt(state.log_beta), dtype=np.float64),
        "state_log_noise": np.asarray(_opt(state.log_noise), dtype=np.float64),
        # likelihood
        "likelihood_kind": np.asarray(ckpt.likelihood.kind),
        "likelihood_link": np.asarray(getattr(ckpt.likelihood, "link", "")),
    }
    arrays.update(H.basis_to_arrays(model.basis))
    if ckpt.input_scaler is not None:
        arrays["input_scaler_mean"] = ckpt.input_scaler.mean
        arrays["input_scaler_std"] = ckpt.input_scaler.std
    if ckpt.target_scaler is not None:
        arrays["target_scaler_mean"] = np.atleast_1d(ckpt.target_scaler.mean)
        arrays["target_scaler_std"] = np.atleast_1d(ckpt.target_scaler.std)
    if ckpt.moments is not None:
        arrays["adam_step"] = np.asarray(ckpt.moments["step"], dtype=np.int64)
        for key, val in ckpt.moments["m"].items():
            arrays[f"adam_m_{key}"] = np.asarray(val, dtype=np.float64)
        for key, val in ckpt.moments["v"].items():
            arrays[f"adam_v_{key}"] = np.asarray(val, dtype=np.float64)
    np.savez(path, **arrays)


def _scalar(arrays, key):
    return arrays[key][()] if key in arrays else None


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    version = int(arrays["checkpoint_version"])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    basis = H.basis_from_arrays(arrays)
    beta = float(arrays["spectrum_beta"])
    spectrum = K.Spectrum(
        dim=int(arrays["spectrum_dim"]),
        eigenvalues=np.asarray(arrays["spectrum_eigenvalues"], dtype=np.float64),
        source=str(arrays["spectrum_source"]),
        variance=float(arrays["spectrum_variance"]),
        beta=None if np.isnan(beta) else beta,
        lambda0=float(arrays["spectrum_lambda0"]),
    )
    model = V.InducingModel(basis=basis, spectrum=spectrum)
    log_beta = float(arrays["state_log_beta"])
    log_noise = float(arrays["state_log_noise"])
    state = V.VariationalState(
        mean=np.asarray(arrays["state_mean"], dtype=np.float64),
        cov_params=np.asarray(arrays["state_cov_params"], dtype=np.float64),
        log_variance=float(arrays["state_log_variance"]),
        log_beta=None if np.isnan(log_beta) else log_beta,
        log_noise=None if np.isnan(log_noise) else log_noise,
        phases={
            fs.frequency: fs.directions.copy()
            for fs in basis.sets
            if not fs.is_full
        },
    )
    kind = str(arrays["likelihood_kind"])
    if kind == "gaussian":
        likelihood = V.GaussianLikelihood(
            noise_variance=float(np.exp(log_noise)) if not np.isnan(log_noise) else 0.1
        )
    else:
        likelihood = V.BernoulliLikelihood(link=str(arrays["likelihood_link"]))
    input_scaler = None
    if "input_scaler_mean" in arrays:
        input_scaler = Scaler(
            mean=np.asarray(arrays["input_scaler_mean"], dtype=np.float64),
            std=np.asarray(arrays["input_scaler_std"], dtype=np.float64),
        )
    target_scaler = None
    if "target_scaler_mean" in arrays:
        target_scaler = Scaler(
            mean=np.asarray(arrays["target_scaler_mean"], dtype=np.float64)[0],
            std=np.asarray(arrays["target_scaler_std"], dtype=np.float64)[0],
        )
    moments = None
    if "adam_step" in arrays:
        moments = {
            "step": int(arrays["adam_step"]),
            "m": {
                k[len("adam_m_"):]: arrays[k] for k in arrays if k.startswith("adam_m_")
            },
            "v": {
                k[len("adam_v_"):]: arrays[k] for k in arrays if k.startswith("adam_v_")
            },
        }
    return Checkpoint(
        model=model,
        state=state,
        likelihood=likelihood,
        task=str(arrays["task"]),
        bias=float(arrays["bias"]),
        input_scaler=input_scaler,
        target_scaler=target_scaler,
        config_text=str(arrays["config_text"]),
        config_hash=str(arrays["config_hash"]),
        schema_text=str(arrays["schema_text"]),
        moments=moments,
    )
